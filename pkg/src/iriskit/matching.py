"""Rotation-invariant comparison of iris codes and campaign-level analyses.

Codes are compared by fractional Hamming distance over packed 64-bit words
(XOR + popcount). Rotation invariance comes from taking the minimum distance
over all 360 cyclic column shifts of one code; each shift corresponds to one
degree of rotation of the parent image. For batch work the 360 shifted
packings of a code are materialized once (`ShiftMatrix`) and whole blocks of
opposing codes are XORed against it.

Threshold sweep semantics: the grid is {0.00, 0.01, ..., 0.99}; a pair
"matches" iff hd < t, so FAR(t) counts imposter samples strictly below t and
FRR(t) counts authentic samples at or above t. The chosen criterion minimizes
FAR + FRR with ties resolved toward the smaller threshold.

All batch results are keyed by pair identity and aggregated in canonical id
order, so outputs are identical under any parallel schedule.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .encoding import IrisCode

_BLOCK_ROWS = 64  # bounds the (block, shifts, words) XOR temporary


class MatchScore(NamedTuple):
    hd: float
    best_shift: int


class SampleStats(NamedTuple):
    count: int
    mean: float
    sd: float
    min: float
    max: float

    @classmethod
    def of(cls, values: np.ndarray) -> "SampleStats":
        if values.size == 0:
            return cls(0, float("nan"), float("nan"), float("nan"), float("nan"))
        return cls(
            int(values.size),
            float(values.mean()),
            float(values.std()),  # population sd
            float(values.min()),
            float(values.max()),
        )


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a flat bit grid into zero-padded uint64 words (MSB-first)."""
    payload = np.packbits(bits.reshape(-1))
    words = (bits.size + 63) // 64
    padded = np.zeros(words * 8, dtype=np.uint8)
    padded[: payload.size] = payload
    return padded.view(np.uint64)


def packed_words(code: IrisCode) -> np.ndarray:
    """Zero-padded uint64 view of a code, reusing its cached payload."""
    payload = np.frombuffer(code.packed(), dtype=np.uint8)
    words = (code.n_bits + 63) // 64
    padded = np.zeros(words * 8, dtype=np.uint8)
    padded[: payload.size] = payload
    return padded.view(np.uint64)


def shift_code(code: IrisCode, degrees: int) -> IrisCode:
    """Rotate every row's cells by `degrees` columns (the 2 bits of a cell
    move together): output column j holds input column (j + degrees) mod cols.

    Shifting the code of an image rotated by +d degrees by d re-aligns it
    with the unrotated code.
    """
    s = int(degrees) % code.cols
    if s == 0:
        return IrisCode(code.bits.copy())
    return IrisCode(np.roll(code.bits, -s, axis=1))


def _check_dims(a: IrisCode, b: IrisCode) -> None:
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"code dimensions differ: {a.bits.shape} vs {b.bits.shape}")


def hamming(a: IrisCode, b: IrisCode) -> float:
    """Fraction of differing bits."""
    _check_dims(a, b)
    diff = np.bitwise_xor(packed_words(a), packed_words(b))
    return int(np.bitwise_count(diff).sum()) / a.n_bits


class ShiftMatrix:
    """All cyclic-shift packings of one code: row s = packed shift_code(code, s)."""

    def __init__(self, code: IrisCode):
        rows, cols, _ = code.bits.shape
        # idx[s, j] = (j + s) % cols, matching shift_code
        idx = (np.arange(cols)[None, :] + np.arange(cols)[:, None]) % cols
        rolled = code.bits[:, idx, :]  # (rows, shift, col, 2)
        flat = rolled.transpose(1, 0, 2, 3).reshape(cols, -1)
        payload = np.packbits(flat, axis=1)
        words = (code.n_bits + 63) // 64
        padded = np.zeros((cols, words * 8), dtype=np.uint8)
        padded[:, : payload.shape[1]] = payload
        self.words = padded.view(np.uint64)
        self.n_bits = code.n_bits
        self.n_shifts = cols

    def distances_from(self, packed_rows: np.ndarray) -> np.ndarray:
        """Bit-difference counts of each packed row against every shift.

        Returns an (n_rows, n_shifts) int32 matrix; entry [i, s] counts
        differing bits between row i and shift_code(owner, s).
        """
        rows = np.atleast_2d(packed_rows)
        out = np.empty((rows.shape[0], self.n_shifts), dtype=np.int32)
        for lo in range(0, rows.shape[0], _BLOCK_ROWS):
            block = rows[lo : lo + _BLOCK_ROWS]
            diff = np.bitwise_xor(block[:, None, :], self.words[None, :, :])
            out[lo : lo + block.shape[0]] = np.bitwise_count(diff).sum(
                axis=2, dtype=np.int32
            )
        return out


def _reverse_shift_axis(counts: np.ndarray) -> np.ndarray:
    """Re-express counts over shifts of X in "Y vs shift(X, s')" as counts
    over shifts of Y in "X vs shift(Y, s)": s = (-s') mod n."""
    n = counts.shape[-1]
    return counts[..., (-np.arange(n)) % n]


def _min_and_shift(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shifts = counts.argmin(axis=1).astype(np.int32)  # first occurrence = smallest shift
    return counts[np.arange(counts.shape[0]), shifts].astype(np.int64), shifts


def best_match(a: IrisCode, b: IrisCode) -> MatchScore:
    """Minimum fractional Hamming distance over all shifts of b; ties take
    the smallest shift. Identical codes short-circuit to (0.0, 0)."""
    _check_dims(a, b)
    pa = packed_words(a)
    pb = packed_words(b)
    if np.array_equal(pa, pb):
        return MatchScore(0.0, 0)
    counts = _reverse_shift_axis(ShiftMatrix(a).distances_from(pb))
    mins, shifts = _min_and_shift(counts)
    return MatchScore(int(mins[0]) / a.n_bits, int(shifts[0]))


@dataclass
class HdDistributions:
    """Authentic and imposter best-shift Hamming distance samples.

    Pair identities ride along so the distribution can be exported without
    recomputation. hd arrays are fractions in [0, 1].
    """

    original_ids: list[str]
    authentic_hd: np.ndarray
    authentic_shift: np.ndarray
    authentic_orig_idx: np.ndarray
    authentic_variant_ids: list[str]
    imposter_hd: np.ndarray
    imposter_shift: np.ndarray
    imposter_idx_a: np.ndarray
    imposter_idx_b: np.ndarray
    authentic_empty: bool

    @property
    def authentic(self) -> np.ndarray:
        return self.authentic_hd

    @property
    def imposter(self) -> np.ndarray:
        return self.imposter_hd

    @property
    def n_authentic(self) -> int:
        return int(self.authentic_hd.size)

    @property
    def n_imposter(self) -> int:
        return int(self.imposter_hd.size)

    def stats(self) -> dict[str, SampleStats]:
        return {
            "authentic": SampleStats.of(self.authentic_hd),
            "imposter": SampleStats.of(self.imposter_hd),
        }


def build_distributions(
    originals: Mapping[str, IrisCode],
    authentic_variants: Mapping[str, Sequence[tuple[str, IrisCode]]] | None = None,
    threads: int = 1,
) -> HdDistributions:
    """Best-shift HD samples: each original vs its variants (authentic) and
    every unordered pair of originals, self-comparisons excluded (imposter).

    Requires >= 2 originals. Missing or empty variant lists are allowed; the
    result is then flagged authentic_empty. Output is identical for any
    thread count.
    """
    ids = sorted(originals)
    if len(ids) < 2:
        raise ValueError("need at least 2 original codes")
    codes = [originals[i] for i in ids]
    for c in codes[1:]:
        _check_dims(codes[0], c)
    n_bits = codes[0].n_bits
    packed = np.stack([packed_words(c) for c in codes])
    variants = authentic_variants or {}

    def one_original(j: int):
        """Imposter samples (i < j vs j) and authentic samples for original j.

        One ShiftMatrix build serves both: imposter counts come out in the
        orientation "original_i vs shifts of original_j" and authentic counts
        are computed as "variant vs shifts of original_j" then remapped to the
        spec orientation "original_j vs shifts of variant".
        """
        matrix = None

        imp_hd = np.zeros(j, dtype=np.int64)
        imp_shift = np.zeros(j, dtype=np.int32)
        if j > 0:
            block = packed[:j]
            todo = np.where(~np.all(block == packed[j], axis=1))[0]
            if todo.size:
                matrix = ShiftMatrix(codes[j])
                counts = matrix.distances_from(block[todo])
                mins, shifts = _min_and_shift(counts)
                imp_hd[todo] = mins
                imp_shift[todo] = shifts

        var_list = list(variants.get(ids[j], ()))
        auth_ids = [vid for vid, _ in var_list]
        auth_hd = np.zeros(len(var_list), dtype=np.int64)
        auth_shift = np.zeros(len(var_list), dtype=np.int32)
        if var_list:
            for _, vc in var_list:
                _check_dims(codes[j], vc)
            vp = np.stack([packed_words(vc) for _, vc in var_list])
            todo = np.where(~np.all(vp == packed[j], axis=1))[0]
            if todo.size:
                if matrix is None:
                    matrix = ShiftMatrix(codes[j])
                counts = _reverse_shift_axis(matrix.distances_from(vp[todo]))
                mins, shifts = _min_and_shift(counts)
                auth_hd[todo] = mins
                auth_shift[todo] = shifts
        return imp_hd, imp_shift, auth_ids, auth_hd, auth_shift

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_original, range(len(ids))))
    else:
        results = [one_original(j) for j in range(len(ids))]

    imp_hd_parts, imp_shift_parts, imp_a, imp_b = [], [], [], []
    auth_hd_parts, auth_shift_parts, auth_orig, auth_vids = [], [], [], []
    for j, (ih, isft, aids, ah, asft) in enumerate(results):
        if j > 0:
            imp_hd_parts.append(ih)
            imp_shift_parts.append(isft)
            imp_a.append(np.arange(j, dtype=np.int32))
            imp_b.append(np.full(j, j, dtype=np.int32))
        if aids:
            auth_hd_parts.append(ah)
            auth_shift_parts.append(asft)
            auth_orig.append(np.full(len(aids), j, dtype=np.int32))
            auth_vids.extend(aids)

    def cat(parts, dtype):
        return np.concatenate(parts) if parts else np.empty(0, dtype=dtype)

    authentic_hd = cat(auth_hd_parts, np.int64) / n_bits
    imposter_hd = cat(imp_hd_parts, np.int64) / n_bits
    return HdDistributions(
        original_ids=ids,
        authentic_hd=authentic_hd,
        authentic_shift=cat(auth_shift_parts, np.int32),
        authentic_orig_idx=cat(auth_orig, np.int32),
        authentic_variant_ids=auth_vids,
        imposter_hd=imposter_hd,
        imposter_shift=cat(imp_shift_parts, np.int32),
        imposter_idx_a=cat(imp_a, np.int32),
        imposter_idx_b=cat(imp_b, np.int32),
        authentic_empty=authentic_hd.size == 0,
    )


THRESHOLD_GRID = np.arange(100) / 100.0


@dataclass
class ThresholdReport:
    """FAR/FRR over the 100-point threshold grid and the chosen criterion."""

    grid: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    chosen: float
    chosen_far: float
    chosen_frr: float
    n_authentic: int
    n_imposter: int


def sweep_threshold(d: HdDistributions) -> ThresholdReport:
    """Sweep the criterion grid; pick the threshold minimizing FAR + FRR."""
    if d.n_authentic == 0 or d.n_imposter == 0:
        raise ValueError("both distributions must be non-empty to sweep thresholds")
    auth = np.sort(d.authentic_hd)
    imp = np.sort(d.imposter_hd)
    far = np.searchsorted(imp, THRESHOLD_GRID, side="left") / imp.size
    frr = (auth.size - np.searchsorted(auth, THRESHOLD_GRID, side="left")) / auth.size
    idx = int(np.argmin(far + frr))  # first minimum = smallest threshold
    return ThresholdReport(
        grid=THRESHOLD_GRID.copy(),
        far=far,
        frr=frr,
        chosen=float(THRESHOLD_GRID[idx]),
        chosen_far=float(far[idx]),
        chosen_frr=float(frr[idx]),
        n_authentic=auth.size,
        n_imposter=imp.size,
    )


class CandidateResult(NamedTuple):
    candidate_id: str
    min_hd: float
    closest_ref: str
    passed: bool


@dataclass
class UniquenessReport:
    """Per-candidate minimum best-shift HD against a reference set.

    A candidate fails iff its minimum hd is below the criterion. Reference
    entries sharing the candidate's id are skipped; a candidate with no
    remaining references passes vacuously with min_hd = nan.
    """

    criterion: float
    results: list[CandidateResult]

    @property
    def n_pass(self) -> int:
        return sum(r.passed for r in self.results)

    @property
    def n_fail(self) -> int:
        return len(self.results) - self.n_pass


def uniqueness_screen(
    candidates: Mapping[str, IrisCode],
    references: Mapping[str, IrisCode],
    criterion: float,
    threads: int = 1,
) -> UniquenessReport:
    """Screen candidate codes for biometric overlap with a reference set."""
    if not 0 < criterion < 1:
        raise ValueError("criterion must be in (0, 1)")
    if not references:
        raise ValueError("reference set is empty")
    ref_ids = sorted(references)
    ref_codes = [references[r] for r in ref_ids]
    for c in ref_codes[1:]:
        _check_dims(ref_codes[0], c)
    ref_packed = np.stack([packed_words(c) for c in ref_codes])
    cand_ids = sorted(candidates)

    def one_candidate(cid: str) -> CandidateResult:
        code = candidates[cid]
        _check_dims(ref_codes[0], code)
        keep = np.array([rid != cid for rid in ref_ids])
        if not keep.any():
            return CandidateResult(cid, float("nan"), "", True)
        pc = packed_words(code)
        if np.any(np.all(ref_packed[keep] == pc, axis=1)):
            # identical code present: hd floor reached without the shift sweep
            idx = int(np.where(keep & np.all(ref_packed == pc, axis=1))[0][0])
            return CandidateResult(cid, 0.0, ref_ids[idx], 0.0 >= criterion)
        counts = ShiftMatrix(code).distances_from(ref_packed[keep])
        per_ref = counts.min(axis=1)
        best = int(per_ref.argmin())  # first = lexicographically smallest ref id
        min_hd = int(per_ref[best]) / code.n_bits
        rid = [r for r, k in zip(ref_ids, keep) if k][best]
        return CandidateResult(cid, min_hd, rid, min_hd >= criterion)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_candidate, cand_ids))
    else:
        results = [one_candidate(c) for c in cand_ids]
    return UniquenessReport(criterion=criterion, results=results)


def write_distributions_csv(d: HdDistributions, path) -> None:
    """CSV export: kind,id_a,id_b,hd,best_shift."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "id_a", "id_b", "hd", "best_shift"])
        for k in range(d.n_authentic):
            oid = d.original_ids[d.authentic_orig_idx[k]]
            w.writerow(
                ["authentic", oid, d.authentic_variant_ids[k],
                 repr(float(d.authentic_hd[k])), int(d.authentic_shift[k])]
            )
        for k in range(d.n_imposter):
            w.writerow(
                ["imposter",
                 d.original_ids[d.imposter_idx_a[k]],
                 d.original_ids[d.imposter_idx_b[k]],
                 repr(float(d.imposter_hd[k])), int(d.imposter_shift[k])]
            )


def write_threshold_csv(report: ThresholdReport, path) -> None:
    """CSV export: threshold,far,frr (100 rows)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "far", "frr"])
        for t, fa, fr in zip(report.grid, report.far, report.frr):
            w.writerow([format(t, ".2f"), repr(float(fa)), repr(float(fr))])


def write_summary_json(report: ThresholdReport, path) -> None:
    summary = {
        "chosen": report.chosen,
        "far": report.chosen_far,
        "frr": report.chosen_frr,
        "n_authentic": report.n_authentic,
        "n_imposter": report.n_imposter,
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def write_screen_csv(report: UniquenessReport, path) -> None:
    """CSV export: candidate_id,min_hd,closest_ref,pass."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["candidate_id", "min_hd", "closest_ref", "pass"])
        for r in report.results:
            hd = "" if np.isnan(r.min_hd) else repr(float(r.min_hd))
            w.writerow([r.candidate_id, hd, r.closest_ref, "true" if r.passed else "false"])
