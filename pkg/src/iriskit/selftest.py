"""Brute-force reference implementations and the self-check suite.

Everything in the first half is deliberately naive: straight loops and
exhaustive scans written from the algorithm definitions, independent of the
optimized kernels in the rest of the package. The `iriskit selftest`
subcommand (and the test suite) compares the fast paths against these.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .imaging import quantize_u8


def clahe_reference(img: np.ndarray, clip_limit: float, tiles_x: int, tiles_y: int) -> np.ndarray:
    """Loop-based CLAHE following the documented algorithm byte for byte."""
    h, w = img.shape
    xe = [int(math.floor(i * w / tiles_x)) for i in range(tiles_x + 1)]
    ye = [int(math.floor(j * h / tiles_y)) for j in range(tiles_y + 1)]

    luts = [[None] * tiles_x for _ in range(tiles_y)]
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            tile = img[ye[ty]:ye[ty + 1], xe[tx]:xe[tx + 1]]
            n = tile.size
            hist = [0] * 256
            for v in tile.reshape(-1):
                hist[int(v)] += 1
            limit = max(1, int(clip_limit * n / 256))
            excess = sum(max(c - limit, 0) for c in hist)
            hist = [min(c, limit) for c in hist]
            for i in range(256):
                hist[i] += excess // 256
            for i in range(excess % 256):
                hist[i] += 1
            lut = []
            acc = 0
            for i in range(256):
                acc += hist[i]
                lut.append(acc * 255.0 / n)
            luts[ty][tx] = lut

    cxs = [(xe[i] + xe[i + 1] - 1) / 2.0 for i in range(tiles_x)]
    cys = [(ye[j] + ye[j + 1] - 1) / 2.0 for j in range(tiles_y)]

    def locate(coord, centers):
        i0 = 0
        for i, c in enumerate(centers):
            if c <= coord:
                i0 = i
        i1 = min(i0 + 1, len(centers) - 1)
        span = centers[i1] - centers[i0]
        frac = 0.0 if span <= 0 else (coord - centers[i0]) / span
        return i0, i1, min(max(frac, 0.0), 1.0)

    out = np.zeros_like(img)
    for y in range(h):
        ty0, ty1, fy = locate(y, cys)
        for x in range(w):
            tx0, tx1, fx = locate(x, cxs)
            v = int(img[y, x])
            blend = (
                luts[ty0][tx0][v] * (1 - fx) * (1 - fy)
                + luts[ty0][tx1][v] * fx * (1 - fy)
                + luts[ty1][tx0][v] * (1 - fx) * fy
                + luts[ty1][tx1][v] * fx * fy
            )
            out[y, x] = quantize_u8(np.array(blend))
    return out


def exhaustive_otsu(img: np.ndarray) -> tuple[int, float]:
    """Scan all 256 split levels, return (argmax t, max between-class variance).

    Ties (values within 1e-9 relative of the maximum) resolve to the smallest
    t, mirroring the library's rule.
    """
    values = img.reshape(-1).astype(np.float64)
    n = values.size
    variances = []
    for t in range(256):
        low = values[values <= t]
        high = values[values > t]
        if low.size == 0 or high.size == 0:
            variances.append(0.0)
        else:
            w0 = low.size / n
            w1 = high.size / n
            variances.append(w0 * w1 * (low.mean() - high.mean()) ** 2)
    vmax = max(variances)
    for t, var in enumerate(variances):
        if var >= vmax * (1.0 - 1e-9):
            return t, vmax
    return 0, vmax


def brute_force_min_circle(points: np.ndarray) -> tuple[tuple[float, float], float]:
    """O(n^3) minimum enclosing circle over all 2- and 3-point support circles."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 1:
        return (float(pts[0, 0]), float(pts[0, 1])), 0.0

    candidates = []
    for i, j in itertools.combinations(range(pts.shape[0]), 2):
        c = (pts[i] + pts[j]) / 2.0
        r = np.linalg.norm(pts[i] - pts[j]) / 2.0
        candidates.append((c, r))
    for i, j, k in itertools.combinations(range(pts.shape[0]), 3):
        c = _circumcenter(pts[i], pts[j], pts[k])
        if c is not None:
            candidates.append((c, float(np.linalg.norm(pts[i] - c))))

    best = None
    for c, r in candidates:
        d = np.linalg.norm(pts - c, axis=1)
        if d.max() <= r + 1e-9 * max(1.0, r):
            if best is None or r < best[1]:
                best = (c, r)
    c, r = best
    return (float(c[0]), float(c[1])), float(r)


def _circumcenter(a, b, c):
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    if abs(d) < 1e-12:
        return None
    ux = (
        (a[0] ** 2 + a[1] ** 2) * (b[1] - c[1])
        + (b[0] ** 2 + b[1] ** 2) * (c[1] - a[1])
        + (c[0] ** 2 + c[1] ** 2) * (a[1] - b[1])
    ) / d
    uy = (
        (a[0] ** 2 + a[1] ** 2) * (c[0] - b[0])
        + (b[0] ** 2 + b[1] ** 2) * (a[0] - c[0])
        + (c[0] ** 2 + c[1] ** 2) * (b[0] - a[0])
    ) / d
    return np.array([ux, uy])


def naive_shifted_hamming(bits_a: np.ndarray, bits_b: np.ndarray, shift: int) -> float:
    """Recount a shifted comparison by explicitly re-laying out the column grid.

    bits_* are (rows, cols, 2) boolean grids; the shifted grid's column j is
    the source's column (j + shift) mod cols.
    """
    rows, cols, _ = bits_b.shape
    shifted = np.empty_like(bits_b)
    for j in range(cols):
        shifted[:, j, :] = bits_b[:, (j + shift) % cols, :]
    return float(np.count_nonzero(bits_a != shifted)) / bits_a.size


def naive_best_match(bits_a: np.ndarray, bits_b: np.ndarray) -> tuple[float, int]:
    """Minimum fractional Hamming distance over all column shifts, smallest
    shift wins ties. Pure re-layout loop, no packing."""
    best_hd, best_shift = 2.0, 0
    for s in range(bits_b.shape[1]):
        hd = naive_shifted_hamming(bits_a, bits_b, s)
        if hd < best_hd:
            best_hd, best_shift = hd, s
    return best_hd, best_shift


def aitchison_distance(comp_a: np.ndarray, comp_b: np.ndarray) -> float:
    """Distance between two compositions straight from the clr definition."""
    la = np.log(comp_a)
    lb = np.log(comp_b)
    clr_a = la - la.mean()
    clr_b = lb - lb.mean()
    return float(np.linalg.norm(clr_a - clr_b))


def _check_otsu(rng) -> tuple[bool, str]:
    from .segmentation import otsu_threshold

    for trial in range(40):
        if trial % 3 == 0:
            img = rng.integers(0, 256, (32, 32)).astype(np.uint8)
        elif trial % 3 == 1:
            img = rng.choice(np.array([10, 200], dtype=np.uint8), size=(32, 32))
        else:
            img = (rng.normal(120, 40, (32, 32)).clip(0, 255)).astype(np.uint8)
        got = otsu_threshold(img).threshold
        want, _ = exhaustive_otsu(img)
        if got != want:
            return False, f"trial {trial}: got {got}, exhaustive scan says {want}"
    return True, "40 images"


def _check_min_circle(rng) -> tuple[bool, str]:
    from .segmentation import min_enclosing_circle

    worst = 0.0
    for trial in range(40):
        n = int(rng.integers(2, 25))
        pts = rng.uniform(-50, 50, (n, 2))
        got = min_enclosing_circle(pts)
        _, want_r = brute_force_min_circle(pts)
        err = abs(got.radius - want_r) / max(1.0, want_r)
        worst = max(worst, err)
        if err > 1e-9:
            return False, f"trial {trial}: radius {got.radius} vs brute force {want_r}"
    return True, f"40 point sets, worst relative error {worst:.2e}"


def _check_shift_hamming(rng) -> tuple[bool, str]:
    from .encoding import IrisCode
    from .matching import hamming, shift_code

    for trial in range(12):
        bits = rng.integers(0, 2, (45, 360, 2)).astype(bool)
        other = rng.integers(0, 2, (45, 360, 2)).astype(bool)
        code, ref = IrisCode(bits), IrisCode(other)
        for s in (1, 37, 180, int(rng.integers(0, 360))):
            got = hamming(ref, shift_code(code, s))
            want = naive_shifted_hamming(other, bits, s)
            if got != want:
                return False, f"trial {trial} shift {s}: {got} vs recount {want}"
    return True, "12 code pairs x 4 shifts"


def _check_best_match(rng) -> tuple[bool, str]:
    from .encoding import IrisCode
    from .matching import best_match

    mins = []
    for trial in range(50):
        a = rng.integers(0, 2, (45, 360, 2)).astype(bool)
        b = rng.integers(0, 2, (45, 360, 2)).astype(bool)
        got = best_match(IrisCode(a), IrisCode(b))
        mins.append(got.hd)
        if trial < 6:
            want_hd, want_shift = naive_best_match(a, b)
            if got.hd != want_hd or got.best_shift != want_shift:
                return False, f"trial {trial}: {got} vs naive {(want_hd, want_shift)}"
    mean = float(np.mean(mins))
    if not 0.48 < mean < 0.50:
        return False, f"random-pair best-match mean {mean:.4f} outside sanity band"
    return True, f"6 naive comparisons; 50-pair mean {mean:.4f}"


def _check_clahe(rng) -> tuple[bool, str]:
    from .imaging import clahe

    cases = [
        (rng.integers(0, 256, (16, 16)).astype(np.uint8), 2.0, 2, 1),
        (rng.integers(0, 256, (45, 64)).astype(np.uint8), 2.0, 8, 1),
        (rng.integers(0, 256, (24, 24)).astype(np.uint8), 3.0, 3, 2),
    ]
    for i, (img, clip, tx, ty) in enumerate(cases):
        got = clahe(img, clip, tx, ty)
        want = clahe_reference(img, clip, tx, ty)
        if not np.array_equal(got, want):
            diff = int(np.abs(got.astype(int) - want.astype(int)).max())
            return False, f"case {i}: max byte difference {diff}"
    return True, "3 rasters byte-exact"


def _check_ilr(rng) -> tuple[bool, str]:
    from .colors import ilr_transform

    worst = 0.0
    for _ in range(60):
        a = rng.dirichlet(np.ones(4))
        b = rng.dirichlet(np.ones(4))
        a = np.maximum(a, 1e-9)
        b = np.maximum(b, 1e-9)
        direct = aitchison_distance(a / a.sum(), b / b.sum())
        via_ilr = float(np.linalg.norm(ilr_transform(a) - ilr_transform(b)))
        worst = max(worst, abs(direct - via_ilr))
    ok = worst <= 1e-9
    return ok, f"60 composition pairs, worst deviation {worst:.2e}"


def _check_pca(rng) -> tuple[bool, str]:
    from .colors import pca_fit, pca_project, pca_reconstruct

    x = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 3)) + rng.normal(size=3)
    model = pca_fit(x)
    gram = model.components @ model.components.T
    ortho = float(np.abs(gram - np.eye(3)).max())
    recon = pca_reconstruct(model, pca_project(model, x))
    err = float(np.abs(recon - x).max())
    ok = ortho <= 1e-9 and err <= 1e-8
    return ok, f"orthonormality {ortho:.2e}, reconstruction {err:.2e}"


def _check_geometry(rng) -> tuple[bool, str]:
    from .imaging import IrisBoundaries, rotate, unwrap_polar, wrap_cartesian

    size = 256
    c = (size - 1) / 2.0
    b = IrisBoundaries(c, c, 42.5, 85.0)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    smooth = 128 + 60 * np.sin(xs / 11.0) * np.cos(ys / 13.0)
    rho = np.hypot(xs - c, ys - c)
    annulus = (rho >= b.pupil_radius) & (rho <= b.limbic_radius)
    img = (smooth * annulus).astype(np.uint8)

    strip = unwrap_polar(img, b, 64, 720)
    back = wrap_cartesian(strip, b, size)
    interior = (rho >= b.pupil_radius + 2) & (rho <= b.limbic_radius - 2)
    mae_wrap = float(np.abs(back.astype(int) - img.astype(int))[interior].mean())

    spun = rotate(rotate(img, 30.0), -30.0)
    interior3 = (rho >= b.pupil_radius + 3) & (rho <= b.limbic_radius - 3)
    mae_rot = float(np.abs(spun.astype(int) - img.astype(int))[interior3].mean())

    exact = all(
        np.array_equal(img, _apply_rot90(img, k, 4 - k)) for k in (1, 2, 3)
    )
    ok = mae_wrap <= 5.0 and mae_rot <= 3.0 and exact
    return ok, f"wrap round trip MAE {mae_wrap:.2f}, rotate MAE {mae_rot:.2f}, 90-degree exact {exact}"


def _apply_rot90(img, k1, k2):
    from .imaging import rotate

    out = img
    for _ in range(k1):
        out = rotate(out, 90)
    for _ in range(k2):
        out = rotate(out, 90)
    return out


_CHECKS = (
    ("otsu threshold vs exhaustive scan", _check_otsu),
    ("min enclosing circle vs brute force", _check_min_circle),
    ("shifted hamming vs naive recount", _check_shift_hamming),
    ("best match vs naive sweep", _check_best_match),
    ("clahe vs loop reference", _check_clahe),
    ("ilr isometry vs aitchison distance", _check_ilr),
    ("pca orthonormality and reconstruction", _check_pca),
    ("geometry round trips", _check_geometry),
)


def run_selftest(seed: int = 0) -> bool:
    """Run every oracle check, print one PASS/FAIL line each."""
    all_ok = True
    for i, (name, check) in enumerate(_CHECKS):
        rng = np.random.default_rng([seed, i])
        ok, detail = check(rng)
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        all_ok &= ok
    return all_ok
