"""Batch command-line surface.

Subcommands: preprocess, encode, validate, screen, coloranalysis, selftest.
Shared flags (given after the subcommand): --seed, --threads, --out,
--verbose. Exit codes are stable: 0 success, 2 usage or input error, 3 empty
result, 4 insufficient data. All CSV output is UTF-8 with "\\n" line endings
and "." decimal separators; outputs are identical for a fixed seed regardless
of the thread count.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import colors, matching, pipeline, selftest
from .encoding import GaborParams, IrisCode, encode, normalize
from .imaging import load_png
from .segmentation import BoundarySpec, SegmentationError, segment_iris

log = logging.getLogger("iriskit")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_INSUFFICIENT = 4


def parse_config_file(path) -> dict:
    """Flat key = value pipeline config; '#' starts a comment."""
    fields = {f.name: f.type for f in dataclasses.fields(pipeline.PipelineConfig)}
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = float(value) if "." in value or "e" in value.lower() else int(value)
    return out


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--verbose", action="store_true", help="debug logging")


def _require_out(args, parser) -> Path:
    if args.out is None:
        parser.error("--out is required for this subcommand")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iriskit",
        description="Iris biometric uniqueness and pigmentation screening toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="run the dataset preparation pipeline")
    p.add_argument("input_dir", type=Path)
    p.add_argument("--config", type=Path, help="flat key=value pipeline config file")
    p.add_argument("--exclude", type=Path, help="file of ids rejected by manual review")
    _common_flags(p)

    p = sub.add_parser("encode", help="segment, normalize and encode iris frames")
    p.add_argument("images", nargs="*", type=Path, help="iris frame PNGs")
    p.add_argument("--manifest", type=Path, help="preprocess manifest to encode instead")
    p.add_argument("--expected-pupil", type=float, default=45.0)
    p.add_argument("--expected-limbic", type=float, default=85.0)
    p.add_argument("--tolerance", type=float, default=3.0)
    p.add_argument("--max-center-offset", type=float, default=10.0)
    p.add_argument("--wavelength", type=float, default=18.0)
    p.add_argument("--sigma-over-f", type=float, default=0.5)
    _common_flags(p)

    p = sub.add_parser("validate", help="distributions and threshold sweep over reference codes")
    p.add_argument("reference_dir", type=Path, help="directory of .icode files")
    p.add_argument("--authentic-map", type=Path, required=True,
                   help="JSON {original_id: [variant .icode paths]}")
    _common_flags(p)

    p = sub.add_parser("screen", help="screen candidate codes against a reference set")
    p.add_argument("candidates_dir", type=Path)
    p.add_argument("references_dir", type=Path)
    p.add_argument("--criterion", type=float, default=0.4)
    _common_flags(p)

    p = sub.add_parser("coloranalysis", help="pigmentation composition, ILR, PCA, distances")
    p.add_argument("set_a", type=Path)
    p.add_argument("set_b", type=Path, nargs="?")
    p.add_argument("--bin-width", type=float, default=0.05)
    _common_flags(p)

    p = sub.add_parser("selftest", help="run the brute-force oracle suite")
    _common_flags(p)

    return parser


def cmd_preprocess(args, parser) -> int:
    out_dir = _require_out(args, parser)
    if not args.input_dir.is_dir():
        log.error("input directory %s does not exist", args.input_dir)
        return EXIT_USAGE
    overrides = {}
    if args.config:
        try:
            overrides = parse_config_file(args.config)
        except (OSError, ValueError) as exc:
            log.error("bad config file: %s", exc)
            return EXIT_USAGE
    overrides.setdefault("seed", args.seed)
    try:
        cfg = pipeline.PipelineConfig(**overrides)
    except (TypeError, ValueError) as exc:
        log.error("bad pipeline configuration: %s", exc)
        return EXIT_USAGE
    exclude = []
    if args.exclude:
        exclude = [
            ln.strip() for ln in args.exclude.read_text().splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")
        ]
    manifest = pipeline.run_pipeline(args.input_dir, cfg, out_dir, exclude, args.threads)
    survivors = manifest.survivors()
    log.info(
        "%d source images: %d survived, %d rejected",
        len(manifest.records), len(survivors), len(manifest.records) - len(survivors),
    )
    return EXIT_OK if survivors else EXIT_EMPTY


def _encode_one(path: Path, spec: BoundarySpec, params: GaborParams) -> tuple[IrisCode | None, str]:
    try:
        img = load_png(path)
    except Exception as exc:
        return None, f"unreadable ({exc})"
    try:
        b = segment_iris(img, spec)
    except SegmentationError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    gray_norm = normalize(img, b)
    return encode(gray_norm, params), ""


def cmd_encode(args, parser) -> int:
    out_dir = _require_out(args, parser)
    spec = BoundarySpec(
        args.expected_pupil, args.expected_limbic, args.tolerance, args.max_center_offset
    )
    params = GaborParams(args.wavelength, args.sigma_over_f)

    if args.manifest:
        if args.images:
            parser.error("give image paths or --manifest, not both")
        return _encode_manifest(args, out_dir, spec, params)
    if not args.images:
        parser.error("no images given")

    def work(path: Path):
        code, err = _encode_one(path, spec, params)
        return path, code, err

    results = _parallel(work, args.images, args.threads)
    successes = 0
    for path, code, err in results:
        if code is None:
            log.warning("skipped %s: %s", path, err)
            continue
        code.save(out_dir / (path.stem + ".icode"))
        successes += 1
    log.info("encoded %d/%d images", successes, len(args.images))
    return EXIT_OK if successes else EXIT_INSUFFICIENT


def _encode_manifest(args, out_dir: Path, spec: BoundarySpec, params: GaborParams) -> int:
    try:
        manifest = pipeline.DatasetManifest.load(args.manifest)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        log.error("cannot read manifest: %s", exc)
        return EXIT_USAGE
    root = args.manifest.parent
    originals_dir = out_dir / "originals"
    originals_dir.mkdir(exist_ok=True)
    survivors = manifest.survivors()

    def work(rec):
        encoded = []
        failed = []
        for rel in [rec.rotations[0]] + rec.authentic:
            code, err = _encode_one(root / rel, spec, params)
            if code is None:
                failed.append((rel, err))
            else:
                encoded.append((rel, code))
        return rec, encoded, failed

    results = _parallel(work, survivors, args.threads)
    auth_map = {}
    successes = 0
    for rec, encoded, failed in results:
        for rel, err in failed:
            log.warning("skipped %s: %s", rel, err)
        paths = {}
        for rel, code in encoded:
            name = Path(rel).stem
            if rel == rec.rotations[0]:
                target = originals_dir / f"{rec.id}.icode"
            else:
                vdir = out_dir / "variants" / rec.id
                vdir.mkdir(parents=True, exist_ok=True)
                target = vdir / f"{name}.icode"
            code.save(target)
            paths[rel] = target
            successes += 1
        if rec.rotations[0] in paths:
            auth_map[rec.id] = sorted(
                str(p.relative_to(out_dir)) for rel, p in paths.items()
                if rel != rec.rotations[0]
            )
    with open(out_dir / "authentic_map.json", "w") as fh:
        json.dump(auth_map, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("encoded %d frames from %d survivors", successes, len(survivors))
    return EXIT_OK if successes else EXIT_INSUFFICIENT


def _load_codes_dir(d: Path) -> dict[str, IrisCode]:
    codes = {}
    for p in sorted(d.glob("*.icode")):
        try:
            codes[p.stem] = IrisCode.load(p)
        except ValueError as exc:
            raise ValueError(f"{p}: {exc}") from exc
    return codes


def cmd_validate(args, parser) -> int:
    out_dir = _require_out(args, parser)
    if not args.reference_dir.is_dir():
        log.error("reference directory %s does not exist", args.reference_dir)
        return EXIT_USAGE
    try:
        originals = _load_codes_dir(args.reference_dir)
    except ValueError as exc:
        log.error("malformed code file in %s: %s", args.reference_dir, exc)
        return EXIT_USAGE
    if len(originals) < 2:
        log.error("need at least 2 reference codes, found %d", len(originals))
        return EXIT_INSUFFICIENT
    try:
        with open(args.authentic_map) as fh:
            raw_map = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read authentic map: %s", exc)
        return EXIT_USAGE
    map_root = args.authentic_map.parent
    variants = {}
    for oid, paths in raw_map.items():
        entries = []
        for rel in paths:
            p = Path(rel)
            if not p.is_absolute():
                p = map_root / p
            try:
                entries.append((p.stem, IrisCode.load(p)))
            except (OSError, ValueError) as exc:
                log.error("malformed code file %s: %s", p, exc)
                return EXIT_USAGE
        variants[oid] = entries

    dist = matching.build_distributions(originals, variants, threads=args.threads)
    matching.write_distributions_csv(dist, out_dir / "distributions.csv")
    if dist.authentic_empty:
        log.error("authentic map produced no samples; cannot sweep thresholds")
        return EXIT_INSUFFICIENT
    report = matching.sweep_threshold(dist)
    matching.write_threshold_csv(report, out_dir / "thresholds.csv")
    matching.write_summary_json(report, out_dir / "summary.json")
    stats = dist.stats()
    log.info(
        "authentic n=%d mean=%.4f; imposter n=%d mean=%.4f; criterion %.2f (FAR %.3g, FRR %.3g)",
        stats["authentic"].count, stats["authentic"].mean,
        stats["imposter"].count, stats["imposter"].mean,
        report.chosen, report.chosen_far, report.chosen_frr,
    )
    return EXIT_OK


def cmd_screen(args, parser) -> int:
    out_dir = _require_out(args, parser)
    if not 0 < args.criterion < 1:
        parser.error("--criterion must be in (0, 1)")
    for d in (args.candidates_dir, args.references_dir):
        if not d.is_dir():
            log.error("directory %s does not exist", d)
            return EXIT_USAGE
    try:
        candidates = _load_codes_dir(args.candidates_dir)
        references = _load_codes_dir(args.references_dir)
    except ValueError as exc:
        log.error("malformed code file: %s", exc)
        return EXIT_USAGE
    if not candidates or not references:
        log.error("candidate and reference directories must be non-empty")
        return EXIT_INSUFFICIENT
    report = matching.uniqueness_screen(
        candidates, references, args.criterion, threads=args.threads
    )
    matching.write_screen_csv(report, out_dir / "screen.csv")
    print(f"{report.n_pass} passed, {report.n_fail} failed at criterion {args.criterion}")
    return EXIT_OK


def _ilr_vectors_for_dir(d: Path, bin_label: str, threads: int):
    rows = []
    paths = sorted(d.rglob("*.png"))

    def work(p: Path):
        image_id = p.relative_to(d).with_suffix("").as_posix()
        try:
            img = load_png(p)
            if img.ndim != 3:
                return image_id, None, "not an RGB image"
            b = pipeline.approximate_boundaries(img)
            comp = colors.quantify_colors(img, b)
            return image_id, colors.ilr_transform(comp), ""
        except ValueError as exc:
            return image_id, None, str(exc)

    for stem, vec, err in _parallel(work, paths, threads):
        if vec is None:
            log.warning("skipped %s/%s: %s", bin_label, stem, err)
        else:
            rows.append((stem, vec))
    return rows


def cmd_coloranalysis(args, parser) -> int:
    out_dir = _require_out(args, parser)
    if not args.set_a.is_dir() or (args.set_b and not args.set_b.is_dir()):
        log.error("input directories must exist")
        return EXIT_USAGE
    set_a = _ilr_vectors_for_dir(args.set_a, "a", args.threads)
    if not set_a:
        log.error("set A produced no usable compositions")
        return EXIT_INSUFFICIENT
    set_b = _ilr_vectors_for_dir(args.set_b, "b", args.threads) if args.set_b else []

    with open(out_dir / "ilr.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "set", "ilr_1", "ilr_2", "ilr_3"])
        for label, rows in (("a", set_a), ("b", set_b)):
            for stem, vec in rows:
                w.writerow([stem, label] + [repr(float(x)) for x in vec])

    all_vecs = np.array([v for _, v in set_a] + [v for _, v in set_b])
    if all_vecs.shape[0] >= 2:
        model = colors.pca_fit(all_vecs)
        with open(out_dir / "pca.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "set", "pc_1", "pc_2", "pc_3"])
            for label, rows in (("a", set_a), ("b", set_b)):
                for stem, vec in rows:
                    proj = colors.pca_project(model, vec)
                    w.writerow([stem, label] + [repr(float(x)) for x in proj])

    a_matrix = np.array([v for _, v in set_a])
    if a_matrix.shape[0] >= 2:
        intra = colors.distance_analysis(a_matrix, bin_width=args.bin_width)
        colors.write_histogram_csv(intra, out_dir / "hist_intra.csv")
    if set_b:
        inter = colors.distance_analysis(
            a_matrix, np.array([v for _, v in set_b]), bin_width=args.bin_width
        )
        colors.write_histogram_csv(inter, out_dir / "hist_inter.csv")
    log.info("analyzed %d + %d images", len(set_a), len(set_b))
    return EXIT_OK


def cmd_selftest(args, parser) -> int:
    ok = selftest.run_selftest(seed=args.seed)
    return EXIT_OK if ok else 1


def _parallel(fn, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "encode": cmd_encode,
    "validate": cmd_validate,
    "screen": cmd_screen,
    "coloranalysis": cmd_coloranalysis,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    return _COMMANDS[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
