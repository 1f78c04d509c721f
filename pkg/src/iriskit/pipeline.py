"""Training-style dataset preparation from raw iris-on-black frames.

Per surviving image the pipeline estimates the annulus geometry, rejects
frames with too little pattern coverage, unwraps to a large polar strip
(bicubic to the configured strip size), fills black gaps inside the strip,
standardizes white balance, re-wraps onto a fixed 1024-frame annulus
(pupil 170 / limbic 340), labels the pigment class, downsizes to the final
256 frame by area interpolation, then emits 12 rotation outputs (original +
11 clockwise 30-degree steps) and 30 hole-punched refill variants. The 41
authentic variants of an image are its 11 rotations plus the 30 hole
punches.

Every decision lands in a JSON-lines manifest (one record per source image,
schema in DatasetManifest). Randomness is confined to hole punching and is
derived per (config seed, image seed, variant index), so outputs are
byte-identical for a fixed seed regardless of parallelism or ordering.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from . import colors
from .imaging import (
    IrisBoundaries,
    image_center,
    load_png,
    resize,
    rotate,
    save_png,
    unwrap_polar,
    white_balance,
    wrap_cartesian,
)

REJECT_UNREADABLE = "unreadable"
REJECT_NO_PATTERN = "no_colored_pixels"
REJECT_DEGENERATE = "degenerate_boundaries"
REJECT_COVERAGE = "coverage"
REJECT_MANUAL = "manual_exclude"


@dataclass
class PipelineConfig:
    """Geometry and augmentation knobs; defaults mirror the target dataset."""

    polar_width: int = 3216
    polar_height: int = 341
    wrapped_size: int = 1024
    wrapped_pupil_radius: float = 170.0
    wrapped_limbic_radius: float = 340.0
    final_size: int = 256
    rotations: int = 11
    step_degrees: int = 30
    hole_punch_count: int = 30
    seed: int = 0
    colored_pixel_threshold: int = 10

    def __post_init__(self):
        numeric = (
            self.polar_width, self.polar_height, self.wrapped_size,
            self.wrapped_pupil_radius, self.wrapped_limbic_radius,
            self.final_size, self.rotations, self.step_degrees,
            self.hole_punch_count,
        )
        if any(v <= 0 for v in numeric):
            raise ValueError("all geometry/augmentation values must be positive")
        if self.step_degrees * (self.rotations + 1) != 360:
            raise ValueError("rotation step times (rotations + 1) must equal 360")
        if not self.wrapped_pupil_radius < self.wrapped_limbic_radius:
            raise ValueError("wrapped radii must be ordered pupil < limbic")


def _colored_mask(img: np.ndarray, threshold: int) -> np.ndarray:
    channelmax = img.max(axis=2) if img.ndim == 3 else img
    return channelmax > threshold


def approximate_boundaries(img: np.ndarray, colored_threshold: int = 10) -> IrisBoundaries:
    """Estimate the annulus of a roughly centered iris-on-black frame.

    Pupil radius = distance from the image center to the nearest colored
    pixel, limbic radius = distance to the farthest. Degenerate results
    (pupil == limbic) are returned as-is and rejected downstream.
    """
    colored = _colored_mask(img, colored_threshold)
    ys, xs = np.nonzero(colored)
    if ys.size == 0:
        raise ValueError("no colored pixels, nothing to bound")
    cx, cy = image_center(img)
    dist = np.hypot(xs - cx, ys - cy)
    return IrisBoundaries(
        center_x=cx, center_y=cy,
        pupil_radius=float(dist.min()),
        limbic_radius=float(dist.max()),
    )


class CoverageResult(NamedTuple):
    passed: bool
    empty_ray_angles: tuple[int, ...]


COVERAGE_RAYS = 12
COVERAGE_SAMPLES = 64
COVERAGE_MIN_HIT_FRACTION = 0.10
COVERAGE_MAX_EMPTY = 3  # >= 4 empty rays reject the image


def coverage_gate(
    img: np.ndarray, b: IrisBoundaries, colored_threshold: int = 10
) -> CoverageResult:
    """Reject frames whose pattern misses four or more 30-degree boundary rays.

    Each ray at 0, 30, ..., 330 degrees samples 64 radii between the pupil
    and limbic boundary (nearest pixel); a ray counts as intersecting the
    pattern when at least 10% of its samples are colored.
    """
    colored = _colored_mask(img, colored_threshold)
    h, w = colored.shape
    radii = b.pupil_radius + (np.arange(COVERAGE_SAMPLES) + 0.5) / COVERAGE_SAMPLES * (
        b.limbic_radius - b.pupil_radius
    )
    empty = []
    for k in range(COVERAGE_RAYS):
        theta = np.deg2rad(k * 360 / COVERAGE_RAYS)
        xs = np.rint(b.center_x + radii * np.cos(theta)).astype(np.int64)
        ys = np.rint(b.center_y - radii * np.sin(theta)).astype(np.int64)
        inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        hits = colored[ys[inside], xs[inside]].sum()
        if hits < COVERAGE_MIN_HIT_FRACTION * COVERAGE_SAMPLES:
            empty.append(k * 360 // COVERAGE_RAYS)
    return CoverageResult(len(empty) <= COVERAGE_MAX_EMPTY, tuple(empty))


def inpaint(strip: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Fill missing strip samples by iterative boundary-inward mean fill.

    Each pass assigns every missing sample with at least one known 8-neighbor
    (columns wrap, rows clamp) the rounded mean of its known neighbors; all
    assignments of a pass read the previous pass's state, so sweep order is
    irrelevant. Terminates when nothing is missing.
    """
    if missing.shape != strip.shape[:2]:
        raise ValueError("mask dimensions must match the strip")
    if missing.all():
        raise ValueError("cannot inpaint a fully missing strip")
    values = strip.astype(np.float64)
    if strip.ndim == 2:
        values = values[..., None]
    known = ~missing.astype(bool)
    values[~known] = 0.0

    while not known.all():
        acc = np.zeros_like(values)
        cnt = np.zeros(known.shape, dtype=np.float64)
        for dy in (-1, 0, 1):
            v = values if dy == 0 else _shift_rows(values, dy)
            k = known if dy == 0 else _shift_rows(known, dy)
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                vv = np.roll(v, dx, axis=1)
                kk = np.roll(k, dx, axis=1)
                acc += vv * kk[..., None]
                cnt += kk
        fill = (~known) & (cnt > 0)
        mean = acc[fill] / cnt[fill][:, None]
        values[fill] = np.floor(mean + 0.5)  # nonnegative: half away from zero
        known |= fill

    out = values.astype(np.uint8)
    return out[..., 0] if strip.ndim == 2 else out


def _shift_rows(arr: np.ndarray, dy: int) -> np.ndarray:
    """Row shift without wraparound; vacated rows read as unknown/zero."""
    out = np.zeros_like(arr)
    if dy > 0:
        out[dy:] = arr[:-dy]
    else:
        out[:dy] = arr[-dy:]
    return out


def label_color_class(
    img: np.ndarray,
    b: IrisBoundaries | None = None,
    palette: colors.Palette = colors.DEFAULT_PALETTE,
) -> int:
    """0 when blue-grey + green pixels exceed half of the pattern, 1 when the
    brown categories do; an exact tie goes to 1."""
    comp = colors.quantify_colors(img, b, palette)
    cool = sum(
        float(comp.fractions[comp.labels.index(name)])
        for name in colors.COOL_CATEGORIES
        if name in comp.labels
    )
    return 0 if cool > 0.5 else 1


def augment_rotations(img: np.ndarray, rotations: int = 11, step_degrees: int = 30) -> list[np.ndarray]:
    """Original plus `rotations` clockwise steps of `step_degrees` each."""
    h, w = img.shape[:2]
    if h != w:
        raise ValueError("rotation augmentation requires a square frame")
    out = [img.copy()]
    for k in range(1, rotations + 1):
        out.append(rotate(img, -step_degrees * k))  # clockwise = negative
    return out


HOLE_DISC_COUNT = (5, 15)
HOLE_DISC_RADIUS = (5.0, 20.0)  # at the 1024-frame scale
HOLE_AREA_FRACTION = (0.05, 0.25)
_HOLE_MAX_ATTEMPTS = 64
_HOLE_MAX_DISCS = 10000


def _punch_mask(
    rng: np.random.Generator,
    b: IrisBoundaries,
    grid: tuple[np.ndarray, np.ndarray, np.ndarray],
    scale: float,
) -> np.ndarray:
    """Union-of-discs mask clearing 5-25% of the annulus.

    Discs beyond the initial 5-15 are added from the same distribution until
    the area floor is met (single discs are far below the band width, so the
    ceiling cannot be jumped).
    """
    xs, ys, annulus = grid
    annulus_px = int(annulus.sum())
    r_lo, r_hi = HOLE_DISC_RADIUS[0] * scale, HOLE_DISC_RADIUS[1] * scale

    def draw_disc():
        theta = rng.uniform(0.0, 2.0 * np.pi)
        radius_sq = rng.uniform(b.pupil_radius**2, b.limbic_radius**2)
        d = np.sqrt(radius_sq)
        cx = b.center_x + d * np.cos(theta)
        cy = b.center_y - d * np.sin(theta)
        r = rng.uniform(r_lo, r_hi)
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= r**2

    for _ in range(_HOLE_MAX_ATTEMPTS):
        cleared = np.zeros(annulus.shape, dtype=bool)
        for _ in range(int(rng.integers(HOLE_DISC_COUNT[0], HOLE_DISC_COUNT[1] + 1))):
            cleared |= draw_disc()
        frac = (cleared & annulus).sum() / annulus_px
        if frac > HOLE_AREA_FRACTION[1]:
            continue  # redraw
        n_extra = 0
        while frac < HOLE_AREA_FRACTION[0] and n_extra < _HOLE_MAX_DISCS:
            cleared |= draw_disc()
            n_extra += 1
            frac = (cleared & annulus).sum() / annulus_px
        if HOLE_AREA_FRACTION[0] <= frac <= HOLE_AREA_FRACTION[1]:
            return cleared
    raise RuntimeError("hole punch area band unreachable for this geometry")


def _native_polar_dims(b: IrisBoundaries) -> tuple[int, int]:
    radial = max(8, int(round(b.limbic_radius - b.pupil_radius)))
    angular = max(64, int(round(2.0 * np.pi * b.limbic_radius)))
    return radial, angular


def hole_punch_variants(
    img: np.ndarray,
    b: IrisBoundaries,
    cfg: PipelineConfig,
    image_seed: int,
) -> list[np.ndarray]:
    """30 deterministic partial-refill variants of a frame.

    Per variant: clear a union of random discs inside the annulus, unwrap the
    holed frame to polar space, inpaint the cleared samples, wrap back and
    composite the refill into exactly the cleared pixels.
    """
    scale = img.shape[0] / cfg.wrapped_size
    radial, angular = _native_polar_dims(b)
    h, w = img.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    rho = np.hypot(xs - b.center_x, ys - b.center_y)
    annulus = (rho >= b.pupil_radius) & (rho <= b.limbic_radius)
    variants = []
    for v in range(cfg.hole_punch_count):
        rng = np.random.default_rng([cfg.seed, image_seed, v])
        cleared = _punch_mask(rng, b, (xs, ys, annulus), scale)
        holed = img.copy()
        holed[cleared] = 0
        strip = unwrap_polar(holed, b, radial, angular)
        mask_img = (cleared * np.uint8(255)).astype(np.uint8)
        mask_strip = unwrap_polar(mask_img, b, radial, angular) > 0
        filled = inpaint(strip, mask_strip)
        refill = wrap_cartesian(filled, b, img.shape[0])
        out = img.copy()
        out[cleared] = refill[cleared]
        variants.append(out)
    return variants


@dataclass
class ManifestRecord:
    """One source image's fate. Paths are relative to the output directory."""

    id: str
    source: str
    status: str  # "ok" | "rejected"
    reason: str | None = None
    color_class: int | None = None
    boundaries: dict | None = None
    rotations: list[str] = field(default_factory=list)
    hole_punches: list[str] = field(default_factory=list)

    @property
    def authentic(self) -> list[str]:
        """The 41 authentic variant paths: 11 rotations + 30 hole punches."""
        return self.rotations[1:] + self.hole_punches

    def to_json(self) -> str:
        d = asdict(self)
        d["authentic"] = self.authentic
        return json.dumps(d, sort_keys=True)


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]

    def survivors(self) -> list[ManifestRecord]:
        return [r for r in self.records if r.status == "ok"]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(r.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        records = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                d.pop("authentic", None)
                records.append(ManifestRecord(**d))
        return cls(records)


def final_frame_boundaries(cfg: PipelineConfig) -> IrisBoundaries:
    """Nominal annulus of a finished frame (wrapped geometry scaled down)."""
    scale = cfg.final_size / cfg.wrapped_size
    c = (cfg.final_size - 1) / 2.0
    return IrisBoundaries(
        center_x=c, center_y=c,
        pupil_radius=cfg.wrapped_pupil_radius * scale,
        limbic_radius=cfg.wrapped_limbic_radius * scale,
    )


def process_image(
    img: np.ndarray, cfg: PipelineConfig, image_seed: int
) -> tuple[str, dict | None, int | None, list[np.ndarray], list[np.ndarray]]:
    """Run one frame through the pipeline.

    Returns (reason, boundaries, color_class, rotations, hole_punches);
    reason is "" on survival.
    """
    try:
        b = approximate_boundaries(img, cfg.colored_pixel_threshold)
    except ValueError:
        return REJECT_NO_PATTERN, None, None, [], []
    bdict = {
        "center_x": b.center_x, "center_y": b.center_y,
        "pupil_radius": b.pupil_radius, "limbic_radius": b.limbic_radius,
    }
    try:
        b.validate(img.shape[1], img.shape[0])
    except ValueError:
        return REJECT_DEGENERATE, bdict, None, [], []
    if not coverage_gate(img, b, cfg.colored_pixel_threshold).passed:
        return REJECT_COVERAGE, bdict, None, [], []

    radial, angular = _native_polar_dims(b)
    strip = unwrap_polar(img, b, radial, angular)
    strip = resize(strip, cfg.polar_width, cfg.polar_height, "bicubic")
    missing = ~_colored_mask(strip, cfg.colored_pixel_threshold)
    if missing.any() and not missing.all():
        strip = inpaint(strip, missing)
    strip = white_balance(strip)

    wc = (cfg.wrapped_size - 1) / 2.0
    wrapped_b = IrisBoundaries(wc, wc, cfg.wrapped_pupil_radius, cfg.wrapped_limbic_radius)
    frame = wrap_cartesian(strip, wrapped_b, cfg.wrapped_size)
    color_class = label_color_class(frame, wrapped_b)
    final = resize(frame, cfg.final_size, cfg.final_size, "area")

    rotations = augment_rotations(final, cfg.rotations, cfg.step_degrees)
    punches = hole_punch_variants(final, final_frame_boundaries(cfg), cfg, image_seed)
    return "", bdict, color_class, rotations, punches


def _stable_image_seed(image_id: str) -> int:
    # order-independent, content-independent seed per image
    h = 1469598103934665603
    for ch in image_id.encode():
        h = ((h ^ ch) * 1099511628211) % (1 << 64)
    return h


def run_pipeline(
    input_dir,
    cfg: PipelineConfig,
    out_dir,
    exclude: Iterable[str] = (),
    threads: int = 1,
) -> DatasetManifest:
    """Process every PNG under input_dir, writing outputs and the manifest.

    Output layout: out/class{0,1}/{id}/rot_{k}.png (k = 0..11, rot_0 is the
    processed original) and auth_{v}.png (v = 0..29, the hole punches).
    Unreadable files are recorded as rejections, not fatal. `exclude` lists
    ids rejected by manual quality review.
    """
    input_dir = Path(input_dir)
    out_dir = Path(out_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory {input_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    excluded = set(exclude)
    sources = sorted(input_dir.glob("*.png"))

    def handle(src: Path) -> ManifestRecord:
        image_id = src.stem
        rec = ManifestRecord(id=image_id, source=str(src), status="rejected")
        if image_id in excluded:
            rec.reason = REJECT_MANUAL
            return rec
        try:
            img = load_png(src)
        except Exception:
            rec.reason = REJECT_UNREADABLE
            return rec
        if img.ndim != 3:
            img = np.repeat(img[..., None], 3, axis=2)
        reason, bdict, color_class, rotations, punches = process_image(
            img, cfg, _stable_image_seed(image_id)
        )
        rec.boundaries = bdict
        if reason:
            rec.reason = reason
            return rec
        rec.status = "ok"
        rec.color_class = color_class
        base = out_dir / f"class{color_class}" / image_id
        base.mkdir(parents=True, exist_ok=True)
        for k, frame in enumerate(rotations):
            p = base / f"rot_{k}.png"
            save_png(p, frame)
            rec.rotations.append(str(p.relative_to(out_dir)))
        for v, frame in enumerate(punches):
            p = base / f"auth_{v}.png"
            save_png(p, frame)
            rec.hole_punches.append(str(p.relative_to(out_dir)))
        return rec

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(handle, sources))
    else:
        records = [handle(s) for s in sources]

    manifest = DatasetManifest(records=sorted(records, key=lambda r: r.id))
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
