"""Locating the pupillary and limbic boundary circles of an iris-on-black frame.

The chain mirrors a classical pipeline: Otsu threshold, border following over
the binary mask (Suzuki-Abe), minimum enclosing circle per contour (Welzl),
then expectation-driven selection of the (pupil, limbic) pair. Everything is
deterministic; Welzl runs without randomization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .imaging import IrisBoundaries, image_center, to_grayscale


class SegmentationError(Exception):
    """Base class for segmentation failures."""


class NoBoundariesError(SegmentationError):
    """No usable contours were found."""


class DeviationExceededError(SegmentationError):
    """Detected radii deviate from the expected geometry by more than the
    allowed tolerance."""


class AmbiguousCandidatesError(SegmentationError):
    """More than one circle pair fits the expectations equally well."""


class OtsuResult(NamedTuple):
    threshold: int
    degenerate: bool


def otsu_threshold(img: np.ndarray) -> OtsuResult:
    """Split level maximizing between-class variance of the <=t / >t classes.

    Ties within 1e-9 relative of the maximum resolve to the smallest t. A
    constant image has no split; the constant value is returned with the
    degenerate flag set.
    """
    if img.size == 0:
        raise ValueError("empty image")
    hist = np.bincount(img.reshape(-1), minlength=256).astype(np.float64)
    n = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    m0_sum = np.cumsum(hist * levels)
    total = m0_sum[-1]
    w1 = n - w0
    valid = (w0 > 0) & (w1 > 0)
    mu0 = np.divide(m0_sum, w0, out=np.zeros(256), where=w0 > 0)
    mu1 = np.divide(total - m0_sum, w1, out=np.zeros(256), where=w1 > 0)
    var = np.where(valid, (w0 / n) * (w1 / n) * (mu0 - mu1) ** 2, 0.0)
    vmax = var.max()
    if vmax <= 0.0:
        return OtsuResult(int(img.reshape(-1)[0]), True)
    t = int(np.argmax(var >= vmax * (1.0 - 1e-9)))
    return OtsuResult(t, False)


@dataclass
class Contour:
    """Closed 8-connected pixel loop; points are (x, y) integer coordinates.

    Outer contours run counterclockwise in the visual (y up) sense, hole
    contours clockwise.
    """

    points: np.ndarray
    kind: str  # "outer" | "hole"


# clockwise neighbor ring around a pixel, starting east
_NEIGHBORS = np.array(
    [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)]
)
_DIR_INDEX = {(int(dy), int(dx)): i for i, (dy, dx) in enumerate(_NEIGHBORS)}


def _signed_area(points: np.ndarray) -> float:
    # shoelace in pixel coordinates (y down); negative = counterclockwise visually
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def trace_contours(mask: np.ndarray) -> list[Contour]:
    """Suzuki-Abe border following over a boolean mask.

    Every 8-connected foreground component yields exactly one outer contour;
    every interior hole yields one hole contour (points lie on the foreground
    pixels bounding the hole).
    """
    h, w = mask.shape
    # pad with a background frame so border starts never run off the grid
    f = np.zeros((h + 2, w + 2), dtype=np.int32)
    f[1:-1, 1:-1] = mask.astype(np.int32)

    contours: list[Contour] = []
    nbd = 1
    for i in range(1, h + 1):
        for j in range(1, w + 1):
            if f[i, j] == 0:
                continue
            if f[i, j] == 1 and f[i, j - 1] == 0:
                kind = "outer"
                start_dir = (0, -1)
            elif f[i, j] >= 1 and f[i, j + 1] == 0:
                kind = "hole"
                start_dir = (0, 1)
            else:
                continue
            nbd += 1
            points = _follow_border(f, i, j, start_dir, nbd)
            contours.append(Contour(points - 1, kind))  # unpad coordinates

    for c in contours:
        if len(c.points) >= 3:
            area = _signed_area(c.points)
            want_ccw_visual = c.kind == "outer"
            is_ccw_visual = area < 0
            if area != 0 and is_ccw_visual != want_ccw_visual:
                c.points = c.points[::-1].copy()
    return contours


def _follow_border(f: np.ndarray, i: int, j: int, start_dir: tuple[int, int], nbd: int) -> np.ndarray:
    """Trace one border starting at (i, j); marks f in place. Returns (n, 2)
    points as (x, y)."""
    d0 = _DIR_INDEX[start_dir]
    found = -1
    for k in range(8):
        d = (d0 + k) % 8  # clockwise sweep
        dy, dx = _NEIGHBORS[d]
        if f[i + dy, j + dx] != 0:
            found = d
            break
    if found == -1:
        f[i, j] = -nbd
        return np.array([[j, i]], dtype=np.int64)

    i1, j1 = i + _NEIGHBORS[found][0], j + _NEIGHBORS[found][1]
    i2, j2 = i1, j1
    i3, j3 = i, j
    points = [(j3, i3)]
    while True:
        d_back = _DIR_INDEX[(i2 - i3, j2 - j3)]
        found = -1
        examined_east_zero = False
        for k in range(1, 9):
            d = (d_back - k) % 8  # counterclockwise sweep
            dy, dx = _NEIGHBORS[d]
            if f[i3 + dy, j3 + dx] != 0:
                found = d
                break
            if d == 0:
                examined_east_zero = True
        dy, dx = _NEIGHBORS[found]
        i4, j4 = i3 + dy, j3 + dx
        if examined_east_zero:
            f[i3, j3] = -nbd
        elif f[i3, j3] == 1:
            f[i3, j3] = nbd
        if i4 == i and j4 == j and i3 == i1 and j3 == j1:
            break
        i2, j2 = i3, j3
        i3, j3 = i4, j4
        points.append((j3, i3))
    return np.array(points, dtype=np.int64)


class Circle(NamedTuple):
    center_x: float
    center_y: float
    radius: float


def min_enclosing_circle(points) -> Circle:
    """Smallest circle containing every point (Welzl, deterministic order)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("min_enclosing_circle needs at least one point")

    def contains(c: Circle, p) -> bool:
        eps = 1e-10 * max(1.0, c.radius)
        return (p[0] - c.center_x) ** 2 + (p[1] - c.center_y) ** 2 <= (c.radius + eps) ** 2

    def from_two(a, b) -> Circle:
        cx = (a[0] + b[0]) / 2.0
        cy = (a[1] + b[1]) / 2.0
        r = float(np.hypot(a[0] - b[0], a[1] - b[1])) / 2.0
        return Circle(cx, cy, r)

    def from_three(a, b, c) -> Circle:
        d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-12:
            candidates = [from_two(a, b), from_two(a, c), from_two(b, c)]
            best = None
            for cand in candidates:
                if all(contains(cand, p) for p in (a, b, c)):
                    if best is None or cand.radius < best.radius:
                        best = cand
            return best if best is not None else max(candidates, key=lambda q: q.radius)
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
        return Circle(ux, uy, float(np.hypot(a[0] - ux, a[1] - uy)))

    circle = Circle(float(pts[0, 0]), float(pts[0, 1]), 0.0)
    for i in range(1, len(pts)):
        p = pts[i]
        if contains(circle, p):
            continue
        circle = Circle(float(p[0]), float(p[1]), 0.0)
        for jj in range(i):
            q = pts[jj]
            if contains(circle, q):
                continue
            circle = from_two(p, q)
            for kk in range(jj):
                r = pts[kk]
                if not contains(circle, r):
                    circle = from_three(p, q, r)
    return circle


@dataclass
class BoundarySpec:
    """Expected annulus geometry used to accept or reject a segmentation."""

    expected_pupil_radius: float
    expected_limbic_radius: float
    tolerance: float = 3.0
    max_center_offset: float = 10.0

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if not self.expected_pupil_radius < self.expected_limbic_radius:
            raise ValueError("expected radii must be ordered pupil < limbic")


def segment_iris(img: np.ndarray, spec: BoundarySpec) -> IrisBoundaries:
    """Locate the concentric boundary circles of an iris-on-black frame.

    Raises NoBoundariesError when no centered contours exist,
    DeviationExceededError when radii land outside spec.tolerance, and
    AmbiguousCandidatesError when two distinct circle pairs tie exactly.
    """
    gray = to_grayscale(img) if img.ndim == 3 else img
    level = otsu_threshold(gray)
    if level.degenerate:
        raise NoBoundariesError("uniform image, nothing to segment")
    mask = gray > level.threshold
    contours = trace_contours(mask)
    if not contours:
        raise NoBoundariesError("no contours above threshold")

    cx, cy = image_center(gray)
    candidates = []
    for contour in contours:
        circle = min_enclosing_circle(contour.points)
        offset = float(np.hypot(circle.center_x - cx, circle.center_y - cy))
        if offset <= spec.max_center_offset:
            candidates.append((circle, contour.kind))
    if not candidates:
        raise NoBoundariesError("no contours centered within the allowed offset")

    def plausible(target):
        return [
            (c, kind) for c, kind in candidates if abs(c.radius - target) <= spec.tolerance
        ]

    pupil_cands = plausible(spec.expected_pupil_radius)
    limbic_cands = plausible(spec.expected_limbic_radius)
    # a black pupil disk shows up as a hole in the annulus component; trust it
    hole_pupils = [(c, k) for c, k in pupil_cands if k == "hole"]
    if hole_pupils:
        pupil_cands = hole_pupils

    if not pupil_cands or not limbic_cands:
        radii = sorted(c.radius for c, _ in candidates)
        raise DeviationExceededError(
            f"no circle within {spec.tolerance}px of expected radii "
            f"({spec.expected_pupil_radius}, {spec.expected_limbic_radius}); found {radii}"
        )

    best = None
    best_score = None
    tie = False
    for pc, _ in pupil_cands:
        for lc, _ in limbic_cands:
            if pc == lc:
                continue
            score = abs(pc.radius - spec.expected_pupil_radius) + abs(
                lc.radius - spec.expected_limbic_radius
            )
            if best_score is None or score < best_score - 1e-12:
                best, best_score, tie = (pc, lc), score, False
            elif abs(score - best_score) <= 1e-12 and (pc, lc) != best:
                tie = True
    if best is None:
        raise NoBoundariesError("pupil and limbic candidates collapse to one circle")
    if tie:
        raise AmbiguousCandidatesError("multiple circle pairs fit the expected radii equally well")

    pupil, limbic = best
    return IrisBoundaries(
        center_x=(pupil.center_x + limbic.center_x) / 2.0,
        center_y=(pupil.center_y + limbic.center_y) / 2.0,
        pupil_radius=pupil.radius,
        limbic_radius=limbic.radius,
    )
