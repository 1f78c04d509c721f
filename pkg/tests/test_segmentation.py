import numpy as np
import pytest

from iriskit.imaging import IrisBoundaries, wrap_cartesian
from iriskit.segmentation import (
    BoundarySpec,
    DeviationExceededError,
    NoBoundariesError,
    min_enclosing_circle,
    otsu_threshold,
    segment_iris,
    trace_contours,
)
from iriskit.selftest import brute_force_min_circle, exhaustive_otsu

from conftest import smooth_annulus, solid_annulus


class TestOtsu:
    def test_two_mass_histogram(self):
        rng = np.random.default_rng(0)
        img = rng.choice(np.array([10, 200], dtype=np.uint8), size=(64, 64))
        got = otsu_threshold(img)
        want_t, _ = exhaustive_otsu(img)
        assert not got.degenerate
        assert 10 <= got.threshold <= 199
        assert got.threshold == want_t

    def test_constant_image_degenerate(self):
        img = np.full((8, 8), 42, dtype=np.uint8)
        got = otsu_threshold(img)
        assert got.degenerate
        assert got.threshold == 42

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_exhaustive_scan(self, seed):
        rng = np.random.default_rng(seed)
        if seed % 2:
            img = rng.integers(0, 256, (64, 64)).astype(np.uint8)
        else:
            bimodal = np.concatenate(
                [rng.normal(60, 20, 2048), rng.normal(190, 25, 2048)]
            )
            img = np.clip(bimodal, 0, 255).astype(np.uint8).reshape(64, 64)
        want_t, want_var = exhaustive_otsu(img)
        got = otsu_threshold(img)
        assert got.threshold == want_t

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            otsu_threshold(np.zeros((0, 4), dtype=np.uint8))


def _flood_components(mask, connect8):
    """Label connected components by BFS: an independent counting oracle."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    if connect8:
        steps = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    else:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    count = 0
    comps = []
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            count += 1
            stack = [(sy, sx)]
            seen[sy, sx] = True
            cells = []
            while stack:
                y, x = stack.pop()
                cells.append((y, x))
                for dy, dx in steps:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            comps.append(cells)
    return comps


def _count_holes(mask):
    """4-connected background components not touching the frame edge."""
    bg = ~mask
    holes = 0
    for cells in _flood_components(bg, connect8=False):
        if not any(y in (0, mask.shape[0] - 1) or x in (0, mask.shape[1] - 1) for y, x in cells):
            holes += 1
    return holes


class TestTraceContours:
    def test_empty_mask(self):
        assert trace_contours(np.zeros((8, 8), dtype=bool)) == []

    def test_filled_square_border(self):
        mask = np.zeros((14, 14), dtype=bool)
        mask[2:12, 2:12] = True
        contours = trace_contours(mask)
        assert len(contours) == 1
        assert contours[0].kind == "outer"
        # oracle: border pixels of a 10x10 block = 36
        border = {
            (x, y)
            for y in range(2, 12)
            for x in range(2, 12)
            if y in (2, 11) or x in (2, 11)
        }
        got = {tuple(p) for p in contours[0].points}
        assert got == border

    def test_annulus_outer_and_hole(self):
        mask = np.zeros((64, 64), dtype=bool)
        ys, xs = np.mgrid[0:64, 0:64]
        rho = np.hypot(xs - 31.5, ys - 31.5)
        mask[(rho >= 10) & (rho <= 25)] = True
        contours = trace_contours(mask)
        kinds = sorted(c.kind for c in contours)
        assert kinds == ["hole", "outer"]

    def test_outer_is_counterclockwise_visually(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[3:7, 3:7] = True
        (contour,) = trace_contours(mask)
        pts = contour.points
        # shoelace in y-down pixel coordinates: negative = CCW on screen
        x, y = pts[:, 0], pts[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area < 0

    def test_single_pixel(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 3] = True
        (contour,) = trace_contours(mask)
        assert contour.kind == "outer"
        assert contour.points.tolist() == [[3, 2]]

    @pytest.mark.parametrize("seed", range(10))
    def test_counts_match_flood_fill_oracle(self, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((24, 24)) < 0.45
        contours = trace_contours(mask)
        n_outer = sum(c.kind == "outer" for c in contours)
        n_holes = sum(c.kind == "hole" for c in contours)
        assert n_outer == len(_flood_components(mask, connect8=True))
        assert n_holes == _count_holes(mask)


class TestMinEnclosingCircle:
    def test_single_point(self):
        c = min_enclosing_circle([(3.0, 4.0)])
        assert (c.center_x, c.center_y, c.radius) == (3.0, 4.0, 0.0)

    def test_two_points(self):
        c = min_enclosing_circle([(0.0, 0.0), (6.0, 8.0)])
        assert c.center_x == pytest.approx(3.0)
        assert c.center_y == pytest.approx(4.0)
        assert c.radius == pytest.approx(5.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            min_enclosing_circle([])

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-100, 100, (30, 2))
        got = min_enclosing_circle(pts)
        _, want_r = brute_force_min_circle(pts)
        assert abs(got.radius - want_r) <= 1e-9 * max(1.0, want_r)

    @pytest.mark.parametrize("seed", range(5))
    def test_containment_and_support(self, seed):
        rng = np.random.default_rng(100 + seed)
        pts = rng.uniform(-20, 20, (int(rng.integers(2, 40)), 2))
        c = min_enclosing_circle(pts)
        d = np.hypot(pts[:, 0] - c.center_x, pts[:, 1] - c.center_y)
        assert d.max() <= c.radius + 1e-9
        assert (np.abs(d - c.radius) <= 1e-6).sum() >= (1 if c.radius == 0 else 2)


class TestSegmentIris:
    SPEC = BoundarySpec(45.0, 85.0, tolerance=3.0, max_center_offset=10.0)

    def test_synthetic_annulus_success(self):
        c = 127.5
        b = IrisBoundaries(c, c, 45.0, 85.0)
        img = solid_annulus(256, b, (140, 110, 80))
        found = segment_iris(img, self.SPEC)
        assert found.pupil_radius == pytest.approx(45.0, abs=1.0)
        assert found.limbic_radius == pytest.approx(85.0, abs=1.0)
        assert found.center_x == pytest.approx(c, abs=1.0)

    def test_textured_frame_success(self, textured_iris):
        img, b = textured_iris
        found = segment_iris(img, BoundarySpec(42.5, 85.0, 3.0))
        assert found.pupil_radius == pytest.approx(b.pupil_radius, abs=2.0)
        assert found.limbic_radius == pytest.approx(b.limbic_radius, abs=2.0)

    def test_deviating_limbic_rejected(self):
        c = 127.5
        img = solid_annulus(256, IrisBoundaries(c, c, 45.0, 95.0), (140, 110, 80))
        with pytest.raises(DeviationExceededError):
            segment_iris(img, self.SPEC)

    def test_all_black_rejected(self):
        img = np.zeros((256, 256, 3), dtype=np.uint8)
        with pytest.raises(NoBoundariesError):
            segment_iris(img, self.SPEC)

    def test_off_center_rejected(self):
        b = IrisBoundaries(100.0, 127.5, 45.0, 85.0)  # 27.5 px off center
        img = solid_annulus(256, b, (140, 110, 80))
        with pytest.raises((NoBoundariesError, DeviationExceededError)):
            segment_iris(img, self.SPEC)

    def test_segments_wrapped_strip_output(self):
        # spec invariant: wrap output of any strip at the expected radii segments
        rng = np.random.default_rng(11)
        strip = rng.integers(60, 220, (45, 360, 3)).astype(np.uint8)
        c = 127.5
        b = IrisBoundaries(c, c, 45.0, 85.0)
        img = wrap_cartesian(strip, b, 256)
        found = segment_iris(img, self.SPEC)
        assert abs(found.pupil_radius - 45.0) <= 2.0
        assert abs(found.limbic_radius - 85.0) <= 2.0

    def test_gray_input_accepted(self):
        img, b = smooth_annulus()
        found = segment_iris(img, BoundarySpec(42.5, 85.0, 3.0))
        assert found.pupil_radius == pytest.approx(42.5, abs=2.0)
