import json

import numpy as np
import pytest

from iriskit.imaging import IrisBoundaries, load_png
from iriskit.pipeline import (
    DatasetManifest,
    PipelineConfig,
    approximate_boundaries,
    augment_rotations,
    coverage_gate,
    final_frame_boundaries,
    hole_punch_variants,
    inpaint,
    run_pipeline,
    _punch_mask,
)
from iriskit.segmentation import BoundarySpec, segment_iris
from iriskit.synth import make_iris_frame

from conftest import annulus_mask, solid_annulus

# small geometry keeps the module tests quick; acceptance runs the full size
SMALL_CFG = PipelineConfig(
    polar_width=804,
    polar_height=86,
    wrapped_size=512,
    wrapped_pupil_radius=85.0,
    wrapped_limbic_radius=170.0,
    final_size=128,
    seed=77,
)


def small_corpus(tmp_path, n=4, planted_wedge=None):
    """Source frames at 256 px with radii 45/100; optionally one with a black
    wedge wide enough to fail the coverage gate."""
    src = tmp_path / "src"
    src.mkdir(exist_ok=True)
    from iriskit.imaging import save_png

    for i in range(n):
        wedge = planted_wedge if (planted_wedge and i == 0) else 0.0
        img, _ = make_iris_frame(
            5000 + i, size=256, pupil_radius=45.0, limbic_radius=100.0,
            color_class=i % 2, wedge_degrees=wedge, wedge_start=-5.0,
        )
        save_png(src / f"img_{i:02d}.png", img)
    return src


class TestApproximateBoundaries:
    def test_perfect_annulus(self):
        c = 511.5
        b = IrisBoundaries(c, c, 170.0, 340.0)
        img = solid_annulus(1024, b, (140, 110, 80))
        got = approximate_boundaries(img)
        assert got.pupil_radius == pytest.approx(170.0, abs=1.0)
        assert got.limbic_radius == pytest.approx(340.0, abs=1.0)
        assert (got.center_x, got.center_y) == (c, c)

    def test_all_black_rejected(self):
        with pytest.raises(ValueError):
            approximate_boundaries(np.zeros((64, 64, 3), dtype=np.uint8))

    def test_single_pixel_degenerates(self):
        img = np.zeros((64, 64, 3), dtype=np.uint8)
        img[10, 40] = 200
        got = approximate_boundaries(img)
        assert got.pupil_radius == got.limbic_radius
        with pytest.raises(ValueError):
            got.validate()  # rejected downstream by the radii invariant


class TestCoverageGate:
    B = IrisBoundaries(127.5, 127.5, 45.0, 100.0)

    def _wedged(self, wedge_degrees):
        img, _ = make_iris_frame(
            61, size=256, pupil_radius=45.0, limbic_radius=100.0,
            wedge_degrees=wedge_degrees, wedge_start=-5.0,
        )
        return img

    def test_full_annulus_passes(self):
        result = coverage_gate(self._wedged(0.0), self.B)
        assert result.passed
        assert result.empty_ray_angles == ()

    def test_wedge_covering_four_rays_fails(self):
        # wedge from -5 to 95 degrees blanks the rays at 0, 30, 60, 90
        result = coverage_gate(self._wedged(100.0), self.B)
        assert not result.passed
        assert len(result.empty_ray_angles) >= 4

    def test_small_wedge_passes(self):
        # 70 degrees starting at -5 can blank at most rays 0, 30, 60
        result = coverage_gate(self._wedged(70.0), self.B)
        assert result.passed
        assert len(result.empty_ray_angles) <= 3

    def test_monotone_in_wedge_width(self):
        widths = [0, 40, 70, 95, 100, 130, 170, 250, 359]
        empties = [len(coverage_gate(self._wedged(w), self.B).empty_ray_angles) for w in widths]
        assert empties == sorted(empties)
        passes = [coverage_gate(self._wedged(w), self.B).passed for w in widths]
        assert passes == sorted(passes, reverse=True)  # never fail -> pass


class TestInpaint:
    def test_empty_mask_unchanged(self):
        rng = np.random.default_rng(0)
        strip = rng.integers(0, 256, (10, 20, 3)).astype(np.uint8)
        out = inpaint(strip, np.zeros((10, 20), dtype=bool))
        assert (out == strip).all()

    def test_constant_strip_any_mask(self):
        strip = np.full((10, 20), 91, dtype=np.uint8)
        mask = np.zeros((10, 20), dtype=bool)
        mask[3:7, 5:15] = True
        assert (inpaint(strip, mask) == 91).all()

    def test_single_missing_is_neighbor_mean(self):
        rng = np.random.default_rng(1)
        strip = rng.integers(0, 256, (5, 7)).astype(np.uint8)
        mask = np.zeros((5, 7), dtype=bool)
        mask[2, 3] = True
        neighbors = [strip[y, x] for y in (1, 2, 3) for x in (2, 3, 4) if (y, x) != (2, 3)]
        want = int(np.floor(np.mean(neighbors) + 0.5))
        assert inpaint(strip, mask)[2, 3] == want

    def test_angular_wraparound(self):
        strip = np.zeros((3, 8), dtype=np.uint8)
        strip[:, -1] = 100  # only wrap-adjacent samples are known neighbors
        strip[:, 1] = 200
        mask = np.zeros((3, 8), dtype=bool)
        mask[:, 0] = True
        strip[mask] = 0
        out = inpaint(strip, mask)
        assert out[1, 0] == 150  # mean of 100s and 200s across the seam

    def test_fully_missing_rejected(self):
        with pytest.raises(ValueError):
            inpaint(np.zeros((4, 4), dtype=np.uint8), np.ones((4, 4), dtype=bool))

    def test_mask_shape_checked(self):
        with pytest.raises(ValueError):
            inpaint(np.zeros((4, 4), dtype=np.uint8), np.zeros((4, 5), dtype=bool))


class TestHolePunch:
    def test_variant_count_and_shape(self):
        img, b = make_iris_frame(71, size=128, pupil_radius=21.25, limbic_radius=42.5)
        cfg = SMALL_CFG
        variants = hole_punch_variants(img, b, cfg, image_seed=9)
        assert len(variants) == 30
        assert all(v.shape == img.shape for v in variants)

    def test_reproducible(self):
        img, b = make_iris_frame(72, size=128, pupil_radius=21.25, limbic_radius=42.5)
        v1 = hole_punch_variants(img, b, SMALL_CFG, image_seed=3)
        v2 = hole_punch_variants(img, b, SMALL_CFG, image_seed=3)
        assert all((a == b_).all() for a, b_ in zip(v1, v2))

    def test_different_seeds_differ(self):
        img, b = make_iris_frame(73, size=128, pupil_radius=21.25, limbic_radius=42.5)
        v1 = hole_punch_variants(img, b, SMALL_CFG, image_seed=3)
        v2 = hole_punch_variants(img, b, SMALL_CFG, image_seed=4)
        assert any((a != b_).any() for a, b_ in zip(v1, v2))

    def test_cleared_fraction_in_band(self):
        b = final_frame_boundaries(SMALL_CFG)
        size = SMALL_CFG.final_size
        ys, xs = np.mgrid[0:size, 0:size]
        rho = np.hypot(xs - b.center_x, ys - b.center_y)
        annulus = (rho >= b.pupil_radius) & (rho <= b.limbic_radius)
        scale = size / SMALL_CFG.wrapped_size
        for v in range(10):
            rng = np.random.default_rng([SMALL_CFG.seed, 1, v])
            cleared = _punch_mask(rng, b, (xs, ys, annulus), scale)
            frac = (cleared & annulus).sum() / annulus.sum()
            assert 0.05 <= frac <= 0.25

    def test_variants_change_only_cleared_pixels_region(self):
        img, b = make_iris_frame(74, size=128, pupil_radius=21.25, limbic_radius=42.5)
        variants = hole_punch_variants(img, b, SMALL_CFG, image_seed=5)
        mask = annulus_mask(128, b)
        for v in variants[:5]:
            diff = (v != img).any(axis=2)
            assert diff.any()
            # refill happens inside the annulus only
            assert not (diff & ~mask).any()

    def test_variants_stay_authentic(self):
        # the property the variants exist for: they still match their original
        from iriskit.encoding import encode_image
        from iriskit.matching import best_match

        img, b = make_iris_frame(75, size=256, pupil_radius=42.5, limbic_radius=85.0)
        code = encode_image(img, b)
        cfg = PipelineConfig(seed=7)
        for v in hole_punch_variants(img, b, cfg, image_seed=0):
            assert best_match(code, encode_image(v, b)).hd < 0.4


class TestAugmentRotations:
    def test_twelve_outputs_and_identity_first(self, textured_iris):
        img, _ = textured_iris
        outs = augment_rotations(img)
        assert len(outs) == 12
        assert (outs[0] == img).all()
        assert outs[0] is not img  # copy, not alias

    def test_half_turn_composes_exactly(self, textured_iris):
        from iriskit.imaging import rotate

        img, _ = textured_iris
        outs = augment_rotations(img)
        # output[6] is a clockwise 180; a further 180 restores the original
        # exactly through the quarter-turn fast path
        assert (rotate(outs[6], 180) == img).all()

    def test_square_required(self):
        with pytest.raises(ValueError):
            augment_rotations(np.zeros((10, 20, 3), dtype=np.uint8))


class TestPipelineConfig:
    def test_defaults_valid(self):
        cfg = PipelineConfig()
        assert cfg.polar_width == 3216
        assert cfg.polar_height == 341
        assert cfg.step_degrees * (cfg.rotations + 1) == 360

    def test_rotation_invariant_enforced(self):
        with pytest.raises(ValueError):
            PipelineConfig(rotations=10)

    def test_positive_values_enforced(self):
        with pytest.raises(ValueError):
            PipelineConfig(final_size=0)

    def test_radii_order_enforced(self):
        with pytest.raises(ValueError):
            PipelineConfig(wrapped_pupil_radius=400.0)


class TestRunPipeline:
    def test_mini_corpus(self, tmp_path):
        src = small_corpus(tmp_path, n=4, planted_wedge=100.0)
        out = tmp_path / "out"
        manifest = run_pipeline(src, SMALL_CFG, out)
        assert len(manifest.records) == 4
        rejected = [r for r in manifest.records if r.status == "rejected"]
        assert len(rejected) == 1
        assert rejected[0].id == "img_00"
        assert rejected[0].reason == "coverage"

        survivors = manifest.survivors()
        assert len(survivors) == 3
        for rec in survivors:
            assert len(rec.rotations) == 12
            assert len(rec.hole_punches) == 30
            assert len(rec.authentic) == 41
            assert rec.color_class in (0, 1)
            frame = load_png(out / rec.rotations[0])
            assert frame.shape == (128, 128, 3)
            fb = final_frame_boundaries(SMALL_CFG)
            found = segment_iris(
                frame, BoundarySpec(fb.pupil_radius, fb.limbic_radius, 3.0)
            )
            assert abs(found.pupil_radius - fb.pupil_radius) <= 3.0
            assert abs(found.limbic_radius - fb.limbic_radius) <= 3.0

    def test_deterministic_outputs(self, tmp_path):
        src = small_corpus(tmp_path, n=2)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        m1 = run_pipeline(src, SMALL_CFG, out1)
        m2 = run_pipeline(src, SMALL_CFG, out2)
        assert (out1 / "manifest.jsonl").read_text() == (out2 / "manifest.jsonl").read_text()
        rec = m1.survivors()[0]
        for rel in (rec.rotations[0], rec.hole_punches[7]):
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()

    def test_threads_do_not_change_outputs(self, tmp_path):
        src = small_corpus(tmp_path, n=3)
        out1, out4 = tmp_path / "t1", tmp_path / "t4"
        run_pipeline(src, SMALL_CFG, out1, threads=1)
        run_pipeline(src, SMALL_CFG, out4, threads=4)
        assert (out1 / "manifest.jsonl").read_text() == (out4 / "manifest.jsonl").read_text()

    def test_exclude_list(self, tmp_path):
        src = small_corpus(tmp_path, n=2)
        manifest = run_pipeline(src, SMALL_CFG, tmp_path / "out", exclude=["img_01"])
        rec = next(r for r in manifest.records if r.id == "img_01")
        assert rec.status == "rejected"
        assert rec.reason == "manual_exclude"

    def test_unreadable_file_recorded(self, tmp_path):
        src = small_corpus(tmp_path, n=2)
        (src / "img_zz.png").write_bytes(b"not a png at all")
        manifest = run_pipeline(src, SMALL_CFG, tmp_path / "out")
        rec = next(r for r in manifest.records if r.id == "img_zz")
        assert rec.status == "rejected"
        assert rec.reason == "unreadable"

    def test_missing_input_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            run_pipeline(tmp_path / "nope", SMALL_CFG, tmp_path / "out")

    def test_manifest_round_trip(self, tmp_path):
        src = small_corpus(tmp_path, n=2)
        out = tmp_path / "out"
        manifest = run_pipeline(src, SMALL_CFG, out)
        loaded = DatasetManifest.load(out / "manifest.jsonl")
        assert [r.id for r in loaded.records] == [r.id for r in manifest.records]
        assert loaded.survivors()[0].authentic == manifest.survivors()[0].authentic
        line = (out / "manifest.jsonl").read_text().splitlines()[0]
        record = json.loads(line)
        assert set(record) >= {"id", "status", "reason", "color_class", "boundaries"}
