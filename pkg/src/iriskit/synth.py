"""Procedural iris frames for tests, demos and the self-check corpus.

Textures are random angular Fourier series with smooth radial modulation,
band-limited around the matcher's filter wavelength so every identity
produces a stable, information-rich code. Identities are fully determined by
their seed; frames are rendered through the same polar wrap used by the
pipeline, so the geometry conventions match everywhere.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import IrisBoundaries, quantize_u8, save_png, wrap_cartesian

# plausible iris pigments per class (sRGB); identities jitter around these
CLASS0_BASES = ((96, 132, 168), (126, 143, 156), (104, 138, 92))
CLASS1_BASES = ((158, 116, 66), (120, 82, 44), (84, 54, 34))

_MIN_HARMONIC = 6
_MAX_HARMONIC = 44
_N_HARMONICS = 48


def make_iris_texture(rng: np.random.Generator, radial: int, angular: int) -> np.ndarray:
    """Wrap-continuous texture in [0, 1] with angular energy near 15-25
    cycles per revolution.

    Each harmonic's phase drifts with radius (and its amplitude oscillates),
    so distinct rows carry distinct bit patterns; identities from different
    seeds produce near-independent codes.
    """
    r_norm = np.linspace(0.0, 1.0, radial)[:, None]
    theta = np.arange(angular)[None, :] * (2.0 * np.pi / angular)
    tex = np.zeros((radial, angular))
    ks = rng.integers(_MIN_HARMONIC, _MAX_HARMONIC + 1, size=_N_HARMONICS)
    for k in ks:
        amp = rng.uniform(0.4, 1.0) / np.sqrt(k)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        twist = rng.uniform(-3.0, 3.0) * np.pi  # radial phase drift
        radial_cycles = rng.uniform(0.5, 3.0)
        radial_phase = rng.uniform(0.0, 2.0 * np.pi)
        profile = 0.6 + 0.4 * np.cos(2.0 * np.pi * radial_cycles * r_norm + radial_phase)
        tex += amp * profile * np.cos(k * theta + phase + twist * r_norm)
    # a few radial fibers for low-frequency structure
    for _ in range(6):
        k = rng.integers(2, 6)
        tex += rng.uniform(0.2, 0.5) * np.cos(k * theta + rng.uniform(0, 2 * np.pi)) * (
            0.5 + 0.5 * r_norm
        )
    lo, hi = tex.min(), tex.max()
    return (tex - lo) / (hi - lo) if hi > lo else np.full_like(tex, 0.5)


def make_iris_frame(
    seed: int,
    size: int = 256,
    pupil_radius: float = 42.5,
    limbic_radius: float = 85.0,
    color_class: int | None = None,
    wedge_degrees: float = 0.0,
    wedge_start: float = 0.0,
    n_holes: int = 0,
) -> tuple[np.ndarray, IrisBoundaries]:
    """Render one synthetic identity as an iris-on-black RGB frame.

    wedge_degrees blanks an angular sector (for coverage-gate fixtures) and
    n_holes punches small black gaps (for inpainting fixtures).
    """
    rng = np.random.default_rng(seed)
    c = (size - 1) / 2.0
    b = IrisBoundaries(c, c, pupil_radius, limbic_radius)

    radial = max(32, int(round(limbic_radius - pupil_radius)))
    angular = 720
    tex = make_iris_texture(rng, radial, angular)

    cls = int(rng.integers(0, 2)) if color_class is None else int(color_class)
    bases = CLASS0_BASES if cls == 0 else CLASS1_BASES
    base = np.array(bases[int(rng.integers(0, len(bases)))], dtype=np.float64)
    base = np.clip(base + rng.uniform(-12, 12, size=3), 30, 225)

    shade = 0.55 + 0.65 * tex
    r_norm = np.linspace(0.0, 1.0, radial)[:, None]
    shade *= 1.0 - 0.25 * r_norm  # darker toward the limbic edge
    strip = quantize_u8(np.clip(base[None, None, :] * shade[..., None], 16, 255))

    if wedge_degrees > 0:
        cols = np.arange(angular) * (360.0 / angular)
        in_wedge = (cols - wedge_start) % 360.0 < wedge_degrees
        strip[:, in_wedge, :] = 0
    if n_holes > 0:
        for _ in range(n_holes):
            hr = int(rng.integers(0, radial))
            hc = int(rng.integers(0, angular))
            hh = int(rng.integers(2, max(3, radial // 6)))
            hw = int(rng.integers(4, angular // 20))
            strip[max(0, hr - hh) : hr + hh, hc : hc + hw, :] = 0

    return wrap_cartesian(strip, b, size), b


def make_corpus(
    out_dir,
    n_identities: int,
    seed: int = 0,
    size: int = 256,
    pupil_radius: float = 42.5,
    limbic_radius: float = 85.0,
) -> list[Path]:
    """Write n independent identities as id_####.png under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_identities):
        img, _ = make_iris_frame(
            seed * 1_000_003 + i, size=size,
            pupil_radius=pupil_radius, limbic_radius=limbic_radius,
            color_class=i % 2,
        )
        p = out / f"id_{i:04d}.png"
        save_png(p, img)
        paths.append(p)
    return paths
