import numpy as np
import pytest

from iriskit.imaging import IrisBoundaries, quantize_u8


def annulus_mask(size: int, b: IrisBoundaries) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    rho = np.hypot(xs - b.center_x, ys - b.center_y)
    return (rho >= b.pupil_radius) & (rho <= b.limbic_radius)


def smooth_annulus(size: int = 256, pupil: float = 42.5, limbic: float = 85.0) -> tuple[np.ndarray, IrisBoundaries]:
    """Grayscale annulus with a smooth low-frequency texture on black."""
    c = (size - 1) / 2.0
    b = IrisBoundaries(c, c, pupil, limbic)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    values = 128 + 60 * np.sin(xs / 11.0) * np.cos(ys / 13.0)
    img = quantize_u8(values * annulus_mask(size, b))
    return img, b


def solid_annulus(
    size: int, b: IrisBoundaries, color, background=0
) -> np.ndarray:
    """RGB annulus painted one color on a black (or given) background."""
    mask = annulus_mask(size, b)
    img = np.full((size, size, 3), background, dtype=np.uint8)
    img[mask] = np.asarray(color, dtype=np.uint8)
    return img


def ring_gradient(size: int, b: IrisBoundaries) -> np.ndarray:
    """Grayscale image whose value depends only on the radius."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    rho = np.hypot(xs - b.center_x, ys - b.center_y)
    values = np.clip((rho - b.pupil_radius) / (b.limbic_radius - b.pupil_radius), 0, 1)
    return quantize_u8(40 + 180 * values)


@pytest.fixture(scope="session")
def textured_iris():
    """One synthetic identity shared across read-only tests."""
    from iriskit.synth import make_iris_frame

    return make_iris_frame(4242)
