"""Pigmentation analysis: palette composition, log-ratio geometry, PCA.

Each colored pixel of an iris is assigned to the nearest of four palette
centroids (blue-grey, green, light-brown, dark-brown) in CIELAB space; the
per-image category fractions form a 4-part composition. Compositions map to
unconstrained 3-vectors through the isometric log-ratio transform, where
Aitchison distance becomes plain Euclidean distance, and the resulting
vectors feed PCA projections and intra/inter-set distance histograms.

The ILR basis is the Helmert-style orthonormal basis, rows i = 1..3 of

    v_i = sqrt(i/(i+1)) * (1/i, ..., 1/i [i entries], -1, 0, ...)

identical across runs and documented here so exports are comparable.
Default centroids are tooling constants (sRGB below), configurable per call.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .imaging import IrisBoundaries

COLORED_PIXEL_THRESHOLD = 10  # max(R,G,B) above this counts as iris pattern

DEFAULT_CENTROIDS_SRGB: tuple[tuple[str, tuple[int, int, int]], ...] = (
    ("blue-grey", (101, 136, 165)),
    ("green", (105, 138, 86)),
    ("light-brown", (160, 115, 65)),
    ("dark-brown", (82, 52, 32)),
)
COOL_CATEGORIES = ("blue-grey", "green")
WARM_CATEGORIES = ("light-brown", "dark-brown")

_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB uint8 (..., 3) to CIELAB (D65)."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


@dataclass(frozen=True)
class Palette:
    """Named centroids classified against in Lab space; ties go to the
    earlier entry."""

    entries: tuple[tuple[str, tuple[int, int, int]], ...] = DEFAULT_CENTROIDS_SRGB

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    def lab_centroids(self) -> np.ndarray:
        return srgb_to_lab(np.array([rgb for _, rgb in self.entries], dtype=np.uint8))


DEFAULT_PALETTE = Palette()


class ColorComposition(NamedTuple):
    """Palette-category fractions (nonnegative, summing to 1) plus the number
    of colored pixels counted."""

    fractions: np.ndarray
    labels: tuple[str, ...]
    pixel_count: int


def quantify_colors(
    img: np.ndarray,
    b: IrisBoundaries | None = None,
    palette: Palette = DEFAULT_PALETTE,
) -> ColorComposition:
    """Fractions of annulus pixels nearest each palette centroid.

    Pixels count as colored when max(R,G,B) exceeds the colored-pixel
    threshold; with boundaries given, only pixels whose center radius lies in
    [pupil, limbic] participate.
    """
    if img.ndim != 3:
        raise ValueError("quantify_colors needs an RGB image")
    colored = img.max(axis=2) > COLORED_PIXEL_THRESHOLD
    if b is not None:
        h, w = img.shape[:2]
        ys, xs = np.mgrid[0:h, 0:w]
        rho = np.hypot(xs - b.center_x, ys - b.center_y)
        colored &= (rho >= b.pupil_radius) & (rho <= b.limbic_radius)
    pixels = img[colored]
    if pixels.shape[0] == 0:
        raise ValueError("no colored pixels inside the annulus")
    lab = srgb_to_lab(pixels)
    dists = np.linalg.norm(lab[:, None, :] - palette.lab_centroids()[None, :, :], axis=2)
    nearest = dists.argmin(axis=1)  # ties -> earlier palette entry
    counts = np.bincount(nearest, minlength=len(palette.entries))
    return ColorComposition(
        fractions=counts / counts.sum(),
        labels=palette.names,
        pixel_count=int(pixels.shape[0]),
    )


def ilr_basis(dim: int) -> np.ndarray:
    """Helmert-style orthonormal basis of the clr subspace, rows (dim-1, dim)."""
    basis = np.zeros((dim - 1, dim))
    for i in range(1, dim):
        basis[i - 1, :i] = 1.0 / i
        basis[i - 1, i] = -1.0
        basis[i - 1] *= np.sqrt(i / (i + 1.0))
    return basis


def ilr_transform(c: ColorComposition | np.ndarray, pseudo: float = 1e-4) -> np.ndarray:
    """Isometric log-ratio coordinates of a composition (D parts -> D-1 reals).

    Zero fractions are replaced by `pseudo` and the composition renormalized
    before taking logs.
    """
    x = np.asarray(c.fractions if isinstance(c, ColorComposition) else c, dtype=np.float64)
    x = np.where(x == 0.0, pseudo, x)
    x = x / x.sum()
    logs = np.log(x)
    clr = logs - logs.mean()
    return ilr_basis(x.size) @ clr


@dataclass
class PcaModel:
    """Mean, orthonormal component rows (descending variance), eigenvalues."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray


def pca_fit(vectors: Sequence[np.ndarray] | np.ndarray, k: int | None = None) -> PcaModel:
    """PCA via eigendecomposition of the sample covariance matrix.

    Components are the top-k eigenvectors ordered by descending eigenvalue
    (equal eigenvalues tie-break lexicographically on the component entries),
    each with its first nonzero coordinate forced positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca_fit needs at least 2 vectors")
    dim = x.shape[1]
    if k is None:
        k = dim
    if not 1 <= k <= dim:
        raise ValueError(f"k must be in [1, {dim}]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    eigvals = eigvals[::-1].copy()
    comps = eigvecs[:, ::-1].T.copy()
    for row in comps:
        nz = np.where(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    # stable ordering when eigenvalues tie
    order = sorted(range(dim), key=lambda i: (-eigvals[i], tuple(comps[i])))
    eigvals = np.maximum(eigvals[order], 0.0)
    comps = comps[order]
    return PcaModel(mean=mean, components=comps[:k], explained_variance=eigvals[:k])


def pca_project(m: PcaModel, v: np.ndarray) -> np.ndarray:
    """Coordinates of v (or rows of v) in the component basis."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape[-1] != m.mean.size:
        raise ValueError(f"dimension mismatch: {arr.shape[-1]} vs model {m.mean.size}")
    return (arr - m.mean) @ m.components.T


def pca_reconstruct(m: PcaModel, coords: np.ndarray) -> np.ndarray:
    """Inverse of pca_project (exact when the model keeps full rank)."""
    return np.asarray(coords, dtype=np.float64) @ m.components + m.mean


class DistanceHistogram(NamedTuple):
    """Raw distance values plus their binned counts (bin i spans
    [edges[i], edges[i+1]); the final bin is right-closed)."""

    values: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray
    mode: str  # "intra" | "inter"


def distance_analysis(
    set_a: np.ndarray,
    set_b: np.ndarray | None = None,
    bin_width: float = 0.05,
) -> DistanceHistogram:
    """Euclidean distance structure of ilr vectors.

    Intra mode (set_b None): all unordered pairwise distances within set_a.
    Inter mode: for each vector of set_b, the minimum distance to set_a.
    """
    a = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    if a.shape[0] == 0:
        raise ValueError("set_a is empty")
    if set_b is None:
        if a.shape[0] < 2:
            raise ValueError("intra mode needs at least 2 vectors")
        diffs = a[:, None, :] - a[None, :, :]
        dmat = np.linalg.norm(diffs, axis=2)
        iu = np.triu_indices(a.shape[0], k=1)
        values = dmat[iu]
        mode = "intra"
    else:
        b = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
        if b.shape[0] == 0:
            raise ValueError("set_b is empty")
        dmat = np.linalg.norm(b[:, None, :] - a[None, :, :], axis=2)
        values = dmat.min(axis=1)
        mode = "inter"
    top = float(values.max()) if values.size else 0.0
    n_bins = int(np.floor(top / bin_width)) + 1  # edges always cover the max
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(values, bins=edges)
    return DistanceHistogram(values=values, bin_edges=edges, counts=counts, mode=mode)


def write_histogram_csv(hist: DistanceHistogram, path) -> None:
    """CSV export: bin_lo,bin_hi,count."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for i, c in enumerate(hist.counts):
            w.writerow(
                [repr(float(hist.bin_edges[i])), repr(float(hist.bin_edges[i + 1])), int(c)]
            )
