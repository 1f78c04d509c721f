"""Pixel-level primitives shared by the whole toolkit.

Images are plain numpy uint8 arrays: shape (H, W) for grayscale, (H, W, 3)
for RGB, row-major, samples in [0, 255]. All functions are pure: they never
modify their inputs and identical inputs give byte-identical outputs.

Conventions fixed here and relied on everywhere else:

* Polar angle is measured counterclockwise (visually, y up) from the +x axis
  about the boundary center. Column c of a polar strip covers the angle
  c * (360 / angular_size) degrees; row 0 is the pupillary edge.
* Radial sampling uses half-pixel centering: row r samples radius
  pupil + (r + 0.5) / radial * (limbic - pupil).
* 8-bit quantization rounds half away from zero (quantize_u8).
* Positive rotation angles turn image content counterclockwise (visually);
  multiples of 90 degrees take an exact flip/transpose path.

CLAHE algorithm, normative details (the test reference implements exactly
this):

* Tile i along an axis of length W spans [floor(i*W/T), floor((i+1)*W/T)).
* Per-tile 256-bin histogram, clipped at limit = max(1, floor(clip_limit *
  tile_pixels / 256)); the clipped excess is redistributed uniformly:
  excess // 256 to every bin, then one each to bins 0..(excess % 256)-1,
  in a single pass.
* Mapping: lut(v) = quantize_u8(cdf(v) * 255 / tile_pixels) with cdf over
  the redistributed histogram.
* Per-pixel output bilinearly blends the luts of the (up to) four tiles
  whose centers surround the pixel; tile center = (start + end - 1) / 2;
  pixels beyond the outermost centers clamp to the edge tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Round half away from zero and clip to [0, 255] as uint8."""
    v = np.asarray(values, dtype=np.float64)
    rounded = np.floor(np.abs(v) + 0.5) * np.sign(v)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def image_center(img: np.ndarray) -> tuple[float, float]:
    """Geometric center (x, y) of the pixel grid."""
    h, w = img.shape[:2]
    return (w - 1) / 2.0, (h - 1) / 2.0


@dataclass
class IrisBoundaries:
    """Concentric pupillary/limbic circles describing an iris annulus."""

    center_x: float
    center_y: float
    pupil_radius: float
    limbic_radius: float

    def validate(self, width: int | None = None, height: int | None = None) -> None:
        """Raise ValueError unless 0 < pupil < limbic and, when dimensions are
        given, both circles lie fully inside the image."""
        if not (0 < self.pupil_radius < self.limbic_radius):
            raise ValueError(
                f"radii must satisfy 0 < pupil ({self.pupil_radius}) "
                f"< limbic ({self.limbic_radius})"
            )
        if width is not None and height is not None:
            r = self.limbic_radius
            if (
                self.center_x - r < -0.5
                or self.center_y - r < -0.5
                or self.center_x + r > width - 0.5
                or self.center_y + r > height - 0.5
            ):
                raise ValueError("limbic circle extends outside the image")

    def scaled(self, factor: float) -> "IrisBoundaries":
        return IrisBoundaries(
            self.center_x * factor,
            self.center_y * factor,
            self.pupil_radius * factor,
            self.limbic_radius * factor,
        )


def _require_channels(img: np.ndarray, channels: int, what: str) -> None:
    ok = img.ndim == 2 if channels == 1 else (img.ndim == 3 and img.shape[2] == channels)
    if not ok:
        raise ValueError(f"{what} requires a {channels}-channel image, got shape {img.shape}")


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """RGB to 8-bit luma (ITU-R 601 weights, rounded half away from zero)."""
    _require_channels(img, 3, "to_grayscale")
    f = img.astype(np.float64)
    luma = GRAY_WEIGHTS[0] * f[..., 0] + GRAY_WEIGHTS[1] * f[..., 1] + GRAY_WEIGHTS[2] * f[..., 2]
    return quantize_u8(luma)


def _bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample float coordinates bilinearly; out-of-image contributions are 0.

    Returns float64 values with the image's channel layout.
    """
    h, w = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    vals = None
    for dy, dx, weight in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xi_c = np.clip(xi, 0, w - 1)
        yi_c = np.clip(yi, 0, h - 1)
        pix = img[yi_c, xi_c].astype(np.float64)
        wgt = weight * inside
        if img.ndim == 3:
            wgt = wgt[..., None]
        contrib = pix * wgt
        vals = contrib if vals is None else vals + contrib
    return vals


def unwrap_polar(
    img: np.ndarray, b: IrisBoundaries, radial: int, angular: int
) -> np.ndarray:
    """Map the iris annulus to a (radial x angular) polar strip.

    Row r, column c holds the bilinear sample at radius
    pupil + (r + 0.5)/radial * (limbic - pupil) and angle c * 360/angular
    degrees (counterclockwise from +x about the boundary center).
    """
    if radial < 1 or angular < 1:
        raise ValueError("radial and angular sizes must be >= 1")
    b.validate(img.shape[1], img.shape[0])
    radii = b.pupil_radius + (np.arange(radial) + 0.5) / radial * (
        b.limbic_radius - b.pupil_radius
    )
    angles = np.arange(angular) * (2.0 * math.pi / angular)
    xs = b.center_x + radii[:, None] * np.cos(angles)[None, :]
    ys = b.center_y - radii[:, None] * np.sin(angles)[None, :]
    return quantize_u8(_bilinear_sample(img, xs, ys))


def wrap_cartesian(strip: np.ndarray, b: IrisBoundaries, out_size: int) -> np.ndarray:
    """Inverse of unwrap_polar: paint the strip back onto a square black frame.

    Pixels whose center radius falls outside [pupil_radius, limbic_radius]
    stay 0; the angular axis wraps, the radial axis clamps at the edges.
    """
    b.validate(out_size, out_size)
    radial, angular = strip.shape[:2]
    ys_g, xs_g = np.mgrid[0:out_size, 0:out_size].astype(np.float64)
    dx = xs_g - b.center_x
    dy = b.center_y - ys_g
    rho = np.hypot(dx, dy)
    theta = np.mod(np.arctan2(dy, dx), 2.0 * math.pi)

    r_cont = (rho - b.pupil_radius) / (b.limbic_radius - b.pupil_radius) * radial - 0.5
    r_cont = np.clip(r_cont, 0.0, radial - 1.0)
    c_cont = theta / (2.0 * math.pi) * angular

    r0 = np.floor(r_cont).astype(np.int64)
    r1 = np.minimum(r0 + 1, radial - 1)
    fr = r_cont - r0
    c0 = np.floor(c_cont).astype(np.int64) % angular
    c1 = (c0 + 1) % angular
    fc = c_cont - np.floor(c_cont)

    def gather(ri, ci):
        return strip[ri, ci].astype(np.float64)

    w00 = (1 - fr) * (1 - fc)
    w01 = (1 - fr) * fc
    w10 = fr * (1 - fc)
    w11 = fr * fc
    if strip.ndim == 3:
        w00, w01, w10, w11 = (w[..., None] for w in (w00, w01, w10, w11))
    vals = (
        gather(r0, c0) * w00
        + gather(r0, c1) * w01
        + gather(r1, c0) * w10
        + gather(r1, c1) * w11
    )

    inside = (rho >= b.pupil_radius) & (rho <= b.limbic_radius)
    if strip.ndim == 3:
        inside = inside[..., None]
    return quantize_u8(np.where(inside, vals, 0.0))


def white_balance(img: np.ndarray) -> np.ndarray:
    """Neutralize color temperature against the brightest 1% of non-black pixels.

    Channel gains are mean-of-means over that subset; black pixels (0,0,0)
    are untouched by construction since scaling preserves zero.
    """
    _require_channels(img, 3, "white_balance")
    flat = img.reshape(-1, 3).astype(np.float64)
    nonblack = np.where(flat.max(axis=1) > 0)[0]
    if nonblack.size < 100:
        raise ValueError(f"need >= 100 non-black pixels, found {nonblack.size}")
    means = flat[nonblack].mean(axis=1)
    k = max(1, nonblack.size // 100)
    # stable sort: descending mean, ties by pixel order
    order = np.argsort(-means, kind="stable")[:k]
    subset = flat[nonblack[order]]
    channel_means = subset.mean(axis=0)
    target = channel_means.mean()
    safe = np.where(channel_means > 0, channel_means, 1.0)
    scales = np.where(channel_means > 0, target / safe, 1.0)
    return quantize_u8(img.astype(np.float64) * scales)


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate a square image about its center, positive = counterclockwise.

    Multiples of 90 degrees use the exact lossless path; everything else is
    bilinear with black fill outside the source.
    """
    h, w = img.shape[:2]
    if h != w:
        raise ValueError(f"rotation requires a square image, got {w}x{h}")
    deg = float(degrees) % 360.0
    if deg == 0.0:
        return img.copy()
    if deg % 90.0 == 0.0:
        return np.ascontiguousarray(np.rot90(img, k=int(deg // 90)))
    alpha = math.radians(deg)
    cx, cy = image_center(img)
    ys_g, xs_g = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs_g - cx
    dy = ys_g - cy
    cos_a, sin_a = math.cos(alpha), math.sin(alpha)
    src_x = cx + dx * cos_a - dy * sin_a
    src_y = cy + dx * sin_a + dy * cos_a
    return quantize_u8(_bilinear_sample(img, src_x, src_y))


def _tile_edges(size: int, tiles: int) -> np.ndarray:
    return np.floor(np.arange(tiles + 1) * size / tiles).astype(np.int64)


def clahe(img: np.ndarray, clip_limit: float = 2.0, tiles_x: int = 8, tiles_y: int = 8) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization (grayscale).

    See the module docstring for the exact histogram clipping, redistribution,
    mapping and blending rules.
    """
    _require_channels(img, 1, "clahe")
    h, w = img.shape
    if tiles_x < 1 or tiles_y < 1 or w < tiles_x or h < tiles_y:
        raise ValueError(f"degenerate tile grid {tiles_x}x{tiles_y} for {w}x{h} image")

    xe = _tile_edges(w, tiles_x)
    ye = _tile_edges(h, tiles_y)
    luts = np.empty((tiles_y, tiles_x, 256), dtype=np.float64)
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            tile = img[ye[ty]:ye[ty + 1], xe[tx]:xe[tx + 1]]
            n = tile.size
            hist = np.bincount(tile.reshape(-1), minlength=256).astype(np.int64)
            limit = max(1, int(clip_limit * n / 256))
            excess = int(np.maximum(hist - limit, 0).sum())
            hist = np.minimum(hist, limit)
            hist += excess // 256
            rem = excess % 256
            hist[:rem] += 1
            cdf = np.cumsum(hist)
            luts[ty, tx] = cdf * 255.0 / n

    cx = (xe[:-1] + xe[1:] - 1) / 2.0
    cy = (ye[:-1] + ye[1:] - 1) / 2.0
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)

    def axis_blend(coords, centers):
        i0 = np.clip(np.searchsorted(centers, coords, side="right") - 1, 0, len(centers) - 1)
        i1 = np.minimum(i0 + 1, len(centers) - 1)
        span = centers[i1] - centers[i0]
        frac = np.where(span > 0, (coords - centers[i0]) / np.where(span > 0, span, 1.0), 0.0)
        return i0, i1, np.clip(frac, 0.0, 1.0)

    x0, x1, fx = axis_blend(xs, cx)
    y0, y1, fy = axis_blend(ys, cy)

    v = img.astype(np.int64)
    fx2 = fx[None, :]
    fy2 = fy[:, None]
    out = (
        luts[y0[:, None], x0[None, :], v] * (1 - fx2) * (1 - fy2)
        + luts[y0[:, None], x1[None, :], v] * fx2 * (1 - fy2)
        + luts[y1[:, None], x0[None, :], v] * (1 - fx2) * fy2
        + luts[y1[:, None], x1[None, :], v] * fx2 * fy2
    )
    return quantize_u8(out)


def _bilinear_weights(n_in: int, n_out: int) -> np.ndarray:
    w = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    i0 = np.floor(src).astype(np.int64)
    f = src - i0
    for k, wk in ((0, 1 - f), (1, f)):
        idx = np.clip(i0 + k, 0, n_in - 1)
        np.add.at(w, (np.arange(n_out), idx), wk)
    return w


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    a = -0.5
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1
    mid = (t > 1) & (t < 2)
    out[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    out[mid] = a * t[mid] ** 3 - 5 * a * t[mid] ** 2 + 8 * a * t[mid] - 4 * a
    return out


def _bicubic_weights(n_in: int, n_out: int) -> np.ndarray:
    w = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    i0 = np.floor(src).astype(np.int64)
    for k in range(-1, 3):
        wk = _catmull_rom(src - (i0 + k))
        idx = np.clip(i0 + k, 0, n_in - 1)
        np.add.at(w, (np.arange(n_out), idx), wk)
    return w


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        lo = o * scale
        hi = (o + 1) * scale
        i_lo = int(math.floor(lo))
        i_hi = min(int(math.ceil(hi)), n_in)
        for i in range(i_lo, i_hi):
            overlap = min(hi, i + 1) - max(lo, i)
            if overlap > 0:
                w[o, i] = overlap / scale
    return w


_WEIGHT_BUILDERS = {
    "bilinear": _bilinear_weights,
    "bicubic": _bicubic_weights,
    "area": _area_weights,
}


def resize(img: np.ndarray, out_w: int, out_h: int, method: str = "bilinear") -> np.ndarray:
    """Resample to out_w x out_h with a separable kernel.

    method: "bilinear", "bicubic" (Catmull-Rom, a = -0.5) or "area"
    (mean of covered source pixels, exact for integer downscale factors).
    Resizing to the input dimensions is the identity for every method.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    if method not in _WEIGHT_BUILDERS:
        raise ValueError(f"unknown resize method {method!r}")
    h, w = img.shape[:2]
    if (out_w, out_h) == (w, h):
        return img.copy()
    build = _WEIGHT_BUILDERS[method]
    wr = build(h, out_h)
    wc = build(w, out_w)
    f = img.astype(np.float64)
    if img.ndim == 2:
        out = wr @ f @ wc.T
    else:
        out = np.einsum("oi,iwc,pw->opc", wr, f, wc, optimize=True)
    return quantize_u8(out)


def load_png(path) -> np.ndarray:
    """Read a PNG as uint8 gray (H, W) or RGB (H, W, 3).

    RGBA/LA inputs are composited over black (alpha-weighted); paletted
    images are expanded to RGB.
    """
    with Image.open(path) as im:
        if im.mode == "P":
            im = im.convert("RGBA")
        if im.mode in ("RGBA", "LA"):
            arr = np.asarray(im, dtype=np.float64)
            alpha = arr[..., -1:] / 255.0
            arr = quantize_u8(arr[..., :-1] * alpha)
            return arr[..., 0] if im.mode == "LA" else arr
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8).copy()
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_png(path, img: np.ndarray) -> None:
    if img.dtype != np.uint8:
        raise ValueError("images must be uint8")
    mode = "L" if img.ndim == 2 else "RGB"
    Image.fromarray(img, mode=mode).save(path, format="PNG")
