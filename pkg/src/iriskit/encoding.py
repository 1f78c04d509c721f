"""Iris code extraction: normalization, 1D Log-Gabor filtering, phase bits.

A segmented iris is resampled to a 45 (radial) x 360 (angular) grayscale
strip, contrast-equalized, then each radial row is filtered with a single
log-Gabor band-pass filter applied in the frequency domain (analytic signal:
negative frequencies zeroed, DC gain exactly zero). Each complex response is
quantized to two bits by the signs of its real and imaginary parts, giving a
45 x 360 x 2 = 32400-bit template.

Conventions fixed for determinism:
* response components exactly equal to 0 quantize to bit 1 (>= 0);
* each row has its mean removed before filtering;
* forward DFT unscaled, inverse scaled by 1/N (numpy's default).

Binary file format (.icode), bit-exact: magic b"IRC1", rows and cols as
16-bit little-endian integers, then ceil(rows*cols*2/8) payload bytes. Bits
iterate rows (outer), then columns, then real bit before imaginary bit, and
fill each byte from the most significant bit down.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .imaging import IrisBoundaries, clahe, to_grayscale, unwrap_polar

RADIAL_SIZE = 45
ANGULAR_SIZE = 360
CODE_BITS = RADIAL_SIZE * ANGULAR_SIZE * 2  # 32400
PACKED_BYTES = CODE_BITS // 8  # 4050
CLAHE_CLIP = 2.0
CLAHE_TILES = (8, 1)  # angular x radial grid for the 45-row strip

_MAGIC = b"IRC1"


@dataclass
class GaborParams:
    """Single log-Gabor band-pass filter: center wavelength in pixels and the
    sigma/f bandwidth ratio."""

    wavelength: float = 18.0
    sigma_over_f: float = 0.5

    def __post_init__(self):
        if not self.wavelength > 2:
            raise ValueError("wavelength must exceed 2 pixels (Nyquist)")
        if not 0 < self.sigma_over_f < 1:
            raise ValueError("sigma_over_f must be in (0, 1)")


def log_gabor_gain(freqs: np.ndarray, p: GaborParams) -> np.ndarray:
    """Filter transfer function G(f); G(0) = 0 by definition."""
    f0 = 1.0 / p.wavelength
    gains = np.zeros_like(np.asarray(freqs, dtype=np.float64))
    pos = np.asarray(freqs) > 0
    lf = np.log(np.asarray(freqs, dtype=np.float64)[pos] / f0)
    gains[pos] = np.exp(-(lf ** 2) / (2.0 * np.log(p.sigma_over_f) ** 2))
    return gains


def log_gabor_rows(signals: np.ndarray, p: GaborParams) -> np.ndarray:
    """Filter each length-N row, returning complex analytic responses.

    The row mean is removed, the spectrum is multiplied by G at the positive
    frequencies k/N for k = 1..N/2 and zeroed elsewhere (analytic signal),
    then transformed back.
    """
    sig = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    n = sig.shape[-1]
    sig = sig - sig.mean(axis=-1, keepdims=True)
    spectrum = np.fft.fft(sig, axis=-1)
    gains = np.zeros(n)
    half = n // 2
    ks = np.arange(1, half + 1)
    gains[1 : half + 1] = log_gabor_gain(ks / n, p)
    return np.fft.ifft(spectrum * gains, axis=-1)


def log_gabor_row(signal: np.ndarray, p: GaborParams) -> np.ndarray:
    """Single-row convenience wrapper; the signal must have 360 samples."""
    signal = np.asarray(signal)
    if signal.ndim != 1 or signal.shape[0] != ANGULAR_SIZE:
        raise ValueError(f"expected a {ANGULAR_SIZE}-sample row, got shape {signal.shape}")
    return log_gabor_rows(signal, p)[0]


def normalize(img: np.ndarray, b: IrisBoundaries) -> np.ndarray:
    """Grayscale, unwrap to 45x360 and contrast-equalize: the normalized iris."""
    gray = to_grayscale(img) if img.ndim == 3 else img
    strip = unwrap_polar(gray, b, RADIAL_SIZE, ANGULAR_SIZE)
    return clahe(strip, CLAHE_CLIP, tiles_x=CLAHE_TILES[0], tiles_y=CLAHE_TILES[1])


@dataclass
class IrisCode:
    """45x360 grid of 2-bit phase cells; bits[r, c] = (real >= 0, imag >= 0)."""

    bits: np.ndarray  # (rows, cols, 2) bool
    _packed: bytes | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 3 or bits.shape[2] != 2:
            raise ValueError(f"bits must be (rows, cols, 2), got {bits.shape}")
        self.bits = bits.astype(bool)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def n_bits(self) -> int:
        return self.bits.size

    def packed(self) -> bytes:
        """Payload bytes, MSB-first in the documented bit order."""
        if self._packed is None:
            self._packed = np.packbits(self.bits.reshape(-1)).tobytes()
        return self._packed

    @classmethod
    def from_packed(cls, payload: bytes, rows: int = RADIAL_SIZE, cols: int = ANGULAR_SIZE) -> "IrisCode":
        n_bits = rows * cols * 2
        expected = (n_bits + 7) // 8
        if len(payload) != expected:
            raise ValueError(f"expected {expected} payload bytes, got {len(payload)}")
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=n_bits)
        return cls(bits.reshape(rows, cols, 2).astype(bool))

    def to_bytes(self) -> bytes:
        return _MAGIC + struct.pack("<HH", self.rows, self.cols) + self.packed()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "IrisCode":
        if len(blob) < 8 or blob[:4] != _MAGIC:
            raise ValueError("not an iris code file (bad magic)")
        rows, cols = struct.unpack("<HH", blob[4:8])
        return cls.from_packed(blob[8:], rows, cols)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "IrisCode":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def __eq__(self, other) -> bool:
        return isinstance(other, IrisCode) and np.array_equal(self.bits, other.bits)


def encode(normalized: np.ndarray, p: GaborParams | None = None) -> IrisCode:
    """Quantize the log-Gabor responses of a normalized iris into an IrisCode."""
    if normalized.shape != (RADIAL_SIZE, ANGULAR_SIZE):
        raise ValueError(
            f"expected a {RADIAL_SIZE}x{ANGULAR_SIZE} normalized iris, got {normalized.shape}"
        )
    responses = log_gabor_rows(normalized.astype(np.float64), p or GaborParams())
    return quantize_responses(responses)


def quantize_responses(responses: np.ndarray) -> IrisCode:
    """Phase quadrant bits from complex responses: (Re >= 0, Im >= 0)."""
    bits = np.stack([responses.real >= 0.0, responses.imag >= 0.0], axis=-1)
    return IrisCode(bits)


def encode_image(img: np.ndarray, b: IrisBoundaries, p: GaborParams | None = None) -> IrisCode:
    """Full path from a segmented frame to its iris code."""
    return encode(normalize(img, b), p)
