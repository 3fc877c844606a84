"""Grayscale JPEG quality-factor roundtrip (blockwise DCT quantization only).

Models the lossy part of baseline JPEG: per 8x8 block, level shift, orthonormal
2-D DCT-II, divide-and-round by the quality-scaled standard luminance table,
dequantize, inverse transform. Entropy coding is lossless and therefore skipped;
the output equals what a decoder would reconstruct from the quantized
coefficients. Arithmetic runs in double precision and is bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionNotMultipleOf8, QualityOutOfRange
from .image import check_gray8

# ITU-T T.81 Annex K base luminance quantization table.
BASE_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)


def _dct_matrix() -> np.ndarray:
    # orthonormal 8-point DCT-II: D @ D.T == I
    n = 8
    d = np.zeros((n, n))
    for u in range(n):
        c = np.sqrt(1.0 / n) if u == 0 else np.sqrt(2.0 / n)
        for x in range(n):
            d[u, x] = c * np.cos((2 * x + 1) * u * np.pi / (2 * n))
    return d


DCT8 = _dct_matrix()


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class QuantTable:
    """8x8 integer quantization table together with its quality factor."""

    q: np.ndarray
    quality: int

    def __post_init__(self):
        if self.q.shape != (8, 8) or (self.q < 1).any() or (self.q > 255).any():
            raise ValueError("quantization entries must be 8x8 integers in [1, 255]")


def quant_table(quality: int) -> QuantTable:
    """Scale the base luminance table by the IJG quality rule.

    S = 5000/Q for Q < 50 else 200 - 2Q; entries floor((q*S + 50)/100),
    clamped to [1, 255]. Quality 50 returns the base table unchanged.
    """
    q = int(quality)
    if not 1 <= q <= 100:
        raise QualityOutOfRange(f"quality must lie in [1, 100], got {quality}")
    scale = 5000 // q if q < 50 else 200 - 2 * q
    scaled = (BASE_LUMA_TABLE * scale + 50) // 100
    return QuantTable(np.clip(scaled, 1, 255).astype(np.int64), q)


def jpeg_roundtrip(img, quality: int) -> np.ndarray:
    """Compress-decompress a grayscale patch at the given quality factor.

    Width and height must be multiples of 8. Deterministic; same shape out.
    """
    arr = check_gray8(img)
    h, w = arr.shape
    if h % 8 or w % 8:
        raise DimensionNotMultipleOf8(f"dimensions {w}x{h} are not multiples of 8")
    qt = quant_table(quality).q.astype(np.float64)

    x = arr.astype(np.float64) - 128.0
    blocks = x.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coef = np.einsum("ux,nmxy,vy->nmuv", DCT8, blocks, DCT8, optimize=True)
    coef = _round_half_away(coef / qt) * qt
    # inverse: B = D^T C D, with DCT8 stored as D[frequency, space]
    rec = np.einsum("ux,nmuv,vy->nmxy", DCT8, coef, DCT8, optimize=True)
    pix = _round_half_away(rec + 128.0)
    out = np.clip(pix, 0.0, 255.0).astype(np.uint8)
    return out.transpose(0, 2, 1, 3).reshape(h, w)
