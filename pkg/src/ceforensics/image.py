"""8-bit grayscale patches: binary PGM I/O, cropping, histograms, synthetic sources.

An image is a 2-D numpy array of dtype uint8 with shape (height, width),
row-major. A histogram is a length-256 int64 vector; ``hist[k]`` counts the
pixels equal to gray level ``k``.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage

from .errors import CropTooLarge, IoFailure, MalformedHeader, MissingFile, TruncatedData

_WHITESPACE = b" \t\r\n\x0b\x0c"


def check_gray8(img) -> np.ndarray:
    """Validate and return an image array (uint8, 2-D, non-empty)."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
    if arr.ndim != 2 or arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise ValueError(f"expected non-empty 2-D image, got shape {arr.shape}")
    return arr


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise MalformedHeader("unterminated comment in header")
            pos = nl + 1
        else:
            break
    start = pos
    while pos < n and buf[pos] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise MalformedHeader("unexpected end of header")
    return buf[start:pos], pos


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5, maxval 255) file into a uint8 array."""
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    magic, pos = _next_token(buf, 0)
    if magic != b"P5":
        raise MalformedHeader(f"not a binary PGM (magic {magic!r})")
    fields = []
    for name in ("width", "height", "maxval"):
        tok, pos = _next_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise MalformedHeader(f"non-numeric {name}: {tok!r}") from exc
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise MalformedHeader(f"only maxval 255 supported, got {maxval}")

    # exactly one whitespace byte separates the header from the raster
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise MalformedHeader("missing separator before pixel data")
    pos += 1
    need = width * height
    raster = buf[pos : pos + need]
    if len(raster) < need:
        raise TruncatedData(f"expected {need} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(img, path) -> None:
    """Write a binary PGM (P5, maxval 255) file; roundtrips bit-exactly."""
    arr = check_gray8(img)
    height, width = arr.shape
    header = b"P5\n%d %d\n255\n" % (width, height)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def central_crop(img, w: int, h: int) -> np.ndarray:
    """Return the centered w x h window (top-left at floor((W-w)/2), floor((H-h)/2))."""
    arr = check_gray8(img)
    height, width = arr.shape
    if w > width or h > height or w <= 0 or h <= 0:
        raise CropTooLarge(f"cannot crop {w}x{h} from {width}x{height}")
    x0 = (width - w) // 2
    y0 = (height - h) // 2
    return arr[y0 : y0 + h, x0 : x0 + w].copy()


def histogram(img) -> np.ndarray:
    """256-bin gray-level histogram; conserves pixel count."""
    arr = check_gray8(img)
    return np.bincount(arr.reshape(-1), minlength=256).astype(np.int64)


def _apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Split `total` into integer counts proportional to `weights`, each >= 1."""
    raw = weights * (total / weights.sum())
    counts = np.floor(raw).astype(np.int64)
    frac = raw - counts
    short = total - int(counts.sum())
    for i in np.argsort(-frac, kind="stable")[:short]:
        counts[i] += 1
    while (counts == 0).any():
        counts[int(np.argmin(counts))] += 1
        counts[int(np.argmax(counts))] -= 1
    return counts


def synth_patch(seed: int, w: int, h: int, smoothness: float = 2.0) -> np.ndarray:
    """Deterministic synthetic grayscale patch for desk-scale experiments.

    smoothness 0 gives i.i.d. uniform noise over the full gray range. Positive
    smoothness low-pass filters white noise (Gaussian kernel, sigma =
    smoothness) and requantizes the field onto a seed-dependent midtone range
    with a smooth, gap-free histogram, mimicking the tonal statistics of
    photographic patches: the histogram support is contiguous, so intensity
    remapping (not the source) is what introduces gap bins.
    """
    if w <= 0 or h <= 0:
        raise ValueError(f"patch dimensions must be positive, got {w}x{h}")
    if smoothness < 0:
        raise ValueError(f"smoothness must be non-negative, got {smoothness}")
    rng = np.random.default_rng(seed)
    if smoothness == 0:
        return rng.integers(0, 256, size=(h, w), dtype=np.uint8)

    lo = int(rng.integers(12, 29))
    hi = int(rng.integers(148, 181))
    tilt = rng.uniform(-0.4, 0.4)
    field = ndimage.gaussian_filter(
        rng.standard_normal((h, w)), sigma=float(smoothness), mode="reflect"
    )

    npix = w * h
    hi = min(hi, lo + npix - 1)
    m = hi - lo + 1
    t = np.linspace(0.0, 1.0, m)
    density = (0.18 + np.sin(np.pi * t) ** 2) * np.exp(tilt * (t - 0.5))
    counts = _apportion(density, npix)

    levels = np.repeat(np.arange(lo, hi + 1, dtype=np.uint8), counts)
    order = np.argsort(field, axis=None, kind="stable")
    out = np.empty(npix, dtype=np.uint8)
    out[order] = levels
    return out.reshape(h, w)
