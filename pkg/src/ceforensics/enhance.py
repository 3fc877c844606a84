"""Gamma correction, its closed-form detectability analytics, and gap-bin statistics.

The transform is Y = [255 (X/255)^gamma] on 8-bit gray levels, with [.] meaning
round-half-away-from-zero followed by clamping to [0, 255]. Writing T = X/255
and Z = Y/255, the pixel-domain contrast between an image and its corrected
version peaks at a closed-form argument T and peak value D; the histogram-domain
signature is empty interior bins ("gaps") whose prevalence follows the local
range expansion of the mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadRange,
    DegenerateLabels,
    GammaIsOne,
    MissingImage,
    NonPositiveGamma,
    ShapeMismatch,
)
from .image import check_gray8, histogram, load_pgm

ORIGINAL = "original"
ENHANCED = "enhanced"


def _check_gamma(gamma: float) -> float:
    g = float(gamma)
    if not np.isfinite(g) or g <= 0:
        raise NonPositiveGamma(f"gamma must be a positive real, got {gamma}")
    return g


def gamma_lut(gamma: float) -> np.ndarray:
    """Length-256 uint8 lookup table for the gamma mapping."""
    g = _check_gamma(gamma)
    x = np.arange(256, dtype=np.float64) / 255.0
    y = np.floor(255.0 * x**g + 0.5)  # round half away from zero (non-negative)
    return np.clip(y, 0.0, 255.0).astype(np.uint8)


def gamma_correct(img, gamma: float) -> np.ndarray:
    """Apply gamma correction pixelwise; gamma 1 is the identity."""
    arr = check_gray8(img)
    return gamma_lut(gamma)[arr]


def abs_diff_stats(orig, enh) -> tuple[int, float]:
    """Max and mean absolute pixel difference between two same-shape images."""
    a = check_gray8(orig)
    b = check_gray8(enh)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    d = np.abs(a.astype(np.int16) - b.astype(np.int16))
    return int(d.max()), float(d.mean())


def t_dmax(gamma: float) -> float:
    """Normalized input at which |T^gamma - T| is largest: (1/g)^(1/(g-1))."""
    g = _check_gamma(gamma)
    if g == 1.0:
        raise GammaIsOne("difference is identically zero at gamma 1")
    return float((1.0 / g) ** (1.0 / (g - 1.0)))


def d_max(gamma: float) -> float:
    """Peak absolute pixel-level difference, in intensity levels (continuous form)."""
    g = _check_gamma(gamma)
    if g == 1.0:
        raise GammaIsOne("difference is identically zero at gamma 1")
    t = t_dmax(g)
    if g < 1.0:
        return float(255.0 * (t**g - t))
    return float(255.0 * (t - t**g))


def dmax_curve(gamma_lo: float, gamma_hi: float, steps: int) -> np.ndarray:
    """Sample d_max(gamma)/255 on a uniform grid; the identity point emits 0.

    Returns an array of shape (steps, 2) with columns (gamma, d_max/255).
    """
    lo = float(gamma_lo)
    hi = float(gamma_hi)
    if steps < 1:
        raise BadRange(f"steps must be >= 1, got {steps}")
    if not (0.0 < lo <= hi) or (steps > 1 and lo == hi):
        raise BadRange(f"need 0 < lo < hi (lo == hi only for a single point), got [{lo}, {hi}]")
    gammas = np.linspace(lo, hi, steps)
    out = np.zeros((steps, 2))
    out[:, 0] = gammas
    for i, g in enumerate(gammas):
        out[i, 1] = 0.0 if g == 1.0 else d_max(float(g)) / 255.0
    return out


def gap_ratio(gamma: float) -> float:
    """Relative range expansion driving gap-bin prevalence.

    1/g - 1 for g < 1 (dark range expands); (T - T^g)/(1 - T) at T = t_dmax(g)
    for g > 1 (bright range expands).
    """
    g = _check_gamma(gamma)
    if g == 1.0:
        raise GammaIsOne("no range expansion at gamma 1")
    if g < 1.0:
        return float(1.0 / g - 1.0)
    t = t_dmax(g)
    return float((t - t**g) / (1.0 - t))


@dataclass
class GapStats:
    """Count and positions of gap bins, optionally tagged with a class label."""

    gap_count: int
    gap_positions: list[int] = field(default_factory=list)
    class_label: str | None = None

    def __post_init__(self):
        if self.gap_count != len(self.gap_positions):
            raise ValueError("gap_count must equal len(gap_positions)")
        for p in self.gap_positions:
            if not 1 <= p <= 254:
                raise ValueError(f"gap position {p} outside interior range [1, 254]")


def count_gap_bins(hist, class_label: str | None = None) -> GapStats:
    """Count isolated interior zero bins: counts[k]==0 with both neighbors > 0.

    Bins 0 and 255 are never gaps, so saturation and dynamic-range truncation
    do not register.
    """
    c = np.asarray(hist)
    if c.shape != (256,):
        raise ShapeMismatch(f"histogram must have 256 bins, got shape {c.shape}")
    z = (c[1:255] == 0) & (c[0:254] > 0) & (c[2:256] > 0)
    positions = (np.nonzero(z)[0] + 1).tolist()
    return GapStats(len(positions), positions, class_label)


def _entry_class(entry) -> object:
    return ORIGINAL if entry.label == ORIGINAL else float(entry.gamma)


def gap_distribution(manifest, classes) -> dict[object, dict[int, int]]:
    """Empirical frequency table of gap counts per class over a manifest.

    `classes` holds class keys: the string "original" and/or gamma values of
    the enhanced classes. Returns {class: {gap_count: frequency}}.
    """
    wanted = set(ORIGINAL if c == ORIGINAL else float(c) for c in classes)
    tables: dict[object, dict[int, int]] = {c: {} for c in wanted}
    for entry in manifest.entries:
        key = _entry_class(entry)
        if key not in wanted:
            continue
        try:
            img = load_pgm(entry.path)
        except FileNotFoundError as exc:
            raise MissingImage(f"manifest entry missing on disk: {entry.path}") from exc
        n = count_gap_bins(histogram(img)).gap_count
        tables[key][n] = tables[key].get(n, 0) + 1
    return tables


def cao_fit_threshold(train: list[tuple[GapStats, int]]) -> int:
    """Fit the gap-count decision rule "enhanced iff gap_count >= t".

    Exhaustive sweep of integer thresholds; returns the smallest maximizer of
    training accuracy. Labels are 0 (original) / 1 (enhanced); both must occur.
    """
    if not train:
        raise DegenerateLabels("empty training set")
    counts = np.array([gs.gap_count for gs, _ in train])
    labels = np.array([int(lbl) for _, lbl in train])
    if len(set(labels.tolist())) < 2:
        raise DegenerateLabels("need both original and enhanced examples")
    best_t, best_acc = 0, -1.0
    for t in range(256):
        acc = float(np.mean((counts >= t).astype(int) == labels))
        if acc > best_acc:
            best_t, best_acc = t, acc
    return best_t


def cao_classify(hist, threshold: int) -> str:
    """Label a histogram by the fitted gap-count threshold rule."""
    if not 0 <= int(threshold) <= 255:
        raise BadRange(f"threshold must lie in [0, 255], got {threshold}")
    stats = count_gap_bins(hist)
    return ENHANCED if stats.gap_count >= int(threshold) else ORIGINAL
