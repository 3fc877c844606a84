"""Contrast-enhancement forensics toolkit.

Detecting gamma-style tonal remapping in 8-bit grayscale patches: closed-form
detectability analytics, gap-bin histogram statistics and a threshold baseline,
a JPEG quality-factor simulator, a small deterministic CNN engine with two
detector architectures (pixel domain and histogram domain), a scenario dataset
pipeline, and a training/evaluation harness.
"""

from . import dataset, enhance, image, jpegsim, models, nn, trainer
from .errors import CefError

__version__ = "0.1.0"

__all__ = ["dataset", "enhance", "image", "jpegsim", "models", "nn", "trainer",
           "CefError", "__version__"]
