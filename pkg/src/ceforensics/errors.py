"""Exception types shared across the toolkit."""


class CefError(Exception):
    """Base class for all toolkit errors."""


# ---- image I/O and geometry ----

class MissingFile(CefError, FileNotFoundError):
    pass


class MalformedHeader(CefError, ValueError):
    pass


class TruncatedData(CefError, ValueError):
    pass


class IoFailure(CefError, OSError):
    pass


class CropTooLarge(CefError, ValueError):
    pass


# ---- enhancement analytics ----

class NonPositiveGamma(CefError, ValueError):
    pass


class GammaIsOne(CefError, ValueError):
    """Analytic quantities are undefined at the identity mapping."""


class ShapeMismatch(CefError, ValueError):
    pass


class BadRange(CefError, ValueError):
    pass


class DegenerateLabels(CefError, ValueError):
    pass


# ---- JPEG simulation ----

class QualityOutOfRange(CefError, ValueError):
    pass


class DimensionNotMultipleOf8(CefError, ValueError):
    pass


# ---- network engine ----

class NonFiniteActivation(CefError, ArithmeticError):
    pass


class LabelOutOfRange(CefError, ValueError):
    pass


class StaleCache(CefError, RuntimeError):
    pass


class BadMagic(CefError, ValueError):
    pass


class SpecMismatch(CefError, ValueError):
    pass


class InputTooSmall(CefError, ValueError):
    pass


# ---- dataset pipeline ----

class InsufficientSources(CefError, ValueError):
    pass


class UnknownScenario(CefError, ValueError):
    pass


class SizesExceedData(CefError, ValueError):
    pass


class EmptySplit(CefError, ValueError):
    pass


class MissingImage(CefError, FileNotFoundError):
    pass


# ---- training ----

class DivergedLoss(CefError, ArithmeticError):
    pass


# ---- command line ----

class UnknownCommand(CefError, ValueError):
    pass


class BadFlag(CefError, ValueError):
    pass
