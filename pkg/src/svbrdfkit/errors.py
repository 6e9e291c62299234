"""Exception hierarchy shared by all pipeline stages."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition (bad shape, range, path...)."""


class DegenerateInputError(ValueError):
    """Input is syntactically fine but carries no usable signal (constant image, ...)."""


class CalibrationError(RuntimeError):
    """Response-curve solve or light-intensity calibration cannot produce a result."""


class FitError(RuntimeError):
    """A bounded optimization stage failed; carries optimizer diagnostics."""
