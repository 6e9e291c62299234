"""svbrdfkit: svBRDF texture recovery for planar material samples from
ambient + flash photo pairs, with HDR radiometric calibration."""

from .errors import (CalibrationError, DegenerateInputError, FitError,
                     InvalidInputError)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "DegenerateInputError",
    "FitError",
    "InvalidInputError",
    "__version__",
]
