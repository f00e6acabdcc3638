"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, DataError exits 2,
NumericError exits 3.
"""


class CvdseqError(Exception):
    """Base class for all package-specific failures."""


class DataError(CvdseqError):
    """Malformed input data, missing files, or inconsistent configuration."""


class ConfigError(DataError):
    """A configuration document violates its schema or invariants."""


class NumericError(CvdseqError):
    """A numeric routine failed (divergence, non-finite values, undefined metric)."""


class GradientBlowupError(NumericError):
    """A gradient became non-finite during optimization."""

    def __init__(self, block: str):
        super().__init__(f"gradient blow-up in parameter block '{block}'")
        self.block = block


class TrainingDivergedError(NumericError):
    """Training loss became non-finite; carries the last finite checkpoint."""

    def __init__(self, message: str, last_good_params=None):
        super().__init__(message)
        self.last_good_params = last_good_params
