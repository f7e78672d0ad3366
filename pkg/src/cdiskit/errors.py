"""Exception hierarchy shared by the whole toolkit.

Every error carries a short machine-parsable ``tag`` (dotted path such as
``config.calibration.percentiles``) so the CLI can emit a single greppable
line on stderr, plus a human-readable message.  The CLI maps the three
branches of the hierarchy to its exit codes: config errors exit 2, data
errors exit 3, numerical errors exit 4.
"""

from __future__ import annotations


class CdiskitError(Exception):
    """Base class; ``tag`` identifies the failing contract."""

    default_tag = "error"

    def __init__(self, message: str, tag: str | None = None):
        super().__init__(message)
        self.message = message
        self.tag = tag or self.default_tag

    def __str__(self) -> str:
        return f"{self.tag}: {super().__str__()}"


class ConfigError(CdiskitError):
    """Bad configuration value or CLI flag (exit code 2)."""

    default_tag = "config"


class DataError(CdiskitError):
    """Problem with an input file or dataset (exit code 3)."""

    default_tag = "data"


class ParseError(DataError):
    """Structurally malformed file; the tag names the offending field."""

    default_tag = "data.parse"


class UnsupportedFormatError(DataError):
    """Well-formed file using a feature outside the supported subset."""

    default_tag = "data.unsupported"


class TruncatedFileError(DataError):
    """Payload shorter than the header promised."""

    default_tag = "data.truncated"

    def __init__(self, message: str, expected: int, actual: int, tag: str | None = None):
        super().__init__(f"{message} (expected {expected} bytes, got {actual})", tag)
        self.expected = expected
        self.actual = actual


class CorruptionError(DataError):
    """Internally inconsistent file (header contradicts payload)."""

    default_tag = "data.corrupt"


class ValidationError(DataError):
    """Semantically invalid data (bad grade token, duplicate id, ...)."""

    default_tag = "data.validation"


class NumericalError(CdiskitError):
    """Numerically undefined result (exit code 4)."""

    default_tag = "numeric"


class UndefinedAucError(NumericalError):
    """AUC requested with fewer than two classes present."""

    default_tag = "numeric.auc.single-class"


class ContractViolation(CdiskitError):
    """A caller broke an operation precondition; a programming error."""

    default_tag = "contract"
