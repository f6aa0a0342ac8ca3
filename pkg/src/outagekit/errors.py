from __future__ import annotations


class OutageError(ValueError):
    """Analysis error carrying a stable machine-readable code.

    Codes used across the package: EMPTY_EVENT, MIXED_STORM_FLAG,
    MISSING_LABEL, NON_RECTANGULAR, TOO_FEW_SAMPLES, BIN_MISMATCH,
    DEGENERATE_DURATIONS, NO_LARGE_FAILURES, EMPTY_CONFIG.
    """

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class ParseError(OutageError):
    """Fatal problem with an input file as a whole (e.g. missing header)."""

    def __init__(self, message: str):
        super().__init__("PARSE_ERROR", message)
