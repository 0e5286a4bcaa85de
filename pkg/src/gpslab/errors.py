"""Exception hierarchy shared across the package."""


class GpsLabError(Exception):
    """Base class for all package errors."""


class HorizonError(GpsLabError):
    """A jump length beyond the tabulated horizon was requested.

    Carries ``required`` when a minimum admissible horizon is known.
    """

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class DivergenceError(GpsLabError):
    """A disorder expectation is infinite for the requested parameters."""


class UnsupportedLawError(GpsLabError):
    """Operation not defined for this strand law."""


class EnumerationCapError(GpsLabError):
    """Brute-force enumeration would exceed its hard cap."""


class RejectionBudgetError(GpsLabError):
    """Endpoint-conditioned rejection sampling ran out of attempts."""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


class ParameterError(GpsLabError):
    """A numeric precondition on the parameters is violated."""


class SearchError(GpsLabError):
    """A bracketing search failed to establish a sign change."""


class FitRangeError(GpsLabError):
    """Data lacks the dynamic range needed for a meaningful fit."""


class ConfigError(GpsLabError):
    """Invalid experiment configuration; ``diagnostics`` lists field errors."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
