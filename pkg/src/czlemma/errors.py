"""Exception types raised by the decomposition pipeline."""


class CZError(Exception):
    """Base class for all errors raised by czlemma."""


class ParameterError(CZError, ValueError):
    """An argument is outside its admissible range (alpha <= 0, p < 1, ...)."""


class DataError(CZError, ValueError):
    """Input data is malformed: non-finite samples, bad CSV header, count mismatch."""


class GoodSetEmptyError(CZError):
    """The bad set covers the whole box, so no Whitney decomposition exists."""
