"""Exception types shared across the package."""


class PMDError(Exception):
    """Base class for all errors raised by pmdist."""


class SPMError(PMDError, ValueError):
    """Malformed success probability matrix."""


class SupportError(PMDError, ValueError):
    """Outcome vector is not a point of the distribution's support."""


class MemoryCapError(PMDError, MemoryError):
    """The exact grid would exceed the configured cell budget."""

    def __init__(self, cells, cap, advice):
        self.cells = cells
        self.cap = cap
        self.advice = advice
        super().__init__(
            f"exact grid needs {cells} cells, at or above the cap of {cap}; {advice}"
        )


class NumericalFailure(PMDError, ArithmeticError):
    """A computation produced values that cannot be explained by round-off."""


SMALL_N = 50


def method_advice(n, m):
    """Recommend a pmf method for an (n, m) pair the exact grid cannot handle.

    Exact is the default for m <= 5 while the grid fits. Moderate m with few
    trials favours simulation at around 1e6 draws; otherwise the normal
    approximation is the practical choice.
    """
    if 6 <= m <= 20 and n <= SMALL_N:
        return "use SIM (m moderate, n small) with b around 1e6"
    return "use NA (n large); it evaluates single points cheaply"
