"""Exception types shared across the package."""

from __future__ import annotations


class FyinvError(Exception):
    """Base class for all package-specific failures."""


class NegativeCycleError(FyinvError):
    """The graph contains a negative-cost cycle reachable from the source."""


class UnreachableError(FyinvError):
    """No directed path exists from the source to the sink."""


class NonConvergenceError(FyinvError):
    """Frank-Wolfe stopped at max_iters with the duality gap above tolerance."""

    def __init__(self, final_gap: float, max_iters: int):
        self.final_gap = float(final_gap)
        self.max_iters = int(max_iters)
        super().__init__(
            f"duality gap {self.final_gap:.3e} above tolerance after {self.max_iters} iterations"
        )


class DivergedError(FyinvError):
    """An iterate escaped the guard region (parameter norm above 1e6)."""


class UnsupportedRegionError(FyinvError):
    """The requested operation has no implementation for this feasible region."""


class DegenerateKernelError(FyinvError):
    """All kernel weights underflowed to zero for some evaluation point."""


class ParseError(FyinvError):
    """A data file violated its schema.  Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
