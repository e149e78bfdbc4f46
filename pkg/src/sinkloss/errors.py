"""Exception types raised by the solver, batch engine and oracles."""

from __future__ import annotations


class SinklossError(Exception):
    """Base class for all package errors."""


class NonFinite(SinklossError):
    """A histogram entry is NaN or infinite."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"non-finite mass at index {index}")


class NegativeMass(SinklossError):
    """A histogram entry is negative."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"negative mass at index {index}")


class NotNormalised(SinklossError):
    """Histogram mass does not sum to 1 within tolerance."""

    def __init__(self, total: float):
        self.total = total
        super().__init__(f"mass sums to {total!r}, expected 1 within 1e-6")


class NaNInput(SinklossError):
    """An input sequence contains NaN."""


class NaNProduced(SinklossError):
    """An internal computation produced NaN; indicates a sign/convention bug."""


class DivisionUnderflow(SinklossError):
    """A kernel-vector product underflowed to exact zero where mass is positive.

    This is the failure mode of the linear-domain iteration that the
    log-domain path exists to avoid.
    """

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"zero denominator at index {index} with positive marginal mass")


class DimensionMismatch(SinklossError):
    """Histogram / cost-matrix dimensions disagree."""


class ShapeMismatch(SinklossError):
    """Batched array shapes disagree."""


class ZeroMassGradient(SinklossError):
    """Gradients were requested for a histogram with a zero-mass bin.

    The corresponding log potential is -inf and no gradient is defined there.
    """

    def __init__(self, lane: int | None = None):
        self.lane = lane
        where = "" if lane is None else f" in lane {lane}"
        super().__init__(f"zero-mass bin{where}: gradient undefined")


class MassTooSmall(SinklossError):
    """A finite-difference probe would push a histogram entry below zero."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"mass at index {index} too small for the requested probe step")


class NotConvergedWarning(UserWarning):
    """The reference solver stopped before reaching its residual floor."""
