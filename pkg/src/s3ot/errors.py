"""Exception types shared across the package.

The CLI maps these onto its exit-code contract, so solver and measure code
should raise the most specific type that applies.
"""


class S3Error(Exception):
    """Base class for all package-specific errors."""


class MeasureFormatError(S3Error, ValueError):
    """A point or grid file (or in-memory payload) violates its format."""


class MassMismatchError(S3Error, ValueError):
    """Two measures that must carry equal mass do not.

    Carries both masses so callers can report them verbatim.
    """

    def __init__(self, mass_source: float, mass_target: float, context: str = ""):
        self.mass_source = float(mass_source)
        self.mass_target = float(mass_target)
        where = f" in {context}" if context else ""
        super().__init__(
            f"mass mismatch{where}: source mass {self.mass_source!r} != "
            f"target mass {self.mass_target!r} (equality required within 1e-9 relative)"
        )


class EmptyMeasureError(S3Error, ValueError):
    """An operation that needs at least one atom of positive mass got none."""


class NotConvergedError(S3Error, RuntimeError):
    """An iterative solve exhausted its iteration budget above tolerance."""

    def __init__(self, iterations: int, residual: float, tolerance: float):
        self.iterations = int(iterations)
        self.residual = float(residual)
        self.tolerance = float(tolerance)
        super().__init__(
            f"no convergence after {self.iterations} iterations: "
            f"residual {self.residual:.3e} > tolerance {self.tolerance:.3e}"
        )


class EvaluateBeforeConvergenceError(S3Error, RuntimeError):
    """A value was requested from potentials whose solve did not converge."""


class OverflowInExponentError(S3Error, FloatingPointError):
    """An exponent left the representable range while forming plan entries."""

    def __init__(self, max_exponent: float):
        self.max_exponent = float(max_exponent)
        super().__init__(
            f"exponent overflow while exponentiating potentials: "
            f"max exponent {self.max_exponent:.6g} exceeds the float64 range"
        )


class FitDivergedError(S3Error, RuntimeError):
    """The fit produced a non-finite loss; carries the failing epoch index."""

    def __init__(self, epoch: int, trace=None):
        self.epoch = int(epoch)
        self.trace = trace
        super().__init__(f"non-finite loss at epoch {self.epoch}; aborting fit")
