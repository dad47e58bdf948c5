"""Exception types shared across the toolkit."""


class LevyCouplingError(Exception):
    """Base class for all toolkit errors."""


class NoDensity(LevyCouplingError):
    pass


class SingularPoint(LevyCouplingError):
    pass


class QuadratureFailure(LevyCouplingError):
    pass


class BudgetExceeded(LevyCouplingError):
    pass


class DegenerateOverlap(LevyCouplingError):
    pass


class InadmissibleMeasure(LevyCouplingError):
    pass


class NumericBlowup(LevyCouplingError):
    def __init__(self, time, message="state exceeded overflow guard"):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


class ConstantsInvalid(LevyCouplingError):
    pass


class DensityRequired(LevyCouplingError):
    pass


class InvalidSigma(LevyCouplingError):
    pass


class CertificationFailed(LevyCouplingError):
    def __init__(self, point, margin):
        super().__init__(f"Lyapunov inequality fails at x={point} (margin {margin:.4g})")
        self.point = point
        self.margin = margin


class SizeMismatch(LevyCouplingError):
    pass


class DimensionMismatch(LevyCouplingError):
    pass


class NonPositiveValues(LevyCouplingError):
    def __init__(self, indices):
        super().__init__(f"non-positive values at indices {list(indices)}")
        self.indices = list(indices)


class ConfigInvalid(LevyCouplingError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class NonConvergence(UserWarning):
    pass
