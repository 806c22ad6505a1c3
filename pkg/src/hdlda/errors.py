"""Semantic exception types shared across the package."""


class HdldaError(Exception):
    """Base class for all package-specific failures."""


class NotPositiveDefinite(HdldaError):
    """A matrix required to be positive definite has a pivot at or below tolerance."""


class NoConvergence(HdldaError):
    """An iterative eigenvalue computation failed to converge."""


class CorrelationOutOfRange(HdldaError):
    """A correlation parameter is outside the open interval (-1, 1)."""


class DimensionTooSmall(HdldaError):
    """A simulated design does not fit in the requested dimension."""


class EmptyClass(HdldaError):
    """A labeled sample is missing observations for some class."""


class DegenerateDesign(HdldaError):
    """Sample size too small relative to the number of classes."""


class LpInfeasible(HdldaError):
    """A linear-programming subproblem has no usable solution."""


class ClassTooSmall(HdldaError):
    """A class has fewer observations than cross-validation folds."""


class AllCombosInvalid(HdldaError):
    """Every hyperparameter combination failed during grid search."""


class DimensionMismatch(HdldaError):
    """Input dimensions are inconsistent with a fitted object."""
