from typing import Any, Dict, Optional


class StrataformsError(Exception):
    """Base error: a human-readable detail plus an optional locating witness"""

    def __init__(self, detail: str, witness: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        self.witness = witness or {}

    def __str__(self) -> str:
        if self.witness:
            return f"{self.detail} ({self.witness})"
        return self.detail


# complex
class MissingFace(StrataformsError):
    pass


class IncompatibleCatalogue(StrataformsError):
    pass


class NotInComplex(StrataformsError):
    pass


# forms
class DimensionMismatch(StrataformsError):
    pass


class NoTangentData(StrataformsError):
    pass


# quadrature
class DegreeMismatch(StrataformsError):
    pass


class StratumStraddle(StrataformsError):
    pass


class QuadratureError(StrataformsError):
    """A quadrature rule failed its exactness audit"""


# cohomology
class GradingMismatch(StrataformsError):
    pass


class NotClosed(StrataformsError):
    pass


class NoSolution(StrataformsError):
    pass


class NotSurjective(StrataformsError):
    pass


class KernelConditionFails(StrataformsError):
    pass


# whitney
class DegenerateSimplex(StrataformsError):
    pass


# homotopy
class NotConeInvariant(StrataformsError):
    pass


class DelimiterCrossing(StrataformsError):
    pass


class NonPolynomialRetraction(StrataformsError):
    pass


class AuditFailed(StrataformsError):
    pass


# smoothing
class RadiusTooLarge(StrataformsError):
    pass


class DecayAuditFailed(StrataformsError):
    pass


# project files
class ProjectError(StrataformsError):
    pass
