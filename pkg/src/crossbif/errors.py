"""Exception hierarchy shared by all modules."""


class CrossbifError(Exception):
    """Base class for every numerical or domain error raised by the package."""

    code = "numerical"


class DomainEscape(CrossbifError):
    code = "domain_escape"


class EnergyForbidden(DomainEscape):
    code = "energy_forbidden"


class NoReturn(DomainEscape):
    code = "no_return"


class NumericalBreakdown(CrossbifError):
    code = "numerical_breakdown"


class IntegrationFailure(CrossbifError):
    code = "integration_failure"


class PreconditionViolated(CrossbifError):
    code = "precondition_violated"


class NotFixedPoint(PreconditionViolated):
    code = "not_fixed_point"


class NotCross(PreconditionViolated):
    code = "not_cross"


class NoUnitEigenvalue(CrossbifError):
    code = "no_unit_eigenvalue"


class IdentityJacobian(CrossbifError):
    code = "identity_jacobian"


class Rank2Detected(CrossbifError):
    code = "rank2_detected"


class NoConvergence(CrossbifError):
    code = "no_convergence"


class SingularJacobian(CrossbifError):
    code = "singular_jacobian"


class SeedNotFixed(CrossbifError):
    code = "seed_not_fixed"


class NoWell(CrossbifError):
    code = "no_well"


class TurningPointNotFound(CrossbifError):
    code = "turning_point_not_found"


class ConfigInvalid(Exception):
    """Raised for malformed run configurations (CLI exit status 2)."""

    code = "config_invalid"
