"""Classification of cross-bifurcations in families of symplectic maps and Poincare maps."""

__version__ = "0.1.0"

from .classifier import BifurcationReport, Kind, Tolerances, classify, destruction_check_map
from .errors import ConfigInvalid, CrossbifError
from .family import SymplecticFamily, builtin_family, shear_family
from .frames import AdaptedFrame, to_adapted, unit_eigenspace

__all__ = [
    "AdaptedFrame",
    "BifurcationReport",
    "ConfigInvalid",
    "CrossbifError",
    "Kind",
    "SymplecticFamily",
    "Tolerances",
    "__version__",
    "builtin_family",
    "classify",
    "destruction_check_map",
    "shear_family",
    "to_adapted",
    "unit_eigenspace",
]
