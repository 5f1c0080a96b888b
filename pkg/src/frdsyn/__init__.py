"""frdsyn: fixed-structure H-infinity synthesis from frequency response data."""

__version__ = "0.1.0"

from . import errors  # noqa: F401
from .linalg import SvdTriplet, hermitian_eig_max, max_svd, solve  # noqa: F401
