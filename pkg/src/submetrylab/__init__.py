"""Function algebras, submetries and focal data on round spheres and flat tori.

Modules:

* :mod:`.spaces`: catalog spaces, geodesics, parallel frames and curvature
* :mod:`.polyfun`: exact eigen-decomposed functions and the Laplace-Beltrami operator
* :mod:`.lapalg`: subalgebras, Laplacian closure, Reynolds operators, separation
* :mod:`.submetry`: catalog submetries, fiber averaging, mean curvature, quotient metric
* :mod:`.focal`: Jacobi fields, focal spectra and reciprocal focal sums
* :mod:`.cli`: the ``submetrylab`` command
"""
from .config import DEFAULT, DEFAULT_SEED, DEFAULT_WINDOW, Tolerances
from .focal import euler_series, focal_spectrum, jacobi_fundamental, shape_operator, trace_from_focal
from .lapalg import Subalgebra, check_laplacian_closed, maximality_probe, reynolds, verify_separation
from .polyfun import PolyFunction, eigenspace_basis, gram_gradients, laplace_beltrami
from .spaces import GeodesicRay, get_space
from .submetry import average_function, get_submetry

__version__ = "0.1.0"

__all__ = [
    "DEFAULT", "DEFAULT_SEED", "DEFAULT_WINDOW", "Tolerances",
    "GeodesicRay", "get_space",
    "PolyFunction", "eigenspace_basis", "gram_gradients", "laplace_beltrami",
    "Subalgebra", "check_laplacian_closed", "maximality_probe", "reynolds", "verify_separation",
    "average_function", "get_submetry",
    "euler_series", "focal_spectrum", "jacobi_fundamental", "shape_operator", "trace_from_focal",
]
