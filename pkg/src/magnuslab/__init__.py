"""Magnus expansion terms, convergence certificates and spectral convergence
radii for ``Y' = eps A(t) Y``, ``Y(0) = I``."""
from . import convergence, expr, linalg, magnus, problem, propagator
from .convergence import analyze, find_disc_roots, magnus_t_domain, norm_bound_time, spectral_radius
from .errors import ConfigError, MagnusLabError, NumericalError
from .magnus import empirical_radius, magnus_terms, reconstruct
from .problem import builtin, load_problem, norm_integral
from .propagator import propagate, propagate_variational

__version__ = "0.1.0"
