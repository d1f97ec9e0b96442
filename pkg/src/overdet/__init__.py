"""Radial solutions, rigidity checks and a 2D Poisson solver for overdetermined
boundary value problems on rotationally symmetric model manifolds."""

from .errors import ConfigError, ConvergenceError, DomainError, OverdetError
from .funcexpr import ScalarField, TabulatedField, CallableField, parse, differentiate
from .manifold import Manifold, euclidean, hyperbolic, spherical, custom, validate_warping
from .quadrature import CumulativeIntegral, integrate
from .radial import (OverdeterminedSpec, RadialProfile, v_of, u_ball, w_of, alpha_of,
                     u_annulus, u_annulus_prime, ball_profile, annulus_profile, ode_residual)
from .rigidity import (Verdict, RigidityReport, serrin_check, bernoulli_check,
                       q_condition_check, comparison_corollary_check)
from .pde2d import (StarDomain, Grid2DSolution, solve_dirichlet, boundary_flux,
                    build_counterexample, radial_equivalence)

__version__ = "0.1.0"
