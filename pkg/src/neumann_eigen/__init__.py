"""Principal eigenvalues of fully nonlinear elliptic operators with Robin/Neumann boundary laws.

Grids, monotone finite difference schemes, a shifted monotone iteration,
eigenvalue bisection with certified probes, and a dense linear reference.
"""

from .coefficients import CoefficientField, as_coefficient, parse_coefficient
from .discretize import (CertificateReport, DiscreteProblem, Scheme, apply_discrete_boundary,
                         apply_discrete_operator, certify_solution_class, compile_scheme)
from .eigen import (EigenConfig, EigenEstimate, ProbeResult, beta2_threshold, constant_bounds,
                    dirichlet_eigenvalue, feasibility_probe, principal_eigenfunction, principal_eigenvalue,
                    principal_eigenvalues)
from .errors import ConfigurationError, ExpressionError, NonConvergenceError, UnsupportedOperatorError
from .geometry import Grid, Interval, RadialBall, Rectangle, boundary_data, build_grid, exterior_sphere_holds
from .operators import (Bellman, Dirichlet, EllipticityBounds, Isaacs, Linear, PucciMinus, PucciPlus, Robin,
                        check_ellipticity, dual_operator, evaluate_boundary, evaluate_operator, pucci_extremal,
                        structure_constants)
from .oracle import linear_reference_eigen, linear_system_matrix
from .solve import SolveConfig, SolveReport, solve_neumann, solve_shifted, solve_sign_changing

__version__ = "0.1.0"
