"""Explicit finite-dimensional Dirichlet boundary feedback for parabolic PDEs.

Typical use::

    from bfstab import examples, build_gains, simulate, fit_decay_rate

    prob = examples.heat_rod(lam_bar=30.0, rho=40.0)
    gains = build_gains(prob.basis, prob.parameters(margin=5.0))
    traj = simulate(prob.plant(gains), examples.initial_field(prob), 1.0, 1e-4, 100)
    print(fit_decay_rate(traj).mu_hat)
"""

__version__ = "0.1.0"

from ._compat import HAS_NUMBA, USE_NUMBA
from .closedloop import (
    DecayReport,
    Plant,
    ReducedState,
    Trajectory,
    fit_decay_rate,
    lyapunov_derivative_check,
    simulate,
    simulate_reduced,
    step_linear,
    step_nonlinear,
)
from .errors import (
    BfstabError,
    ConfigError,
    ConvergenceError,
    ResonanceError,
    SingularGainError,
    SpectrumError,
)
from .gains import (
    GainParameters,
    GainSet,
    build_gains,
    cauchy_determinant,
    choose_parameters,
    feedback_trace,
    gain_matrix,
    gram_matrix,
    lambda_matrices,
)
from .lifting import LiftedSolution, lifting_norm_scan, moment_relation_residual, solve_lifted_bvp
from .mesh import (
    BoundaryPartition,
    Grid1D,
    Grid2D,
    ScalarField,
    build_grid_1d,
    build_grid_2d,
    inner_product_boundary,
    inner_product_domain,
)
from .spectral import (
    EigenPair,
    MultiplicityReport,
    SpectralBasis,
    analytic_basis,
    assemble_operator,
    count_unstable,
    detect_multiplicity,
    solve_eigenpairs,
)

from . import examples  # noqa: E402  (needs the names above)

__all__ = [
    "__version__",
    "BfstabError",
    "BoundaryPartition",
    "ConfigError",
    "ConvergenceError",
    "DecayReport",
    "EigenPair",
    "GainParameters",
    "GainSet",
    "Grid1D",
    "Grid2D",
    "HAS_NUMBA",
    "LiftedSolution",
    "MultiplicityReport",
    "Plant",
    "ReducedState",
    "ResonanceError",
    "ScalarField",
    "SingularGainError",
    "SpectralBasis",
    "SpectrumError",
    "Trajectory",
    "USE_NUMBA",
    "analytic_basis",
    "assemble_operator",
    "build_gains",
    "build_grid_1d",
    "build_grid_2d",
    "cauchy_determinant",
    "choose_parameters",
    "count_unstable",
    "detect_multiplicity",
    "examples",
    "feedback_trace",
    "fit_decay_rate",
    "gain_matrix",
    "gram_matrix",
    "inner_product_boundary",
    "inner_product_domain",
    "lambda_matrices",
    "lifting_norm_scan",
    "lyapunov_derivative_check",
    "moment_relation_residual",
    "simulate",
    "simulate_reduced",
    "solve_eigenpairs",
    "solve_lifted_bvp",
    "step_linear",
    "step_nonlinear",
]
