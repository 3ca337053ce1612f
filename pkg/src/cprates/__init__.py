"""Critical-point Tikhonov regularization and empirical convergence rates."""

from .problem import (
    Grid,
    GridFunction,
    LinearProblemOperator,
    NoiseSpec,
    add_noise,
    adjoint_apply,
    apply,
    build_depth_profiling_operator,
    build_diagonal_operator,
    make_grid,
    operator_norm,
)
from .regularizers import (
    BoundedPerturbation,
    GeneralizedQuadratic,
    Quadratic,
    ToleranceFn,
    bregman,
    bregman_sym,
    check_relative_subgradient,
    reg_gradient,
    reg_value,
)
from .variational import (
    GradNorm,
    MaxIter,
    NearMinimizer,
    SolveReport,
    TikhonovProblem,
    choose_alpha,
    exact_minimizer,
    gradient_descent,
    gradient_descent_spectral,
    heavy_ball,
    residual,
    tikhonov_gap,
    tikhonov_value,
)

__version__ = "0.1.0"
