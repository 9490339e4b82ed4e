"""Zeroth-order solvers for constrained nonsmooth nonconvex-(strongly-)concave minimax problems."""

from .bench_problems import (
    Dataset,
    PoisonSplit,
    bilinear_saddle,
    load_libsvm,
    parse_libsvm,
    phi_value,
    poisoning_problem,
    quadratic_saddle,
    random_split,
    synthetic_dataset,
)
from .estimators import GradEstimate, joint_two_point, minibatch_joint, phi_two_point, vr_update, y_two_point
from .geometry import Projector, project, sample_unit_ball, sample_unit_sphere, stream
from .inner_solver import InnerConfig, k_for_accuracy, nu_for_accuracy, pgfd
from .minimax_solvers import (
    NlPgfdaConfig,
    PgfdaConfig,
    RunTrace,
    nl_pgfda,
    nl_pgfda_concave,
    pgfda,
    pgfda_concave,
    recipe_ncsc_ggsp,
    recipe_ncsc_gssp,
)
from .problem import ProblemSpec, SaddlePoint, evaluate, wrap_phi_regularizer, wrap_strong_concavity
from .stationarity import (
    ResidualReport,
    estimate_ggsp_residual,
    estimate_gssp_residual,
    mapping_primal,
    mapping_x,
    mapping_y,
)

__version__ = "0.1.0"
