"""Simulation of binary-choice social-interaction models on spatial networks and
autocorrelation-robust variance estimation for network moments."""

from .core import Kernel, Panel, RngSpec, SpatialGraph, kernel_eval, product_kernel_eval
from .estim import FitResult, fit_pseudo_ml, sandwich_variance, t_test
from .graph import bounded_bfs, components, k_neighborhood, strategic_neighborhoods
from .hac import (
    HacConfig,
    HacEstimate,
    generalized_spatial_hac,
    iid_cov,
    network_hac,
    psd_floor,
    spatial_hac,
)
from .mc import McConfig, McReport, run_probit_study, run_score_variance_study, run_weighted_outcome_study, summarize
from .netgen import NetGenConfig, form_latent_index, form_rgg, sample_positions
from .simsocial import (
    MomentSpec,
    OutcomeModel,
    compute_rc,
    eval_moments,
    simulate_dynamic,
    simulate_static_best_response,
    verify_nash,
)

__version__ = "0.1.0"
