"""Orphan-freeness of anisotropic Voronoi diagrams on raster grids.

Two asymmetric distances (metric at the site, metric at the query point),
greedy asymmetric nets, grid labelling with component analysis, and numerical
checks of the orphan-freeness bounds.
"""
from .diagram import LabeledDiagram, check_star_shaped, find_neighbor_witnesses, find_orphans, label_grid, phi_profile
from .distance import DistanceKind, asymmetry_ratio, d_dw, d_ls, distance
from .errors import (
    AnisoVoroError,
    BudgetExhausted,
    ConfigError,
    ConvergenceFailure,
    DemoConstructionFailure,
    DomainError,
    InvalidArgument,
    MetricError,
    NotPositiveDefinite,
)
from .grid import Grid
from .metric import MetricField, SigmaEstimate, SpdMatrix, brute_force_sigma, estimate_sigma, spd_sqrt, spd_sqrt_series
from .net import AsymmetricNet, StopRule, check_cover, check_packing, greedy_build
from .verify import DW_THRESHOLD, LS_THRESHOLD, VerificationReport, cover_insufficiency_demo, run_verification

__version__ = "0.1.0"
