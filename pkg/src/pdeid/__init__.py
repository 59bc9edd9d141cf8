"""Sparse identification of PDE coefficients from noisy space-time data."""

from .types import (Field, SignedSupport, SpaceTimeGrid, TermDescriptor, TermKind, TrajectoryDataset,
                    canonical_term_order, dictionary_size)
from .solvers import (BurgersSpec, KdVSpec, add_noise, burgers_initial, kdv_initial, solve_burgers,
                      solve_kdv, spatial_resolution_for)
from .locpoly import BandwidthPlan, KernelSpec, SmoothedFields, smooth_all, wls_polyfit
from .dictionary import FeatureMatrix, TargetVector, build_features, build_target, normalize_columns
from .lasso import (LassoProblem, SparseFit, lambda_path, select_lambda_by_count, signed_support,
                    soft_threshold, solve_lasso)
from .diagnostics import (DiagnosticsReport, Verdict, evaluate_recovery, incoherence_norm, min_eigenvalue,
                          pdw_dual, residual_tau)

__version__ = "0.1.0"
