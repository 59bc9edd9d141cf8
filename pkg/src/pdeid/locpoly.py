"""Local-polynomial derivative estimators on regular grids.

A local fit at a node is a weighted least-squares problem whose solution is a
fixed linear combination of the samples in the kernel window. Because the
weights only depend on the grid geometry, every estimator here is assembled
once as an explicit linear operator (one hat-matrix row per node) and then
applied to all spatial slices / temporal series at once.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .types import Field, SpaceTimeGrid, TrajectoryDataset

PIVOT_RTOL = 1e-12
RIDGE = 1e-10


class EstimationError(ValueError):
    pass


class InsufficientSupport(EstimationError):
    pass


class RankDeficient(EstimationError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Epanechnikov kernel ``K(z) = 3/4 (1 - z^2)_+`` scaled to ``K(z/h)/h``."""

    bandwidth: float = 1.0
    kind: str = "epanechnikov"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.kind != "epanechnikov":
            raise ValueError(f"unsupported kernel {self.kind!r}")

    @staticmethod
    def profile(z):
        z = np.asarray(z, dtype=np.float64)
        return 0.75 * np.clip(1.0 - z * z, 0.0, None)

    def __call__(self, d):
        h = self.bandwidth
        return self.profile(np.asarray(d) / h) / h

    @staticmethod
    def moment(m: int) -> float:
        """``int z^m K(z) dz`` of the unscaled profile."""
        if m % 2:
            return 0.0
        return 0.75 * (2.0 / (m + 1) - 2.0 / (m + 3))


@dataclass(frozen=True)
class BandwidthPlan:
    """Bandwidths ``h_N = h_const N^(-1/7)`` in time, ``w_M = w_const M^(-1/7)`` in space."""

    h_const: float
    w_const: float

    def __post_init__(self):
        if not (self.h_const > 0 and self.w_const > 0):
            raise ValueError("bandwidth constants must be positive")

    def h(self, N: int) -> float:
        return self.h_const * N ** (-1 / 7)

    def w(self, M: int) -> float:
        return self.w_const * M ** (-1 / 7)


BURGERS_PLAN = BandwidthPlan(h_const=0.75, w_const=0.25)
KDV_PLAN = BandwidthPlan(h_const=0.01, w_const=0.1)
# the same constants with the space/time roles exchanged; kept for comparison runs
BURGERS_PLAN_SWAPPED = BandwidthPlan(h_const=0.25, w_const=0.75)
KDV_PLAN_SWAPPED = BandwidthPlan(h_const=0.1, w_const=0.01)


# --- single weighted fit ---------------------------------------------------


def _fit_matrix(z, center, degree, kernel):
    """Rows mapping window samples to coefficients ``b_0..b_degree``.

    Returns ``(mask, L)`` where ``mask`` selects the positively-weighted
    samples and ``b = L @ y[mask]``.
    """
    z = np.asarray(z, dtype=np.float64)
    h = kernel.bandwidth
    s = (z - center) / h
    w = kernel.profile(s)
    mask = w > 0
    npos = int(mask.sum())
    if npos < degree + 2:
        raise InsufficientSupport(
            f"{npos} positively weighted points at center {center:g}; need {degree + 2} for degree {degree}"
        )
    s, sw = s[mask], np.sqrt(w[mask])
    V = np.vander(s, degree + 1, increasing=True)
    A = sw[:, None] * V
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[-1] <= s.size * np.finfo(float).eps * diag[0]:
        # exactly singular to working precision; a ridge would only hide it
        raise RankDeficient(f"singular local design at center {center:g}")
    if diag[-1] > PIVOT_RTOL * diag[0]:
        # A P = Q R  =>  coef = P R^{-1} Q^T
        C = np.empty((degree + 1, s.size))
        C[piv] = scipy.linalg.solve_triangular(R, Q.T)
    else:
        G = A.T @ A
        G[np.diag_indices_from(G)] += RIDGE * np.trace(G)
        try:
            cf = scipy.linalg.cho_factor(G)
        except np.linalg.LinAlgError as e:
            raise RankDeficient(f"singular local design at center {center:g}") from e
        C = scipy.linalg.cho_solve(cf, A.T)
    C *= sw[None, :]
    C /= (h ** np.arange(degree + 1))[:, None]
    return mask, C


def wls_polyfit(z, y, center: float, degree: int, kernel: KernelSpec) -> np.ndarray:
    """Kernel-weighted polynomial fit in powers of ``(z - center)``.

    Parameters
    ----------
    z, y : array_like
        Sample locations and values. ``y`` may carry trailing dimensions,
        in which case each column is fitted independently.
    center : float
        Expansion point.
    degree : int
        Polynomial degree.
    kernel : KernelSpec
        Kernel and bandwidth.

    Returns
    -------
    ndarray
        Coefficients ``b_0, ..., b_degree``; ``b_j`` estimates the j-th
        derivative at ``center`` divided by ``j!``.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    mask, C = _fit_matrix(z, center, degree, kernel)
    return C @ np.asarray(y, dtype=np.float64)[mask]


# --- grid operators --------------------------------------------------------


@functools.lru_cache(maxsize=64)
def derivative_operator(n: int, spacing: float, degree: int, order: int, bandwidth: float):
    """Linear map from ``n`` equispaced samples to the ``order``-th derivative estimate at each node.

    Windows are truncated at the ends of the sample range (no wrap-around).
    """
    if not 0 <= order <= degree:
        raise ValueError("derivative order must lie in [0, degree]")
    z = np.arange(n) * spacing
    kernel = KernelSpec(bandwidth)
    scale = math.factorial(order)
    D = np.zeros((n, n))
    for i in range(n):
        try:
            mask, C = _fit_matrix(z, z[i], degree, kernel)
        except EstimationError as e:
            raise type(e)(f"node {i}: {e}") from None
        D[i, mask] = scale * C[order]
    if np.count_nonzero(D) < 0.2 * D.size:
        D = scipy.sparse.csr_matrix(D)
    else:
        D.setflags(write=False)
    return D


def _apply_rows(D, U):
    return np.asarray(D @ U)


def estimate_u_t(data: TrajectoryDataset, plan: BandwidthPlan) -> Field:
    """Local-quadratic estimate of ``u_t`` at every node (fit in t for each fixed X_i)."""
    g = data.grid
    try:
        T = derivative_operator(g.N, g.dt, 2, 1, plan.h(g.N))
    except EstimationError as e:
        raise type(e)(f"time fit, every X_i, {e}") from None
    # values[i, :] is the time series at X_i
    return Field(g, _apply_rows(T, data.noisy.values.T).T)


def estimate_dx(data: TrajectoryDataset, p: int, plan: BandwidthPlan) -> Field:
    """Degree-(p+1) local-polynomial estimate of ``d^p u / dx^p`` at every node."""
    if p < 0:
        raise ValueError("p must be non-negative")
    g = data.grid
    try:
        D = derivative_operator(g.M, g.dx, p + 1, p, plan.w(g.M))
    except EstimationError as e:
        raise type(e)(f"space fit, order {p}, every t_n, {e}") from None
    return Field(g, _apply_rows(D, data.noisy.values))


@dataclass(frozen=True, eq=False)
class SmoothedFields:
    grid: SpaceTimeGrid
    u_t_hat: Field
    dx_hat: tuple
    plan: BandwidthPlan
    P_max: int

    def __post_init__(self):
        if len(self.dx_hat) != self.P_max + 1:
            raise ValueError(f"expected {self.P_max + 1} spatial derivative fields, got {len(self.dx_hat)}")
        for f in (self.u_t_hat, *self.dx_hat):
            if f.grid != self.grid:
                raise ValueError("smoothed fields must share one grid")


def smooth_all(data: TrajectoryDataset, P_max: int, plan: BandwidthPlan) -> SmoothedFields:
    u_t = estimate_u_t(data, plan)
    dx = tuple(estimate_dx(data, p, plan) for p in range(P_max + 1))
    return SmoothedFields(data.grid, u_t, dx, plan, P_max)


# --- equivalent kernel (inspection only) -----------------------------------


def moment_matrix(p: int, kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    return np.array([[kernel.moment(l + s) for s in range(p + 1)] for l in range(p + 1)])


def equivalent_kernel(j: int, p: int, kernel: KernelSpec = KernelSpec()):
    """Asymptotic equivalent kernel ``K*_j(z) = e_j^T S^-1 (1, z, ..., z^p)^T K(z)``.

    Only for inspecting the estimators; the fits themselves are exact.
    """
    if not 0 <= j <= p:
        raise ValueError("need 0 <= j <= p")
    S = moment_matrix(p, kernel)
    if np.linalg.cond(S) > 1e12:
        raise np.linalg.LinAlgError("moment matrix is singular")
    row = np.linalg.solve(S, np.eye(p + 1)[j])

    def Kstar(z):
        z = np.asarray(z, dtype=np.float64)
        powers = np.stack([z**k for k in range(p + 1)], axis=-1)
        return (powers @ row) * kernel.profile(z)

    return Kstar
