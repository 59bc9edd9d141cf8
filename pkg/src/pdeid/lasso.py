"""l1-regularized least squares on a (pseudo-)observed design.

Minimizes ``(1/2n) ||y - F b||^2 + lam ||b||_1`` by cyclic coordinate descent
in covariance form: ``G = F^T F / n`` and ``c = F^T y / n`` are formed once,
so a sweep costs O(K^2) regardless of the number of rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .dictionary import FeatureMatrix, TargetVector
from .types import SignedSupport

log = logging.getLogger(__name__)

NONZERO_TOL = 1e-8
CONV_TOL = 1e-10
KKT_RTOL = 1e-6


class MaxIterationsExceeded(RuntimeError):
    def __init__(self, msg, fit=None):
        super().__init__(msg)
        self.fit = fit


def soft_threshold(z, gamma):
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


class LassoProblem:
    """Design, response and their cached second moments."""

    def __init__(self, F: FeatureMatrix, y: TargetVector):
        if F.n_rows != len(y):
            raise ValueError(f"design has {F.n_rows} rows but target has {len(y)}")
        self.F = F
        self.y = y
        n = F.n_rows
        X = F.values
        self.gram = X.T @ X / n
        self.cov = X.T @ y.values / n
        self.yy = float(y.values @ y.values) / n

    @property
    def NM(self) -> int:
        return self.F.n_rows

    @property
    def K(self) -> int:
        return self.F.K

    @property
    def lambda_max(self) -> float:
        return float(np.max(np.abs(self.cov))) if self.K else 0.0

    def gradient(self, beta) -> np.ndarray:
        """``F^T (y - F b) / n``."""
        return self.cov - self.gram @ beta

    def objective(self, beta, lam) -> float:
        b = np.asarray(beta)
        return 0.5 * (self.yy - 2 * self.cov @ b + b @ self.gram @ b) + lam * np.abs(b).sum()

    def kkt_violation(self, beta, lam) -> float:
        """Largest violation of the zero-subgradient conditions, relative to ``lam``.

        At ``lam = 0`` the raw gradient magnitude is reported instead.
        """
        g = self.gradient(beta)
        active = np.abs(beta) > 0
        viol = np.where(active, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
        return float(viol.max(initial=0.0) / lam) if lam > 0 else float(viol.max(initial=0.0))


@dataclass
class SparseFit:
    beta: np.ndarray
    beta_normalized: np.ndarray
    lam: float
    iterations: int
    converged: bool
    objective: float
    kkt: float = float("nan")
    labels: list = field(default_factory=list)

    def n_nonzero(self, tol: float = NONZERO_TOL) -> int:
        return int(np.sum(np.abs(self.beta_normalized) > tol))

    def support(self, tol: float = NONZERO_TOL) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(np.abs(self.beta_normalized) > tol))

    def kkt_ok(self, lam_abs_tol: float = 1e-9) -> bool:
        return self.kkt <= (KKT_RTOL if self.lam > 0 else lam_abs_tol)


@numba.njit(cache=True)
def _cd(G, c, lam, beta, tol, max_sweeps):
    K = beta.shape[0]
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for j in range(K):
            gjj = G[j, j]
            if gjj <= 0.0:
                d = abs(beta[j])
                beta[j] = 0.0
            else:
                r = c[j]
                for k in range(K):
                    if k != j:
                        r -= G[j, k] * beta[k]
                a = abs(r) - lam
                new = 0.0
                if a > 0.0:
                    new = (a if r > 0 else -a) / gjj
                d = abs(new - beta[j])
                beta[j] = new
            if d > delta:
                delta = d
        bmax = 1.0
        for j in range(K):
            if abs(beta[j]) > bmax:
                bmax = abs(beta[j])
        if delta < tol * bmax:
            return sweep, True
    return max_sweeps, False


def solve_lasso(problem: LassoProblem, lam: float, warm_start=None, max_sweeps: int = 1_000_000,
                raise_on_failure: bool = False) -> SparseFit:
    """Coordinate-descent solution at one regularization level.

    Convergence is declared when no coordinate moves by more than
    ``1e-10 * max(1, ||b||_inf)`` over a sweep. The returned fit records the
    KKT violation (see ``LassoProblem.kkt_violation``) as a certificate.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    beta = np.zeros(problem.K) if warm_start is None else np.array(warm_start, dtype=np.float64)
    sweeps, ok = _cd(problem.gram, problem.cov, float(lam), beta, CONV_TOL, int(max_sweeps))
    fit = SparseFit(
        beta=problem.F.unscale(beta),
        beta_normalized=beta,
        lam=float(lam),
        iterations=int(sweeps),
        converged=bool(ok),
        objective=float(problem.objective(beta, lam)),
        kkt=problem.kkt_violation(beta, lam),
        labels=problem.F.labels,
    )
    if not ok:
        log.warning("coordinate descent hit %d sweeps at lambda=%g", sweeps, lam)
        if raise_on_failure:
            raise MaxIterationsExceeded(f"no convergence in {sweeps} sweeps", fit)
    return fit


def lambda_grid(lam_max: float, n_lambdas: int = 100, ratio: float = 1e-4) -> np.ndarray:
    if n_lambdas < 2:
        raise ValueError("need at least two lambdas")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    return lam_max * np.geomspace(1.0, ratio, n_lambdas)


def lambda_path(problem: LassoProblem, n_lambdas: int = 100, ratio: float = 1e-4) -> list[SparseFit]:
    """Warm-started fits on a geometric grid from ``lambda_max`` down to ``ratio * lambda_max``."""
    fits = []
    beta = None
    for lam in lambda_grid(problem.lambda_max, n_lambdas, ratio):
        fit = solve_lasso(problem, lam, warm_start=beta)
        beta = fit.beta_normalized
        fits.append(fit)
    return fits


def select_lambda_by_count(path: Sequence[SparseFit], target_nonzeros: int,
                           tol: float = NONZERO_TOL) -> Optional[SparseFit]:
    """Fit with the largest lambda whose nonzero count equals ``target_nonzeros``."""
    if not path:
        raise ValueError("empty path")
    hits = [f for f in path if f.n_nonzero(tol) == target_nonzeros]
    return max(hits, key=lambda f: f.lam) if hits else None


def refine_for_count(problem: LassoProblem, path: Sequence[SparseFit], target_nonzeros: int,
                     max_bisections: int = 40, tol: float = NONZERO_TOL) -> list[SparseFit]:
    """Bisect between grid neighbours that bracket ``target_nonzeros`` without hitting it.

    Returns the path with the extra fits merged in (decreasing lambda). A
    finite grid can step over a narrow lambda interval holding the target
    count; this recovers it when it exists between two adjacent grid points.
    """
    fits = sorted(path, key=lambda f: -f.lam)
    if select_lambda_by_count(fits, target_nonzeros, tol) is not None:
        return fits
    extra = []
    for hi, lo in zip(fits, fits[1:]):
        if not hi.n_nonzero(tol) < target_nonzeros < lo.n_nonzero(tol):
            continue
        a, b = hi, lo
        for _ in range(max_bisections):
            lam = np.sqrt(a.lam * b.lam)
            mid = solve_lasso(problem, lam, warm_start=a.beta_normalized)
            extra.append(mid)
            k = mid.n_nonzero(tol)
            if k == target_nonzeros:
                break
            if k < target_nonzeros:
                a = mid
            else:
                b = mid
        break
    return sorted(fits + extra, key=lambda f: -f.lam)


def signed_support(beta, tol: float = 0.0) -> SignedSupport:
    b = np.asarray(beta, dtype=np.float64)
    s = np.where(np.abs(b) <= tol, 0, np.sign(b)).astype(np.int8)
    return SignedSupport(s)
