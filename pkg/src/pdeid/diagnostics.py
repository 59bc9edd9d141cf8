"""Support-recovery diagnostics: incoherence, restricted eigenvalues, PDW dual, residual."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .dictionary import FeatureMatrix, TargetVector
from .lasso import LassoProblem, SparseFit
from .types import SignedSupport

COND_WARN = 1e12


class SingularGramBlock(np.linalg.LinAlgError):
    pass


class NotApplicable(ValueError):
    pass


class Verdict(str, Enum):
    EXACT = "ExactSignedRecovery"
    SUBSET = "SubsetSupport"
    FAILURE = "Failure"
    NOT_EVALUATED = "NotEvaluated"

    def __str__(self):
        return self.value


def _split(K: int, S) -> tuple[np.ndarray, np.ndarray]:
    S = np.array(sorted(set(int(j) for j in S)), dtype=int)
    if S.size and (S.min() < 0 or S.max() >= K):
        raise IndexError(f"support {S.tolist()} out of range for {K} columns")
    Sc = np.setdiff1d(np.arange(K), S)
    return S, Sc


def _cho(G):
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond * np.finfo(float).eps > 1:
        raise SingularGramBlock(f"Gram block is singular (condition number {cond:.3g})")
    if cond > COND_WARN:
        warnings.warn(f"Gram block condition number {cond:.3g}", RuntimeWarning, stacklevel=3)
    try:
        return scipy.linalg.cho_factor(G)
    except np.linalg.LinAlgError as e:
        raise SingularGramBlock(str(e)) from e


def _matrix(F) -> np.ndarray:
    return F.values if isinstance(F, FeatureMatrix) else np.asarray(F, dtype=np.float64)


def incoherence_matrix(F, S) -> np.ndarray:
    """``(F_Sc^T F_S)(F_S^T F_S)^{-1}``, one row per column outside ``S``."""
    X = _matrix(F)
    S, Sc = _split(X.shape[1], S)
    XS = X[:, S]
    cf = _cho(XS.T @ XS)
    # (G_SS^{-1} F_S^T F_Sc)^T; G_SS is symmetric
    return scipy.linalg.cho_solve(cf, XS.T @ X[:, Sc]).T


def incoherence_norm(F, S) -> float:
    """Max absolute row sum of the incoherence matrix (0 when ``S`` covers every column)."""
    Q = incoherence_matrix(F, S)
    return float(np.abs(Q).sum(axis=1).max(initial=0.0))


def min_eigenvalue(F, S) -> float:
    X = _matrix(F)
    S, _ = _split(X.shape[1], S)
    if S.size == 0:
        raise ValueError("support must be non-empty")
    XS = X[:, S]
    return float(scipy.linalg.eigvalsh(XS.T @ XS / X.shape[0])[0])


def pdw_dual(problem: LassoProblem, fit: SparseFit, S) -> np.ndarray:
    """Dual vector on the complement of ``S`` from the zero-subgradient condition.

    ``z_Sc = F_Sc^T (y - F b) / (lam * n)``; meaningful only when the fit is
    supported inside ``S`` (the witness construction sets ``b_Sc = 0``).
    """
    S, Sc = _split(problem.K, S)
    _check_witness(fit, S)
    return problem.gradient(fit.beta_normalized)[Sc] / fit.lam


def pdw_dual_projection(problem: LassoProblem, fit: SparseFit, S) -> np.ndarray:
    """Same dual vector via the projection form.

    ``z_Sc = F_Sc^T F_S (F_S^T F_S)^{-1} z_S + F_Sc^T P_perp y / (lam n)``
    with ``P_perp`` the projector onto the orthogonal complement of
    ``span(F_S)``; the residual is formed from a least-squares solve on the
    raw rows rather than from the cached Gram matrix.
    """
    S, Sc = _split(problem.K, S)
    _check_witness(fit, S)
    X = problem.F.values
    y = problem.y.values
    z_S = problem.gradient(fit.beta_normalized)[S] / fit.lam
    XS = X[:, S]
    coef, *_ = np.linalg.lstsq(XS, y, rcond=None)
    perp = y - XS @ coef
    return incoherence_matrix(X, S) @ z_S + X[:, Sc].T @ perp / (fit.lam * problem.NM)


def _check_witness(fit, S):
    if fit.lam <= 0:
        raise NotApplicable("dual vector undefined at lambda = 0")
    outside = set(fit.support()) - set(S.tolist())
    if outside:
        raise NotApplicable(f"fit support leaves S at indices {sorted(outside)}")


def residual_tau(F_hat: FeatureMatrix, F_true: FeatureMatrix, y_hat: TargetVector,
                 y_true: TargetVector, beta_star) -> tuple[np.ndarray, float]:
    """``tau = (F_hat - F) b* - (u_t_hat - u_t)`` in raw feature units."""
    A = F_hat.values * F_hat.scales
    B = F_true.values * F_true.scales
    if A.shape != B.shape or len(y_hat) != len(y_true) or len(y_hat) != A.shape[0]:
        raise ValueError("shape mismatch between estimated and true quantities")
    b = np.asarray(beta_star, dtype=np.float64)
    if b.shape != (A.shape[1],):
        raise ValueError(f"beta_star needs {A.shape[1]} entries")
    tau = (A - B) @ b - (y_hat.values - y_true.values)
    return tau, float(np.abs(tau).max(initial=0.0))


def evaluate_recovery(recovered: SignedSupport, truth: SignedSupport) -> Verdict:
    r, t = recovered.signs, truth.signs
    if r.shape != t.shape:
        raise ValueError("signed supports have different lengths")
    if np.array_equal(r, t):
        return Verdict.EXACT
    on = r != 0
    if np.all(t[on] == r[on]):
        return Verdict.SUBSET
    return Verdict.FAILURE


@dataclass
class DiagnosticsReport:
    incoherence_inf_norm: float
    min_eigenvalue: float
    support_used: tuple
    dual_inf_norm: Optional[float] = None
    tau_inf_norm: Optional[float] = None
    recovered: Optional[SignedSupport] = None
    verdict: Verdict = Verdict.NOT_EVALUATED
    extra: dict = field(default_factory=dict)

    @property
    def strictly_dual_feasible(self) -> Optional[bool]:
        return None if self.dual_inf_norm is None else self.dual_inf_norm < 1.0


def diagnose(problem: LassoProblem, S: Sequence[int], fit: Optional[SparseFit] = None,
             truth: Optional[SignedSupport] = None) -> DiagnosticsReport:
    """Incoherence and eigenvalue checks on ``S`` plus, given a fit, the witness dual."""
    report = DiagnosticsReport(
        incoherence_inf_norm=incoherence_norm(problem.F, S),
        min_eigenvalue=min_eigenvalue(problem.F, S),
        support_used=tuple(sorted(S)),
    )
    if fit is None:
        return report
    report.recovered = SignedSupport(np.where(np.abs(fit.beta_normalized) > 1e-8, np.sign(fit.beta), 0))
    if truth is not None:
        report.verdict = evaluate_recovery(report.recovered, truth)
    try:
        z = pdw_dual(problem, fit, S)
        report.dual_inf_norm = float(np.abs(z).max(initial=0.0))
    except NotApplicable:
        pass
    return report
