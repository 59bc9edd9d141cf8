"""Feature matrix assembly for the quadratic derivative dictionary."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .locpoly import SmoothedFields
from .types import Field, SpaceTimeGrid, TermDescriptor, TermKind, canonical_term_order


def vectorize(values: np.ndarray) -> np.ndarray:
    """Stack an ``(M, N)`` array space-first: row ``r`` is node ``(r % M, r // M)``."""
    return np.asarray(values).reshape(-1, order="F")


def devectorize(vec: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    return np.asarray(vec).reshape(grid.shape, order="F")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    terms: tuple
    scales: np.ndarray
    is_ground_truth: bool = False
    grid: SpaceTimeGrid | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.terms):
            raise ValueError(f"matrix shape {v.shape} does not match {len(self.terms)} terms")
        s = np.array(self.scales, dtype=np.float64)
        if s.shape != (v.shape[1],) or np.any(s <= 0):
            raise ValueError("scales must be a positive vector with one entry per column")
        v.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def unscale(self, beta_normalized) -> np.ndarray:
        """Coefficients in raw feature units: ``beta_j / s_j``."""
        return np.asarray(beta_normalized, dtype=np.float64) / self.scales


@dataclass(frozen=True, eq=False)
class TargetVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("target vector has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def assemble_columns(derivs, terms) -> np.ndarray:
    """Evaluate ``terms`` given vectorized derivative columns ``derivs[p]``."""
    n = derivs[0].size
    out = np.empty((n, len(terms)))
    for j, t in enumerate(terms):
        if t.kind is TermKind.CONSTANT:
            out[:, j] = 1.0
        elif t.kind is TermKind.SINGLE:
            out[:, j] = derivs[t.p]
        else:
            out[:, j] = derivs[t.p] * derivs[t.q]
    return out


def _required_order(terms) -> int:
    return max((t.p for t in terms if t.kind is not TermKind.CONSTANT), default=-1)


def build_features(fields: SmoothedFields, terms=None) -> FeatureMatrix:
    terms = canonical_term_order(fields.P_max) if terms is None else list(terms)
    need = _required_order(terms)
    if need >= len(fields.dx_hat):
        raise ValueError(f"derivative order {need} missing from smoothed fields")
    derivs = [vectorize(f.values) for f in fields.dx_hat]
    return FeatureMatrix(assemble_columns(derivs, terms), terms, np.ones(len(terms)), False, fields.grid)


def build_target(fields: SmoothedFields) -> TargetVector:
    return TargetVector(vectorize(fields.u_t_hat.values))


def normalize_columns(F: FeatureMatrix) -> FeatureMatrix:
    """Scale columns so that ``||F_j||_2 / sqrt(NM) = 1``; zero columns keep scale 1.

    Scales compose with any already recorded, so ``unscale`` always maps back
    to raw units.
    """
    norms = np.linalg.norm(F.values, axis=0) / np.sqrt(F.n_rows)
    s = np.where(norms > 0, norms, 1.0)
    return replace(F, values=F.values / s, scales=F.scales * s)


# --- ground truth via finite differences -----------------------------------


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights (unit spacing) for the ``order``-th derivative at 0."""
    offsets = np.asarray(offsets, dtype=np.float64)
    n = offsets.size
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


def _half_width(order: int) -> int:
    # 4th-order accurate centred stencils: 5 points for orders 1-2, 7 for 3-4, ...
    return (order + 1) // 2 + 1


def fd_derivative(values, axis: int, spacing: float, order: int, periodic: bool, at=None) -> np.ndarray:
    """Fourth-order finite-difference derivative along ``axis``.

    Periodic axes use centred stencils with wrap-around; otherwise stencils are
    shifted inwards near the ends. ``at`` restricts the output to those indices.
    """
    values = np.moveaxis(np.asarray(values, dtype=np.float64), axis, 0)
    n = values.shape[0]
    idx = np.arange(n) if at is None else np.asarray(at)
    if order == 0:
        out = values[idx]
        return np.moveaxis(out, 0, axis)
    r = _half_width(order)
    width = 2 * r + 1
    if not periodic and n < width:
        raise ValueError(f"need at least {width} points for order {order}")
    out = np.empty((idx.size,) + values.shape[1:])
    centred = fd_weights(np.arange(-r, r + 1), order) / spacing**order
    for k, i in enumerate(idx):
        if periodic:
            out[k] = np.tensordot(centred, values[np.arange(i - r, i + r + 1) % n], axes=1)
            continue
        lo = min(max(i - r, 0), n - width)
        offs = np.arange(lo, lo + width) - i
        w = centred if lo == i - r else fd_weights(offs, order) / spacing**order
        out[k] = np.tensordot(w, values[lo:lo + width], axes=1)
    return np.moveaxis(out, 0, axis)


def ground_truth_features(clean_fine: Field, target_grid: SpaceTimeGrid, P_max: int,
                          periodic: bool = True, terms=None):
    """Reference ``(F, u_t)`` on ``target_grid`` from a clean field at least 4x finer.

    The fine grid must refine the target by integer factors (>= 4) so target
    nodes coincide with fine nodes.
    """
    fg = clean_fine.grid
    if not (np.isclose(fg.x_max, target_grid.x_max) and np.isclose(fg.t_max, target_grid.t_max)):
        raise ValueError("fine and target grids cover different domains")
    rx, mx = divmod(fg.M, target_grid.M)
    rt, mt = divmod(fg.N, target_grid.N)
    if mx or mt or rx < 4 or rt < 4:
        raise ValueError(
            f"fine grid {fg.shape} must refine target {target_grid.shape} by integer factors >= 4"
        )
    terms = canonical_term_order(P_max) if terms is None else list(terms)
    xi = np.arange(target_grid.M) * rx
    ti = np.arange(target_grid.N) * rt
    U = clean_fine.values
    U_t = fd_derivative(U[xi], 1, fg.dt, 1, periodic=False, at=ti)
    Us = U[:, ti]
    derivs = [vectorize(fd_derivative(Us, 0, fg.dx, p, periodic, at=xi)) for p in range(P_max + 1)]
    F = FeatureMatrix(assemble_columns(derivs, terms), terms, np.ones(len(terms)), True, target_grid)
    return F, TargetVector(vectorize(U_t))
