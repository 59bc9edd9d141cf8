"""Grid, field and dictionary-term types shared across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

MAX_P = 6


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Regular grid ``X_i = i*x_max/M``, ``t_n = n*t_max/N`` (left-closed, periodic in x)."""

    M: int
    N: int
    x_max: float = 1.0
    t_max: float = 0.1

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not (self.x_max > 0 and self.t_max > 0):
            raise ValueError("x_max and t_max must be positive")

    @property
    def dx(self) -> float:
        return self.x_max / self.M

    @property
    def dt(self) -> float:
        return self.t_max / self.N

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.N) * self.dt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M, self.N)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Field:
    """Values on a grid, indexed ``values[i, n]`` (space first, time second)."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, fn) -> "Field":
        X, T = np.meshgrid(grid.x, grid.t, indexing="ij")
        return cls(grid, np.broadcast_to(fn(X, T), grid.shape))


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    noisy: Field
    clean: Optional[Field] = None
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.clean is not None and self.clean.grid != self.noisy.grid:
            raise ValueError("clean and noisy fields live on different grids")

    @property
    def grid(self) -> SpaceTimeGrid:
        return self.noisy.grid


class TermKind(Enum):
    CONSTANT = "constant"
    SINGLE = "single"
    PRODUCT = "product"


def derivative_label(p: int) -> str:
    return "u" if p == 0 else "u_" + "x" * p


@dataclass(frozen=True)
class TermDescriptor:
    """One dictionary monomial: ``1``, ``d^p u`` or ``d^p u * d^q u`` with ``p >= q``."""

    kind: TermKind
    p: int = 0
    q: int = 0

    def __post_init__(self):
        if self.kind is TermKind.PRODUCT and self.q > self.p:
            raise ValueError("Product terms store the higher derivative order first")
        if self.p < 0 or self.q < 0:
            raise ValueError("derivative orders must be non-negative")

    @property
    def label(self) -> str:
        if self.kind is TermKind.CONSTANT:
            return "1"
        if self.kind is TermKind.SINGLE:
            return derivative_label(self.p)
        if self.p == self.q:
            return derivative_label(self.p) + "^2"
        return derivative_label(self.q) + "*" + derivative_label(self.p)

    def __str__(self):
        return self.label


def dictionary_size(P_max: int) -> int:
    return 1 + 2 * (P_max + 1) + math.comb(P_max + 1, 2)


def canonical_term_order(P_max: int) -> list[TermDescriptor]:
    """Dictionary columns in the order of the displayed Burgers/KdV regressions.

    Constant first, then per derivative order ``d``: ``d^d u``, its square,
    the products with ``d^1 u``, ..., ``d^(d-1) u``, and finally ``u * d^d u``.
    """
    if int(P_max) != P_max or not 0 <= P_max <= MAX_P:
        raise ValueError(f"P_max must be an integer in [0, {MAX_P}], got {P_max!r}")
    terms = [TermDescriptor(TermKind.CONSTANT)]
    for d in range(P_max + 1):
        terms.append(TermDescriptor(TermKind.SINGLE, d))
        partners = [d] + list(range(1, d)) + ([0] if d > 0 else [])
        for q in partners:
            terms.append(TermDescriptor(TermKind.PRODUCT, d, q))
    return terms


@dataclass(frozen=True, eq=False)
class SignedSupport:
    signs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __post_init__(self):
        s = np.asarray(self.signs)
        if s.size and not np.all(np.isin(s, (-1, 0, 1))):
            raise ValueError("signed support entries must be -1, 0 or +1")
        s = s.astype(np.int8)
        s.setflags(write=False)
        object.__setattr__(self, "signs", s)

    @classmethod
    def from_indices(cls, K: int, indices, signs) -> "SignedSupport":
        s = np.zeros(K, dtype=np.int8)
        s[list(indices)] = list(signs)
        return cls(s)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.signs))

    def __len__(self):
        return len(self.signs)

    def __eq__(self, other):
        if not isinstance(other, SignedSupport):
            return NotImplemented
        return np.array_equal(self.signs, other.signs)

    def __hash__(self):
        return hash(self.signs.tobytes())
