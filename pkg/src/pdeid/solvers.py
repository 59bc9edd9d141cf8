"""Finite-difference generators for viscous Burgers and KdV trajectories.

Both solvers march on a fine time grid ``dt = t_max / (oversample * N)`` with
periodic boundaries and keep every ``oversample``-th slice, so the returned
field lives on the requested ``M x N`` grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .types import Field, SpaceTimeGrid, TrajectoryDataset

log = logging.getLogger(__name__)

DEFAULT_OVERSAMPLE = 100


class StabilityError(ValueError):
    pass


class BlowUpError(RuntimeError):
    pass


def burgers_initial(x):
    return np.sin(2 * np.pi * x) ** 2 + np.cos(3 * np.pi * x) ** 3


def kdv_initial(x):
    return 3.5 * np.sin(4 * np.pi * x) ** 3 + 1.5 * np.exp(-np.sin(2 * np.pi * x) * (1 - x))


def spatial_resolution_for(N: int, P_max: int) -> int:
    """``floor(N ** ((2 P_max + 5) / 7))``, robust to round-off at exact powers."""
    if N < 2:
        raise ValueError("N must be at least 2")
    e = (2 * P_max + 5) / 7
    M = int(math.floor(N**e))
    # N**e can land a hair below an exact integer power (e.g. 128**(9/7))
    if (M + 1) ** 7 <= N ** (2 * P_max + 5):
        M += 1
    return M


@dataclass(frozen=True)
class BurgersSpec:
    nu: float
    grid: SpaceTimeGrid
    oversample: int = DEFAULT_OVERSAMPLE
    initial: Callable = burgers_initial
    auto_refine: bool = True

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be non-negative")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")


@dataclass(frozen=True)
class KdVSpec:
    grid: SpaceTimeGrid
    oversample: int = DEFAULT_OVERSAMPLE
    initial: Callable = kdv_initial
    auto_refine: bool = True

    def __post_init__(self):
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")


@dataclass
class SolveInfo:
    """Bookkeeping about the fine grid actually used."""

    oversample: int
    fine_dt: float
    steps: int
    refined: bool = False
    numbers: dict = field(default_factory=dict)


# --- stability -------------------------------------------------------------


def burgers_stability_numbers(nu, dx, dt, umax) -> dict:
    return {"diffusion": nu * dt / dx**2, "cfl": umax * dt / dx}


def burgers_is_stable(nu, dx, dt, umax) -> bool:
    n = burgers_stability_numbers(nu, dx, dt, umax)
    return n["diffusion"] <= 0.5 and n["cfl"] <= 1.0


def kdv_max_dt(dx, umax, safety=0.9) -> float:
    return safety * dx**3 / (4.0 + 6.0 * umax * dx**2)


def _refine(oversample, stable, auto, base, what):
    """Smallest multiple of ``base`` (>= oversample) passing ``stable``."""
    if stable(oversample):
        return oversample, False
    if not auto:
        raise StabilityError(what(oversample))
    k = max(1, math.ceil(oversample / base))
    lo = k
    while not stable(k * base):
        k *= 2
    hi = k
    while lo < hi:
        mid = (lo + hi) // 2
        if stable(mid * base):
            hi = mid
        else:
            lo = mid + 1
    return lo * base, True


# --- Burgers ---------------------------------------------------------------


def burgers_flux(u):
    return 0.5 * u * u


def lax_wendroff_step(u, dx, dt, nu=0.0, flux=burgers_flux):
    """One Richtmyer two-step Lax-Wendroff update on a periodic grid.

    Advection uses the conservative flux ``flux(u)``. Diffusion ``nu*u_xx``
    enters the half-step face values and, at the full step, as a compact
    second difference of a midpoint predictor at the nodes; the compact
    stencil keeps the odd-even mode damped.
    """
    up = np.roll(u, -1)
    um = np.roll(u, 1)
    f, fp = flux(u), flux(up)
    half = 0.5 * (u + up) - 0.5 * dt / dx * (fp - f)
    if nu:
        lap = up - 2 * u + um
        half += 0.25 * nu * dt / dx**2 * (lap + np.roll(lap, -1))
    # half[i] lives at i + 1/2
    fh = flux(half)
    new = u - dt / dx * (fh - np.roll(fh, 1))
    if nu:
        mid = u + 0.5 * dt * (nu * lap / dx**2 - (fp - flux(um)) / (2 * dx))
        new += nu * dt / dx**2 * (np.roll(mid, -1) - 2 * mid + np.roll(mid, 1))
    return new


def march_lax_wendroff(u0, dx, dt, keep, oversample, nu=0.0, flux=burgers_flux):
    """Advance ``u0`` and return ``keep`` slices spaced ``oversample`` steps apart."""
    u = np.array(u0, dtype=np.float64)
    out = np.empty((u.size, keep))
    out[:, 0] = u
    for n in range(1, keep):
        for _ in range(oversample):
            u = lax_wendroff_step(u, dx, dt, nu, flux)
        if not np.all(np.isfinite(u)):
            raise BlowUpError(f"non-finite value after slice {n}")
        out[:, n] = u
    return out


def solve_burgers(spec: BurgersSpec, info: Optional[SolveInfo] = None) -> Field:
    """Clean viscous Burgers trajectory ``u_t = -u u_x + nu u_xx`` on ``spec.grid``."""
    g = spec.grid
    u0 = np.asarray(spec.initial(g.x), dtype=np.float64) * np.ones(g.M)
    umax = float(np.max(np.abs(u0)))

    def fine_dt(k):
        return g.t_max / (k * g.N)

    def stable(k):
        return burgers_is_stable(spec.nu, g.dx, fine_dt(k), umax)

    def describe(k):
        return f"unstable fine grid: {burgers_stability_numbers(spec.nu, g.dx, fine_dt(k), umax)}"

    k, refined = _refine(spec.oversample, stable, spec.auto_refine, spec.oversample, describe)
    if refined:
        log.info("Burgers oversample raised %d -> %d for M=%d N=%d", spec.oversample, k, g.M, g.N)
    dt = fine_dt(k)
    values = march_lax_wendroff(u0, g.dx, dt, g.N, k, spec.nu)
    if info is not None:
        info.oversample, info.fine_dt, info.steps, info.refined = k, dt, k * (g.N - 1), refined
        info.numbers = burgers_stability_numbers(spec.nu, g.dx, dt, umax)
    return Field(g, values)


# --- KdV -------------------------------------------------------------------


@numba.njit(cache=True)
def _zk_point(u, i, im2, im1, ip1, ip2, a, b):
    return -a * (u[ip1] + u[i] + u[im1]) * (u[ip1] - u[im1]) - b * (
        u[ip2] - 2.0 * u[ip1] + 2.0 * u[im1] - u[im2]
    )


@numba.njit(cache=True)
def _zk_leap(cur, prev, a, b):
    """``prev <- prev + increment(cur)``: the leapfrog update written in place."""
    M = cur.shape[0]
    for i in range(2, M - 2):
        prev[i] += _zk_point(cur, i, i - 2, i - 1, i + 1, i + 2, a, b)
    for i in (0, 1, M - 2, M - 1):
        prev[i] += _zk_point(cur, i, (i - 2) % M, (i - 1) % M, (i + 1) % M, (i + 2) % M, a, b)


@numba.njit(cache=True)
def _zk_march(u0, dx, dt, keep, oversample):
    M = u0.shape[0]
    out = np.empty((M, keep))
    out[:, 0] = u0
    # leapfrog increments are 2*dt*(du/dt); a, b carry that factor
    a = 2.0 * dt / dx
    b = dt / dx**3
    # forward-Euler bootstrap: half the leapfrog increment
    prev = u0.copy()
    cur = u0.copy()
    _zk_leap(prev, cur, 0.5 * a, 0.5 * b)
    step = 1
    for n in range(1, keep):
        while step < n * oversample:
            _zk_leap(cur, prev, a, b)
            prev, cur = cur, prev
            step += 1
        for i in range(M):
            if not np.isfinite(cur[i]):
                return out, n
        out[:, n] = cur
    return out, -1


def zabusky_kruskal(u0, dx, dt, keep, oversample):
    """Leapfrog for ``u_t = -6 u u_x - u_xxx``; returns ``keep`` slices ``oversample`` steps apart."""
    out, bad = _zk_march(np.ascontiguousarray(u0, dtype=np.float64), float(dx), float(dt), int(keep), int(oversample))
    if bad >= 0:
        raise BlowUpError(f"non-finite value at slice {bad}")
    return out


def solve_kdv(spec: KdVSpec, info: Optional[SolveInfo] = None) -> Field:
    """Clean KdV trajectory ``u_t + u_xxx + 6 u u_x = 0`` on ``spec.grid``."""
    g = spec.grid
    u0 = np.asarray(spec.initial(g.x), dtype=np.float64) * np.ones(g.M)
    umax = float(np.max(np.abs(u0)))
    dt_max = kdv_max_dt(g.dx, umax)

    def fine_dt(k):
        return g.t_max / (k * g.N)

    def describe(k):
        return f"unstable fine grid: dt={fine_dt(k):.3e} exceeds {dt_max:.3e}"

    k, refined = _refine(spec.oversample, lambda k: fine_dt(k) <= dt_max, spec.auto_refine,
                         spec.oversample, describe)
    if refined:
        log.info("KdV oversample raised %d -> %d for M=%d N=%d", spec.oversample, k, g.M, g.N)
    dt = fine_dt(k)
    values = zabusky_kruskal(u0, g.dx, dt, g.N, k)
    if info is not None:
        info.oversample, info.fine_dt, info.steps, info.refined = k, dt, k * (g.N - 1), refined
        info.numbers = {"dt_over_limit": dt / dt_max}
    return Field(g, values)


# --- noise -----------------------------------------------------------------


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def add_noise(clean: Field, sigma: float, seed: int) -> TrajectoryDataset:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        noisy = clean
    else:
        eps = make_rng(seed).standard_normal(clean.grid.shape)
        noisy = Field(clean.grid, clean.values + sigma * eps)
    return TrajectoryDataset(noisy=noisy, clean=clean, sigma=float(sigma), seed=int(seed))
