"""Seeded Monte-Carlo trials over a grid of temporal resolutions.

One trial runs the full pipeline (clean solve, noise, smoothing, features,
lambda path, oracle selection, diagnostics) and never raises: any stage
error is folded into a ``Failure`` verdict with a reason string.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics as dg
from .dictionary import build_features, build_target, ground_truth_features, normalize_columns
from .lasso import LassoProblem, lambda_path, refine_for_count, select_lambda_by_count, signed_support
from .locpoly import BURGERS_PLAN, KDV_PLAN, BandwidthPlan, smooth_all
from .solvers import (BurgersSpec, KdVSpec, DEFAULT_OVERSAMPLE, add_noise, solve_burgers, solve_kdv,
                      spatial_resolution_for)
from .types import Field, SignedSupport, SpaceTimeGrid, dictionary_size

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
GROUND_TRUTH_REFINE = 4


class ConfigError(ValueError):
    pass


class TrialTimeout(RuntimeError):
    pass


# --- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    equation: str = "burgers"
    nu: Optional[float] = 0.03
    P_max: int = 2
    N_grid: tuple = (50, 100, 150, 200, 250, 300)
    trials: int = 20
    sigma: float = 0.25
    base_seed: int = 0
    h_const: float = BURGERS_PLAN.h_const
    w_const: float = BURGERS_PLAN.w_const
    n_lambdas: int = 100
    ratio: float = 1e-4
    target_support: tuple = (5, 6)
    target_signs: tuple = (-1, 1)
    out_dir: str = "results"
    x_max: float = 1.0
    t_max: float = 0.1
    oversample: int = DEFAULT_OVERSAMPLE
    timeout: Optional[float] = None
    ground_truth: bool = True
    cache_dir: Optional[str] = None

    def __post_init__(self):
        for name in ("N_grid", "target_support", "target_signs"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        if self.equation not in ("burgers", "kdv"):
            raise ConfigError(f"unknown equation {self.equation!r}")
        if self.equation == "burgers" and (self.nu is None or self.nu < 0):
            raise ConfigError("burgers needs nu >= 0")
        if not 0 <= self.P_max <= 6:
            raise ConfigError("P_max must lie in [0, 6]")
        if not self.N_grid:
            raise ConfigError("N_grid is empty")
        if any(b <= a for a, b in zip(self.N_grid, self.N_grid[1:])):
            raise ConfigError("N_grid must be strictly increasing")
        if self.N_grid[0] < 2:
            raise ConfigError("N values must be at least 2")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if not (self.h_const > 0 and self.w_const > 0):
            raise ConfigError("bandwidth constants must be positive")
        if self.n_lambdas < 2 or not 0 < self.ratio < 1:
            raise ConfigError("need n_lambdas >= 2 and 0 < ratio < 1")
        if len(self.target_support) != len(self.target_signs):
            raise ConfigError("target_support and target_signs differ in length")
        K = dictionary_size(self.P_max)
        if any(not 0 <= j < K for j in self.target_support):
            raise ConfigError(f"target index out of range for K={K}")
        if any(s not in (-1, 1) for s in self.target_signs):
            raise ConfigError("target signs must be -1 or +1")
        if self.timeout is not None and self.timeout <= 0:
            raise ConfigError("timeout must be positive")

    # the true coefficient vector in raw units
    @property
    def beta_star(self) -> np.ndarray:
        b = np.zeros(dictionary_size(self.P_max))
        if self.equation == "burgers":
            b[5], b[6] = -1.0, self.nu
        else:
            b[5], b[10] = -6.0, -1.0
        return b

    @property
    def truth(self) -> SignedSupport:
        return SignedSupport.from_indices(dictionary_size(self.P_max), self.target_support, self.target_signs)

    @property
    def plan(self) -> BandwidthPlan:
        return BandwidthPlan(self.h_const, self.w_const)

    def grid_for(self, N: int) -> SpaceTimeGrid:
        return SpaceTimeGrid(spatial_resolution_for(N, self.P_max), N, self.x_max, self.t_max)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("N_grid", "target_support", "target_signs"):
            d[k] = list(d[k])
        return {"schema_version": SCHEMA_VERSION, **d}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def burgers_config(nu: float = 0.03, **kw) -> ExperimentConfig:
    return ExperimentConfig(equation="burgers", nu=nu, **kw)


# N < 60 leaves too few time samples in the KdV window; the solve cost grows like M^4 beyond 70
KDV_N_GRID = (60, 70)


def kdv_config(**kw) -> ExperimentConfig:
    base = dict(equation="kdv", nu=None, P_max=3, sigma=0.025, N_grid=KDV_N_GRID, h_const=KDV_PLAN.h_const,
                w_const=KDV_PLAN.w_const, target_support=(5, 10), target_signs=(-1, -1))
    base.update(kw)
    return ExperimentConfig(**base)


def trial_seed(base_seed: int, N: int, trial_index: int) -> int:
    """First 8 bytes (little-endian) of BLAKE2b over three signed 64-bit ints."""
    msg = struct.pack("<qqq", int(base_seed), int(N), int(trial_index))
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


# --- cached clean data -----------------------------------------------------

_memo: dict = {}


def _solve(config: ExperimentConfig, grid: SpaceTimeGrid) -> Field:
    if config.equation == "burgers":
        return solve_burgers(BurgersSpec(config.nu, grid, config.oversample))
    return solve_kdv(KdVSpec(grid, config.oversample))


def _cached(kind: str, config: ExperimentConfig, grid: SpaceTimeGrid, make):
    key = (kind, config.equation, config.nu, grid, config.oversample, config.P_max)
    if key in _memo:
        return _memo[key]
    path = None
    if config.cache_dir:
        tag = hashlib.blake2b(repr(key).encode(), digest_size=8).hexdigest()
        path = Path(config.cache_dir) / f"{kind}-{config.equation}-{grid.M}x{grid.N}-{tag}.npz"
        if path.exists():
            with np.load(path) as z:
                value = tuple(z[f"a{i}"] for i in range(len(z.files)))
            _memo[key] = value
            return value
    value = make()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, **{f"a{i}": a for i, a in enumerate(value)})
    _memo[key] = value
    return value


def clean_field(config: ExperimentConfig, N: int) -> Field:
    """Noise-free trajectory on the ``N``-grid, solved once per (equation, nu, N)."""
    grid = config.grid_for(N)
    (values,) = _cached("clean", config, grid, lambda: (_solve(config, grid).values,))
    return Field(grid, values)


@dataclass(frozen=True)
class GroundTruth:
    F: object
    y: object
    incoherence_raw: float
    incoherence_normalized: float


def ground_truth(config: ExperimentConfig, N: int) -> GroundTruth:
    """Finite-difference reference features from a solve 4x finer in both axes."""
    from .dictionary import FeatureMatrix, TargetVector
    from .types import canonical_term_order

    grid = config.grid_for(N)
    r = GROUND_TRUTH_REFINE
    fine = SpaceTimeGrid(r * grid.M, r * grid.N, grid.x_max, grid.t_max)

    def make():
        F, y = ground_truth_features(_solve(config, fine), grid, config.P_max)
        return F.values, y.values

    Fv, yv = _cached("truth", config, grid, make)
    F = FeatureMatrix(Fv, canonical_term_order(config.P_max), np.ones(Fv.shape[1]), True, grid)
    S = config.target_support
    return GroundTruth(F, TargetVector(yv), dg.incoherence_norm(F, S),
                       dg.incoherence_norm(normalize_columns(F), S))


# --- one trial -------------------------------------------------------------


@dataclass
class TrialResult:
    N: int
    M: int
    trial: int
    seed: int
    verdict: str
    incoherence_inf_norm: Optional[float] = None
    min_eigenvalue: Optional[float] = None
    selected_lambda: Optional[float] = None
    dual_inf_norm: Optional[float] = None
    tau_inf_norm: Optional[float] = None
    support: str = ""
    coefficients: str = ""
    reason: str = ""
    wall_time_seconds: float = 0.0

    @property
    def exact(self) -> bool:
        return self.verdict == dg.Verdict.EXACT.value


TRIAL_COLUMNS = [f.name for f in fields(TrialResult)]


def _deadline_check(deadline, stage):
    if deadline is not None and time.monotonic() > deadline:
        raise TrialTimeout(f"timeout after {stage}")


def run_trial(config: ExperimentConfig, N: int, trial_index: int) -> TrialResult:
    t0 = time.monotonic()
    deadline = None if config.timeout is None else t0 + config.timeout
    grid = config.grid_for(N)
    seed = trial_seed(config.base_seed, N, trial_index)
    res = TrialResult(N=N, M=grid.M, trial=trial_index, seed=seed, verdict=dg.Verdict.FAILURE.value)
    try:
        clean = clean_field(config, N)
        _deadline_check(deadline, "solve")
        data = add_noise(clean, config.sigma, seed)
        fields_ = smooth_all(data, config.P_max, config.plan)
        _deadline_check(deadline, "smoothing")
        F = normalize_columns(build_features(fields_))
        y = build_target(fields_)
        problem = LassoProblem(F, y)
        S = config.target_support
        res.incoherence_inf_norm = dg.incoherence_norm(F, S)
        res.min_eigenvalue = dg.min_eigenvalue(F, S)
        if config.ground_truth:
            gt = ground_truth(config, N)
            _, res.tau_inf_norm = dg.residual_tau(F, gt.F, y, gt.y, config.beta_star)
        _deadline_check(deadline, "features")
        path = lambda_path(problem, config.n_lambdas, config.ratio)
        path = refine_for_count(problem, path, len(S))
        fit = select_lambda_by_count(path, len(S))
        if fit is None:
            res.reason = "no lambda gives the target count"
        else:
            res.selected_lambda = fit.lam
            rec = signed_support(fit.beta_normalized, 1e-8)
            res.verdict = dg.evaluate_recovery(rec, config.truth).value
            res.support = " ".join(map(str, fit.support()))
            res.coefficients = " ".join(repr(float(fit.beta[j])) for j in fit.support())
            if set(fit.support()) <= set(S):
                res.dual_inf_norm = float(np.abs(dg.pdw_dual(problem, fit, S)).max(initial=0.0))
            if not fit.converged:
                res.reason = "coordinate descent did not converge"
    except Exception as e:  # noqa: BLE001 - every failure becomes a recorded verdict
        res.verdict = dg.Verdict.FAILURE.value
        res.reason = f"{type(e).__name__}: {e}"
        log.warning("trial N=%d #%d failed: %s", N, trial_index, res.reason)
    res.wall_time_seconds = time.monotonic() - t0
    return res


# --- aggregation -----------------------------------------------------------

QUARTILES = ("min", "q1", "median", "q3", "max")


def quartiles(values) -> list:
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return [math.nan] * 5
    return [float(q) for q in np.quantile(v, [0, 0.25, 0.5, 0.75, 1.0])]


def aggregate_columns() -> list[str]:
    cols = ["N", "M", "trials", "exact", "recovery_prob"]
    for name in ("dual", "incoherence", "tau"):
        cols += [f"{name}_{q}" for q in QUARTILES]
    return cols + ["incoherence_truth_raw", "incoherence_truth_normalized", "failures"]


def aggregate(results, truth: Optional[dict] = None) -> list[dict]:
    """One row per N; order-independent in ``results``."""
    truth = truth or {}
    by_N: dict = {}
    for r in results:
        by_N.setdefault(r.N, []).append(r)
    rows = []
    for N in sorted(by_N):
        rs = sorted(by_N[N], key=lambda r: r.trial)
        n_exact = sum(r.exact for r in rs)
        row = {"N": N, "M": rs[0].M, "trials": len(rs), "exact": n_exact, "recovery_prob": n_exact / len(rs)}
        for name, attr in (("dual", "dual_inf_norm"), ("incoherence", "incoherence_inf_norm"),
                           ("tau", "tau_inf_norm")):
            row.update(zip([f"{name}_{q}" for q in QUARTILES], quartiles(getattr(r, attr) for r in rs)))
        gt = truth.get(N)
        row["incoherence_truth_raw"] = gt[0] if gt else math.nan
        row["incoherence_truth_normalized"] = gt[1] if gt else math.nan
        row["failures"] = sum(r.verdict == dg.Verdict.FAILURE.value for r in rs)
        rows.append(row)
    return rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_trials(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for r in results:
            w.writerow([_cell(getattr(r, c)) for c in TRIAL_COLUMNS])


def read_trials(path) -> list[TrialResult]:
    out = []
    types = {f.name: f.type for f in fields(TrialResult)}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                if t == "int":
                    kw[k] = int(v)
                elif t in ("str",):
                    kw[k] = v
                elif "float" in t:
                    kw[k] = None if v == "" else float(v)
            out.append(TrialResult(**kw))
    return out


def write_aggregate(path, rows) -> None:
    cols = aggregate_columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([_cell(row[c]) for c in cols])


def write_gnuplot(path, rows) -> None:
    cols = aggregate_columns()
    with open(path, "w") as fh:
        fh.write("# " + " ".join(cols) + "\n")
        for row in rows:
            fh.write(" ".join(_cell(row[c]) for c in cols) + "\n")


# --- experiment ------------------------------------------------------------


def resolve_threads(threads: Optional[int] = None) -> int:
    env = os.environ.get("PDEID_THREADS")
    if env:
        try:
            threads = int(env)
        except ValueError as e:
            raise ConfigError(f"PDEID_THREADS must be an integer, got {env!r}") from e
    return max(1, int(threads or 1))


def _trial_job(args):
    return run_trial(*args)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list
    aggregate: list
    out_dir: Optional[Path] = None
    truth: dict = field(default_factory=dict)

    def row(self, N: int) -> dict:
        for r in self.aggregate:
            if r["N"] == N:
                return r
        raise KeyError(N)


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None, out_dir=None,
                   write: bool = True) -> ExperimentResult:
    """All trials for every N, with per-trial rows flushed to ``trials.csv`` as they finish."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    threads = resolve_threads(threads)
    jobs = [(config, N, k) for N in config.N_grid for k in range(config.trials)]
    results: list[TrialResult] = []
    truth = {}
    fh = writer = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "config.json")
        fh = open(out / "trials.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(TRIAL_COLUMNS)

    def record(r):
        results.append(r)
        if writer is not None:
            writer.writerow([_cell(getattr(r, c)) for c in TRIAL_COLUMNS])
            fh.flush()

    try:
        if threads == 1:
            for job in jobs:
                record(run_trial(*job))
        else:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for r in pool.map(_trial_job, jobs):
                    record(r)
        if config.ground_truth:
            for N in config.N_grid:
                try:
                    gt = ground_truth(config, N)
                    truth[N] = (gt.incoherence_raw, gt.incoherence_normalized)
                except Exception as e:  # noqa: BLE001
                    log.warning("ground truth unavailable at N=%d: %s", N, e)
    finally:
        if fh is not None:
            fh.close()
    results.sort(key=lambda r: (r.N, r.trial))
    rows = aggregate(results, truth)
    res = ExperimentResult(config, results, rows, out if write else None, truth)
    if write:
        write_trials(out / "trials.csv", results)
        write_aggregate(out / "aggregate.csv", rows)
        write_gnuplot(out / "aggregate.dat", rows)
        from .plots import emit_plot_data

        emit_plot_data({_series_name(config): rows}, out)
    return res


def _series_name(config: ExperimentConfig) -> str:
    return f"nu={config.nu:g}" if config.equation == "burgers" else "kdv"


def run_sweep(config: ExperimentConfig, nus, threads: Optional[int] = None, out_dir=None,
              write: bool = True) -> dict:
    """One experiment per viscosity; each gets its own sub-directory and aggregate file."""
    if config.equation != "burgers":
        raise ConfigError("viscosity sweeps only apply to burgers")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    runs = {}
    for nu in nus:
        cfg = replace(config, nu=float(nu))
        runs[_series_name(cfg)] = run_experiment(cfg, threads, out / f"nu_{nu:g}", write)
    if write:
        from .plots import emit_plot_data

        emit_plot_data({k: v.aggregate for k, v in runs.items()}, out)
    return runs
