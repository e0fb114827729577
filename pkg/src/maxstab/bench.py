"""Error-probability estimation, scenario configuration and benchmark tables.

The error probability of a stopped field is

    P = 1 - E exp(-E_V (max_x V(x)/Z(x) - max_x tau/Z(x))_+),

estimated by plugging in a pool of stopped fields ``Z`` and an independent pool
of spectral functions ``V`` from the same sampler. Only spectral functions with
``max V > tau`` can contribute (``max V/Z <= max V / min Z``), which keeps the
``n_Z * n_V`` reduction cheap at realistic thresholds.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .domain import Grid, Hyperrectangle, regular_grid
from .exceptions import CalibrationError, ContractError
from .representation import (
    Representation,
    k_stationary_covariance,
    lambda_modified_representation,
    optimized_representation,
    original_representation,
)
from .sample import AUX, RngStream
from .simulate import (
    DiekerMikoschSampler,
    LogGaussianSampler,
    RandomShiftSampler,
    SpectralSampler,
    equispaced_subset,
    extremal_functions_simulate,
    match_expected_T,
    run_replicates,
    threshold_stopping,
)
from .variogram import Variogram, scale_for_box_variance

__all__ = [
    "ALGORITHMS",
    "Scenario",
    "AlgorithmResult",
    "error_probability",
    "load_scenarios",
    "build_representation",
    "run_scenario",
    "write_results_csv",
    "variance_profile_export",
    "empirical_variogram",
    "frechet_ks_test",
    "tail_exceedance",
    "run_config",
]

logger = logging.getLogger(__name__)

GAUSSIAN_TAGS = {"original", "lambda", "kstat", "optimized"}
ALGORITHMS = ("original", "lambda", "kstat", "optimized", "random_shift", "dieker_mikosch", "extremal_functions")
RESULT_COLUMNS = ["scenario_id", "algorithm", "tau", "ET_mean", "ET_se", "Phat", "Phat_se", "seconds_per_rep"]
TAIL_LEVELS = (5.0, 10.0, 20.0)

# stream ids (second key component) used by a scenario
_FIELDS, _POOL, _BOOT, _EXTREMAL = 0, 1, 2, 3


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


# ---------------------------------------------------------------------------
# error probability


def _pool_excess(inv_z: np.ndarray, pool: np.ndarray, offset: np.ndarray, chunk: int,
                 n_v_total: int) -> np.ndarray:
    """``sum_j (max_x pool[j] * inv_z[i] - offset[i])_+ / n_v_total`` for every row ``i``."""
    out = np.zeros(len(inv_z))
    if pool.size == 0:
        return out
    for start in range(0, len(inv_z), chunk):
        blk = inv_z[start:start + chunk]
        m = (blk[:, None, :] * pool[None, :, :]).max(axis=2)
        out[start:start + chunk] = np.maximum(m - offset[start:start + chunk, None], 0.0).sum(axis=1)
    return out / n_v_total


def error_probability(stopped, pool, tau: float | None, exact_subset=None, *,
                      n_boot: int = 200, rng=None, chunk: int | None = None) -> tuple[float, float]:
    """Plug-in estimate of the error probability and its bootstrap standard error.

    Parameters
    ----------
    stopped : array of shape (n_Z, N) or sequence of fields
        Simulated fields (strictly positive).
    pool : array of shape (n_V, N)
        Independent spectral functions from the sampler that produced ``stopped``.
    tau : float
        Threshold used for ``stopped`` (ignored when ``exact_subset`` is given).
    exact_subset : sequence of int, optional
        For fields that are exact on a subset ``S`` of locations (extremal
        functions): the subtracted term becomes ``max_{x in S} V(x)/Z(x)``.
    """
    z = np.array([getattr(s, "values", s) for s in stopped], dtype=float) if not isinstance(stopped, np.ndarray) \
        else np.asarray(stopped, dtype=float)
    v = np.asarray(pool, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if v.ndim == 1:
        v = v[:, None]
    if len(z) == 0 or len(v) == 0:
        raise ContractError("both the field pool and the spectral pool must be nonempty")
    if z.shape[1] != v.shape[1]:
        raise ContractError("fields and spectral functions live on different grids")
    if np.any(z <= 0):
        raise ContractError("fields must be strictly positive")
    inv_z = 1.0 / z
    if chunk is None:
        chunk = max(1, int(4_000_000 // max(1, len(v) * z.shape[1])))
    if exact_subset is None:
        if not tau > 0:
            raise ContractError("tau must be positive")
        keep = v[v.max(axis=1) > tau]
        excess = _pool_excess(inv_z, keep, tau * inv_z.max(axis=1), chunk, len(v))
    else:
        s = np.asarray(exact_subset, dtype=np.intp)
        excess = np.zeros(len(z))
        for start in range(0, len(z), chunk):
            blk = inv_z[start:start + chunk]
            prod = blk[:, None, :] * v[None, :, :]
            diff = prod.max(axis=2) - prod[:, :, s].max(axis=2)
            excess[start:start + chunk] = np.maximum(diff, 0.0).mean(axis=1)
    terms = np.exp(-excess)
    est = float(1.0 - terms.mean())
    gen = (rng if isinstance(rng, RngStream) else RngStream(0 if rng is None else int(rng))).generator(AUX)
    if n_boot > 0 and len(terms) > 1:
        idx = np.floor(gen.random((n_boot, len(terms))) * len(terms)).astype(np.intp)
        boot = 1.0 - terms[idx].mean(axis=1)
        se = float(boot.std(ddof=1))
    else:
        se = 0.0
    return min(max(est, 0.0), 1.0), se


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    """One benchmark scenario; mirrors the JSON configuration keys."""

    id: str
    alpha: float
    sigma2K: float | None = None
    scale: float | None = None
    dim: int = 1
    counts: list[int] = field(default_factory=lambda: [101])
    half_widths: list[float] | None = None
    algorithms: list[str] = field(default_factory=lambda: ["original", "lambda", "kstat"])
    anchor: str = "lambda"
    tau: float | None = None
    target_ET: float | None = None
    target_error: float = 0.1
    target_error_tol: float = 0.01
    n_Z: int = 5000
    n_V: int = 2000
    n_boot: int = 200
    seed: int = 1
    table: str = "results"
    export_profiles: bool = False
    tail_diagnostic: bool = False
    record_timing: bool = False

    def __post_init__(self):
        if not self.algorithms:
            raise ContractError("a scenario needs at least one algorithm")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ContractError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if self.anchor not in self.algorithms:
            if len(self.algorithms) == 1:
                self.anchor = self.algorithms[0]
            else:
                raise ContractError(f"anchor {self.anchor!r} is not among the algorithms")
        if self.anchor == "extremal_functions":
            raise ContractError("extremal functions cannot serve as the anchor")
        if self.n_Z < 100 or self.n_V < 100:
            raise ContractError("n_Z and n_V must be at least 100")
        if (self.sigma2K is None) == (self.scale is None):
            raise ContractError("give exactly one of sigma2K and scale")
        self.counts = [int(c) for c in np.broadcast_to(np.atleast_1d(self.counts), (self.dim,))]
        if self.half_widths is None:
            self.half_widths = [1.0] * self.dim
        if len(self.half_widths) != self.dim:
            raise ContractError("half_widths must have one entry per dimension")
        if self.tau is not None and self.target_ET is not None:
            raise ContractError("give at most one of tau and target_ET")

    @property
    def variogram(self) -> Variogram:
        if self.scale is not None:
            return Variogram(self.alpha, self.scale)
        return Variogram(self.alpha, scale_for_box_variance(self.alpha, self.sigma2K, self.half_widths))

    @property
    def grid(self) -> Grid:
        return regular_grid(Hyperrectangle(tuple(self.half_widths)), self.counts)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ContractError(f"unknown scenario keys: {unknown}")
        if "id" not in d or "alpha" not in d:
            raise ContractError("scenario needs 'id' and 'alpha'")
        return cls(**d)


def load_scenarios(path) -> list[Scenario]:
    """Read ``{"scenarios": [...]}`` (or a single scenario object) from JSON."""
    with Path(path).open() as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and "scenarios" in doc:
        extra = sorted(set(doc) - {"scenarios"})
        if extra:
            raise ContractError(f"unknown top-level keys: {extra}")
        items = doc["scenarios"]
    elif isinstance(doc, dict):
        items = [doc]
    else:
        items = doc
    if not isinstance(items, list) or not items:
        raise ContractError("configuration contains no scenarios")
    out = [Scenario.from_dict(dict(it)) for it in items]
    ids = [s.id for s in out]
    if len(set(ids)) != len(ids):
        raise ContractError("scenario ids must be unique")
    return out


def build_representation(tag: str, v: Variogram, grid: Grid) -> Representation:
    """Gaussian representation for one of ``original | lambda | kstat | optimized``."""
    if tag == "original":
        return original_representation(v, grid)
    if tag == "lambda":
        return lambda_modified_representation(v, grid)
    if tag == "kstat":
        return k_stationary_covariance(v, grid)
    if tag == "optimized":
        return optimized_representation(v, grid)
    raise ContractError(f"unknown representation tag {tag!r}")


def _sampler(tag: str, v: Variogram, grid: Grid, cache: dict) -> SpectralSampler:
    def rep(t):
        if t not in cache:
            cache[t] = build_representation(t, v, grid)
        return cache[t]

    if tag in GAUSSIAN_TAGS:
        return LogGaussianSampler(rep(tag))
    if tag == "random_shift":
        return RandomShiftSampler(rep("original"))
    if tag == "dieker_mikosch":
        return DiekerMikoschSampler(rep("original"))
    raise ContractError(f"no threshold sampler for {tag!r}")


# ---------------------------------------------------------------------------
# running


@dataclass
class AlgorithmResult:
    scenario_id: str
    algorithm: str
    tau: float
    ET_mean: float
    ET_se: float
    Phat: float
    Phat_se: float
    seconds_per_rep: float

    def row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in RESULT_COLUMNS]


def _replicates(sampler, tau, stream, n, threads: int):
    if threads <= 1:
        return run_replicates(sampler, tau, stream, n)
    bounds = np.linspace(0, n, threads + 1).astype(int)

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        f = np.empty((hi - lo, sampler.n_points))
        t = np.empty(hi - lo, dtype=np.int64)
        for i in range(lo, hi):
            res = threshold_stopping(sampler, tau, stream.child(i))
            f[i - lo], t[i - lo] = res.values, res.T
        return f, t

    with ThreadPoolExecutor(threads) as ex:
        parts = list(ex.map(work, range(threads)))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _calibrate_anchor(sampler, pool, sc: Scenario, streams, threads):
    """Bisection on ``log tau`` until the anchor's error estimate hits the target."""
    cache = {}

    def phat(tau):
        if tau not in cache:
            f, t = _replicates(sampler, tau, streams[_FIELDS], sc.n_Z, threads)
            p, se = error_probability(f, pool, tau, n_boot=0)
            cache[tau] = (p, f, t)
            logger.info("anchor tau=%.6g  Phat=%.4f  ET=%.2f", tau, p, t.mean())
        return cache[tau][0]

    target, tol = sc.target_error, sc.target_error_tol
    lo, hi = 1.0, 1.0
    while phat(lo) < target:
        lo /= 4.0
        if lo < 1e-6:
            raise CalibrationError("anchor error stays below target for all tau >= 1e-6")
    while phat(hi) > target:
        hi *= 4.0
        if hi > 1e9:
            raise CalibrationError("anchor error stays above target for all tau <= 1e9")
    best = min((lo, hi), key=lambda t: abs(phat(t) - target))
    for _ in range(40):
        if abs(phat(best) - target) <= tol / 4:
            break
        mid = math.sqrt(lo * hi)
        if phat(mid) > target:
            lo = mid
        else:
            hi = mid
        best = min((best, mid), key=lambda t: abs(phat(t) - target))
        if hi / lo < 1 + 1e-9:
            break
    if abs(phat(best) - target) > tol:
        raise CalibrationError(f"anchor error {phat(best):.4f} not within {tol} of {target}")
    return best, cache[best][1], cache[best][2]


def run_scenario(sc: Scenario, *, threads: int = 1, out_dir=None) -> list[AlgorithmResult]:
    """Calibrate the anchor, match every other algorithm's cost and estimate errors.

    All algorithms share the random streams of the scenario (common random numbers).
    """
    v, grid = sc.variogram, sc.grid
    root = RngStream(sc.seed)
    streams = {k: root.child(k) for k in (_FIELDS, _POOL, _BOOT, _EXTREMAL)}
    cache: dict = {}
    results: list[AlgorithmResult] = []

    def timed(fn):
        t0 = time.perf_counter()
        out = fn()
        return out, time.perf_counter() - t0

    def pool_for(tag):
        sampler = _sampler(tag, v, grid, cache)
        return sampler, sampler.sample(streams[_POOL], sc.n_V)

    def record(tag, tau, f, t, secs, subset=None, pool=None):
        p, se = error_probability(f, pool, tau, exact_subset=subset, n_boot=sc.n_boot, rng=streams[_BOOT])
        res = AlgorithmResult(sc.id, tag, float("nan") if tau is None else float(tau), float(t.mean()),
                              float(t.std(ddof=1) / math.sqrt(len(t))), p, se,
                              secs / len(t) if sc.record_timing else float("nan"))
        results.append(res)
        logger.info("%s %-18s tau=%-10.5g ET=%.2f Phat=%.4f (%.4f)", sc.id, tag, res.tau, res.ET_mean, p, se)

    try:
        anchor_sampler, anchor_pool = pool_for(sc.anchor)
        if sc.tau is not None:
            tau_a = sc.tau
            (f_a, t_a), secs = timed(lambda: _replicates(anchor_sampler, tau_a, streams[_FIELDS], sc.n_Z, threads))
        elif sc.target_ET is not None:
            tau_a = match_expected_T(anchor_sampler, sc.target_ET, streams[_FIELDS], sc.n_Z)
            (f_a, t_a), secs = timed(lambda: _replicates(anchor_sampler, tau_a, streams[_FIELDS], sc.n_Z, threads))
        else:
            tau_a, f_a, t_a = _calibrate_anchor(anchor_sampler, anchor_pool, sc, streams, threads)
            (f_a, t_a), secs = timed(lambda: _replicates(anchor_sampler, tau_a, streams[_FIELDS], sc.n_Z, threads))
        target = float(t_a.mean())
        by_tag = {sc.anchor: (tau_a, f_a, t_a, secs, None, anchor_pool)}

        for tag in sc.algorithms:
            if tag == sc.anchor:
                continue
            if tag == "extremal_functions":
                base = build_representation("original", v, grid) if "original" not in cache else cache["original"]
                subset = equispaced_subset(grid, max(1, int(round(target))))
                t0 = time.perf_counter()
                f = np.empty((sc.n_Z, grid.n_points))
                t = np.empty(sc.n_Z, dtype=np.int64)
                for i in range(sc.n_Z):
                    res = extremal_functions_simulate(base, subset, streams[_EXTREMAL].child(i))
                    f[i], t[i] = res.values, res.n_draws
                secs = time.perf_counter() - t0
                pool = LogGaussianSampler(base).sample(streams[_POOL], sc.n_V)
                by_tag[tag] = (None, f, t, secs, subset, pool)
                continue
            sampler, pool = pool_for(tag)
            tau = match_expected_T(sampler, target, streams[_FIELDS], sc.n_Z)
            (f, t), secs = timed(lambda: _replicates(sampler, tau, streams[_FIELDS], sc.n_Z, threads))
            by_tag[tag] = (tau, f, t, secs, None, pool)

        for tag in sc.algorithms:
            tau, f, t, secs, subset, pool = by_tag[tag]
            record(tag, tau, f, t, secs, subset, pool)

        if out_dir is not None:
            out_dir = Path(out_dir)
            if sc.export_profiles:
                for tag in sc.algorithms:
                    if tag in GAUSSIAN_TAGS:
                        variance_profile_export(cache[tag], out_dir / f"profile_{sc.id}_{tag}.csv")
            if sc.tail_diagnostic:
                pools = {tag: by_tag[tag][5] for tag in sc.algorithms}
                tail_exceedance(sc.id, pools, out_dir / f"tail_{sc.id}.csv")
    except Exception as exc:
        exc.partial_results = results  # type: ignore[attr-defined]
        raise
    return results


def write_results_csv(results: Sequence[AlgorithmResult], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            w.writerow(r.row())


def run_config(config, out_dir, *, seed: int | None = None, threads: int = 1) -> dict[str, list[AlgorithmResult]]:
    """Run every scenario of a configuration and write one CSV per table.

    On failure the rows finished so far are written together with a
    ``<table>.FAILED`` marker file holding the error message, then the error
    is re-raised.
    """
    scenarios = load_scenarios(config) if not isinstance(config, list) else config
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables: dict[str, list[AlgorithmResult]] = {}
    for sc in scenarios:
        if seed is not None:
            sc.seed = int(seed)
        rows = tables.setdefault(sc.table, [])
        try:
            rows.extend(run_scenario(sc, threads=threads, out_dir=out_dir))
        except Exception as exc:
            rows.extend(getattr(exc, "partial_results", []))
            write_results_csv(rows, out_dir / f"{sc.table}.csv")
            (out_dir / f"{sc.table}.FAILED").write_text(f"scenario {sc.id}: {type(exc).__name__}: {exc}\n")
            raise
        write_results_csv(rows, out_dir / f"{sc.table}.csv")
    return tables


# ---------------------------------------------------------------------------
# diagnostics


def variance_profile_export(rep: Representation, path) -> Path:
    """CSV with the grid coordinates and the pointwise variance of ``rep``."""
    path = Path(path)
    prof = np.diag(rep.covariance)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(rep.grid.dim)] + ["sigma2"])
        for p, s in zip(rep.grid.points, prof):
            w.writerow([_fmt(c) for c in p] + [_fmt(s)])
    return path


def empirical_variogram(draws, grid: Grid | None = None, pairs=None):
    """Half mean squared increments per pair with Monte-Carlo standard errors.

    Returns ``(pairs, estimate, se)``; ``pairs`` defaults to all ``i < j``.
    """
    w = np.asarray(draws, dtype=float)
    if w.ndim != 2 or len(w) < 1000:
        raise ContractError("need a (draws, N) matrix with at least 1000 draws")
    n = w.shape[1]
    if pairs is None:
        i, j = np.triu_indices(n, 1)
    else:
        pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
        i, j = pairs[:, 0], pairs[:, 1]
    sq = 0.5 * (w[:, i] - w[:, j]) ** 2
    est = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(len(w))
    return np.stack([i, j], axis=1), est, se


def frechet_ks_test(samples, index: int | None = None) -> tuple[float, float]:
    """One-sample KS test against the standard Fréchet law ``exp(-1/z)``."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 2:
        if index is None:
            raise ContractError("give the grid index for a sample matrix")
        x = x[:, index]
    x = x.ravel()
    if len(x) < 1000:
        raise ContractError("need at least 1000 samples")
    if np.any(~(x > 0)):
        raise ContractError("Fréchet samples must be strictly positive")
    res = stats.kstest(x, lambda z: np.exp(-1.0 / z))
    return float(res.statistic), float(res.pvalue)


def tail_exceedance(scenario_id: str, pools: dict, path=None, levels=TAIL_LEVELS):
    """Empirical ``P(max_x V(x) > u)`` per algorithm and its ratio to ``original``.

    Diagnostic only: smaller maximal variance should give lighter tails.
    """
    rows = []
    ref = pools.get("original")
    for tag, pool in pools.items():
        m = np.asarray(pool).max(axis=1)
        for u in levels:
            p = float(np.mean(m > u))
            ratio = float("nan")
            if ref is not None:
                pr = float(np.mean(np.asarray(ref).max(axis=1) > u))
                ratio = p / pr if pr > 0 else float("nan")
            rows.append((scenario_id, tag, u, p, ratio))
    if path is not None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario_id", "algorithm", "u", "exceedance", "ratio_to_original"])
            for r in rows:
                w.writerow([_fmt(c) for c in r])
    return rows
