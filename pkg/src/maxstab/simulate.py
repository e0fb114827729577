"""Threshold stopping, alternative spectral samplers and extremal-function simulation.

Threshold stopping draws pairs ``(U_k, V_k)`` and keeps the running maximum
``Z_k = max_{l <= k} U_l V_l`` until ``U_{k+1} tau <= min Z_k``. With the random
stream of a replicate held fixed, the ratio ``r_k = min Z_k / U_{k+1}`` is
strictly increasing in ``k``, so the stopping time for *any* threshold is

    T(tau) = 1 + #{k : r_k < tau}.

Calibration uses this: one pass over a set of replicates yields the whole
curve ``tau -> mean T(tau)`` (common random numbers), which is then inverted
exactly instead of by noisy bisection.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .exceptions import CalibrationError, ContractError, StoppingCapError
from .representation import Representation
from .sample import AUX, GAUSSIAN, SHIFT, PoissonArrivals, RngStream

__all__ = [
    "SpectralSampler",
    "ConstantSampler",
    "LogGaussianSampler",
    "RandomShiftSampler",
    "DiekerMikoschSampler",
    "random_shift_sampler",
    "dieker_mikosch_sampler",
    "StoppedField",
    "threshold_stopping",
    "stopping_ratios",
    "run_replicates",
    "estimate_expected_T",
    "calibrate_tau",
    "match_expected_T",
    "extremal_functions_simulate",
    "equispaced_subset",
]

logger = logging.getLogger(__name__)

STOPPING_CAP = 10**7
CANDIDATE_CAP = 10**5
TAU_BRACKET = (1e-6, 1e9)
_FIRST_BLOCK = 16
_MAX_BLOCK = 2048


class _Draws:
    """Lazily created per-replicate generators."""

    def __init__(self, stream: RngStream):
        self.stream = stream
        self._gens = {}

    def __getitem__(self, purpose: int) -> np.random.Generator:
        gen = self._gens.get(purpose)
        if gen is None:
            gen = self._gens[purpose] = self.stream.generator(purpose)
        return gen


class SpectralSampler:
    """Produces batches of spectral functions ``V`` on the grid.

    Subclasses implement :meth:`draw`. ``E V(x) = 1`` at every grid point and
    one call costs ``cost_unit`` Gaussian vectors per function.
    """

    cost_unit = 1
    name = "sampler"

    def __init__(self, n_points: int):
        self.n_points = int(n_points)

    def draw(self, draws: _Draws, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: RngStream, size: int) -> np.ndarray:
        """``size`` independent spectral functions from stream ``rng``."""
        return self.draw(_Draws(_as_stream(rng)), size)

    def __repr__(self):
        return f"{type(self).__name__}(n_points={self.n_points})"


class ConstantSampler(SpectralSampler):
    """Deterministic ``V == value`` (useful to trace the stopping rule by hand)."""

    name = "constant"

    def __init__(self, n_points: int, value: float = 1.0):
        super().__init__(n_points)
        self.value = float(value)

    def draw(self, draws, size):
        return np.full((size, self.n_points), self.value)


class LogGaussianSampler(SpectralSampler):
    """``V = exp(W - Var W / 2)`` for a factorized Gaussian representation."""

    def __init__(self, rep: Representation):
        super().__init__(rep.n_points)
        self.rep = rep
        self.name = rep.provenance
        self._lt = np.ascontiguousarray(rep.factor.T)
        self._half_var = 0.5 * np.diag(rep.covariance)

    def gaussian(self, draws, size):
        z = draws[GAUSSIAN].standard_normal((size, self.n_points))
        return z @ self._lt

    def draw(self, draws, size):
        return np.exp(self.gaussian(draws, size) - self._half_var)


class _ShiftedSampler(LogGaussianSampler):
    """Shared machinery: ``Y_S(x) = exp(W(x) - W(x_S) - gamma(x - x_S) / 2)``.

    For a process with stationary increments ``{W0(x - s)}_x`` and
    ``{W(x) - W(s)}_x`` have the same law (``W0(0) = 0``), so the shifted original
    spectral process is obtained from a draw of any representation on the grid
    itself, with no wrap-around or enlarged difference grid.
    """

    def __init__(self, base: Representation):
        super().__init__(base)
        self._gam = base.variogram.pairwise(base.grid.points)

    def shifted(self, draws, size):
        w = self.gaussian(draws, size)
        s = np.floor(draws[SHIFT].random(size) * self.n_points).astype(np.intp)
        s = np.minimum(s, self.n_points - 1)
        rows = np.arange(size)
        return np.exp(w - w[rows, s][:, None] - 0.5 * self._gam[s])


class RandomShiftSampler(_ShiftedSampler):
    """``V(x) = V_orig(x - S)`` with ``S`` uniform on the grid."""

    name = "random_shift"

    def draw(self, draws, size):
        return self.shifted(draws, size)


class DiekerMikoschSampler(_ShiftedSampler):
    """Sum-normalised shifted spectral functions ``N Y_S(x) / sum_j Y_S(x_j)``.

    Bounded by ``N`` and summing to ``N`` over the grid.
    """

    name = "dieker_mikosch"

    def draw(self, draws, size):
        y = self.shifted(draws, size)
        return self.n_points * y / y.sum(axis=1, keepdims=True)


def random_shift_sampler(base: Representation, rng=None) -> RandomShiftSampler:
    return RandomShiftSampler(base)


def dieker_mikosch_sampler(base: Representation, rng=None) -> DiekerMikoschSampler:
    return DiekerMikoschSampler(base)


def _as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(0 if rng is None else int(rng))


@dataclass(frozen=True)
class StoppedField:
    """Output of one threshold-stopping run: ``values = max_{k <= T} U_k V_k``."""

    values: np.ndarray
    T: int
    tau: float


class _Path:
    """The sequence ``(U_k, V_k)`` of one replicate, simulated block by block."""

    def __init__(self, sampler: SpectralSampler, stream: RngStream,
                 exponentials: Iterable[float] | None = None, first_block: int = _FIRST_BLOCK):
        self.sampler = sampler
        self.draws = _Draws(stream)
        self.arrivals = PoissonArrivals(stream, exponentials)
        self.u_next = self.arrivals.next()
        self.z = None
        self.k = 0
        self.block_size = max(1, int(first_block))

    def advance(self):
        """Simulate one block; returns running maxima and ratios for it."""
        size = self.block_size
        self.block_size = min(2 * size, _MAX_BLOCK)
        u = np.concatenate(([self.u_next], self.arrivals.take(size)))
        prod = u[:-1, None] * self.sampler.draw(self.draws, size)
        zrun = np.maximum.accumulate(prod, axis=0)
        if self.z is not None:
            np.maximum(zrun, self.z, out=zrun)
        ratio = zrun.min(axis=1) / u[1:]
        self.z = zrun[-1]
        self.u_next = float(u[-1])
        self.k += size
        return zrun, ratio


def _check_cap(k: int, cap: int):
    if k > cap:
        raise StoppingCapError(f"threshold stopping exceeded {cap} iterations; tau is likely miscalibrated")


def threshold_stopping(sampler: SpectralSampler, tau: float, rng=None, *,
                       exponentials: Iterable[float] | None = None,
                       cap: int = STOPPING_CAP, first_block: int = _FIRST_BLOCK) -> StoppedField:
    """Run the stopping rule ``T = min{k : U_{k+1} tau <= min_x Z_k(x)}`` once."""
    if not tau > 0:
        raise ContractError(f"tau must be positive, got {tau}")
    path = _Path(sampler, _as_stream(rng), exponentials, first_block)
    while True:
        start = path.k
        zrun, ratio = path.advance()
        hit = np.flatnonzero(ratio >= tau)
        if len(hit):
            j = int(hit[0])
            T = start + j + 1
            _check_cap(T, cap)
            return StoppedField(zrun[j].copy(), T, float(tau))
        _check_cap(path.k, cap)


def stopping_ratios(sampler: SpectralSampler, rng, tau_max: float, *,
                    cap: int = STOPPING_CAP, first_block: int = _FIRST_BLOCK) -> np.ndarray:
    """Ratios ``r_1 < r_2 < ...`` up to and including the first ``r_k >= tau_max``."""
    path = _Path(sampler, _as_stream(rng), None, first_block)
    r = _extend_ratios(path, np.empty(0), tau_max, cap)
    return r[:int(np.searchsorted(r, tau_max, side="left")) + 1]


def _extend_ratios(path: _Path, ratios: np.ndarray, tau_max: float, cap: int) -> np.ndarray:
    parts = [ratios]
    last = ratios[-1] if len(ratios) else -np.inf
    while last < tau_max:
        _, r = path.advance()
        parts.append(r)
        last = r[-1]
        if last < tau_max:
            _check_cap(path.k, cap)
    out = np.concatenate(parts)
    hit = int(np.searchsorted(out, tau_max, side="left"))
    _check_cap(hit + 1, cap)
    return out


def run_replicates(sampler: SpectralSampler, tau: float, rng, n_rep: int, *,
                   first_block: int = _FIRST_BLOCK, cap: int = STOPPING_CAP):
    """Independent stopped fields for replicates ``0..n_rep-1`` of a base stream.

    Returns ``(fields, T)`` with ``fields`` of shape ``(n_rep, N)``.
    """
    base = _as_stream(rng)
    fields = np.empty((n_rep, sampler.n_points))
    ts = np.empty(n_rep, dtype=np.int64)
    for i in range(n_rep):
        res = threshold_stopping(sampler, tau, base.child(i), first_block=first_block, cap=cap)
        fields[i] = res.values
        ts[i] = res.T
    return fields, ts


def estimate_expected_T(sampler: SpectralSampler, tau: float, n_rep: int, rng=None) -> tuple[float, float]:
    """Monte-Carlo mean of the stopping time and its standard error."""
    if n_rep < 2:
        raise ContractError("need at least two replicates")
    base = _as_stream(rng)
    ts = np.array([threshold_stopping(sampler, tau, base.child(i)).T for i in range(n_rep)], dtype=float)
    return float(ts.mean()), float(ts.std(ddof=1) / math.sqrt(n_rep))


class _RatioTable:
    """Ratio sequences of a growing set of replicates, extended on demand."""

    def __init__(self, sampler, base: RngStream, cap: int = STOPPING_CAP):
        self.sampler = sampler
        self.base = base
        self.cap = cap
        self.paths: list[_Path] = []
        self.ratios: list[np.ndarray] = []
        self.tau_max = 0.0

    def grow(self, n: int):
        for i in range(len(self.paths), n):
            self.paths.append(_Path(self.sampler, self.base.child(i)))
            self.ratios.append(np.empty(0))
            if self.tau_max > 0:
                self.ratios[i] = _extend_ratios(self.paths[i], self.ratios[i], self.tau_max, self.cap)

    def extend(self, tau_max: float):
        self.tau_max = max(self.tau_max, tau_max)
        for i, path in enumerate(self.paths):
            self.ratios[i] = _extend_ratios(path, self.ratios[i], self.tau_max, self.cap)

    def stopping_times(self, tau: float) -> np.ndarray:
        if tau > self.tau_max:
            raise ValueError("tau beyond the simulated range")
        return np.array([np.searchsorted(r, tau, side="left") + 1 for r in self.ratios], dtype=float)

    def invert(self, target: float) -> float:
        """Threshold whose in-sample mean stopping time is closest to ``target``."""
        n = len(self.ratios)
        pooled = np.sort(np.concatenate(self.ratios))
        pooled = pooled[pooled < self.tau_max]
        count = int(round(n * (target - 1.0)))
        if count <= 0:
            return float(max(min(self.tau_max, pooled[0] if len(pooled) else self.tau_max) / 2.0, TAU_BRACKET[0]))
        if count > len(pooled):
            raise ValueError("target beyond the simulated range")
        lo = pooled[count - 1]
        hi = pooled[count] if count < len(pooled) else self.tau_max
        return float(math.sqrt(lo * hi))


def _bracket(table: _RatioTable, target: float, start: float = 1.0):
    tau_max = max(start, table.tau_max)
    while True:
        try:
            table.extend(tau_max)
        except StoppingCapError as exc:
            raise CalibrationError(f"mean stopping time {target} not reachable: {exc}") from exc
        if table.stopping_times(tau_max).mean() >= target:
            return
        tau_max *= 4.0
        if tau_max > TAU_BRACKET[1]:
            raise CalibrationError(f"no tau in {TAU_BRACKET} reaches mean stopping time {target}")


def calibrate_tau(sampler: SpectralSampler, target_ET: float, rel_tol: float = 0.01, rng=None, *,
                  n_rep: int = 500, max_rep: int = 64000, cap: int = STOPPING_CAP) -> float:
    """Threshold whose expected stopping time is ``target_ET`` to within ``rel_tol``.

    Replicates are added (doubling) until two standard errors of the mean
    stopping time fall below ``rel_tol * target_ET`` or ``max_rep`` is reached.
    """
    if target_ET < 1:
        raise ContractError("target_ET must be at least 1")
    table = _RatioTable(sampler, _as_stream(rng), cap)
    n = max(2, int(n_rep))
    while True:
        table.grow(n)
        _bracket(table, target_ET)
        tau = table.invert(target_ET)
        ts = table.stopping_times(tau)
        mean, se = ts.mean(), ts.std(ddof=1) / math.sqrt(n)
        if abs(mean - target_ET) > rel_tol * target_ET:
            raise CalibrationError(f"could not match E[T]={target_ET} (got {mean:.4g})")
        if 2 * se <= rel_tol * target_ET:
            break
        if n >= max_rep:
            logger.warning("calibration stopped at %d replicates with se %.3g", n, se)
            break
        n = min(2 * n, max_rep)
    if not TAU_BRACKET[0] <= tau <= TAU_BRACKET[1]:
        raise CalibrationError(f"calibrated tau {tau} outside {TAU_BRACKET}")
    return tau


def match_expected_T(sampler: SpectralSampler, target_ET: float, rng, n_rep: int) -> float:
    """Threshold matching ``target_ET`` on exactly the replicates ``0..n_rep-1``.

    Running :func:`run_replicates` with the same stream and count afterwards
    reproduces a mean stopping time within ``1/n_rep`` of the target.
    """
    table = _RatioTable(sampler, _as_stream(rng))
    table.grow(n_rep)
    _bracket(table, target_ET)
    return table.invert(target_ET)


@dataclass(frozen=True)
class ExtremalField:
    values: np.ndarray
    n_draws: int


def extremal_functions_simulate(base: Representation, subset, rng=None, *,
                                cap: int = CANDIDATE_CAP) -> ExtremalField:
    """Exact simulation at the ``subset`` locations via extremal functions.

    For each location ``x_j`` in turn, candidate functions
    ``zeta * exp(W - W(x_j) - gamma(. - x_j)/2)`` are drawn with ``zeta`` running
    down a Poisson process of intensity ``zeta**-2``, until ``zeta`` falls below
    the current value at ``x_j``. A candidate is merged only if it stays below
    the current maximum at every previously processed location. Values at the
    other grid points are the maximum of the accepted functions.
    """
    subset = [int(i) for i in subset]
    n = base.n_points
    if not subset or len(set(subset)) != len(subset) or min(subset) < 0 or max(subset) >= n:
        raise ContractError("subset must be nonempty distinct grid indices")
    stream = _as_stream(rng)
    draws = _Draws(stream)
    lt = np.ascontiguousarray(base.factor.T)
    gam = base.variogram.pairwise(base.grid.points)
    z = np.zeros(n)
    buf = np.empty((0, n))
    pos = 0
    used = 0
    arr_gen = draws[AUX]
    for idx, j in enumerate(subset):
        prev = np.array(subset[:idx], dtype=np.intp)
        pa = PoissonArrivals(arr_gen)
        zeta = pa.next()
        count = 0
        while zeta > z[j]:
            if pos == len(buf):
                buf = draws[GAUSSIAN].standard_normal((64, n)) @ lt
                pos = 0
            w = buf[pos]
            pos += 1
            used += 1
            count += 1
            if count > cap:
                raise StoppingCapError(f"more than {cap} candidates at location {j}")
            f = zeta * np.exp(w - w[j] - 0.5 * gam[j])
            if idx == 0 or np.all(f[prev] < z[prev]):
                np.maximum(z, f, out=z)
            zeta = pa.next()
    return ExtremalField(z, used)


def equispaced_subset(grid, n: int) -> np.ndarray:
    """``n`` equispaced indices including both ends (per axis on tensor grids)."""
    if n < 1:
        raise ContractError("need at least one location")
    if grid.dim == 1:
        if n == 1:
            return np.array([grid.n_points // 2])
        return np.unique(np.rint(np.linspace(0, grid.n_points - 1, min(n, grid.n_points))).astype(int))
    shape = grid.shape
    m = max(1, int(round(n ** (1.0 / grid.dim))))
    per_axis = [np.unique(np.rint(np.linspace(0, c - 1, min(m, c))).astype(int)) if m > 1
                else np.array([c // 2]) for c in shape]
    mesh = np.meshgrid(*per_axis, indexing="ij")
    return np.ravel_multi_index([g.ravel() for g in mesh], shape)
