"""Gaussian representations of a variogram on a finite grid.

Every representation here is of the form ``W(x) = W0(x) - sum_k lambda_k W0(x_k)``
for a probability measure ``lambda`` on the grid (the K-stationary one being the
exception, built from its closed-form covariance). They all share the same
variogram; they differ in their variance profile, which is what drives the
accuracy of threshold stopping.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .domain import (
    VERTEX_ATOL,
    DiscreteMeasure,
    Grid,
    Hyperrectangle,
    bounding_box,
    dirac_measure,
    uniform_vertex_measure,
    vertices,
)
from .exceptions import ContractError, MaxstabError, NumericalError
from .variogram import Variogram, gneiting_constant

__all__ = [
    "Representation",
    "factorize",
    "covariance_from_measure",
    "original_representation",
    "lambda_modified_representation",
    "k_stationary_covariance",
    "optimized_representation",
    "max_variance",
    "stationary_candidate_measure",
    "critical_alpha",
    "solve_min_max_measure",
    "matheron_conditions",
    "ConjectureViolation",
]

logger = logging.getLogger(__name__)

PROVENANCES = ("original", "lambda_modified", "k_stationary", "optimized", "custom_measure")

JITTER_START = 1e-12
JITTER_MAX = 1e-6


class ConjectureViolation(MaxstabError):
    """The nonnegativity predicate fails even at the smallest probed alpha."""


@dataclass(frozen=True, eq=False)
class Representation:
    """Covariance of one Gaussian representation together with its factor.

    ``factor @ factor.T`` reproduces ``covariance + jitter_used * I`` on the rows
    with positive variance; rows of exactly zero variance are zero in ``factor``.
    """

    grid: Grid
    variogram: Variogram
    covariance: np.ndarray
    factor: np.ndarray
    provenance: str
    jitter_used: float = 0.0
    measure: DiscreteMeasure | None = None

    @property
    def variance_profile(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    @property
    def n_points(self) -> int:
        return self.grid.n_points


def factorize(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower-triangular ``L`` with ``L L^T = C + jitter I``.

    Jitter starts at ``1e-12 * trace(C)/N`` and grows tenfold up to
    ``1e-6 * trace(C)/N``. Rows whose variance is exactly zero (a pinned point)
    are left out so that the process stays exactly zero there.
    """
    cov = np.asarray(cov, dtype=float)
    n = len(cov)
    diag = np.diag(cov)
    live = diag > 0
    factor = np.zeros_like(cov)
    if not live.any():
        return factor, 0.0
    if np.any(np.abs(cov[~live]).max(axis=1, initial=0.0) > 0):
        raise NumericalError("zero-variance row with nonzero covariances: matrix is not PSD")
    sub = cov[np.ix_(live, live)]
    base = np.trace(sub) / n
    jitter = 0.0
    while True:
        try:
            lsub = np.linalg.cholesky(sub + jitter * np.eye(len(sub)) if jitter else sub)
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START * base if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * base * (1 + 1e-9):
                smallest = float(np.linalg.eigvalsh(sub)[0])
                raise NumericalError(
                    f"Cholesky failed up to jitter {JITTER_MAX:g}*trace/N; "
                    f"smallest eigenvalue estimate {smallest:.3e}"
                ) from None
    if jitter:
        logger.debug("factorized with jitter %.3e", jitter)
    factor[np.ix_(live, live)] = lsub
    return factor, float(jitter)


def _derive_provenance(grid: Grid, weights: np.ndarray) -> str:
    support = np.flatnonzero(weights > 0)
    origin = grid.origin_index()
    if len(support) == 1 and origin is not None and support[0] == origin:
        return "original"
    try:
        box = bounding_box(grid)
        target = uniform_vertex_measure(grid, box).weights
    except ContractError:
        return "custom_measure"
    if np.allclose(weights, target, rtol=0, atol=1e-12):
        return "lambda_modified"
    return "custom_measure"


def covariance_from_measure(v: Variogram, grid: Grid, lam: DiscreteMeasure,
                            _provenance: str | None = None) -> Representation:
    """Covariance of ``W0 - integral W0 d lambda``.

    ``2 C(x, y) = -g(x-y) + (G lam)(x) + (G lam)(y) - lam^T G lam`` with
    ``G = [gamma(x_i - x_j)]``. The provenance label follows from the measure.
    """
    if len(lam) != grid.n_points:
        raise ContractError("measure is not aligned with the grid")
    gam = v.pairwise(grid.points)
    w = lam.weights
    g = gam @ w
    q = float(w @ g)
    cov = 0.5 * (-gam + g[:, None] + g[None, :] - q)
    cov = 0.5 * (cov + cov.T)
    factor, jitter = factorize(cov)
    prov = _provenance or _derive_provenance(grid, w)
    return Representation(grid, v, cov, factor, prov, jitter, lam)


def original_representation(v: Variogram, grid: Grid) -> Representation:
    """Representation pinned at the origin, ``W0(0) = 0``."""
    origin = grid.origin_index()
    if origin is None:
        raise ContractError("the original representation needs the origin in the grid")
    return covariance_from_measure(v, grid, dirac_measure(grid, origin))


def lambda_modified_representation(v: Variogram, grid: Grid,
                                   hyperrect: Hyperrectangle | None = None) -> Representation:
    """Subtract the equally weighted average over the box vertices."""
    box = bounding_box(grid) if hyperrect is None else hyperrect
    return covariance_from_measure(v, grid, uniform_vertex_measure(grid, box))


def k_stationary_covariance(v: Variogram, grid: Grid, R: float | None = None) -> Representation:
    """``C(x, y) = (A R**alpha - ||x - y||**alpha) / (2 s**alpha)``.

    ``R`` defaults to the radius of the smallest centred ball containing the grid.
    """
    if not v.isotropic:
        raise ContractError("the K-stationary construction needs an isotropic variogram")
    r_min = grid.enclosing_radius()
    R = r_min if R is None else float(R)
    if R < r_min - 1e-12:
        raise ContractError(f"radius {R} does not cover the grid (needs >= {r_min})")
    a = 0.5 * gneiting_constant(v.alpha, grid.dim) * (R / v.scale) ** v.alpha
    cov = a - 0.5 * v.pairwise(grid.points)
    factor, jitter = factorize(cov)
    return Representation(grid, v, cov, factor, "k_stationary", jitter, None)


def max_variance(rep: Representation) -> tuple[float, int]:
    prof = np.diag(rep.covariance)
    i = int(np.argmax(prof))
    return float(prof[i]), i


@dataclass(frozen=True)
class CandidateResult:
    """Outcome of solving ``G w = e``.

    ``measure`` is the normalized solution when it is nonnegative, else ``None``.
    """

    weights: np.ndarray
    nonnegative: bool
    condition: float
    measure: DiscreteMeasure | None


def stationary_candidate_measure(v: Variogram, grid: Grid) -> CandidateResult:
    """Solve ``G w = e`` and normalise ``w`` when it is nonnegative."""
    if grid.n_points < 2:
        raise ContractError("need at least two grid points")
    gam = v.pairwise(grid.points)
    cond = float(np.linalg.cond(gam))
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"variogram matrix is singular (condition {cond:.3e})")
    w = np.linalg.solve(gam, np.ones(grid.n_points))
    ok = bool(np.all(w >= -1e-10))
    measure = None
    if ok:
        w_clip = np.clip(w, 0.0, None)
        measure = DiscreteMeasure(w_clip / w_clip.sum())
    return CandidateResult(w, ok, cond, measure)


def _candidate_nonnegative(points: np.ndarray, alpha: float) -> bool:
    diff = points[:, None, :] - points[None, :, :]
    gam = np.power(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), alpha)
    w = np.linalg.solve(gam, np.ones(len(points)))
    return bool(np.all(w >= -1e-10))


def critical_alpha(grid: Grid, tol: float = 1e-6, alpha_min: float = 1e-3) -> float:
    """Largest ``alpha`` in (0, 1] with ``G_alpha^{-1} e >= 0``, by bisection.

    The bisection assumes the predicate holds on an initial interval and fails
    beyond it. One-dimensional grids return 1 without probing.
    """
    if tol < 1e-6:
        raise ContractError("tol must be at least 1e-6")
    if grid.n_points < 2:
        raise ContractError("need at least two grid points")
    if grid.dim == 1:
        return 1.0
    pts = grid.points
    if _candidate_nonnegative(pts, 1.0):
        return 1.0
    if not _candidate_nonnegative(pts, alpha_min):
        raise ConjectureViolation(
            f"G^-1 e has negative entries already at alpha={alpha_min} on grid '{grid.label}'"
        )
    lo, hi = alpha_min, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _candidate_nonnegative(pts, mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class MinMaxResult:
    measure: DiscreteMeasure
    max_variance: float
    gap: float
    n_iter: int


def _minmax_objective(gam: np.ndarray, w: np.ndarray) -> float:
    g = gam @ w
    return float(g.max() - 0.5 * (w @ g))


def solve_min_max_measure(v: Variogram, grid: Grid, tol: float = 1e-10,
                          max_iter: int = 200_000, polish_every: int = 25) -> MinMaxResult:
    """Probability measure minimising the maximal variance on the grid.

    The objective ``max_i (G lam)_i - lam^T G lam / 2`` is bounded below by
    ``mu^T G mu / 2`` for every probability vector ``mu``, and the two meet at
    the maximiser of the concave quadratic ``lam^T G lam`` over the simplex. We
    maximise that quadratic with pairwise Frank-Wolfe steps (exact line search)
    and periodically polish on the current support by solving the equality
    constrained problem directly. ``gap = max_i (G lam)_i - lam^T G lam``
    bounds the suboptimality of the returned objective.
    """
    if grid.n_points < 2:
        raise ContractError("need at least two grid points")
    if tol < 1e-12:
        raise ContractError("tol must be at least 1e-12")
    gam = v.pairwise(grid.points)
    n = len(gam)
    w = np.full(n, 1.0 / n)
    g = gam @ w
    q = float(w @ g)
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        s = int(np.argmax(g))
        gap = float(g[s] - q)
        if gap <= tol:
            break
        supp = np.flatnonzero(w > 0)
        a = int(supp[np.argmin(g[supp])])
        denom = 2.0 * gam[s, a]
        step = (g[s] - g[a]) / denom if denom > 0 else w[a]
        step = min(step, w[a])
        w[s] += step
        w[a] -= step
        if w[a] < 1e-15:
            w[a] = 0.0
        g += step * (gam[:, s] - gam[:, a])
        if it % polish_every == 0:
            w, g = _polish(gam, w, g)
        q = float(w @ g)
    else:
        best = DiscreteMeasure(w / w.sum())
        raise NumericalError(
            f"min-max solver did not converge in {max_iter} iterations "
            f"(duality gap {gap:.3e}); best objective {_minmax_objective(gam, best.weights):.12g}"
        )
    w = np.clip(w, 0.0, None)
    measure = DiscreteMeasure(w / w.sum())
    return MinMaxResult(measure, _minmax_objective(gam, measure.weights), gap, it)


def _polish(gam, w, g):
    """Exact maximiser on the current support, accepted only if feasible and better."""
    supp = np.flatnonzero(w > 0)
    if len(supp) < 2:
        return w, g
    sub = gam[np.ix_(supp, supp)]
    try:
        y = np.linalg.solve(sub, np.ones(len(supp)))
    except np.linalg.LinAlgError:
        return w, g
    if not np.all(y > 0):
        return w, g
    cand = np.zeros_like(w)
    cand[supp] = y / y.sum()
    gc = gam @ cand
    if cand @ gc >= w @ g:
        return cand, gc
    return w, g


def optimized_representation(v: Variogram, grid: Grid, tol: float = 1e-10) -> Representation:
    res = solve_min_max_measure(v, grid, tol=tol)
    return covariance_from_measure(v, grid, res.measure, _provenance="optimized")


@dataclass(frozen=True)
class MatheronReport:
    mass_off_vertices: float
    max_excess: float
    holds: bool


def matheron_conditions(v: Variogram, grid: Grid, hyperrect: Hyperrectangle,
                        lam: DiscreteMeasure, tol: float = 1e-10) -> MatheronReport:
    """Support on the box vertices and ``int gamma(x - .) d lam <= int int gamma d lam d lam`` there."""
    if len(lam) != grid.n_points:
        raise ContractError("measure is not aligned with the grid")
    vidx = []
    for _, vert in vertices(hyperrect):
        idx = grid.index_of(vert, atol=VERTEX_ATOL)
        if idx is None:
            raise ContractError(f"vertex {tuple(vert)} is not a grid point")
        vidx.append(idx)
    w = lam.weights
    off = np.ones(grid.n_points, dtype=bool)
    off[vidx] = False
    mass_off = float(w[off].sum())
    gam = v.pairwise(grid.points)
    g = gam @ w
    excess = float(np.max(g[vidx]) - w @ g)
    return MatheronReport(mass_off, excess, mass_off <= tol and excess <= tol)
