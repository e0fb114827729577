"""Fractional (power) variograms and the Bernstein-function toolkit around them.

The only parametric family supported is

    gamma(h) = || M h / s || ** alpha,    0 < alpha < 2,

written as ``gamma(h) = psi(||M h||**2)`` with ``psi(t) = (sqrt(t) / s) ** alpha``.
Gamma-function values come from :func:`math.gamma`, which is accurate to a few
ulps for the positive real arguments used here (well inside 1e-12 relative).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .exceptions import ContractError

__all__ = [
    "Variogram",
    "eval_variogram",
    "alternating_difference",
    "check_n_alternating",
    "check_negative_definite",
    "gneiting_constant",
    "scale_for_target_variance",
    "scale_for_box_variance",
]

DEFAULT_SEED = 20190101


@dataclass(frozen=True, eq=False)
class Variogram:
    """Power variogram ``||M h / s||**alpha``.

    Parameters
    ----------
    alpha : float
        Smoothness exponent in (0, 2).
    scale : float
        Length scale ``s > 0``.
    anisotropy : array-like of shape (d, d), optional
        Invertible symmetric matrix ``M``. ``None`` means the identity in
        whatever dimension the displacements have.
    """

    alpha: float
    scale: float = 1.0
    anisotropy: np.ndarray | None = None

    def __post_init__(self):
        alpha = float(self.alpha)
        scale = float(self.scale)
        if not (0.0 < alpha < 2.0):
            raise ContractError(f"alpha must lie in (0, 2), got {alpha}")
        if not (scale > 0.0 and math.isfinite(scale)):
            raise ContractError(f"scale must be positive and finite, got {scale}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "scale", scale)
        if self.anisotropy is not None:
            m = np.array(self.anisotropy, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ContractError("anisotropy must be a square matrix")
            if not np.allclose(m, m.T, rtol=0, atol=1e-12):
                raise ContractError("anisotropy must be symmetric")
            if abs(np.linalg.det(m)) <= 1e-12:
                raise ContractError("anisotropy must be invertible")
            m.setflags(write=False)
            object.__setattr__(self, "anisotropy", m)

    @property
    def isotropic(self) -> bool:
        if self.anisotropy is None:
            return True
        return bool(np.array_equal(self.anisotropy, np.eye(len(self.anisotropy))))

    def _transform(self, h: np.ndarray) -> np.ndarray:
        if self.anisotropy is None:
            return h
        if h.shape[-1] != self.anisotropy.shape[0]:
            raise ContractError(
                f"displacement dimension {h.shape[-1]} does not match "
                f"anisotropy dimension {self.anisotropy.shape[0]}"
            )
        return h @ self.anisotropy.T

    def __call__(self, h) -> np.ndarray:
        """Evaluate on displacements of shape ``(..., d)``; scalars count as d = 1."""
        h = np.asarray(h, dtype=float)
        if h.ndim == 0:
            h = h.reshape(1)
        if not np.all(np.isfinite(h)):
            raise ContractError("displacements must be finite")
        r = np.linalg.norm(self._transform(h), axis=-1)
        return self.from_norm(r)

    def from_norm(self, r) -> np.ndarray:
        """``(r / s)**alpha`` for already-transformed norms ``r >= 0``."""
        return np.power(np.asarray(r, dtype=float) / self.scale, self.alpha)

    def psi(self, t) -> np.ndarray:
        """Bernstein function with ``gamma(h) = psi(||M h||**2)``."""
        return np.power(np.sqrt(np.asarray(t, dtype=float)) / self.scale, self.alpha)

    def pairwise(self, x, y=None) -> np.ndarray:
        """Matrix ``gamma(x_i - y_j)`` for point arrays of shape (n, d) and (m, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = x if y is None else np.atleast_2d(np.asarray(y, dtype=float))
        xt, yt = self._transform(x), self._transform(y)
        diff = xt[:, None, :] - yt[None, :, :]
        out = self.from_norm(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)))
        if y is x:
            # exact symmetry and zero diagonal regardless of rounding
            out = np.triu(out, 1)
            out = out + out.T
        return out


def eval_variogram(v: Variogram, h) -> float:
    """Value of ``v`` at a single displacement ``h``."""
    return float(v(np.atleast_1d(np.asarray(h, dtype=float))))


def alternating_difference(psi: Callable[[float], float], s: float, shifts: Sequence[float]) -> float:
    """Iterated difference ``sum_A (-1)**|A| psi(s + sum_{i in A} s_i)``.

    The sum runs over all ``2**n`` subsets ``A`` of the shift indices.
    """
    shifts = [float(x) for x in shifts]
    if len(shifts) < 1:
        raise ContractError("at least one shift is required")
    if s < 0 or any(x < 0 for x in shifts):
        raise ContractError("base point and shifts must be nonnegative")
    total = 0.0
    n = len(shifts)
    for k in range(n + 1):
        sign = -1.0 if k % 2 else 1.0
        for subset in combinations(shifts, k):
            total += sign * float(psi(s + sum(subset)))
    return total


def check_n_alternating(v: Variogram | None, n: int, trials: int = 1000, rng=None,
                        psi: Callable[[float], float] | None = None,
                        tol: float = 1e-10) -> tuple[bool, float]:
    """Randomised check that ``psi`` is n-alternating.

    Draws ``trials`` tuples ``(s, s_1, ..., s_n)`` uniformly on ``[0, 100]**(n+1)``
    and reports whether every alternating difference is ``<= tol`` together with
    the largest value seen. ``psi`` overrides the variogram's own function (test
    hook for arbitrary scalar functions).
    """
    if n not in (1, 2, 3):
        raise ContractError("only orders n in {1, 2, 3} are supported")
    if psi is None:
        if v is None:
            raise ContractError("either a variogram or psi is required")
        psi = v.psi
    rng = np.random.default_rng(DEFAULT_SEED if rng is None else rng)
    draws = rng.uniform(0.0, 100.0, size=(trials, n + 1))
    worst = -math.inf
    for row in draws:
        worst = max(worst, alternating_difference(psi, row[0], row[1:]))
    return bool(worst <= tol), float(worst)


def check_negative_definite(v: Variogram, points, weights) -> float:
    """Quadratic form ``sum_ij a_i gamma(x_i - x_j) a_j`` for weights summing to zero."""
    a = np.asarray(weights, dtype=float).ravel()
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(a) != len(pts):
        raise ContractError("need one weight per point")
    if abs(a.sum()) > 1e-12:
        raise ContractError(f"weights must sum to zero (sum = {a.sum():.3e})")
    return float(a @ v.pairwise(pts) @ a)


def gneiting_constant(alpha: float, d: int) -> float:
    """``Gamma((2-alpha)/2) Gamma((d+alpha)/2) / Gamma(d/2)``.

    Sharp constant making ``a - 0.5 ||(x-y)/s||**alpha`` positive definite on a
    ball of radius R exactly when ``a >= (A/2) (R/s)**alpha``.
    """
    alpha = float(alpha)
    if not (0.0 < alpha < 2.0):
        raise ContractError(f"alpha must lie in (0, 2), got {alpha}")
    if int(d) != d or d < 1:
        raise ContractError(f"d must be a positive integer, got {d}")
    return math.gamma((2.0 - alpha) / 2.0) * math.gamma((d + alpha) / 2.0) / math.gamma(d / 2.0)


def scale_for_target_variance(alpha: float, sigma2K: float) -> float:
    """Scale ``s`` on ``[-1, 1]`` whose K-stationary variance equals ``sigma2K``."""
    if not sigma2K > 0:
        raise ContractError(f"target variance must be positive, got {sigma2K}")
    a1 = gneiting_constant(alpha, 1)
    # (A/2) s**-alpha = sigma2K  with R = 1
    return (a1 / (2.0 * sigma2K)) ** (1.0 / alpha)


def scale_for_box_variance(alpha: float, sigma2K: float, half_widths) -> float:
    """Scale whose K-stationary variance on the box ``prod [-R_i, R_i]`` equals ``sigma2K``.

    The enclosing radius is ``R = ||(R_1, ..., R_d)||``; in d = 1 with ``R = 1``
    this is :func:`scale_for_target_variance`.
    """
    if not sigma2K > 0:
        raise ContractError(f"target variance must be positive, got {sigma2K}")
    hw = np.atleast_1d(np.asarray(half_widths, dtype=float))
    radius = float(np.linalg.norm(hw))
    return radius * (gneiting_constant(alpha, len(hw)) / (2.0 * sigma2K)) ** (1.0 / alpha)
