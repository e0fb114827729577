"""Reproducible random streams, Gaussian draws and the Poisson arrival sequence.

Streams are Philox (counter-based) generators keyed by ``(seed, stream_id)``
through :class:`numpy.random.SeedSequence`. Each stream splits into independent
purpose-specific generators (arrivals, Gaussian vectors, shifts, ...) so that
the k-th arrival and the k-th Gaussian vector of a replicate do not depend on
how draws are batched. Normals come from numpy's ziggurat sampler; exponentials
are drawn by inversion, ``-log(1 - u)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .exceptions import ContractError
from .representation import Representation

__all__ = [
    "RngStream",
    "PoissonArrivals",
    "next_arrival",
    "sample_gaussian",
    "log_gaussian_spectral",
    "ARRIVALS",
    "GAUSSIAN",
    "SHIFT",
    "AUX",
]

ARRIVALS, GAUSSIAN, SHIFT, AUX = 0, 1, 2, 3


@dataclass(frozen=True)
class RngStream:
    """Identifies one reproducible random stream.

    ``stream_id`` may be an int or a tuple of ints; :meth:`child` extends it.
    """

    seed: int
    stream_id: int | tuple[int, ...] = 0

    @property
    def key(self) -> tuple[int, ...]:
        sid = self.stream_id
        return tuple(int(x) for x in sid) if isinstance(sid, tuple) else (int(sid),)

    def child(self, i: int) -> "RngStream":
        return RngStream(self.seed, self.key + (int(i),))

    def generator(self, purpose: int = GAUSSIAN) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=self.key + (int(purpose),))
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng, purpose: int = GAUSSIAN) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator(purpose)
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(0 if rng is None else int(rng)).generator(purpose)


def standard_exponential(gen: np.random.Generator, size=None):
    return -np.log1p(-gen.random(size))


class PoissonArrivals:
    """Points ``U_k = 1 / (E_1 + ... + E_k)`` of a Poisson process with intensity ``u**-2 du``.

    ``exponentials`` replaces the random draws by a fixed sequence (test hook).
    """

    def __init__(self, rng=None, exponentials: Iterable[float] | None = None):
        self._gen = None if exponentials is not None else as_generator(rng, ARRIVALS)
        self._forced: Iterator[float] | None = iter(exponentials) if exponentials is not None else None
        self.total = 0.0
        self.k = 0
        self.current = np.inf

    def _draw(self, size: int) -> np.ndarray:
        if self._forced is not None:
            try:
                return np.array([float(next(self._forced)) for _ in range(size)])
            except StopIteration:
                raise ContractError("forced exponential sequence exhausted") from None
        return standard_exponential(self._gen, size)

    def next(self) -> float:
        return float(self.take(1)[0])

    def take(self, size: int) -> np.ndarray:
        """Next ``size`` arrivals as an array (strictly decreasing)."""
        e = self._draw(size)
        # accumulate from the running total so that batching never changes rounding
        sums = np.cumsum(np.concatenate(([self.total], e)))[1:]
        self.total = float(sums[-1])
        self.k += size
        u = 1.0 / sums
        self.current = float(u[-1])
        return u


def next_arrival(pa: PoissonArrivals) -> float:
    return pa.next()


def _check_factor(rep: Representation):
    if rep.factor is None:
        raise ContractError("representation is not factorized")


def sample_gaussian(rep: Representation, rng=None, size: int | None = None) -> np.ndarray:
    """Zero-mean Gaussian vector(s) with covariance ``rep.covariance``.

    Returns shape ``(N,)`` when ``size`` is ``None`` and ``(size, N)`` otherwise.
    """
    _check_factor(rep)
    gen = as_generator(rng, GAUSSIAN)
    n = rep.n_points
    z = gen.standard_normal((1 if size is None else size, n))
    w = z @ rep.factor.T
    return w[0] if size is None else w


def log_gaussian_spectral(rep: Representation, rng=None, size: int | None = None) -> np.ndarray:
    """Spectral functions ``exp(W - Var(W)/2)`` with unit mean at every point."""
    w = sample_gaussian(rep, rng, size)
    return np.exp(w - 0.5 * np.diag(rep.covariance))
