"""scikit-learn style wrappers around the functional API.

``fit(X)`` takes the simulation locations as an ``(n_points, d)`` array; the
fitted attributes end in an underscore. Sampling methods accept an integer seed
or an :class:`~maxstab.sample.RngStream` as ``random_state``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bench import build_representation
from .domain import Grid
from .exceptions import ContractError
from .representation import solve_min_max_measure
from .sample import RngStream, log_gaussian_spectral, sample_gaussian
from .simulate import (
    DiekerMikoschSampler,
    LogGaussianSampler,
    RandomShiftSampler,
    calibrate_tau,
    run_replicates,
)
from .variogram import Variogram

__all__ = ["GaussianRepresentation", "MinMaxMeasure", "BrownResnickSimulator"]

_SHIFTED = {"random_shift": RandomShiftSampler, "dieker_mikosch": DiekerMikoschSampler}


def _stream(random_state) -> RngStream:
    if isinstance(random_state, RngStream):
        return random_state
    if random_state is None:
        return RngStream(0)
    if isinstance(random_state, (int, np.integer)):
        return RngStream(int(random_state))
    raise ContractError("random_state must be None, an int or an RngStream")


def _grid(X) -> Grid:
    pts = check_array(X, ensure_2d=False, dtype=float)
    return Grid(pts)


class GaussianRepresentation(BaseEstimator):
    """Gaussian process with the power variogram, in a chosen representation.

    Parameters
    ----------
    alpha, scale : float
        Variogram ``||h / scale||**alpha``.
    representation : {"original", "lambda", "kstat", "optimized"}
        ``lambda`` requires the bounding-box vertices to be among the points.
    """

    def __init__(self, alpha=1.0, scale=1.0, representation="lambda"):
        self.alpha = alpha
        self.scale = scale
        self.representation = representation

    def fit(self, X, y=None):
        grid = _grid(X)
        self.variogram_ = Variogram(self.alpha, self.scale)
        self.rep_ = build_representation(self.representation, self.variogram_, grid)
        self.covariance_ = self.rep_.covariance
        self.variance_profile_ = self.rep_.variance_profile
        self.max_variance_ = float(np.max(self.variance_profile_))
        self.n_features_in_ = grid.dim
        return self

    def sample(self, n_samples=1, random_state=None):
        """Gaussian draws of shape ``(n_samples, n_points)``."""
        check_is_fitted(self, "rep_")
        return sample_gaussian(self.rep_, _stream(random_state), int(n_samples))

    def spectral(self, n_samples=1, random_state=None):
        """Log-Gaussian spectral functions ``exp(W - Var W / 2)``."""
        check_is_fitted(self, "rep_")
        return log_gaussian_spectral(self.rep_, _stream(random_state), int(n_samples))


class MinMaxMeasure(BaseEstimator):
    """Probability measure on the points minimising the maximal variance."""

    def __init__(self, alpha=1.0, scale=1.0, tol=1e-10):
        self.alpha = alpha
        self.scale = scale
        self.tol = tol

    def fit(self, X, y=None):
        grid = _grid(X)
        res = solve_min_max_measure(Variogram(self.alpha, self.scale), grid, tol=self.tol)
        self.weights_ = res.measure.weights
        self.support_ = res.measure.support
        self.max_variance_ = res.max_variance
        self.gap_ = res.gap
        self.n_iter_ = res.n_iter
        self.n_features_in_ = grid.dim
        return self


class BrownResnickSimulator(BaseEstimator):
    """Threshold-stopping simulator with a calibrated threshold.

    Parameters
    ----------
    alpha, scale : float
        Variogram ``||h / scale||**alpha``.
    algorithm : str
        ``original | lambda | kstat | optimized | random_shift | dieker_mikosch``.
    tau : float, optional
        Fixed threshold. When omitted, ``fit`` calibrates it so that the mean
        number of spectral functions per field equals ``target_ET``.
    target_ET : float
        Cost target used when ``tau`` is ``None``.
    random_state : int, optional
        Seed for calibration.
    """

    def __init__(self, alpha=1.0, scale=1.0, algorithm="lambda", tau=None, target_ET=20.0,
                 random_state=None):
        self.alpha = alpha
        self.scale = scale
        self.algorithm = algorithm
        self.tau = tau
        self.target_ET = target_ET
        self.random_state = random_state

    def fit(self, X, y=None):
        grid = _grid(X)
        v = Variogram(self.alpha, self.scale)
        if self.algorithm in _SHIFTED:
            self.sampler_ = _SHIFTED[self.algorithm](build_representation("original", v, grid))
        else:
            self.sampler_ = LogGaussianSampler(build_representation(self.algorithm, v, grid))
        if self.tau is not None:
            self.tau_ = float(self.tau)
        else:
            seed = _stream(self.random_state)
            self.tau_ = calibrate_tau(self.sampler_, float(self.target_ET), rng=seed.child(0))
        self.n_features_in_ = grid.dim
        return self

    def sample(self, n_samples=1, random_state=None):
        """Stopped fields of shape ``(n_samples, n_points)``; sets ``stopping_times_``."""
        check_is_fitted(self, "tau_")
        fields, ts = run_replicates(self.sampler_, self.tau_, _stream(random_state).child(1), int(n_samples))
        self.stopping_times_ = ts
        return fields
