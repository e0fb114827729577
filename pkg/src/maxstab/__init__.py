"""Simulation of Brown-Resnick max-stable processes on finite grids.

Threshold-stopping simulation with Gaussian representations of minimal
maximal variance, alternative spectral samplers, extremal functions and a
benchmark harness for the resulting error probabilities.
"""
from .domain import (
    DiscreteMeasure,
    Grid,
    Hyperrectangle,
    bounding_box,
    dirac_measure,
    read_grid_csv,
    regular_grid,
    uniform_vertex_measure,
    vertices,
    write_grid_csv,
)
from .exceptions import CalibrationError, ContractError, MaxstabError, NumericalError, StoppingCapError
from .representation import (
    ConjectureViolation,
    Representation,
    covariance_from_measure,
    critical_alpha,
    k_stationary_covariance,
    lambda_modified_representation,
    matheron_conditions,
    max_variance,
    optimized_representation,
    original_representation,
    solve_min_max_measure,
    stationary_candidate_measure,
)
from .sample import PoissonArrivals, RngStream, log_gaussian_spectral, next_arrival, sample_gaussian
from .simulate import (
    ConstantSampler,
    DiekerMikoschSampler,
    LogGaussianSampler,
    RandomShiftSampler,
    StoppedField,
    calibrate_tau,
    dieker_mikosch_sampler,
    estimate_expected_T,
    extremal_functions_simulate,
    random_shift_sampler,
    threshold_stopping,
)
from .variogram import (
    Variogram,
    gneiting_constant,
    scale_for_box_variance,
    scale_for_target_variance,
)

__version__ = "0.1.0"
