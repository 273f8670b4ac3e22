"""Solver and verification toolkit for parabolic SPDEs driven by
infinite-dimensional fractional Brownian motion with Hurst H > 1/2.

Spatial discretization is spectral Galerkin in the eigenbasis of the
linear operator, time stepping is the linear implicit Euler scheme, and
the driving noise is sampled exactly (Cholesky or circulant embedding).
"""

__version__ = "0.1.0"

from .fbm import (
    CirculantEmbeddingError,
    CylindricalFbmSample,
    HurstParameter,
    IncrementGrid,
    ScalarFbmIncrements,
    aggregate_cylindrical,
    aggregate_increments,
    fbm_covariance,
    generate_cylindrical_fbm,
    generate_scalar_fbm,
    increment_covariance,
    increment_covariance_matrix,
    kernel_phi,
)
from .spectral import (
    DiagonalNoiseOperator,
    NemytskiiMap,
    SpectralOperator,
    SpectralState,
    apply_nemytskii,
    dirichlet_laplacian,
    fractional_power_apply,
    identity_noise,
    inverse_sine_transform,
    l2_norm,
    noise_regularity_sum,
    projection_truncate,
    rational_step_factor,
    semigroup_apply,
    sine_transform,
    sobolev_norm,
    trace_class_noise,
    zero_map,
    scaled_identity_map,
    sine_map,
    zero_noise,
)
from .solver import (
    SolverConfig,
    Trajectory,
    implicit_euler_step,
    linear_mild_reference,
    solve_endpoint,
    solve_path,
    stochastic_convolution,
)
