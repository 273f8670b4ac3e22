"""Full discretization: spectral Galerkin in space, linear implicit Euler
in time, plus the linear-case mild-solution oracle.

The scheme iterates

    X_{m+1} = R(tau A_N) [ X_m + tau P_N F(X_m) + P_N Phi dW_m ],

R(z) = 1/(1+z), with F evaluated at the previous iterate (explicit in F,
implicit in A); there is no Newton iteration anywhere. Because Phi is
diagonal in the eigenbasis, P_N Phi dW involves exactly the first N
scalar fBm rows of the driving sample.
"""

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .fbm import CylindricalFbmSample, HurstParameter, IncrementGrid
from .spectral import (
    DiagonalNoiseOperator,
    NemytskiiMap,
    SpectralOperator,
    SpectralState,
    apply_nemytskii,
    sine_matrix,
)

__all__ = [
    "SolverConfig",
    "Trajectory",
    "implicit_euler_step",
    "linear_mild_reference",
    "restrict_config",
    "solve_endpoint",
    "solve_path",
    "stochastic_convolution",
]

_F_CODES = {"zero": kernels.F_ZERO, "identity_scaled": kernels.F_SCALED,
            "pointwise_sin": kernels.F_SIN}


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Fully specified discrete problem.

    operator / noise / initial may carry more modes than n_modes; the
    solver consumes their first n_modes entries, which is what makes one
    config template reusable across a spatial refinement ladder (mode
    nesting) without copying arrays.
    """

    n_modes: int
    m_steps: int
    horizon: float
    hurst: HurstParameter
    operator: SpectralOperator
    noise: DiagonalNoiseOperator
    nonlinearity: NemytskiiMap
    initial: SpectralState
    base_seed: int
    fbm_method: str = "circulant"

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.m_steps < 1:
            raise ValueError(f"m_steps must be >= 1, got {self.m_steps}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        for name, size in (("operator", self.operator.n_modes),
                           ("noise", self.noise.n_modes),
                           ("initial", self.initial.n_modes)):
            if size < self.n_modes:
                raise ValueError(
                    f"{name} carries {size} modes < n_modes={self.n_modes}"
                )
        lo = 1.0 - 2.0 * self.hurst.h
        if not lo < self.noise.beta <= 1.0:
            raise ValueError(
                f"noise beta={self.noise.beta} outside admissible "
                f"({lo}, 1] for H={self.hurst.h}"
            )

    @property
    def tau(self) -> float:
        return self.horizon / self.m_steps

    def grid(self) -> IncrementGrid:
        return IncrementGrid(m_steps=self.m_steps, tau=self.tau)

    def digest(self) -> str:
        """Stable hash of every parameter that determines the output."""
        hsh = hashlib.sha256()
        for part in (
            f"{self.n_modes},{self.m_steps},{self.horizon!r},{self.hurst.h!r},"
            f"{self.noise.beta!r},{self.noise.kind},{self.nonlinearity.kind},"
            f"{self.nonlinearity.lipschitz_bound!r},{self.base_seed},"
            f"{self.fbm_method}".encode(),
            self.operator.eigenvalues[: self.n_modes].tobytes(),
            self.noise.amplitudes[: self.n_modes].tobytes(),
            self.initial.coeffs[: self.n_modes].tobytes(),
        ):
            hsh.update(part)
        return hsh.hexdigest()


def restrict_config(config: SolverConfig, n_modes: int | None = None,
                    m_steps: int | None = None) -> SolverConfig:
    """Derive a coarser config sharing the template's operator/noise arrays."""
    return replace(config,
                   n_modes=config.n_modes if n_modes is None else n_modes,
                   m_steps=config.m_steps if m_steps is None else m_steps)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """All M+1 states of one solve, plus the generating config's digest."""

    states: list
    config_digest: str

    def endpoint(self) -> SpectralState:
        return self.states[-1]


def implicit_euler_step(x: SpectralState, tau: float, op: SpectralOperator,
                        f: NemytskiiMap, noise: DiagonalNoiseOperator,
                        dw: np.ndarray) -> SpectralState:
    """One step of the scheme from state x with noise increment vector dw."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    n = x.n_modes
    dw = np.asarray(dw, dtype=float)
    if op.n_modes != n or noise.n_modes < n or dw.shape != (n,):
        raise ValueError("dimension mismatch in implicit_euler_step")
    factor = 1.0 / (1.0 + tau * op.eigenvalues)
    fx = apply_nemytskii(f, x).coeffs
    coeffs = factor * (x.coeffs + tau * fx + noise.amplitudes[:n] * dw)
    return SpectralState(coeffs=coeffs, time=x.time + tau)


def _check_noise_sample(config: SolverConfig,
                        sample: CylindricalFbmSample) -> None:
    if sample.modes < config.n_modes:
        raise ValueError(
            f"noise sample has {sample.modes} modes < n_modes="
            f"{config.n_modes}"
        )
    if sample.grid.m_steps != config.m_steps:
        raise ValueError(
            f"noise grid has {sample.grid.m_steps} steps, config expects "
            f"{config.m_steps}"
        )
    if not math.isclose(sample.grid.tau, config.tau, rel_tol=1e-12):
        raise ValueError(
            f"noise grid tau {sample.grid.tau} != config tau {config.tau}"
        )


def _sweep_inputs(config: SolverConfig, sample: CylindricalFbmSample):
    n = config.n_modes
    lam = config.operator.eigenvalues[:n]
    step_factor = 1.0 / (1.0 + config.tau * lam)
    amps = config.noise.amplitudes[:n]
    dw_scaled = np.ascontiguousarray((amps[:, None] * sample.values[:n]).T)
    f_kind = _F_CODES[config.nonlinearity.kind]
    f_scale = config.nonlinearity.lipschitz_bound
    if f_kind == kernels.F_SIN:
        dst_mat = np.ascontiguousarray(sine_matrix(n))
        dst_scale = math.sqrt(n + 1)
    else:
        dst_mat = kernels.empty_dst_matrix()
        dst_scale = 1.0
    x0 = np.ascontiguousarray(config.initial.coeffs[:n], dtype=float)
    return x0, step_factor, dw_scaled, f_kind, f_scale, dst_mat, dst_scale


def solve_endpoint(config: SolverConfig,
                   noise_sample: CylindricalFbmSample) -> SpectralState:
    """Run the scheme storing nothing but the final state.

    Convergence studies use this path: at the reference resolutions a
    full trajectory would not fit comfortably in memory.
    """
    _check_noise_sample(config, noise_sample)
    x0, step_factor, dws, fk, fs, mat, scale = _sweep_inputs(
        config, noise_sample
    )
    coeffs = kernels.euler_endpoint(x0, step_factor, config.tau, dws, fk, fs,
                                    mat, scale)
    return SpectralState(coeffs=coeffs, time=config.m_steps * config.tau)


def solve_path(config: SolverConfig,
               noise_sample: CylindricalFbmSample) -> Trajectory:
    """Run the scheme keeping all M+1 states."""
    _check_noise_sample(config, noise_sample)
    x0, step_factor, dws, fk, fs, mat, scale = _sweep_inputs(
        config, noise_sample
    )
    states = kernels.euler_trajectory(x0, step_factor, config.tau, dws, fk,
                                      fs, mat, scale)
    tau = config.tau
    return Trajectory(
        states=[SpectralState(coeffs=states[m], time=m * tau)
                for m in range(config.m_steps + 1)],
        config_digest=config.digest(),
    )


def linear_mild_reference(config: SolverConfig,
                          fine_sample: CylindricalFbmSample) -> SpectralState:
    """Mild-solution endpoint for F = 0, on a finer noise grid.

    Coefficient n is e^{-lambda_n T} xi_n plus the left-endpoint
    Riemann evaluation of the stochastic convolution over the fine grid:
    phi_n sum_j e^{-lambda_n (T - s_j)} dw_{n,j}. Serves as the oracle
    independent of the implicit Euler path in the linear case.
    """
    if config.nonlinearity.kind != "zero":
        raise ValueError("linear_mild_reference requires F = 0")
    if fine_sample.modes < config.n_modes:
        raise ValueError(
            f"noise sample has {fine_sample.modes} modes < n_modes="
            f"{config.n_modes}"
        )
    if not math.isclose(fine_sample.grid.horizon, config.horizon,
                        rel_tol=1e-12):
        raise ValueError(
            f"fine grid horizon {fine_sample.grid.horizon} != config "
            f"horizon {config.horizon}"
        )
    n = config.n_modes
    lam = config.operator.eigenvalues[:n]
    amps = config.noise.amplitudes[:n]
    dws = np.ascontiguousarray((amps[:, None] * fine_sample.values[:n]).T)
    conv = kernels.convolution_endpoint(lam, dws, fine_sample.grid.tau,
                                        fine_sample.grid.m_steps)
    coeffs = np.exp(-lam * config.horizon) * config.initial.coeffs[:n] + conv
    return SpectralState(coeffs=coeffs, time=config.horizon)


def stochastic_convolution(op: SpectralOperator, noise: DiagonalNoiseOperator,
                           noise_sample: CylindricalFbmSample,
                           t_index: int) -> SpectralState:
    """Discrete left-endpoint approximation of int_0^t E(t-s) Phi dW^H(s).

    Evaluated at t = t_index * tau on the sample's grid; consumed by the
    regularity estimators.
    """
    grid = noise_sample.grid
    if not 0 <= t_index <= grid.m_steps:
        raise ValueError(
            f"t_index {t_index} out of range [0, {grid.m_steps}]"
        )
    n = op.n_modes
    if noise.n_modes < n or noise_sample.modes < n:
        raise ValueError("noise carries fewer modes than the operator")
    lam = op.eigenvalues
    dws = np.ascontiguousarray(
        (noise.amplitudes[:n, None] * noise_sample.values[:n]).T
    )
    coeffs = kernels.convolution_endpoint(lam, dws, grid.tau, t_index)
    return SpectralState(coeffs=coeffs, time=t_index * grid.tau)
