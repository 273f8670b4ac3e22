"""Diagonal spectral calculus for the linear operator A and the noise.

Everything lives in the eigenbasis {e_n} of A, so the semigroup,
fractional powers, the resolvent step factor and the Galerkin projection
are all coefficientwise multiplications. The only non-diagonal piece is
the Nemytskii map, evaluated by collocation on the interior sine grid
(pseudo-spectral, no dealiasing: the aliasing error is dominated by the
scheme's discretization error at the resolutions used here).
"""

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

__all__ = [
    "DiagonalNoiseOperator",
    "NemytskiiMap",
    "SpectralOperator",
    "SpectralState",
    "apply_nemytskii",
    "dirichlet_laplacian",
    "fractional_power_apply",
    "identity_noise",
    "inverse_sine_transform",
    "l2_norm",
    "noise_regularity_sum",
    "projection_truncate",
    "rational_step_factor",
    "scaled_identity_map",
    "semigroup_apply",
    "sine_grid",
    "sine_map",
    "sine_matrix",
    "sine_transform",
    "sobolev_norm",
    "trace_class_noise",
    "zero_map",
    "zero_noise",
]

DIRICHLET_EXTENSION = "dirichlet"


def _dirichlet_eigenvalue(n: np.ndarray) -> np.ndarray:
    return (np.pi * n) ** 2


# Eigenvalue formulas usable beyond the stored truncation (tail sums).
# Keyed by name so operators stay picklable for process pools.
_EXTENSIONS = {DIRICHLET_EXTENSION: _dirichlet_eigenvalue}


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Positive self-adjoint operator given by its eigenvalue sequence.

    ``extension`` optionally names a formula for eigenvalues beyond the
    stored truncation, needed only for tail sums such as
    noise_regularity_sum.
    """

    eigenvalues: np.ndarray
    description: str = "custom"
    extension: str | None = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("eigenvalues must be a nonempty 1-d sequence")
        if lam[0] <= 0 or np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be positive and nondecreasing")
        if self.extension is not None and self.extension not in _EXTENSIONS:
            raise ValueError(f"unknown eigenvalue extension {self.extension!r}")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    def eigenvalues_upto(self, k_max: int) -> np.ndarray:
        """lambda_1 .. lambda_{k_max}, using the extension formula if needed."""
        if k_max <= self.n_modes:
            return self.eigenvalues[:k_max]
        if self.extension is None:
            raise ValueError(
                f"operator stores {self.n_modes} eigenvalues and declares no "
                f"extension formula; cannot reach k_max={k_max}"
            )
        return _EXTENSIONS[self.extension](np.arange(1, k_max + 1, dtype=float))


def dirichlet_laplacian(n_modes: int) -> SpectralOperator:
    """Dirichlet Laplacian on (0,1): lambda_n = (n pi)^2, e_n = sqrt(2) sin(n pi x)."""
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    lam = _dirichlet_eigenvalue(np.arange(1, n_modes + 1, dtype=float))
    return SpectralOperator(eigenvalues=lam,
                            description="dirichlet-laplacian-(0,1)",
                            extension=DIRICHLET_EXTENSION)


NOISE_KINDS = ("identity", "trace_class_logsq", "custom")


@dataclass(frozen=True, eq=False)
class DiagonalNoiseOperator:
    """Noise operator Phi = Q^{1/2}, diagonal in the eigenbasis of A.

    ``beta`` is the regularity exponent entering every theoretical rate:
    for trace-class Q it is 1; for Q = I on (0,1) the admissible range is
    beta < 1/2 and the supremal value 1/2 is carried as the exponent the
    rates are quoted at.
    """

    amplitudes: np.ndarray
    beta: float
    kind: str = "custom"

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=float)
        if amp.ndim != 1 or amp.size < 1:
            raise ValueError("amplitudes must be a nonempty 1-d sequence")
        if np.any(amp < 0):
            raise ValueError("amplitudes must be nonnegative")
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.beta <= 1.0:
            raise ValueError(f"beta must be <= 1, got {self.beta}")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n_modes(self) -> int:
        return self.amplitudes.size

    def amplitudes_upto(self, k_max: int) -> np.ndarray:
        """phi_1 .. phi_{k_max}, extending by the kind's formula if needed."""
        if k_max <= self.n_modes:
            return self.amplitudes[:k_max]
        if self.kind == "identity":
            return np.ones(k_max)
        if self.kind == "trace_class_logsq":
            return _trace_class_amplitudes(k_max)
        raise ValueError(
            f"custom noise stores {self.n_modes} amplitudes; cannot reach "
            f"k_max={k_max}"
        )


def _trace_class_amplitudes(n_modes: int) -> np.ndarray:
    amp = np.zeros(n_modes)
    if n_modes >= 2:
        n = np.arange(2, n_modes + 1, dtype=float)
        amp[1:] = 1.0 / np.sqrt(n * np.log(n) ** 2)
    return amp


def identity_noise(n_modes: int, beta: float = 0.5) -> DiagonalNoiseOperator:
    """Q = I: phi_n = 1. beta defaults to the supremal admissible 1/2."""
    return DiagonalNoiseOperator(amplitudes=np.ones(n_modes), beta=beta,
                                 kind="identity")


def trace_class_noise(n_modes: int) -> DiagonalNoiseOperator:
    """Q e_1 = 0, Q e_n = (n log(n)^2)^{-1} e_n for n >= 2; beta = 1."""
    return DiagonalNoiseOperator(amplitudes=_trace_class_amplitudes(n_modes),
                                 beta=1.0, kind="trace_class_logsq")


def zero_noise(n_modes: int) -> DiagonalNoiseOperator:
    """Phi = 0 (deterministic problem)."""
    return DiagonalNoiseOperator(amplitudes=np.zeros(n_modes), beta=1.0,
                                 kind="custom")


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Coefficients <X, e_n> of the solution at a fixed time."""

    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1:
            raise ValueError("coeffs must be 1-d")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self) -> int:
        return self.coeffs.size


NEMYTSKII_KINDS = ("zero", "identity_scaled", "pointwise_sin")


@dataclass(frozen=True)
class NemytskiiMap:
    """Pointwise nonlinearity F with global Lipschitz bound."""

    kind: str
    lipschitz_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in NEMYTSKII_KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if not self.lipschitz_bound > 0:
            raise ValueError("lipschitz_bound must be positive")


def zero_map() -> NemytskiiMap:
    return NemytskiiMap(kind="zero")


def scaled_identity_map(lipschitz_bound: float) -> NemytskiiMap:
    return NemytskiiMap(kind="identity_scaled", lipschitz_bound=lipschitz_bound)


def sine_map() -> NemytskiiMap:
    """u -> sin(u) pointwise; Lipschitz constant 1."""
    return NemytskiiMap(kind="pointwise_sin", lipschitz_bound=1.0)


# ---------------------------------------------------------------------------
# coefficientwise operations


def _check_dims(op: SpectralOperator, x: SpectralState) -> None:
    if op.n_modes != x.n_modes:
        raise ValueError(
            f"dimension mismatch: operator has {op.n_modes} modes, state has "
            f"{x.n_modes}"
        )


def semigroup_apply(op: SpectralOperator, t: float,
                    x: SpectralState) -> SpectralState:
    """E(t) x = e^{-tA} x, coefficient n scaled by exp(-lambda_n t)."""
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    _check_dims(op, x)
    if t == 0.0:
        return SpectralState(coeffs=x.coeffs.copy(), time=x.time)
    return SpectralState(coeffs=np.exp(-op.eigenvalues * t) * x.coeffs,
                         time=x.time)


def fractional_power_apply(op: SpectralOperator, gamma: float,
                           x: SpectralState) -> SpectralState:
    """A^gamma x, coefficient n scaled by lambda_n^gamma.

    The truncation makes every real power bounded, so gamma may be
    negative. The Sobolev norm of index delta is l2_norm after
    gamma = delta/2.
    """
    _check_dims(op, x)
    if gamma == 0.0:
        return SpectralState(coeffs=x.coeffs.copy(), time=x.time)
    return SpectralState(coeffs=op.eigenvalues**gamma * x.coeffs, time=x.time)


def rational_step_factor(op: SpectralOperator, tau: float) -> np.ndarray:
    """Per-mode resolvent factors R(tau lambda_n) = 1/(1 + tau lambda_n)."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return 1.0 / (1.0 + tau * op.eigenvalues)


def projection_truncate(x: SpectralState, n_target: int) -> SpectralState:
    """Galerkin projection P_N: keep the first n_target coefficients."""
    if not 1 <= n_target <= x.n_modes:
        raise ValueError(
            f"n_target must be in [1, {x.n_modes}], got {n_target}"
        )
    return SpectralState(coeffs=x.coeffs[:n_target].copy(), time=x.time)


def l2_norm(x: SpectralState) -> float:
    """L2 norm of the represented function (Parseval)."""
    return float(np.linalg.norm(x.coeffs))


def sobolev_norm(op: SpectralOperator, delta: float, x: SpectralState) -> float:
    """Norm of V_delta = dom(A^{delta/2}): ||lambda^{delta/2} coeffs||."""
    _check_dims(op, x)
    if delta == 0.0:
        return l2_norm(x)
    return float(np.linalg.norm(op.eigenvalues ** (delta / 2.0) * x.coeffs))


def noise_regularity_sum(op: SpectralOperator, phi: DiagonalNoiseOperator,
                         beta: float, k_max: int) -> float:
    """Partial sum of ||A^{(beta-1)/2} Phi||^2_{HS}: sum lambda_n^{beta-1} phi_n^2.

    Stabilizing partial sums certify a beta as admissible; growth past
    any bound flags the admissibility boundary (e.g. beta >= 1/2 for
    Q = I in one dimension).
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    lam = op.eigenvalues_upto(k_max)
    amp = phi.amplitudes_upto(k_max)
    return float(np.sum(lam ** (beta - 1.0) * amp**2))


# ---------------------------------------------------------------------------
# interior sine-grid transforms (Dirichlet collocation)


def sine_grid(n_modes: int) -> np.ndarray:
    """Interior collocation points x_k = k/(N+1), k = 1..N."""
    return np.arange(1, n_modes + 1) / (n_modes + 1.0)


@functools.lru_cache(maxsize=16)
def _sine_matrix_cached(n_modes: int) -> np.ndarray:
    j = np.arange(1, n_modes + 1)
    mat = np.sqrt(2.0 / (n_modes + 1)) * np.sin(
        np.pi * np.outer(j, j) / (n_modes + 1)
    )
    mat.flags.writeable = False
    return mat


def sine_matrix(n_modes: int) -> np.ndarray:
    """Dense symmetric orthonormal DST-I matrix (involutory: S @ S = I).

    Physical values are sqrt(N+1) * (S @ coeffs); used by the numba
    kernels, and as the O(N^2) oracle for the fast transform.
    """
    return _sine_matrix_cached(int(n_modes))


def sine_transform(coeffs: np.ndarray) -> np.ndarray:
    """Evaluate u(x_k) = sum_n c_n sqrt(2) sin(n pi x_k) on the sine grid."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    return math.sqrt(n + 1) * scipy.fft.dst(coeffs, type=1, norm="ortho")


def inverse_sine_transform(values: np.ndarray) -> np.ndarray:
    """Recover coefficients from sine-grid values (exact round trip)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    return scipy.fft.dst(values, type=1, norm="ortho") / math.sqrt(n + 1)


def apply_nemytskii(f: NemytskiiMap, x: SpectralState) -> SpectralState:
    """F(x) in coefficients; pointwise kinds go through the sine grid."""
    if f.kind == "zero":
        return SpectralState(coeffs=np.zeros_like(x.coeffs), time=x.time)
    if f.kind == "identity_scaled":
        return SpectralState(coeffs=f.lipschitz_bound * x.coeffs, time=x.time)
    u = sine_transform(x.coeffs)
    return SpectralState(coeffs=inverse_sine_transform(np.sin(u)), time=x.time)
