"""Exact sampling of fractional Gaussian noise and cylindrical fBm.

Increments, not path values, are the canonical representation: the
implicit Euler scheme consumes only the per-step noise. Two exact
generators are provided, a dense Cholesky factorization of the increment
covariance (reference, O(M^3) setup) and circulant embedding of
fractional Gaussian noise (fast path, O(M log M)). Both reproduce the
analytic covariance

    E[dw_i dw_j] = 0.5 * tau^{2H} * (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}),

k = |i - j|, exactly (not just asymptotically), which matters when the
sampler sits underneath convergence-rate measurements.

Restricted to H in (1/2, 1); smaller Hurst indices put the circulant
embedding in a different regime and are out of scope.
"""

import threading
from dataclasses import dataclass

import numpy as np

from .rng import MODE_STREAM, derive_seed, rng_from_seed

__all__ = [
    "CirculantEmbeddingError",
    "CylindricalFbmSample",
    "HurstParameter",
    "IncrementGrid",
    "ScalarFbmIncrements",
    "aggregate_cylindrical",
    "aggregate_increments",
    "fbm_covariance",
    "fgn_covariance",
    "generate_cylindrical_fbm",
    "generate_scalar_fbm",
    "increment_covariance",
    "increment_covariance_matrix",
    "kernel_phi",
]

GENERATOR_METHODS = ("cholesky", "circulant")

# Relative tolerance on negative circulant eigenvalues before the
# embedding is declared broken (never triggers for fGn with H > 1/2).
_EMBEDDING_TOL = 1e-10


class CirculantEmbeddingError(RuntimeError):
    """The circulant embedding of the fGn covariance is not PSD."""


@dataclass(frozen=True)
class HurstParameter:
    """Hurst index H, restricted to the open interval (1/2, 1)."""

    h: float

    def __post_init__(self):
        if not 0.5 < self.h < 1.0:
            raise ValueError(f"hurst must be in (0.5, 1), got {self.h}")

    @property
    def alpha_h(self) -> float:
        """H(2H - 1), the constant in the kernel phi(y) = alpha_H |y|^{2H-2}."""
        return self.h * (2.0 * self.h - 1.0)


@dataclass(frozen=True)
class IncrementGrid:
    """Uniform mesh with m_steps steps of size tau on [0, m_steps*tau]."""

    m_steps: int
    tau: float

    def __post_init__(self):
        if self.m_steps < 1:
            raise ValueError(f"m_steps must be >= 1, got {self.m_steps}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def horizon(self) -> float:
        return self.m_steps * self.tau

    def times(self) -> np.ndarray:
        """Grid points t_0 .. t_M."""
        return self.tau * np.arange(self.m_steps + 1)


@dataclass(frozen=True, eq=False)
class ScalarFbmIncrements:
    """One scalar fBm increment sequence on a uniform grid."""

    grid: IncrementGrid
    values: np.ndarray
    hurst: HurstParameter
    seed: int
    method: str


@dataclass(frozen=True, eq=False)
class CylindricalFbmSample:
    """Independent scalar fBm rows, one per noise mode, on a shared grid.

    Row k is reproducible from (base_seed, k) alone, so growing the mode
    count preserves existing rows (the nesting used by spatial-refinement
    coupling).
    """

    grid: IncrementGrid
    values: np.ndarray  # shape (modes, m_steps)
    hurst: HurstParameter
    base_seed: int
    method: str

    @property
    def modes(self) -> int:
        return self.values.shape[0]

    def mode(self, k: int) -> ScalarFbmIncrements:
        """Row k as a ScalarFbmIncrements with its derived seed."""
        if not 0 <= k < self.modes:
            raise ValueError(f"mode index {k} out of range [0, {self.modes})")
        return ScalarFbmIncrements(
            grid=self.grid,
            values=self.values[k],
            hurst=self.hurst,
            seed=derive_seed(self.base_seed, MODE_STREAM, k),
            method=self.method,
        )


def fbm_covariance(s: float, t: float, h: HurstParameter) -> float:
    """fBm covariance R_H(s, t) = 0.5 (s^{2H} + t^{2H} - |t-s|^{2H})."""
    if s < 0 or t < 0:
        raise ValueError("fbm_covariance requires s, t >= 0")
    p = 2.0 * h.h
    return 0.5 * (s**p + t**p - abs(t - s) ** p)


def kernel_phi(y: float, h: HurstParameter) -> float:
    """Covariance kernel alpha_H |y|^{2H-2}; singular at y = 0.

    Callers never integrate across y = 0 numerically: diagonal cells use
    the closed form tau^{2H} instead.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y == 0.0):
        raise ValueError("kernel_phi is singular at y = 0")
    out = h.alpha_h * np.abs(y) ** (2.0 * h.h - 2.0)
    return out if out.ndim else float(out)


def fgn_covariance(k: int, h: HurstParameter) -> float:
    """Autocovariance of unit-spacing fGn at lag k (variance 1 at k=0)."""
    k = abs(int(k))
    p = 2.0 * h.h
    return 0.5 * ((k + 1) ** p - 2.0 * k**p + abs(k - 1) ** p)


def increment_covariance(i: int, j: int, grid: IncrementGrid,
                         h: HurstParameter) -> float:
    """E[dw_i dw_j] for the increments of one scalar fBm on the grid."""
    for idx in (i, j):
        if not 0 <= idx < grid.m_steps:
            raise ValueError(
                f"step index {idx} out of range [0, {grid.m_steps})"
            )
    return grid.tau ** (2.0 * h.h) * fgn_covariance(i - j, h)


def _fgn_covariance_seq(m: int, h: HurstParameter) -> np.ndarray:
    """Unit-spacing fGn autocovariances at lags 0..m."""
    k = np.arange(m + 1, dtype=float)
    p = 2.0 * h.h
    return 0.5 * ((k + 1) ** p - 2.0 * k**p + np.abs(k - 1) ** p)


def increment_covariance_matrix(grid: IncrementGrid,
                                h: HurstParameter) -> np.ndarray:
    """Full analytic M x M increment covariance (Toeplitz)."""
    gamma = grid.tau ** (2.0 * h.h) * _fgn_covariance_seq(grid.m_steps - 1, h)
    idx = np.arange(grid.m_steps)
    return gamma[np.abs(idx[:, None] - idx[None, :])]


# ---------------------------------------------------------------------------
# generator internals; caches shared across calls, guarded for threads

_cache_lock = threading.Lock()
_chol_cache: dict = {}
_eig_cache: dict = {}


def clear_caches() -> None:
    with _cache_lock:
        _chol_cache.clear()
        _eig_cache.clear()


def _cholesky_factor(m: int, h: HurstParameter) -> np.ndarray:
    key = (m, h.h)
    with _cache_lock:
        hit = _chol_cache.get(key)
    if hit is not None:
        return hit
    gamma = _fgn_covariance_seq(m - 1, h)
    idx = np.arange(m)
    factor = np.linalg.cholesky(gamma[np.abs(idx[:, None] - idx[None, :])])
    factor.flags.writeable = False
    with _cache_lock:
        _chol_cache[key] = factor
    return factor


def circulant_eigenvalues(gamma: np.ndarray) -> np.ndarray:
    """Eigenvalues of the circulant embedding of a Toeplitz covariance.

    gamma holds autocovariances at lags 0..m; the embedded circulant has
    first row (gamma_0 .. gamma_m, gamma_{m-1} .. gamma_1) of size 2m.
    Raises CirculantEmbeddingError if any eigenvalue is negative beyond
    tolerance; tiny negative round-off is clipped to zero.
    """
    first_row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigs = np.fft.fft(first_row).real
    floor = -_EMBEDDING_TOL * eigs.max()
    if eigs.min() < floor:
        raise CirculantEmbeddingError(
            f"circulant embedding not PSD: min eigenvalue {eigs.min():.3e}"
        )
    return np.clip(eigs, 0.0, None)


def _circulant_sqrt_eigs(m: int, h: HurstParameter) -> np.ndarray:
    key = (m, h.h)
    with _cache_lock:
        hit = _eig_cache.get(key)
    if hit is not None:
        return hit
    sqrt_eigs = np.sqrt(circulant_eigenvalues(_fgn_covariance_seq(m, h)))
    sqrt_eigs.flags.writeable = False
    with _cache_lock:
        _eig_cache[key] = sqrt_eigs
    return sqrt_eigs


def _synthesize_circulant(sqrt_eigs: np.ndarray, z: np.ndarray,
                          m: int) -> np.ndarray:
    """Map 2m iid standard normals to m exact fGn values (Davies-Harte)."""
    m2 = 2 * m
    w = np.zeros(m2, dtype=complex)
    w[0] = sqrt_eigs[0] * z[0] / np.sqrt(m2)
    w[m] = sqrt_eigs[m] * z[1] / np.sqrt(m2)
    if m > 1:
        amp = sqrt_eigs[1:m] / np.sqrt(2 * m2)
        head = amp * (z[2::2] + 1j * z[3::2])
        w[1:m] = head
        w[m + 1:] = np.conj(head[::-1])
    return np.fft.fft(w).real[:m]


def generate_scalar_fbm(grid: IncrementGrid, h: HurstParameter, seed: int,
                        method: str = "circulant") -> ScalarFbmIncrements:
    """Sample the m_steps increments of one scalar fBm exactly.

    Parameters
    ----------
    grid : IncrementGrid
        Uniform time mesh.
    h : HurstParameter
        Hurst index in (1/2, 1).
    seed : int
        64-bit seed; identical (grid, h, seed, method) give bit-identical
        output across runs and thread/process counts.
    method : {"circulant", "cholesky"}
        circulant embeds the fGn covariance in a 2M circulant (fast);
        cholesky factorizes the dense covariance (reference).
    """
    if method not in GENERATOR_METHODS:
        raise ValueError(f"unknown method {method!r}; use one of"
                         f" {GENERATOR_METHODS}")
    m = grid.m_steps
    rng = rng_from_seed(seed)
    if method == "cholesky":
        unit = _cholesky_factor(m, h) @ rng.standard_normal(m)
    else:
        unit = _synthesize_circulant(
            _circulant_sqrt_eigs(m, h), rng.standard_normal(2 * m), m
        )
    values = grid.tau**h.h * unit
    values.flags.writeable = False
    return ScalarFbmIncrements(grid=grid, values=values, hurst=h,
                               seed=int(seed), method=method)


def generate_cylindrical_fbm(modes: int, grid: IncrementGrid,
                             h: HurstParameter, base_seed: int,
                             method: str = "circulant") -> CylindricalFbmSample:
    """Sample `modes` independent scalar fBm rows on a shared grid.

    Row k uses the seed derived from (base_seed, k), never a shared
    stream, so rows stay independent and extending the mode count leaves
    existing rows bit-identical.
    """
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    rows = [
        generate_scalar_fbm(grid, h, derive_seed(base_seed, MODE_STREAM, k),
                            method).values
        for k in range(modes)
    ]
    values = np.vstack(rows)
    values.flags.writeable = False
    return CylindricalFbmSample(grid=grid, values=values, hurst=h,
                                base_seed=int(base_seed), method=method)


def _aggregate_values(values: np.ndarray, ratio: int) -> np.ndarray:
    """Sum increment blocks of length `ratio`, left to right.

    Accumulation loops over the within-block offset so every coarse entry
    is built by the same left-to-right addition order regardless of shape.
    """
    coarse = values[..., 0::ratio].copy()
    for r in range(1, ratio):
        coarse += values[..., r::ratio]
    return coarse


def _coarse_grid(grid: IncrementGrid, ratio: int) -> IncrementGrid:
    if ratio < 1:
        raise ValueError(f"ratio must be >= 1, got {ratio}")
    if grid.m_steps % ratio:
        raise ValueError(
            f"m_steps {grid.m_steps} not divisible by ratio {ratio}"
        )
    return IncrementGrid(m_steps=grid.m_steps // ratio, tau=grid.tau * ratio)


def aggregate_increments(fine: ScalarFbmIncrements,
                         ratio: int) -> ScalarFbmIncrements:
    """Sum blocks of `ratio` fine increments into coarse-grid increments.

    Because fBm increments telescope, the result is distributed exactly
    as fBm increments on the coarse grid; it is the same driving path
    seen at lower resolution, which is what couples resolutions in the
    convergence studies.
    """
    grid = _coarse_grid(fine.grid, ratio)
    if ratio == 1:
        values = fine.values.copy()
    else:
        values = _aggregate_values(fine.values, ratio)
    values.flags.writeable = False
    return ScalarFbmIncrements(grid=grid, values=values, hurst=fine.hurst,
                               seed=fine.seed, method=fine.method)


def aggregate_cylindrical(sample: CylindricalFbmSample,
                          ratio: int) -> CylindricalFbmSample:
    """aggregate_increments applied row-wise to a cylindrical sample."""
    grid = _coarse_grid(sample.grid, ratio)
    if ratio == 1:
        values = sample.values.copy()
    else:
        values = _aggregate_values(sample.values, ratio)
    values.flags.writeable = False
    return CylindricalFbmSample(grid=grid, values=values, hurst=sample.hurst,
                                base_seed=sample.base_seed,
                                method=sample.method)
