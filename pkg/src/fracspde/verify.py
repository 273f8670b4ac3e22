"""Executable checks of the analytic identities behind the scheme.

Four families: the phi-kernel cell integrals and their bound, the
lambda-phi integral whose scaled value must stay bounded in lambda, the
Ito isometry for step integrands against cylindrical fBm, and empirical
regularity (temporal Hölder exponents, Sobolev-norm ladders) of the
discrete solution.

Also hosts the exact second-moment oracle for the linear (F = 0)
scheme: every endpoint statistic of the implicit Euler iteration is a
quadratic form in the increments, so expectations reduce to Toeplitz
quadratic forms computable by FFT. These exact values calibrate the
Monte Carlo tests and pin thresholds without guessing constants.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln, roots_jacobi

from .fbm import (
    HurstParameter,
    IncrementGrid,
    _fgn_covariance_seq,
    generate_cylindrical_fbm,
    increment_covariance,
)
from .parallel import parallel_map
from .rng import SAMPLE_STREAM, derive_seed
from .solver import SolverConfig, restrict_config, solve_endpoint, solve_path

__all__ = [
    "IsometryCheck",
    "PhiCellCheck",
    "RegularityReport",
    "SpaceRegularityReport",
    "check_ito_isometry",
    "check_lambda_phi_bound",
    "check_phi_cell_integral",
    "estimate_space_regularity",
    "estimate_time_regularity",
    "expected_increment_rms",
    "expected_sobolev_rms",
    "expected_spatial_rms_errors",
    "expected_temporal_rms_errors",
    "fit_power_law",
    "linear_endpoint_moments",
    "phi_cell_analytic",
    "phi_cell_quadrature",
]


# ---------------------------------------------------------------------------
# quadrature helpers


def _gauss_legendre_01(n_nodes: int):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return (x + 1.0) / 2.0, w / 2.0


def phi_cell_analytic(i: int, j: int, h: HurstParameter) -> float:
    """Closed form of int_0^1 int_0^1 phi(u + i - v - j) du dv.

    Equals 1 on the diagonal and the second difference
    0.5[(k+1)^{2H} - 2k^{2H} + (k-1)^{2H}], k = |i-j|, off it.
    """
    k = abs(i - j)
    p = 2.0 * h.h
    return 0.5 * ((k + 1) ** p - 2.0 * k**p + abs(k - 1) ** p)


def phi_cell_quadrature(i: int, j: int, h: HurstParameter,
                        n_nodes: int = 32) -> float:
    """Numerical value of the phi cell integral, off-diagonal only.

    Offsets k >= 2 are smooth on the closed cell and use a tensor
    Gauss-Legendre rule. The k = 1 cell touches the kernel singularity
    at one corner, where Gauss-Legendre alone cannot reach 1e-6
    relative accuracy near H = 1/2; that cell is split along the
    diagonal (Duffy substitution u = sigma*y), which factors the
    singular power into a Gauss-Jacobi weight and leaves smooth factors.
    """
    k = abs(i - j)
    if k == 0:
        raise ValueError("quadrature is for off-diagonal cells only")
    p = 2.0 * h.h
    if k >= 2:
        x, w = _gauss_legendre_01(n_nodes)
        diff = x[:, None] - x[None, :] + k
        return float(h.alpha_h * w @ np.abs(diff) ** (p - 2.0) @ w)
    # k = 1: cell integral equals int_{[0,1]^2} alpha_H (w + y)^{2H-2} dw dy
    xj, wj = roots_jacobi(n_nodes, 0.0, p - 1.0)  # weight (1+x)^{2H-1}
    jac = 2.0 ** (-p) * np.sum(wj)  # int_0^1 y^{2H-1} dy
    xs, ws = _gauss_legendre_01(n_nodes)
    smooth = np.sum(ws * (1.0 + xs) ** (p - 2.0))
    return float(2.0 * h.alpha_h * jac * smooth)


@dataclass(frozen=True)
class PhiCellCheck:
    analytic: float
    quadrature: float | None
    bound: float | None  # 0.5 * max(i,j)^{2H-1}, defined for i != j


def check_phi_cell_integral(i: int, j: int,
                            h: HurstParameter) -> PhiCellCheck:
    """Closed form vs quadrature for one cell, plus the off-diagonal bound."""
    if i < 0 or j < 0:
        raise ValueError("cell indices must be >= 0")
    analytic = phi_cell_analytic(i, j, h)
    if i == j:
        return PhiCellCheck(analytic=analytic, quadrature=None, bound=None)
    bound = 0.5 * max(i, j) ** (2.0 * h.h - 1.0)
    return PhiCellCheck(analytic=analytic,
                        quadrature=phi_cell_quadrature(i, j, h), bound=bound)


def check_lambda_phi_bound(lam: float, t: float, kappa1: int, kappa2: int,
                           h: HurstParameter, n_nodes: int = 48) -> float:
    """Scaled integral lambda^{2H+k1+k2} iint u^k1 v^k2 e^{-lambda(u+v)} phi(u-v).

    Uniform boundedness in lambda (for fixed kappas) is the content of
    the identity under test; the harness asserts a plateau across
    lambda decades. The
    u < v triangle is mapped by u = v*r, putting the kernel singularity
    into a Gauss-Jacobi weight (1-r)^{2H-2} and reducing the v-integral
    to a lower incomplete gamma; the u > v triangle is the same with the
    kappas swapped.
    """
    if kappa1 not in (0, 1) or kappa2 not in (0, 1):
        raise ValueError("kappa exponents must be 0 or 1")
    if not (lam > 0 and t > 0):
        raise ValueError("lambda and t must be positive")
    p = 2.0 * h.h
    a = p - 1.0 + kappa1 + kappa2  # v-exponent after the substitution
    xj, wj = roots_jacobi(n_nodes, p - 2.0, 0.0)  # weight (1-x)^{2H-2}
    r = (xj + 1.0) / 2.0
    mu = lam * (1.0 + r)
    inner = np.exp(gammaln(a + 1.0)) * gammainc(a + 1.0, mu * t) / mu ** (
        a + 1.0
    )
    jacobi_scale = 2.0 ** (-(p - 2.0) - 1.0)
    tri1 = h.alpha_h * jacobi_scale * np.sum(wj * r**kappa1 * inner)
    tri2 = h.alpha_h * jacobi_scale * np.sum(wj * r**kappa2 * inner)
    return float(lam ** (p + kappa1 + kappa2) * (tri1 + tri2))


# ---------------------------------------------------------------------------
# Ito isometry for step integrands


@dataclass(frozen=True)
class IsometryCheck:
    mc_lhs: float
    analytic_rhs: float
    std_error: float


def isometry_analytic_rhs(psis: list, grid: IncrementGrid,
                          h: HurstParameter) -> float:
    """sum_{i,j} <Psi_i, Psi_j>_HS E[dW_i dW_j] for a step integrand."""
    m = len(psis)
    if m != grid.m_steps:
        raise ValueError("one integrand matrix per grid interval required")
    total = 0.0
    for i in range(m):
        for j in range(m):
            frob = float(np.sum(psis[i] * psis[j]))
            total += frob * increment_covariance(i, j, grid, h)
    return total


def check_ito_isometry(psis: list, grid: IncrementGrid, h: HurstParameter,
                       samples: int, seed: int,
                       method: str = "cholesky") -> IsometryCheck:
    """Monte Carlo E||sum_i Psi_i dW_i||^2 against the analytic value.

    Each Psi_i maps the first K noise modes into R^d; all matrices must
    share one shape. The harness asserts |mc - analytic| <= 3 std errors.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    shapes = {p.shape for p in psis}
    if len(shapes) != 1:
        raise ValueError("all integrand matrices must share one shape")
    (d, k_modes), = shapes
    stacked = np.stack(psis)  # (m, d, k)
    sq = np.empty(samples)
    for s in range(samples):
        noise = generate_cylindrical_fbm(
            k_modes, grid, h, derive_seed(seed, SAMPLE_STREAM, s), method
        )
        v = np.einsum("idk,ki->d", stacked, noise.values)
        sq[s] = v @ v
    mc = float(sq.mean())
    se = float(sq.std(ddof=1) / np.sqrt(samples))
    return IsometryCheck(mc_lhs=mc,
                         analytic_rhs=isometry_analytic_rhs(psis, grid, h),
                         std_error=se)


# ---------------------------------------------------------------------------
# exact second moments of the linear scheme (Toeplitz quadratic forms)


def _toeplitz_matvec(gamma: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Gamma @ v for the symmetric Toeplitz matrix with first row gamma."""
    m = gamma.size
    first_row = np.concatenate([gamma, [0.0], gamma[-1:0:-1]])
    out = np.fft.irfft(np.fft.rfft(first_row) * np.fft.rfft(v, 2 * m),
                       2 * m)
    return out[:m]


def toeplitz_bilinear(gamma: np.ndarray, u: np.ndarray,
                      v: np.ndarray) -> float:
    """u^T Gamma v with Gamma_{ij} = gamma[|i-j|]."""
    return float(u @ _toeplitz_matvec(gamma, v))


def _resolvent_weights(r: np.ndarray, m: int) -> np.ndarray:
    """Weights w[n, i] = r_n^{m-i}, i = 0..m-1 (noise response of the scheme)."""
    return r[:, None] ** np.arange(m, 0, -1)[None, :]


def linear_endpoint_moments(config: SolverConfig):
    """Exact per-mode (mean, variance) of the F = 0 scheme endpoint."""
    n = config.n_modes
    lam = config.operator.eigenvalues[:n]
    phi = config.noise.amplitudes[:n]
    r = 1.0 / (1.0 + config.tau * lam)
    means = r**config.m_steps * config.initial.coeffs[:n]
    gamma = config.tau ** (2.0 * config.hurst.h) * _fgn_covariance_seq(
        config.m_steps - 1, config.hurst
    )
    weights = _resolvent_weights(r, config.m_steps)
    variances = np.array(
        [phi[i] ** 2 * toeplitz_bilinear(gamma, weights[i], weights[i])
         for i in range(n)]
    )
    return means, variances


def expected_sobolev_rms(config: SolverConfig, delta: float) -> float:
    """Exact L^2(Omega; V_delta) norm of the F = 0 scheme endpoint."""
    means, variances = linear_endpoint_moments(config)
    lam = config.operator.eigenvalues[: config.n_modes]
    return float(np.sqrt(np.sum(lam**delta * (means**2 + variances))))


def expected_spatial_rms_errors(template: SolverConfig,
                                ladder: list) -> np.ndarray:
    """Exact coupled-noise spatial errors ||X_ref - X_N|| for F = 0.

    With nested noise and F = 0 the first N modes cancel exactly, so the
    error is the reference's energy in modes N+1..N_ref.
    """
    means, variances = linear_endpoint_moments(template)
    second = means**2 + variances
    return np.array([np.sqrt(np.sum(second[n:])) for n in ladder])


def expected_temporal_rms_errors(template: SolverConfig,
                                 ladder: list) -> np.ndarray:
    """Exact coupled-noise temporal errors ||X_{M} - X_{M_ref}|| for F = 0.

    Both resolutions are linear maps of the same fine increments: the
    reference weights each fine increment j by r_f^{M_ref - j}; the
    ladder run at step ratio q weights it by r_c^{M - (j // q)}. The
    error is then a Toeplitz quadratic form in the weight difference.
    """
    n = template.n_modes
    m_ref = template.m_steps
    lam = template.operator.eigenvalues[:n]
    phi = template.noise.amplitudes[:n]
    xi = template.initial.coeffs[:n]
    tau_f = template.tau
    r_fine = 1.0 / (1.0 + tau_f * lam)
    w_fine = _resolvent_weights(r_fine, m_ref)
    gamma = tau_f ** (2.0 * template.hurst.h) * _fgn_covariance_seq(
        m_ref - 1, template.hurst
    )
    errors = []
    for m in ladder:
        if m_ref % m:
            raise ValueError(f"ladder step count {m} does not divide {m_ref}")
        q = m_ref // m
        r_c = 1.0 / (1.0 + (tau_f * q) * lam)
        coarse_pow = r_c[:, None] ** (m - np.arange(m))[None, :]
        w_coarse = np.repeat(coarse_pow, q, axis=1)
        mean_diff = (r_fine**m_ref - r_c**m) * xi
        err2 = 0.0
        for i in range(n):
            d = phi[i] * (w_fine[i] - w_coarse[i])
            err2 += toeplitz_bilinear(gamma, d, d) + mean_diff[i] ** 2
        errors.append(np.sqrt(err2))
    return np.array(errors)


def expected_mild_rms_errors(template: SolverConfig,
                             ladder: list) -> np.ndarray:
    """Exact coupled-noise errors of the scheme against the mild oracle.

    The template's grid is the fine one driving linear_mild_reference;
    ladder entries are coarse step counts run by the scheme on
    aggregated increments. Both are linear maps of the same fine
    increments, the mild side weighting increment j by
    exp(-lambda (T - j tau_f)).
    """
    n = template.n_modes
    m_fine = template.m_steps
    lam = template.operator.eigenvalues[:n]
    phi = template.noise.amplitudes[:n]
    xi = template.initial.coeffs[:n]
    tau_f = template.tau
    t_end = template.horizon
    j_idx = np.arange(m_fine)
    w_mild = np.exp(-lam[:, None] * (t_end - j_idx[None, :] * tau_f))
    gamma = tau_f ** (2.0 * template.hurst.h) * _fgn_covariance_seq(
        m_fine - 1, template.hurst
    )
    errors = []
    for m in ladder:
        if m_fine % m:
            raise ValueError(f"ladder step count {m} does not divide {m_fine}")
        q = m_fine // m
        r_c = 1.0 / (1.0 + (tau_f * q) * lam)
        coarse_pow = r_c[:, None] ** (m - np.arange(m))[None, :]
        w_coarse = np.repeat(coarse_pow, q, axis=1)
        mean_diff = (np.exp(-lam * t_end) - r_c**m) * xi
        err2 = 0.0
        for i in range(n):
            d = phi[i] * (w_mild[i] - w_coarse[i])
            err2 += toeplitz_bilinear(gamma, d, d) + mean_diff[i] ** 2
        errors.append(np.sqrt(err2))
    return np.array(errors)


def expected_increment_rms(config: SolverConfig, lag_steps: list,
                           delta: float) -> np.ndarray:
    """Exact L^2(Omega; V_delta) norm of X(T) - X(T - L*tau), F = 0."""
    n = config.n_modes
    m = config.m_steps
    lam = config.operator.eigenvalues[:n]
    phi = config.noise.amplitudes[:n]
    xi = config.initial.coeffs[:n]
    r = 1.0 / (1.0 + config.tau * lam)
    gamma = config.tau ** (2.0 * config.hurst.h) * _fgn_covariance_seq(
        m - 1, config.hurst
    )
    w_end = _resolvent_weights(r, m)
    out = []
    for lag in lag_steps:
        if not 1 <= lag < m:
            raise ValueError(f"lag {lag} out of range [1, {m})")
        w_lag = np.zeros((n, m))
        w_lag[:, : m - lag] = _resolvent_weights(r, m - lag)
        mean_diff = (r**m - r ** (m - lag)) * xi
        total = 0.0
        for i in range(n):
            d = phi[i] * (w_end[i] - w_lag[i])
            total += lam[i] ** delta * (
                toeplitz_bilinear(gamma, d, d) + mean_diff[i] ** 2
            )
        out.append(np.sqrt(total))
    return np.array(out)


# ---------------------------------------------------------------------------
# empirical regularity of the discrete solution


def fit_power_law(xs: np.ndarray, ys: np.ndarray) -> float:
    """Least-squares exponent p in ys ~ c * xs^p (log-log OLS slope)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2 or np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs >= 2 strictly positive points")
    lx, ly = np.log(xs), np.log(ys)
    lx = lx - lx.mean()
    return float(lx @ (ly - ly.mean()) / (lx @ lx))


@dataclass(frozen=True, eq=False)
class RegularityReport:
    """Fitted temporal Hölder exponent of the discrete solution in V_delta."""

    delta: float
    lag_times: np.ndarray
    rms_differences: np.ndarray
    fitted_exponent: float
    theoretical_exponent: float
    sample_count: int


def estimate_time_regularity(config: SolverConfig, delta: float,
                             lag_steps: list, samples: int,
                             workers: int = 1) -> RegularityReport:
    """Monte Carlo RMS of ||X(T) - X(T - L tau)||_{V_delta} and its exponent.

    Lags should be >= 8 steps so the scheme's own discretization bias is
    subdominant to the Hölder scaling being measured.
    """
    lag_steps = sorted(int(lag) for lag in lag_steps)
    if len(lag_steps) < 3:
        raise ValueError("need at least 3 lags to fit an exponent")
    if lag_steps[0] < 1 or lag_steps[-1] >= config.m_steps:
        raise ValueError("lags must lie inside the trajectory")
    args = [
        (config, tuple(lag_steps), delta,
         derive_seed(config.base_seed, SAMPLE_STREAM, s))
        for s in range(samples)
    ]
    sq = np.array(parallel_map(_time_regularity_worker, args, workers))
    rms = np.sqrt(sq.mean(axis=0))
    lag_times = config.tau * np.array(lag_steps, dtype=float)
    theory = (2.0 * config.hurst.h + config.noise.beta - 1.0 - delta) / 2.0
    return RegularityReport(
        delta=delta,
        lag_times=lag_times,
        rms_differences=rms,
        fitted_exponent=fit_power_law(lag_times, rms),
        theoretical_exponent=theory,
        sample_count=samples,
    )


def _time_regularity_worker(args) -> np.ndarray:
    config, lag_steps, delta, seed = args
    noise = generate_cylindrical_fbm(config.n_modes, config.grid(),
                                     config.hurst, seed, config.fbm_method)
    traj = solve_path(config, noise)
    m = config.m_steps
    lam = config.operator.eigenvalues[: config.n_modes]
    weights = lam**delta
    end = traj.states[m].coeffs
    out = np.empty(len(lag_steps))
    for idx, lag in enumerate(lag_steps):
        diff = end - traj.states[m - lag].coeffs
        out[idx] = float(np.sum(weights * diff**2))
    return out


@dataclass(frozen=True, eq=False)
class SpaceRegularityReport:
    """RMS Sobolev norms of the endpoint across a mode-refinement ladder."""

    delta: float
    n_ladder: list
    rms_norms: np.ndarray
    sample_count: int

    def growth_ratio(self) -> float:
        """Top-of-ladder norm over bottom-of-ladder norm."""
        return float(self.rms_norms[-1] / self.rms_norms[0])


def _space_regularity_worker(args) -> np.ndarray:
    template, n_ladder, deltas, seed = args
    noise = generate_cylindrical_fbm(template.n_modes, template.grid(),
                                     template.hurst, seed,
                                     template.fbm_method)
    lam = template.operator.eigenvalues[: template.n_modes]
    out = np.empty((len(deltas), len(n_ladder)))
    for j, n in enumerate(n_ladder):
        end = solve_endpoint(restrict_config(template, n_modes=n), noise)
        for i, delta in enumerate(deltas):
            out[i, j] = float(np.sum(lam[:n] ** delta * end.coeffs**2))
    return out


def estimate_space_regularity(template: SolverConfig, n_ladder: list,
                              deltas: list, samples: int,
                              workers: int = 1) -> list:
    """Monte Carlo RMS Sobolev norms across a nested mode ladder.

    One noise draw per sample drives every rung (mode nesting), so the
    per-sample norm ladders are monotone by construction and the growth
    ratios carry very little sampling noise. Returns one report per
    requested delta.
    """
    n_ladder = sorted(int(n) for n in n_ladder)
    if n_ladder[-1] > template.n_modes:
        raise ValueError("ladder exceeds the template's mode count")
    args = [
        (template, tuple(n_ladder), tuple(deltas),
         derive_seed(template.base_seed, SAMPLE_STREAM, s))
        for s in range(samples)
    ]
    sq = np.array(parallel_map(_space_regularity_worker, args, workers))
    rms = np.sqrt(sq.mean(axis=0))  # (deltas, rungs)
    return [
        SpaceRegularityReport(delta=float(d), n_ladder=list(n_ladder),
                              rms_norms=rms[i], sample_count=samples)
        for i, d in enumerate(deltas)
    ]
