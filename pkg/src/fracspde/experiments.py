"""Coupled-noise Monte Carlo convergence studies and their reports.

One driving noise path per sample is shared across every resolution in
the ladder: temporal refinement couples by increment aggregation,
spatial refinement by mode nesting. Discretization error is therefore
isolated from sampling error, at the cost of a reference-contamination
term that shrinks with the reference ratio (see the analysis notes in
the README for why the fixed desk protocols overshoot the asymptotic
slopes).

Per-sample results are reduced in sample order, so reports are
byte-identical for any worker count given the same base seed.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fbm import aggregate_cylindrical, generate_cylindrical_fbm, HurstParameter
from .parallel import parallel_map
from .rng import SAMPLE_STREAM, derive_seed
from .solver import SolverConfig, restrict_config, solve_endpoint
from .spectral import (
    SpectralState,
    dirichlet_laplacian,
    identity_noise,
    sine_map,
    trace_class_noise,
    zero_map,
    zero_noise,
)

__all__ = [
    "ConvergenceStudy",
    "ErrorReport",
    "desk_spatial_study",
    "desk_temporal_study",
    "fit_slope",
    "paper_spatial_study",
    "paper_temporal_study",
    "rms_error",
    "run_spatial_study",
    "run_temporal_study",
    "she_problem",
    "write_report",
]

SHE_PRESETS = ("she-identity", "she-trace")


def she_problem(preset: str, n_modes: int, m_steps: int,
                base_seed: int, horizon: float = 1.0, hurst: float = 0.75,
                fbm_method: str = "circulant", with_nonlinearity: bool = True,
                with_noise: bool = True) -> SolverConfig:
    """Stochastic heat equation test problem on (0,1).

    du = u_xx dt + sin(u) dt + Q^{1/2} dW^H, u(0) = sin(pi x), Dirichlet
    boundary. preset she-identity takes Q = I (beta = 1/2 supremal);
    she-trace takes Q e_1 = 0, Q e_n = (n log(n)^2)^{-1} e_n (beta = 1).
    """
    if preset not in SHE_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; use one of {SHE_PRESETS}")
    if with_noise:
        noise = (identity_noise(n_modes) if preset == "she-identity"
                 else trace_class_noise(n_modes))
    else:
        noise = zero_noise(n_modes)
    coeffs = np.zeros(n_modes)
    coeffs[0] = 1.0 / math.sqrt(2.0)  # <sin(pi x), sqrt(2) sin(pi x)>
    return SolverConfig(
        n_modes=n_modes,
        m_steps=m_steps,
        horizon=horizon,
        hurst=HurstParameter(hurst),
        operator=dirichlet_laplacian(n_modes),
        noise=noise,
        nonlinearity=sine_map() if with_nonlinearity else zero_map(),
        initial=SpectralState(coeffs=coeffs),
        base_seed=base_seed,
        fbm_method=fbm_method,
    )


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class ConvergenceStudy:
    """One resolution-ladder experiment against a finer reference.

    ``problem`` is the SolverConfig at the reference resolution; ladder
    runs are derived from it by restriction, which is exactly the
    aggregation/nesting coupling.
    """

    axis: str  # "temporal" | "spatial"
    ladder: tuple
    reference_resolution: int
    fixed_other_axis: int
    samples: int
    base_seed: int
    problem: SolverConfig

    def __post_init__(self):
        if self.axis not in ("temporal", "spatial"):
            raise ValueError(f"axis must be temporal or spatial, not"
                             f" {self.axis!r}")
        ladder = tuple(int(x) for x in self.ladder)
        if not ladder or sorted(ladder) != list(ladder):
            raise ValueError("ladder must be a nonempty increasing sequence")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        if self.axis == "temporal":
            if self.problem.m_steps != self.reference_resolution:
                raise ValueError("problem.m_steps must equal the reference")
            for m in ladder + (self.reference_resolution,):
                if not _is_power_of_two(m):
                    raise ValueError(f"temporal resolutions must be powers "
                                     f"of two, got {m}")
            for m in ladder:
                if m > self.reference_resolution or \
                        self.reference_resolution % m:
                    raise ValueError(
                        f"ladder entry {m} must divide the reference "
                        f"{self.reference_resolution}"
                    )
        else:
            if self.problem.n_modes != self.reference_resolution:
                raise ValueError("problem.n_modes must equal the reference")
            if ladder[-1] > self.reference_resolution:
                raise ValueError("spatial ladder exceeds the reference")
        object.__setattr__(self, "ladder", ladder)


@dataclass(frozen=True, eq=False)
class ErrorReport:
    resolutions: np.ndarray
    rms_errors: np.ndarray
    std_errors: np.ndarray
    fitted_slope: float
    slope_confidence_halfwidth: float
    theoretical_slope: float
    metadata: dict = field(default_factory=dict)


def rms_error(per_sample_errors: np.ndarray):
    """(sqrt(mean e^2), delta-method standard error of that rms)."""
    e = np.asarray(per_sample_errors, dtype=float)
    if e.size < 2:
        raise ValueError("rms_error needs at least 2 samples")
    sq = e**2
    rms = math.sqrt(sq.mean())
    se_mean_sq = sq.std(ddof=1) / math.sqrt(sq.size)
    return rms, (0.0 if rms == 0.0 else se_mean_sq / (2.0 * rms))


def fit_slope(xs: np.ndarray, ys: np.ndarray):
    """(OLS slope of log ys on log xs, 2x its standard error)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise ValueError("fit_slope needs at least 3 points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("fit_slope needs strictly positive values")
    lx, ly = np.log(xs), np.log(ys)
    dx = lx - lx.mean()
    sxx = dx @ dx
    slope = dx @ (ly - ly.mean()) / sxx
    resid = (ly - ly.mean()) - slope * dx
    dof = xs.size - 2
    se = math.sqrt(max(resid @ resid, 0.0) / dof / sxx)
    return float(slope), 2.0 * se


def _fit_or_nan(xs: np.ndarray, ys: np.ndarray):
    """fit_slope, degrading to (nan, nan) for unfittable ladders.

    Exact runs (zero error at some rung) and two-rung ladders are
    legitimate degenerate studies; the report then simply carries no
    slope.
    """
    try:
        return fit_slope(xs, ys)
    except ValueError:
        return math.nan, math.nan


def _temporal_worker(args) -> np.ndarray:
    template, ladder, seed = args
    fine = generate_cylindrical_fbm(template.n_modes, template.grid(),
                                    template.hurst, seed,
                                    template.fbm_method)
    ref = solve_endpoint(template, fine).coeffs
    out = np.empty(len(ladder))
    for i, m in enumerate(ladder):
        coarse_noise = aggregate_cylindrical(fine, template.m_steps // m)
        coarse = solve_endpoint(restrict_config(template, m_steps=m),
                                coarse_noise).coeffs
        out[i] = float(np.linalg.norm(ref - coarse))
        if not np.isfinite(out[i]):
            raise FloatingPointError(
                f"non-finite state at resolution {m}, seed {seed}"
            )
    return out


def _spatial_worker(args) -> np.ndarray:
    template, ladder, seed = args
    fine = generate_cylindrical_fbm(template.n_modes, template.grid(),
                                    template.hurst, seed,
                                    template.fbm_method)
    ref = solve_endpoint(template, fine).coeffs
    out = np.empty(len(ladder))
    for i, n in enumerate(ladder):
        coarse = solve_endpoint(restrict_config(template, n_modes=n),
                                fine).coeffs
        diff = ref.copy()
        diff[:n] -= coarse
        out[i] = float(np.linalg.norm(diff))
        if not np.isfinite(out[i]):
            raise FloatingPointError(
                f"non-finite state at resolution {n}, seed {seed}"
            )
    return out


def _run_study(study: ConvergenceStudy, worker, workers: int):
    args = [
        (study.problem, study.ladder,
         derive_seed(study.base_seed, SAMPLE_STREAM, s))
        for s in range(study.samples)
    ]
    return np.array(parallel_map(worker, args, workers))


def _study_metadata(study: ConvergenceStudy, extra: dict) -> dict:
    p = study.problem
    meta = {
        "axis": study.axis,
        "ladder": list(study.ladder),
        "reference_resolution": study.reference_resolution,
        "fixed_other_axis": study.fixed_other_axis,
        "samples": study.samples,
        "base_seed": study.base_seed,
        "horizon": p.horizon,
        "hurst": p.hurst.h,
        "noise_kind": p.noise.kind,
        "noise_beta": p.noise.beta,
        "nonlinearity": p.nonlinearity.kind,
        "fbm_method": p.fbm_method,
        "noise_coupling": "shared driving path (aggregation / mode nesting)",
    }
    meta.update(extra)
    return meta


def run_temporal_study(study: ConvergenceStudy,
                       workers: int = 1) -> ErrorReport:
    """Errors of coarse time steppings against the fine-step reference.

    The slope is fitted against the step size tau (not the step count),
    so the theoretical value is (2H + beta - 1)/2.
    """
    if study.axis != "temporal":
        raise ValueError("study.axis must be temporal")
    errors = _run_study(study, _temporal_worker, workers)
    stats = [rms_error(errors[:, i]) for i in range(len(study.ladder))]
    rms = np.array([s[0] for s in stats])
    ses = np.array([s[1] for s in stats])
    taus = study.problem.horizon / np.array(study.ladder, dtype=float)
    slope, halfwidth = _fit_or_nan(taus, rms)
    p = study.problem
    theo = (2.0 * p.hurst.h + p.noise.beta - 1.0) / 2.0
    return ErrorReport(
        resolutions=np.array(study.ladder),
        rms_errors=rms,
        std_errors=ses,
        fitted_slope=slope,
        slope_confidence_halfwidth=halfwidth,
        theoretical_slope=theo,
        metadata=_study_metadata(study, {"slope_axis": "tau"}),
    )


def run_spatial_study(study: ConvergenceStudy,
                      workers: int = 1) -> ErrorReport:
    """Errors of mode-truncated runs against the full-mode reference.

    The slope is fitted against N and reported as the positive decay
    order, so the theoretical value is 2H + beta - 1 (the lambda_{N+1}
    form doubled through lambda_N ~ N^2 pi^2).
    """
    if study.axis != "spatial":
        raise ValueError("study.axis must be spatial")
    errors = _run_study(study, _spatial_worker, workers)
    stats = [rms_error(errors[:, i]) for i in range(len(study.ladder))]
    rms = np.array([s[0] for s in stats])
    ses = np.array([s[1] for s in stats])
    slope, halfwidth = _fit_or_nan(np.array(study.ladder, dtype=float),
                                   rms)
    p = study.problem
    theo = 2.0 * p.hurst.h + p.noise.beta - 1.0
    return ErrorReport(
        resolutions=np.array(study.ladder),
        rms_errors=rms,
        std_errors=ses,
        fitted_slope=-slope,
        slope_confidence_halfwidth=halfwidth,
        theoretical_slope=theo,
        metadata=_study_metadata(study, {"slope_axis": "n_modes",
                                         "slope_sign": "decay order"}),
    )


# ---------------------------------------------------------------------------
# protocol presets


def desk_temporal_study(preset: str, base_seed: int, samples: int = 50,
                        fbm_method: str = "circulant") -> ConvergenceStudy:
    """Desk-scale temporal protocol: M_exact = 2^12, ladder 2^6..2^10, N = 2^6."""
    problem = she_problem(preset, n_modes=2**6, m_steps=2**12,
                          base_seed=base_seed, fbm_method=fbm_method)
    return ConvergenceStudy(axis="temporal", ladder=tuple(2**i for i in
                                                          range(6, 11)),
                            reference_resolution=2**12,
                            fixed_other_axis=2**6, samples=samples,
                            base_seed=base_seed, problem=problem)


def paper_temporal_study(preset: str, base_seed: int, samples: int = 100,
                         fbm_method: str = "circulant") -> ConvergenceStudy:
    """Published protocol: tau_exact = 2^-14, tau = 2^-8..2^-12, N = 2^7."""
    problem = she_problem(preset, n_modes=2**7, m_steps=2**14,
                          base_seed=base_seed, fbm_method=fbm_method)
    return ConvergenceStudy(axis="temporal", ladder=tuple(2**i for i in
                                                          range(8, 13)),
                            reference_resolution=2**14,
                            fixed_other_axis=2**7, samples=samples,
                            base_seed=base_seed, problem=problem)


def desk_spatial_study(preset: str, base_seed: int, samples: int = 50,
                       fbm_method: str = "circulant") -> ConvergenceStudy:
    """Desk-scale spatial protocol: N_exact = 2^9, ladder 2..32, tau = 1/200."""
    problem = she_problem(preset, n_modes=2**9, m_steps=200,
                          base_seed=base_seed, fbm_method=fbm_method)
    return ConvergenceStudy(axis="spatial", ladder=tuple(2**i for i in
                                                         range(1, 6)),
                            reference_resolution=2**9, fixed_other_axis=200,
                            samples=samples, base_seed=base_seed,
                            problem=problem)


def paper_spatial_study(preset: str, base_seed: int, samples: int = 100,
                        fbm_method: str = "circulant") -> ConvergenceStudy:
    """Published protocol: N_exact = 2^12, ladder 2..32, tau = 1/200."""
    problem = she_problem(preset, n_modes=2**12, m_steps=200,
                          base_seed=base_seed, fbm_method=fbm_method)
    return ConvergenceStudy(axis="spatial", ladder=tuple(2**i for i in
                                                         range(1, 6)),
                            reference_resolution=2**12, fixed_other_axis=200,
                            samples=samples, base_seed=base_seed,
                            problem=problem)


# ---------------------------------------------------------------------------
# persistence


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_report(report: ErrorReport, out_dir, basename: str):
    """Write <basename>.csv and <basename>.json under out_dir.

    Contents carry no wall-clock data, so reruns with the same seed are
    byte-identical; timestamps belong to the run manifest.
    """
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{basename}.csv"
    lines = ["resolution,rms_error,std_error"]
    for res, rms, se in zip(report.resolutions, report.rms_errors,
                            report.std_errors):
        lines.append(f"{int(res)},{_fmt(rms)},{_fmt(se)}")
    csv_path.write_text("\n".join(lines) + "\n")

    json_path = out / f"{basename}.json"
    payload = {
        "resolutions": [int(r) for r in report.resolutions],
        "rms_errors": [float(x) for x in report.rms_errors],
        "std_errors": [float(x) for x in report.std_errors],
        "fitted_slope": float(report.fitted_slope),
        "slope_confidence_halfwidth": float(
            report.slope_confidence_halfwidth
        ),
        "theoretical_slope": float(report.theoretical_slope),
        "metadata": report.metadata,
    }
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
