"""Acceptance criteria, one test per criterion, at the stated tolerances.

Each test prints one `[PASS]`/`[FAIL]` line. Criteria 5 and 6 are
implemented exactly as stated (desk-scale protocols, pinned tolerances);
exact second-moment analysis of the linear scheme shows those protocols
cannot produce the stated slopes with an exact fBm sampler, so the two
tests fail honestly. The mechanism and the resolved-regime slopes the
implementation does recover are documented in README.md ("Desk-scale
protocols vs asymptotic rates") and re-derived by
test_resolved_regime_rates below.
"""

import math
import time

import numpy as np

from fracspde import fbm, verify
from fracspde.experiments import (
    ConvergenceStudy,
    desk_spatial_study,
    desk_temporal_study,
    run_spatial_study,
    run_temporal_study,
    she_problem,
    write_report,
)
from fracspde.fbm import (
    HurstParameter,
    IncrementGrid,
    aggregate_cylindrical,
    generate_cylindrical_fbm,
    increment_covariance_matrix,
)
from fracspde.rng import SAMPLE_STREAM, derive_seed
from fracspde.solver import (
    linear_mild_reference,
    restrict_config,
    solve_endpoint,
)

H_GRID = [0.55, 0.75, 0.95]
H = HurstParameter(0.75)


def _report(criterion: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"[{status}] {criterion}: {detail}")


def _batch_unit_fgn(method: str, m: int, h: HurstParameter, n_samples: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Vectorized draw of n_samples unit-spacing fGn vectors.

    Batch form of the and same exact synthesis maps the generators use
    (verified against each other in test_fbm); batching keeps criterion
    1 inside its runtime budget.
    """
    if method == "cholesky":
        factor = fbm._cholesky_factor(m, h)
        return rng.standard_normal((n_samples, m)) @ factor.T
    sqrt_eigs = fbm._circulant_sqrt_eigs(m, h)
    m2 = 2 * m
    z = rng.standard_normal((n_samples, m2))
    w = np.zeros((n_samples, m2), dtype=complex)
    w[:, 0] = sqrt_eigs[0] * z[:, 0] / math.sqrt(m2)
    w[:, m] = sqrt_eigs[m] * z[:, 1] / math.sqrt(m2)
    amp = sqrt_eigs[1:m] / math.sqrt(2 * m2)
    head = amp * (z[:, 2::2] + 1j * z[:, 3::2])
    w[:, 1:m] = head
    w[:, m + 1:] = np.conj(head[:, ::-1])
    return np.fft.fft(w, axis=1).real[:, :m]


def test_criterion_1_fbm_exactness():
    """64-step sample covariance vs analytic, both methods, 3 H values.

    Entrywise 3-standard-error agreement with a multiple-comparison
    correction: 4096 correlated z-scores make ~11 exceedances of 3 SE
    certain for a perfect sampler and cluster up to ~60 on unlucky
    seeds, so the gates are the empirically calibrated caps (count <=
    80, max |z| <= 6, mean z^2 <= 4). A sampler whose H is off by just
    0.01 lands at (252, 21.6, 8.1): an order of magnitude beyond all
    three.
    """
    started = time.monotonic()
    n_samples = 100000
    m = 64
    worst = {"exceed": 0, "maxz": 0.0, "meansq": 0.0}
    grid = IncrementGrid(m_steps=m, tau=1.0 / m)
    for h_val in H_GRID:
        h = HurstParameter(h_val)
        target = increment_covariance_matrix(grid, h)
        se = np.sqrt(
            (np.outer(np.diag(target), np.diag(target)) + target**2)
            / n_samples
        )
        for method_id, method in enumerate(("cholesky", "circulant")):
            rng = np.random.default_rng(
                derive_seed(1001, method_id, int(h_val * 100))
            )
            draws = grid.tau**h.h * _batch_unit_fgn(method, m, h, n_samples,
                                                    rng)
            sample_cov = draws.T @ draws / n_samples
            z = np.abs(sample_cov - target) / se
            worst["exceed"] = max(worst["exceed"], int((z > 3.0).sum()))
            worst["maxz"] = max(worst["maxz"], float(z.max()))
            worst["meansq"] = max(worst["meansq"], float((z**2).mean()))
    elapsed = time.monotonic() - started
    passed = (worst["exceed"] <= 80 and worst["maxz"] < 6.0
              and worst["meansq"] < 4.0 and elapsed <= 120)
    _report("criterion 1 (fBm exactness)", passed,
            f"worst exceedances {worst['exceed']}/4096 (allow 80), "
            f"max z {worst['maxz']:.2f} (allow 6), "
            f"mean z^2 {worst['meansq']:.2f} (allow 4), {elapsed:.0f}s")
    assert worst["exceed"] <= 80
    assert worst["maxz"] < 6.0
    assert worst["meansq"] < 4.0
    assert elapsed <= 120


def test_criterion_2_ito_isometry():
    """MC isometry LHS within 3 sigma of the analytic RHS, 5 integrands."""
    started = time.monotonic()
    rng = np.random.default_rng(912)
    grid = IncrementGrid(m_steps=6, tau=0.25)
    worst_z = 0.0
    for trial in range(5):
        psis = [rng.standard_normal((4, 3)) for _ in range(grid.m_steps)]
        check = verify.check_ito_isometry(psis, grid, H, samples=10000,
                                          seed=derive_seed(913, trial))
        worst_z = max(worst_z, abs(check.mc_lhs - check.analytic_rhs)
                      / check.std_error)
    elapsed = time.monotonic() - started
    passed = worst_z <= 3.0 and elapsed <= 60
    _report("criterion 2 (Ito isometry)", passed,
            f"worst |z| {worst_z:.2f} (allow 3), {elapsed:.0f}s")
    assert worst_z <= 3.0
    assert elapsed <= 60


def test_criterion_3_phi_cells():
    """Cell integrals: quadrature at 1e-6 relative, exact diagonal,
    and the off-diagonal bound 0.5 max(i,j)^{2H-1}."""
    started = time.monotonic()
    worst_rel = 0.0
    bound_ok = True
    diagonal_ok = True
    for h_val in H_GRID:
        h = HurstParameter(h_val)
        diagonal_ok &= verify.check_phi_cell_integral(2, 2, h).analytic == 1.0
        for k in range(1, 11):
            cell = verify.check_phi_cell_integral(1 + k, 1, h)
            worst_rel = max(worst_rel, abs(cell.quadrature - cell.analytic)
                            / cell.analytic)
            bound_ok &= cell.analytic <= cell.bound + 1e-15
    elapsed = time.monotonic() - started
    passed = worst_rel <= 1e-6 and bound_ok and diagonal_ok and elapsed <= 10
    _report("criterion 3 (phi cell integrals)", passed,
            f"worst quadrature rel err {worst_rel:.2e} (allow 1e-6), "
            f"bound holds {bound_ok}, diagonal exact {diagonal_ok}, "
            f"{elapsed:.1f}s")
    assert diagonal_ok
    assert worst_rel <= 1e-6
    assert bound_ok
    assert elapsed <= 10


def test_criterion_4_lambda_phi_plateau():
    """Scaled integral non-increasing up to factor 2 across lambda decades.

    Asserted at unit horizon t = 1, where every grid point sits in the
    plateau regime (lambda*t >= 10); boundedness across all tested t is
    covered by the op-level tests and the verify CLI suite.
    """
    started = time.monotonic()
    worst_ratio = 0.0
    for k1 in (0, 1):
        for k2 in (0, 1):
            vals = [verify.check_lambda_phi_bound(lam, 1.0, k1, k2, H)
                    for lam in (10.0, 100.0, 1000.0, 10000.0)]
            for a, b in zip(vals, vals[1:]):
                worst_ratio = max(worst_ratio, b / a)
    elapsed = time.monotonic() - started
    passed = worst_ratio <= 2.0 and elapsed <= 30
    _report("criterion 4 (lambda-phi integral)", passed,
            f"worst decade ratio {worst_ratio:.4f} (allow 2), "
            f"{elapsed:.1f}s")
    assert worst_ratio <= 2.0
    assert elapsed <= 30


def test_criterion_5_temporal_convergence():
    """Desk temporal protocol, slopes 0.75 +/- 0.10 and 0.50 +/- 0.10.

    Implemented exactly as stated. The exact linear oracle
    (verify.expected_temporal_rms_errors) shows the pinned protocol
    yields ~0.96 (trace) and ~0.63 (identity): unresolved-mode damping
    of the implicit Euler step, the log^2 tail of the trace-class Q and
    the reference ratio of 4 at the top rung all steepen the measured
    slope. See README "Desk-scale protocols vs asymptotic rates".
    """
    started = time.monotonic()
    slopes = {}
    oracle = {}
    for preset in ("she-trace", "she-identity"):
        study = desk_temporal_study(preset, base_seed=20240801)
        report = run_temporal_study(study)
        slopes[preset] = report.fitted_slope
        linear = she_problem(preset, n_modes=2**6, m_steps=2**12,
                             base_seed=0, with_nonlinearity=False)
        errs = verify.expected_temporal_rms_errors(linear,
                                                   list(study.ladder))
        taus = 1.0 / np.array(study.ladder, dtype=float)
        oracle[preset] = verify.fit_power_law(taus, errs)
    elapsed = time.monotonic() - started
    ok_trace = abs(slopes["she-trace"] - 0.75) <= 0.10
    ok_identity = abs(slopes["she-identity"] - 0.50) <= 0.10
    passed = ok_trace and ok_identity and elapsed <= 600
    _report(
        "criterion 5 (temporal convergence)", passed,
        f"trace slope {slopes['she-trace']:.4f} (want 0.75+-0.10, exact "
        f"linear expectation {oracle['she-trace']:.4f}), identity slope "
        f"{slopes['she-identity']:.4f} (want 0.50+-0.10, expectation "
        f"{oracle['she-identity']:.4f}), {elapsed:.0f}s",
    )
    assert elapsed <= 600
    assert ok_trace, (
        f"trace slope {slopes['she-trace']:.4f} outside 0.75+-0.10; the "
        f"exact F=0 expectation for this pinned protocol is "
        f"{oracle['she-trace']:.4f}, so the protocol, not the sampler or "
        f"scheme, sets this value (README: Desk-scale protocols vs "
        f"asymptotic rates)"
    )
    assert ok_identity, (
        f"identity slope {slopes['she-identity']:.4f} outside "
        f"0.50+-0.10; exact F=0 expectation is "
        f"{oracle['she-identity']:.4f} (README: Desk-scale protocols vs "
        f"asymptotic rates)"
    )


def test_criterion_6_spatial_convergence():
    """Desk spatial protocol, slopes in N of 1.5 +/- 0.15 and 1.0 +/- 0.15.

    Implemented exactly as stated. At tau = 1/200 the implicit Euler
    step damps every mode with tau*lambda_n > 1 (n >= 5), so the
    reference's noise energy above the ladder decays ~n^-4 q_n instead
    of the undamped ~n^-3 q_n, and the exact expectation of this
    protocol is ~2.10 (trace) / ~1.25 (identity). See README.
    """
    started = time.monotonic()
    slopes = {}
    oracle = {}
    for preset in ("she-trace", "she-identity"):
        study = desk_spatial_study(preset, base_seed=20240802)
        report = run_spatial_study(study)
        slopes[preset] = report.fitted_slope
        linear = she_problem(preset, n_modes=2**9, m_steps=200,
                             base_seed=0, with_nonlinearity=False)
        errs = verify.expected_spatial_rms_errors(linear, list(study.ladder))
        oracle[preset] = -verify.fit_power_law(
            np.array(study.ladder, dtype=float), errs
        )
    elapsed = time.monotonic() - started
    ok_trace = abs(slopes["she-trace"] - 1.5) <= 0.15
    ok_identity = abs(slopes["she-identity"] - 1.0) <= 0.15
    passed = ok_trace and ok_identity and elapsed <= 600
    _report(
        "criterion 6 (spatial convergence)", passed,
        f"trace slope {slopes['she-trace']:.4f} (want 1.5+-0.15, exact "
        f"linear expectation {oracle['she-trace']:.4f}), identity slope "
        f"{slopes['she-identity']:.4f} (want 1.0+-0.15, expectation "
        f"{oracle['she-identity']:.4f}), {elapsed:.0f}s",
    )
    assert elapsed <= 600
    assert ok_trace, (
        f"trace slope {slopes['she-trace']:.4f} outside 1.5+-0.15; exact "
        f"F=0 expectation for this pinned protocol is "
        f"{oracle['she-trace']:.4f} (README: Desk-scale protocols vs "
        f"asymptotic rates)"
    )
    assert ok_identity, (
        f"identity slope {slopes['she-identity']:.4f} outside 1.0+-0.15; "
        f"exact F=0 expectation is {oracle['she-identity']:.4f} (README: "
        f"Desk-scale protocols vs asymptotic rates)"
    )


def test_criterion_7_regularity_sharpness():
    """Hölder exponent at delta = 0 within +/- 0.1; Sobolev ladder bounded
    below / growing above the threshold 2H + beta - 1.

    The sharpness sides are discriminated against the exact F = 0
    midpoint: growth(threshold + 0.1) must exceed the geometric mean of
    the two analytic growth ratios, growth(threshold - 0.1) must stay
    below it (the falsifiable desk-scale rendering of bounded/divergent,
    since a 5-octave ladder shows finite growth on both sides).
    """
    started = time.monotonic()
    holder_ok = True
    details = []
    for preset, theory in (("she-trace", 0.75), ("she-identity", 0.5)):
        problem = she_problem(preset, n_modes=64, m_steps=2**14,
                              base_seed=314159)
        rep = verify.estimate_time_regularity(problem, delta=0.0,
                                              lag_steps=(8, 16, 32),
                                              samples=192)
        ok = abs(rep.fitted_exponent - theory) <= 0.1
        holder_ok &= ok
        details.append(f"{preset} Hölder {rep.fitted_exponent:.3f} "
                       f"(want {theory}+-0.1)")

    ladder = (2, 4, 8, 16, 32)
    sharp_ok = True
    for preset, thresh in (("she-trace", 1.5), ("she-identity", 1.0)):
        problem = she_problem(preset, n_modes=32, m_steps=2**14,
                              base_seed=271828)
        linear = she_problem(preset, n_modes=32, m_steps=2**14, base_seed=0,
                             with_nonlinearity=False)
        deltas = (thresh - 0.1, thresh + 0.1)
        reports = verify.estimate_space_regularity(problem, n_ladder=ladder,
                                                   deltas=deltas,
                                                   samples=128)
        analytic = []
        for delta in deltas:
            lo = verify.expected_sobolev_rms(
                restrict_config(linear, n_modes=ladder[0]), delta
            )
            hi = verify.expected_sobolev_rms(
                restrict_config(linear, n_modes=ladder[-1]), delta
            )
            analytic.append(hi / lo)
        midpoint = math.sqrt(analytic[0] * analytic[1])
        below, above = (r.growth_ratio() for r in reports)
        ok = below < midpoint < above
        sharp_ok &= ok
        details.append(f"{preset} ladder growth {below:.3f} < "
                       f"{midpoint:.3f} < {above:.3f}: {ok}")
    elapsed = time.monotonic() - started
    passed = holder_ok and sharp_ok and elapsed <= 600
    _report("criterion 7 (regularity sharpness)", passed,
            "; ".join(details) + f", {elapsed:.0f}s")
    assert holder_ok
    assert sharp_ok
    assert elapsed <= 600


def test_criterion_8_linear_oracle():
    """Scheme vs mild-solution oracle (64x finer grid, coupled noise), and
    the closed-form iterated-sum identity to 1e-12 on N <= 8, M <= 16."""
    started = time.monotonic()
    # closed-form identity
    ident_ok = True
    for n, m in ((4, 8), (8, 16)):
        problem = she_problem("she-identity", n_modes=n, m_steps=m,
                              base_seed=61, with_nonlinearity=False)
        sample = generate_cylindrical_fbm(n, problem.grid(), H, 61)
        end = solve_endpoint(problem, sample).coeffs
        r = 1.0 / (1.0 + problem.tau * problem.operator.eigenvalues)
        expected = r ** float(m) * problem.initial.coeffs
        for i in range(m):
            expected = expected + r ** float(m - i) * sample.values[:, i]
        ident_ok &= bool(
            np.all(np.abs(end - expected)
                   <= 1e-12 * np.maximum(np.abs(expected), 1e-30))
        )

    # scheme vs mild reference with coupled noise
    n_modes = 16
    fine_steps = 2**16
    ladder = [2**8, 2**9, 2**10]
    samples = 32
    match_ok = True
    slope_ok = True
    details = []
    for preset in ("she-trace", "she-identity"):
        problem = she_problem(preset, n_modes=n_modes, m_steps=fine_steps,
                              base_seed=777, with_nonlinearity=False)
        sq = np.zeros((samples, len(ladder)))
        for s in range(samples):
            fine = generate_cylindrical_fbm(
                n_modes, problem.grid(), H,
                derive_seed(777, SAMPLE_STREAM, s)
            )
            mild = linear_mild_reference(problem, fine).coeffs
            for i, m in enumerate(ladder):
                coarse_noise = aggregate_cylindrical(fine, fine_steps // m)
                end = solve_endpoint(restrict_config(problem, m_steps=m),
                                     coarse_noise).coeffs
                sq[s, i] = float(np.sum((mild - end) ** 2))
        mc_ms = sq.mean(axis=0)
        se_ms = sq.std(axis=0, ddof=1) / math.sqrt(samples)
        oracle = verify.expected_mild_rms_errors(problem, ladder)
        match_ok &= bool(np.all(np.abs(mc_ms - oracle**2) <= 3.5 * se_ms))
        rms = np.sqrt(mc_ms)
        slope = verify.fit_power_law(1.0 / np.array(ladder, float), rms)
        theo = (2 * 0.75 + problem.noise.beta - 1.0) / 2.0
        slope_ok &= slope >= theo - 0.15
        details.append(f"{preset} slope {slope:.3f} (proven rate {theo}), "
                       f"oracle match {match_ok}")
    elapsed = time.monotonic() - started
    passed = ident_ok and match_ok and slope_ok and elapsed <= 120
    _report("criterion 8 (linear oracle equivalence)", passed,
            f"iterated-sum identity to 1e-12: {ident_ok}; "
            + "; ".join(details) + f", {elapsed:.0f}s")
    assert ident_ok
    assert match_ok
    assert slope_ok
    assert elapsed <= 120


def test_criterion_9_determinism(tmp_path):
    """Byte-identical report files for fixed seeds across worker counts.

    Runs the same study/estimator code paths as criteria 5-7 at reduced
    sample counts (rerunning the full desk protocols twice would double
    their 10-minute budgets; the worker-count independence being tested
    lives entirely in the seeding and reduction code exercised here).
    """
    started = time.monotonic()
    problem = she_problem("she-trace", n_modes=8, m_steps=2**9, base_seed=12)
    temporal = ConvergenceStudy(axis="temporal", ladder=(64, 128, 256),
                                reference_resolution=2**9,
                                fixed_other_axis=8, samples=8, base_seed=12,
                                problem=problem)
    sp_problem = she_problem("she-identity", n_modes=64, m_steps=50,
                             base_seed=13)
    spatial = ConvergenceStudy(axis="spatial", ladder=(2, 4, 8),
                               reference_resolution=64, fixed_other_axis=50,
                               samples=8, base_seed=13, problem=sp_problem)
    same = True
    for name, study, runner in (("t", temporal, run_temporal_study),
                                ("s", spatial, run_spatial_study)):
        paths = {}
        for workers in (1, 3):
            report = runner(study, workers=workers)
            paths[workers] = write_report(report, tmp_path / str(workers),
                                          f"{name}_report")
        for kind in (0, 1):
            same &= (paths[1][kind].read_bytes()
                     == paths[3][kind].read_bytes())

    reg_problem = she_problem("she-trace", n_modes=16, m_steps=256,
                              base_seed=14)
    reg = {
        w: verify.estimate_time_regularity(reg_problem, delta=0.0,
                                           lag_steps=(8, 16, 32),
                                           samples=8, workers=w)
        for w in (1, 3)
    }
    same &= bool(np.array_equal(reg[1].rms_differences,
                                reg[3].rms_differences))
    same &= reg[1].fitted_exponent == reg[3].fitted_exponent

    sharp = {
        w: verify.estimate_space_regularity(
            she_problem("she-identity", n_modes=16, m_steps=128,
                        base_seed=15),
            n_ladder=(2, 4, 8), deltas=(0.9,), samples=8, workers=w,
        )[0]
        for w in (1, 3)
    }
    same &= bool(np.array_equal(sharp[1].rms_norms, sharp[3].rms_norms))

    elapsed = time.monotonic() - started
    passed = same and elapsed <= 120
    _report("criterion 9 (determinism)", passed,
            f"reports byte-identical across worker counts: {same}, "
            f"{elapsed:.0f}s")
    assert same
    assert elapsed <= 120


def test_resolved_regime_rates():
    """Supplementary (beyond the nine criteria): the theoretical orders do
    emerge from this implementation once the protocol resolves them.

    Exact expectations via the linear oracle: identity-noise temporal
    slope with a 64x reference ratio, and identity-noise spatial slope
    with tau fine enough that the ladder modes are undamped, both land
    on their theoretical values. The trace-class Q carries an intrinsic
    ~1/log(N) excess in any desk-size window (its n log^2 n tail), which
    is why no protocol choice makes criterion 5/6's trace numbers reach
    0.75/1.5 in these ranges.
    """
    started = time.monotonic()
    temporal = she_problem("she-identity", n_modes=64, m_steps=2**16,
                           base_seed=0, with_nonlinearity=False)
    ladder = [2**6, 2**7, 2**8, 2**9, 2**10]
    errs = verify.expected_temporal_rms_errors(temporal, ladder)
    slope_t = verify.fit_power_law(1.0 / np.array(ladder, float), errs)

    spatial = she_problem("she-identity", n_modes=128, m_steps=2**12,
                          base_seed=0, with_nonlinearity=False)
    n_ladder = [2, 4, 8, 16]
    errs_s = verify.expected_spatial_rms_errors(spatial, n_ladder)
    slope_s = -verify.fit_power_law(np.array(n_ladder, float), errs_s)
    elapsed = time.monotonic() - started
    passed = abs(slope_t - 0.5) <= 0.1 and abs(slope_s - 1.0) <= 0.15
    _report("resolved-regime rates (supplementary)", passed,
            f"identity temporal {slope_t:.4f} (theory 0.5), identity "
            f"spatial {slope_s:.4f} (theory 1.0), {elapsed:.0f}s")
    assert abs(slope_t - 0.5) <= 0.1
    assert abs(slope_s - 1.0) <= 0.15
