"""Acceptance suite: one test per release criterion, each printing a
pass/fail line in the terminal summary (see conftest).

Statistical checks run at fixed seeds with 3-standard-error tolerances;
runtime budgets are asserted alongside the numerical checks.
"""

import math
import time

import numpy as np
import pytest

from roughfmm import (
    DiscountCurve,
    McConfig,
    RoughKernel,
    SimGrid,
    SmmParams,
    SwapDefinition,
    TenorStructure,
    annuity,
    asymptotic_iv,
    black_put,
    c_recursion,
    forward_swap_rate,
    forward_term_rate,
    freezing_weights,
    hagan_lognormal_iv,
    implied_vol,
    map_fmm_to_smm,
    mc_price_swaption_fmm,
    mc_price_swaption_smm,
    pi_weights,
    simulate_fmm,
    simulate_smm,
    volterra_covariance,
)
from roughfmm.asymptotics import AsymptoticInputs, psi_from_smm
from roughfmm.calibration import (
    CalibrationSettings,
    CorrelationAngles,
    CrnSmmPricer,
    SwaptionQuote,
    SwaptionSurface,
    calibrate_first_step,
    calibrate_second_step,
    hypersphere_to_corr,
    interpolate_rho0,
    separate_tenor_calibrate,
    swap_for,
    synthetic_coterminal_surface,
    synthetic_first_step_surface,
)
from roughfmm.kernel import hybrid_scheme_paths
from tests.conftest import decaying_corr, standard_fmm

pytestmark = pytest.mark.acceptance


def const_curve(level):
    return lambda t: np.full_like(np.asarray(t, dtype=float), level)


@pytest.mark.criterion(1, label="hybrid-scheme covariance matches the analytic kernel")
def test_volterra_covariance_lattice():
    start = time.monotonic()
    grid = SimGrid(1.0, 96)
    n_paths = 100_000
    check_times = [0.25, 0.5, 0.75, 1.0]
    idx = [grid.index_of(t) for t in check_times]
    for case, (hurst, kappa) in enumerate(
        [(h, k) for h in (0.1, 0.2, 0.5) for k in (0.5, 1.5)]
    ):
        kern = RoughKernel(kappa, hurst)
        rng = np.random.default_rng(1000 + case)
        dw = rng.standard_normal((n_paths, grid.n_steps)) * math.sqrt(grid.dt)
        z = rng.standard_normal((n_paths, grid.n_steps))
        y = hybrid_scheme_paths(kern, grid, dw, z)
        for a in range(len(check_times)):
            for b in range(a, len(check_times)):
                ya = y[:, idx[a]] - y[:, idx[a]].mean()
                yb = y[:, idx[b]] - y[:, idx[b]].mean()
                prods = ya * yb
                emp = prods.mean()
                se = prods.std() / math.sqrt(n_paths)
                target = volterra_covariance(kern, check_times[a], check_times[b])
                assert abs(emp - target) < 3.0 * se, (
                    f"H={hurst} kappa={kappa} (s,t)=({check_times[a]},{check_times[b]}): "
                    f"{emp:.5f} vs {target:.5f} (se {se:.5f})"
                )
    assert time.monotonic() - start < 60.0


@pytest.mark.criterion(2, label="forward-measure martingales and the terminal weight")
def test_martingale_suite(flat_curve_5y):
    start = time.monotonic()
    params = standard_fmm(flat_curve_5y, hurst=0.2, kappa=1.0, rho0_level=-0.3)
    mc = McConfig(n_paths=100_000, seed=2024)
    paths = simulate_fmm(params, SimGrid(1.0, 96), mc, obs_times=[0.5, 1.0])
    for t_obs in (0.5, 1.0):
        for j in range(1, 6):
            w = paths.bond_ratio(j, t_obs)
            r = paths.rates[:, paths.obs_index(t_obs), j - 1]
            est = float(np.sum(w * r) / np.sum(w))
            resid = w * (r - est)
            se = resid.std() / math.sqrt(len(w)) / w.mean()
            r0 = params.initial_rates[j - 1]
            assert abs(est - r0) < 3.0 * se, f"j={j}, t={t_obs}: {est} vs {r0}"
    weight = paths.rn_weight(1.0)
    se_w = weight.std() / math.sqrt(len(weight))
    assert abs(weight.mean() - 1.0) < 3.0 * se_w
    assert time.monotonic() - start < 120.0


@pytest.mark.criterion(3, label="swap decomposition identities on random curves")
def test_swap_decomposition_identities():
    start = time.monotonic()
    rng = np.random.default_rng(77)
    for _ in range(1000):
        n = int(rng.integers(3, 9))
        rates = rng.uniform(0.001, 0.09, size=n)
        ts = TenorStructure(np.arange(n + 1.0))
        curve = DiscountCurve(ts, np.concatenate([[1.0], np.cumprod(1.0 / (1.0 + rates))]))
        start_i = int(rng.integers(1, n - 1))
        end_i = int(rng.integers(start_i + 1, n + 1))
        swap = SwapDefinition(start_i, end_i)
        pis = pi_weights(curve, swap)
        cs = c_recursion(curve, swap)
        a0 = annuity(curve, swap)
        s0 = forward_swap_rate(curve, swap)
        rebuilt = np.array(
            [
                curve.tenor.theta(j) * curve.discounts[j] * c / a0
                for j, c in zip(swap.periods, cs)
            ]
        )
        assert np.max(np.abs(rebuilt / pis - 1.0)) <= 1e-12
        fwd = np.array([forward_term_rate(curve, j) for j in swap.periods])
        assert np.all(pis * fwd <= s0 * (1.0 + 1e-12))
    flat = DiscountCurve(TenorStructure(np.arange(7.0)), 1.03 ** -np.arange(7.0))
    swap = SwapDefinition(1, 6)
    assert pi_weights(flat, swap) == pytest.approx(
        freezing_weights(flat, swap), rel=1e-13
    )
    assert time.monotonic() - start < 30.0


@pytest.mark.criterion(4, label="implied-vol round trip at 1e-10 on the lattice")
def test_iv_round_trip_lattice():
    start = time.monotonic()
    checked = 0
    for sigma in (0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0):
        for k in (-1.0, -0.5, -0.2, -0.05, 0.0, 0.05, 0.2, 0.5, 1.0):
            for t in (0.05, 0.25, 1.0, 2.0, 4.0, 10.0):
                v = sigma * math.sqrt(t)
                price = black_put(k, v)
                in_band = max(math.exp(k) - 1.0, 0.0) < price < math.exp(k)
                if not in_band or math.exp(-0.5 * (k / v) ** 2) < 1e-5:
                    continue  # unrepresentable corner in double precision
                assert implied_vol(price, k, t) == pytest.approx(sigma, abs=1e-10)
                checked += 1
    assert checked >= 200
    assert time.monotonic() - start < 30.0


@pytest.mark.criterion(5, label="short-maturity expansion error decays after t^-H scaling")
def test_expansion_convergence_ladder():
    start = time.monotonic()
    hurst = 0.2
    kern = RoughKernel(1.0, hurst)
    vc = const_curve(0.09)
    smm = SmmParams(s0=0.03, kernel=kern, v_curve=vc, rho=-0.5)
    inputs = AsymptoticInputs(v_curve=vc, psi=psi_from_smm(smm), kernel=kern)
    ladder = (0.4, 0.2, 0.1, 0.05)
    resid = {+1: [], -1: []}
    errs = {+1: [], -1: []}
    for t in ladder:
        grid = SimGrid(t, max(96, math.ceil(96 / t)))
        mc = McConfig(n_paths=1_000_000, seed=777, control_variate=True)
        paths = simulate_smm(smm, grid, mc, obs_times=[t])
        for sgn in (+1, -1):
            k = sgn * math.sqrt(t)
            res = mc_price_swaption_smm(smm, k, t, grid, mc, paths=paths)
            target = float(asymptotic_iv(inputs, k, t))
            resid[sgn].append(abs(res.implied_vol - target) * t ** (-hurst))
            errs[sgn].append(res.iv_std_error * t ** (-hurst))
    for sgn in (+1, -1):
        for i in range(len(ladder) - 1):
            tol = 3.0 * math.hypot(errs[sgn][i], errs[sgn][i + 1])
            assert resid[sgn][i + 1] <= resid[sgn][i] + tol, (
                f"sign {sgn}: scaled residuals {resid[sgn]} (tol {tol})"
            )
    assert time.monotonic() - start < 600.0


@pytest.mark.criterion(6, label="rate model and mapped swap model converge at the money")
def test_fmm_smm_closeness_ladder():
    start = time.monotonic()
    ts = TenorStructure([0, 1, 2, 3, 4])
    curve = DiscountCurve.from_flat_rate(ts, 0.03)
    n = ts.n_periods
    rho0 = np.array([-0.3, -0.35, -0.4, -0.45])
    params_corr = decaying_corr(n, rho0, decay=0.92)
    from roughfmm import FmmParams

    params = FmmParams(
        tenor=ts,
        initial_rates=tuple(curve.forward_rates()),
        kernel=RoughKernel(1.0, 0.2),
        alphas=(0.3,) * n,
        corr=params_corr,
    )
    swap = SwapDefinition(1, 4)
    s0 = forward_swap_rate(curve, swap)
    mapped = map_fmm_to_smm(params, curve, swap)
    gaps, joint_se = [], []
    for t in (0.4, 0.2, 0.1, 0.05):
        grid = SimGrid(t, max(96, math.ceil(96 / t)))
        mc = McConfig(n_paths=200_000, seed=99)
        fmm_paths = simulate_fmm(params, grid, mc, obs_times=[t])
        f_res = mc_price_swaption_fmm(fmm_paths, curve, swap, s0, t)
        s_res = mc_price_swaption_smm(mapped, 0.0, t, grid, mc)
        gaps.append(abs(f_res.implied_vol - s_res.implied_vol))
        joint_se.append(math.hypot(f_res.iv_std_error, s_res.iv_std_error))
    # shrink along the ladder within Monte Carlo resolution
    for i in range(len(gaps) - 1):
        tol = 3.0 * math.hypot(joint_se[i], joint_se[i + 1])
        assert gaps[i + 1] <= gaps[i] + tol, f"gaps {gaps}"
    # and faster than t^H: the scaled gap must not grow beyond its noise
    # band (folding |fmm - smm| inflates small gaps, hence summed SEs)
    hurst = 0.2
    ladder = (0.4, 0.2, 0.1, 0.05)
    scaled = [g * t ** (-hurst) for g, t in zip(gaps, ladder)]
    s_se = [s * t ** (-hurst) for s, t in zip(joint_se, ladder)]
    for i in range(len(scaled) - 1):
        assert scaled[i + 1] <= scaled[i] + 3.0 * (s_se[i] + s_se[i + 1]), (
            f"scaled gaps {scaled}, se {s_se}"
        )
    # paper-level closeness at t = 0.1: 0.3 vol points
    assert gaps[2] <= max(3.0 * joint_se[2], 0.003), f"gap at 0.1y: {gaps[2]}"
    assert time.monotonic() - start < 900.0


@pytest.mark.criterion(7, label="Markovian limit agrees with the SABR smile formula")
def test_half_hurst_sabr_limit():
    start = time.monotonic()
    for kappa, t in ((0.6, 0.25), (1.0, 0.09), (1.5, 0.04)):
        assert kappa * math.sqrt(t) <= 0.3 + 1e-12
        v0, rho = 0.09, -0.4
        kern = RoughKernel(kappa, 0.5)
        c = kappa**2 / 4.0
        vc = lambda u, c=c: v0 * np.exp(c * np.asarray(u, dtype=float))
        smm = SmmParams(s0=0.03, kernel=kern, v_curve=vc, rho=rho)
        grid = SimGrid(t, max(96, math.ceil(96 / t)))
        mc = McConfig(n_paths=400_000, seed=1234, control_variate=True)
        res = mc_price_swaption_smm(smm, 0.0, t, grid, mc)
        # the variance dynamics match lognormal SABR with vol-of-vol kappa/2
        target = float(hagan_lognormal_iv(math.sqrt(v0), kappa / 2.0, rho, t, 0.0))
        assert abs(res.implied_vol - target) <= 0.002, (
            f"kappa={kappa}, t={t}: mc {res.implied_vol:.5f} vs hagan {target:.5f}"
        )
    assert time.monotonic() - start < 300.0


@pytest.mark.criterion(8, label="calibration round trips across five seeds")
def test_calibration_round_trips():
    start = time.monotonic()
    ts = TenorStructure([0, 1, 2, 3, 4, 5])
    curve = DiscountCurve.from_flat_rate(ts, 0.03)
    n = ts.n_periods
    hurst = 0.2
    kappa_true = 1.2
    knots_true = {2: -0.6, 3: -0.5, 5: -0.45}
    rho0_true = interpolate_rho0(knots_true, n)
    alphas_true = np.array([0.30, 0.30, 0.29, 0.28, 0.26])
    offsets = [-0.02, -0.01, -0.005, -0.0025, 0.0, 0.0025, 0.005, 0.01, 0.02]

    angles_true = CorrelationAngles.standard(n + 1, rho0_true)
    for m in range(3, n + 1):
        for c in angles_true.free_row_indices(m):
            angles_true.omega[m, c] = 0.45 + 0.08 * m + 0.1 * c

    for seed in (11, 22, 33, 44, 55):
        settings = CalibrationSettings(
            n_paths=8192, steps_per_year=32, seed=seed, max_iter=250, n_restarts=2
        )
        surface = synthetic_first_step_surface(
            curve, hurst, kappa_true, alphas_true, rho0_true,
            smile_expiries=[1.0, 2.0, 3.0, 4.0], offsets=offsets, settings=settings,
        )
        first = calibrate_first_step(surface, hurst, curve, [2, 3, 5], settings)
        assert first.kappa == pytest.approx(kappa_true, rel=0.02), f"seed {seed}"
        for j in range(2, n + 1):
            assert first.alphas[j - 1] == pytest.approx(
                alphas_true[j - 1], rel=0.01
            ), f"seed {seed}, alpha_{j}"
        for i, v in knots_true.items():
            assert abs(first.knots[i] - v) <= 0.05, f"seed {seed}, knot {i}"

        corr_true = hypersphere_to_corr(angles_true)
        quotes = synthetic_coterminal_surface(curve, first, corr_true, settings)
        second = calibrate_second_step(quotes, first, curve, settings)
        assert np.max(np.abs(second.corr - corr_true)) <= 0.05, f"seed {seed}"
    assert time.monotonic() - start < 1800.0


@pytest.mark.criterion(9, label="qualitative market patterns on synthetic data")
def test_synthetic_trend_reproduction():
    start = time.monotonic()
    # (a) separately calibrated vol-of-vol spreads narrow as H decreases
    ts = TenorStructure(np.arange(7.0))
    curve = DiscountCurve.from_flat_rate(ts, 0.03)
    settings = CalibrationSettings(n_paths=8192, steps_per_year=48, seed=4242,
                                   max_iter=200, n_restarts=2)
    h_true, kappa_gen, rho_gen, v0_gen = 0.15, 1.3, -0.5, 0.09
    offsets = [-0.01, -0.005, -0.0025, 0.0, 0.0025, 0.005, 0.01]
    gen_pricer = CrnSmmPricer(h_true, settings)
    smiles = {}
    for expiry in (1.0, 3.0, 5.0):
        swap = swap_for(curve, expiry, 1.0)
        s0 = forward_swap_rate(curve, swap)
        ks = np.array([math.log((s0 + o) / s0) for o in offsets])
        c = kappa_gen**2 / (8.0 * h_true)
        d = lambda u, c=c: np.exp(c * np.asarray(u, dtype=float) ** (2.0 * h_true))
        ivs = gen_pricer.smile_ivs(kappa_gen, d, rho_gen, math.sqrt(v0_gen), expiry, ks)
        smiles[expiry] = [
            SwaptionQuote(expiry, 1.0, o, float(iv)) for o, iv in zip(offsets, ivs)
        ]
    ranges = {}
    for h_fit in (0.5, 0.1):
        kappas = [
            separate_tenor_calibrate(smiles[e], h_fit, curve, settings).kappa
            for e in (1.0, 3.0, 5.0)
        ]
        ranges[h_fit] = max(kappas) - min(kappas)
    assert ranges[0.1] < ranges[0.5], f"kappa ranges {ranges}"

    # (b) correlations estimated at H=0.2 dominate those at H=0.5 on the
    # same quotes generated in a low-H world
    ts5 = TenorStructure([0, 1, 2, 3, 4, 5])
    curve5 = DiscountCurve.from_flat_rate(ts5, 0.03)
    n5 = ts5.n_periods
    rho0_true = interpolate_rho0({2: -0.55, 3: -0.5, 5: -0.45}, n5)
    alphas_true = np.array([0.30, 0.30, 0.29, 0.28, 0.26])
    gen_settings = CalibrationSettings(n_paths=8192, steps_per_year=32, seed=515,
                                       max_iter=250, n_restarts=2)
    surface = synthetic_first_step_surface(
        curve5, 0.2, 1.2, alphas_true, rho0_true,
        smile_expiries=[1.0, 2.0, 3.0, 4.0],
        offsets=[-0.01, -0.005, 0.0, 0.005, 0.01], settings=gen_settings,
    )
    angles_true = CorrelationAngles.standard(n5 + 1, rho0_true)
    for m in range(3, n5 + 1):
        for c in angles_true.free_row_indices(m):
            angles_true.omega[m, c] = 0.5 + 0.06 * m + 0.08 * c
    corr_true = hypersphere_to_corr(angles_true)
    first_gen = calibrate_first_step(surface, 0.2, curve5, [2, 3, 5], gen_settings)
    quotes = synthetic_coterminal_surface(curve5, first_gen, corr_true, gen_settings)

    fitted = {}
    for h_fit in (0.2, 0.5):
        first = calibrate_first_step(surface, h_fit, curve5, [2, 3, 5], gen_settings)
        second = calibrate_second_step(quotes, first, curve5, gen_settings)
        fitted[h_fit] = second.corr[1:, 1:]
    low, high = fitted[0.2], fitted[0.5]
    off_diag = ~np.eye(n5, dtype=bool)
    assert np.all(low[off_diag] >= high[off_diag] - 1e-9), (
        f"H=0.2 block:\n{low}\nH=0.5 block:\n{high}"
    )
    assert time.monotonic() - start < 1500.0


@pytest.mark.criterion(10, label="CLI output is byte-identical across runs and threads")
def test_cli_determinism(tmp_path):
    from roughfmm.cli import main
    from roughfmm.fileio import write_curve_csv, write_keyvalue, write_surface_csv

    start = time.monotonic()
    ts = TenorStructure([0, 1, 2, 3, 4])
    curve = DiscountCurve.from_flat_rate(ts, 0.03)
    curve_path = tmp_path / "curve.csv"
    write_curve_csv(curve_path, curve)
    params_path = tmp_path / "params.txt"
    write_keyvalue(
        params_path,
        {
            "tenor_dates": [0, 1, 2, 3, 4],
            "kappa": 1.0,
            "hurst": 0.2,
            "alphas": [0.3, 0.3, 0.3, 0.3],
            "rho0": [-0.3, -0.3, -0.35, -0.4],
            "eta": "lognormal",
        },
    )
    surface_path = tmp_path / "surface.csv"
    write_surface_csv(
        surface_path,
        SwaptionSurface(
            quotes=[
                SwaptionQuote(1.0, 2.0, o, 0.30 - 2.0 * o)
                for o in (-0.005, 0.0, 0.005)
            ]
            + [SwaptionQuote(1.0, 1.0, o, 0.30 - 2.0 * o) for o in (-0.005, 0.0, 0.005)]
            + [
                SwaptionQuote(2.0, 1.0, 0.0, 0.29),
                SwaptionQuote(3.0, 1.0, 0.0, 0.28),
                SwaptionQuote(1.0, 3.0, 0.0, 0.28),
                SwaptionQuote(2.0, 2.0, 0.0, 0.28),
            ]
        ),
    )
    configs = {
        "price": {
            "curve": curve_path, "params": params_path,
            "expiries": [1.0], "tenors": [2.0],
            "strike_offsets": [-0.005, 0.0, 0.005],
            "n_paths": 8000, "steps_per_year": 12, "seed": 7,
        },
        "simulate": {
            "curve": curve_path, "params": params_path,
            "horizon": 1.0, "n_paths": 8000, "steps_per_year": 12, "seed": 7,
        },
        "map-smm": {
            "curve": curve_path, "params": params_path, "expiry": 1.0, "tenor": 2.0,
        },
        "smile-report": {
            "curve": curve_path, "params": params_path, "surface": surface_path,
            "n_paths": 8000, "steps_per_year": 12, "seed": 7,
        },
        "calibrate": {
            "curve": curve_path, "surface": surface_path,
            "hurst": 0.2, "knot_indices": [2, 4],
            "calib_paths": 2048, "calib_steps_per_year": 12,
            "max_iter": 40, "restarts": 1, "seed": 7,
        },
    }
    for command, cfg_items in configs.items():
        cfg = tmp_path / f"cfg_{command}.txt"
        write_keyvalue(cfg, cfg_items)
        blobs = []
        for run, threads in (("r1", "1"), ("r2", "2"), ("r3", "1")):
            out = tmp_path / f"{command}_{run}"
            code = main(
                [command, "--config", str(cfg), "--out", str(out), "--threads", threads]
            )
            assert code == 0, command
            blob = {
                p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()
            }
            blobs.append(blob)
        assert blobs[0] == blobs[1] == blobs[2], f"{command} output varies"
    assert time.monotonic() - start < 300.0
