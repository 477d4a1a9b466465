import numpy as np
import pytest
from scipy.integrate import quad

from roughfmm import (
    DiscountCurve,
    EtaSpec,
    FmmParams,
    McConfig,
    RoughKernel,
    SimGrid,
    SwapDefinition,
    TenorStructure,
    drift_qstar_coefficients,
    kernel_gamma_integral,
    simulate_fmm,
    xi_curve,
)
from tests.conftest import decaying_corr, standard_fmm


class TestEtaSpec:
    def test_lognormal(self):
        eta = EtaSpec()
        assert eta.value(0.03) == pytest.approx(0.03)
        assert eta.local_factor(0.03) == 1.0

    def test_shifted_power(self):
        eta = EtaSpec("shifted_power", beta=0.7, shift=0.02)
        assert eta.value(0.03) == pytest.approx(0.05**0.7)
        assert eta.local_factor(0.03) == pytest.approx(0.05 ** (0.7 - 1.0))

    def test_validation(self):
        with pytest.raises(ValueError):
            EtaSpec("shifted_power", beta=0.7, shift=0.0)
        with pytest.raises(ValueError):
            EtaSpec("shifted_power", beta=1.5, shift=0.1)
        with pytest.raises(ValueError):
            EtaSpec("cev")


class TestFmmParams:
    def test_positive_spot_vol_corr_rejected(self, flat_curve_5y):
        n = flat_curve_5y.tenor.n_periods
        corr = np.eye(n + 1)
        corr[0, 1] = corr[1, 0] = 0.2
        with pytest.raises(ValueError):
            FmmParams(
                tenor=flat_curve_5y.tenor,
                initial_rates=tuple(flat_curve_5y.forward_rates()),
                kernel=RoughKernel(1.0, 0.2),
                alphas=(0.3,) * n,
                corr=corr,
            )

    def test_dimension_checks(self, flat_curve_5y):
        n = flat_curve_5y.tenor.n_periods
        with pytest.raises(ValueError):
            FmmParams(
                tenor=flat_curve_5y.tenor,
                initial_rates=(0.03,) * (n - 1),
                kernel=RoughKernel(1.0, 0.2),
                alphas=(0.3,) * n,
                corr=np.eye(n + 1),
            )


class TestXiCurve:
    def test_last_rate_has_no_drift_correction(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y, hurst=0.2, kappa=1.0, alpha=0.3)
        n = params.n_rates
        t = 1.3
        expected = 0.09 * np.exp(1.0 * t**0.4 / (8 * 0.2))
        assert float(xi_curve(params, n, t)) == pytest.approx(expected, rel=1e-13)

    def test_zero_spot_vol_corr_kills_correction(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y, rho0_level=0.0)
        t = np.array([0.5, 1.0, 2.0])
        base = 0.09 * np.exp(t**0.4 / 1.6)
        for j in range(1, params.n_rates + 1):
            assert xi_curve(params, j, t) == pytest.approx(base, rel=1e-13)

    def test_hand_formula_two_rates(self):
        # N=2, H=0.2, kappa=1, alphas 0.3, rho_02=-0.5, flat 3% curve, t=1
        ts = TenorStructure([0, 1, 2])
        curve = DiscountCurve.from_flat_rate(ts, 0.03)
        corr = decaying_corr(2, np.array([-0.5, -0.5]))
        params = FmmParams(
            tenor=ts,
            initial_rates=tuple(curve.forward_rates()),
            kernel=RoughKernel(1.0, 0.2),
            alphas=(0.3, 0.3),
            corr=corr,
        )
        load = (0.03 / 1.03) * 0.3 * (-0.5) * 1.0
        integral = kernel_gamma_integral(params.kernel, ts, 2, 1.0)
        # t <= T_1 so the ramp is inactive: t^{0.7}/0.7
        assert integral == pytest.approx(1.0 / 0.7, rel=1e-13)
        expected = 0.09 * np.exp(1.0 / 1.6 - load * integral)
        assert float(xi_curve(params, 1, 1.0)) == pytest.approx(expected, rel=1e-13)

    def test_zero_kappa(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y, kappa=0.0)
        assert float(xi_curve(params, 3, 2.0)) == pytest.approx(0.09, rel=1e-14)


class TestSimulation:
    def test_horizon_beyond_tenor_rejected(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y)
        with pytest.raises(ValueError):
            simulate_fmm(params, SimGrid(6.0, 12), McConfig(100, seed=1))

    def test_shapes_and_determinism(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y)
        grid = SimGrid(1.0, 12)
        mc = McConfig(n_paths=500, seed=7)
        paths = simulate_fmm(params, grid, mc)
        assert paths.rates.shape == (500, 13, 5)
        assert paths.times.shape == (13,)
        again = simulate_fmm(params, grid, mc, threads=2)
        assert np.array_equal(paths.rates, again.rates)
        assert np.array_equal(paths.volterra, again.volterra)

    def test_positivity(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y, kappa=1.5, hurst=0.1)
        paths = simulate_fmm(
            params, SimGrid(1.0, 24), McConfig(2000, seed=3), obs_times=[1.0]
        )
        assert np.all(paths.rates > 0.0)
        for j in range(1, 6):
            assert np.all(paths.vol_state(j, 1.0) > 0.0)
        assert np.all(paths.rn_weight(1.0) > 0.0)

    def test_zero_kappa_lognormal_terminal_moments(self):
        # kappa = 0, diagonal rate block, zero spot-vol rows: every rate is
        # driftless lognormal with deterministic variance int gamma^2 xi dt
        ts = TenorStructure([0, 1, 2, 3])
        curve = DiscountCurve.from_flat_rate(ts, 0.03)
        n = 3
        params = FmmParams(
            tenor=ts,
            initial_rates=tuple(curve.forward_rates()),
            kernel=RoughKernel(0.0, 0.3),
            alphas=(0.25,) * n,
            corr=np.eye(n + 1),
        )
        t_end = 1.0
        grid = SimGrid(t_end, 48)
        mc = McConfig(n_paths=60_000, seed=11)
        paths = simulate_fmm(params, grid, mc, obs_times=[t_end])
        for j in (1, 2, 3):
            xi = float(xi_curve(params, j, 0.0))
            # the scheme freezes gamma at the step's left endpoint, so the
            # discrete log rate is Gaussian with exactly this variance
            g = np.clip(ts.dates[j] - grid.times[:-1], 0.0, 1.0)
            var_disc = float(np.sum(g**2 * xi) * grid.dt)
            # and the left-point sum converges to the continuous variance
            var_cont, _ = quad(
                lambda s, jj=j: np.clip(ts.dates[jj] - s, 0.0, 1.0) ** 2 * xi,
                0.0,
                t_end,
            )
            assert var_disc == pytest.approx(var_cont, rel=0.05)
            logs = np.log(paths.rates[:, 0, j - 1] / params.initial_rates[j - 1])
            se_m = logs.std() / np.sqrt(len(logs))
            assert abs(logs.mean() + 0.5 * var_disc) < 3.0 * se_m
            se_v = logs.var() * np.sqrt(2.0 / len(logs))
            assert abs(logs.var() - var_disc) < 3.0 * se_v

    def test_rn_weight_is_unit_mean(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y)
        mc = McConfig(n_paths=40_000, seed=23)
        paths = simulate_fmm(params, SimGrid(1.0, 48), mc, obs_times=[1.0])
        w = paths.rn_weight(1.0)
        se = w.std() / np.sqrt(len(w))
        assert abs(w.mean() - 1.0) < 3.0 * se

    @pytest.mark.slow
    def test_forward_measure_martingales(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y)
        mc = McConfig(n_paths=60_000, seed=29)
        paths = simulate_fmm(params, SimGrid(1.0, 96), mc, obs_times=[0.5, 1.0])
        for t_obs in (0.5, 1.0):
            for j in (1, 3, 5):
                w = paths.bond_ratio(j, t_obs)
                r = paths.rates[:, paths.obs_index(t_obs), j - 1]
                est = float(np.sum(w * r) / np.sum(w))
                resid = w * (r - est)
                se = resid.std() / np.sqrt(len(w)) / w.mean()
                assert abs(est - params.initial_rates[j - 1]) < 3.0 * se

    def test_shifted_power_eta_simulates(self, flat_curve_5y):
        n = flat_curve_5y.tenor.n_periods
        params = FmmParams(
            tenor=flat_curve_5y.tenor,
            initial_rates=tuple(flat_curve_5y.forward_rates()),
            kernel=RoughKernel(0.8, 0.25),
            alphas=(0.05,) * n,
            corr=decaying_corr(n, np.full(n, -0.3)),
            eta=EtaSpec("shifted_power", beta=0.8, shift=0.02),
        )
        paths = simulate_fmm(
            params, SimGrid(0.5, 24), McConfig(2000, seed=13), obs_times=[0.5]
        )
        assert np.all(paths.rates > -0.02)

    def test_rates_freeze_after_their_tenor_date(self, flat_curve_5y):
        params = standard_fmm(flat_curve_5y)
        paths = simulate_fmm(
            params, SimGrid(2.0, 12), McConfig(200, seed=17), obs_times=[1.0, 1.5, 2.0]
        )
        r1_at_1 = paths.rates[:, paths.obs_index(1.0), 0]
        r1_at_2 = paths.rates[:, paths.obs_index(2.0), 0]
        assert np.array_equal(r1_at_1, r1_at_2)


class TestSwapMeasureDriftCoefficients:
    def test_zero_rates_give_theta_times_weight(self):
        tenor = TenorStructure([0, 1, 2, 3, 4])
        rates = np.zeros(4)
        swap = SwapDefinition(1, 3)
        coef = drift_qstar_coefficients(tenor, rates, swap)
        # i <= I+1: plain theta_i = 1
        assert coef[:2] == pytest.approx([1.0, 1.0])
        # i = I+2..J carries the partial annuity weight (here P = 1)
        assert coef[2] == pytest.approx(0.5)

    def test_one_period_swap_single_family(self):
        tenor = TenorStructure([0, 1, 2, 3])
        rates = np.array([0.02, 0.03, 0.04])
        swap = SwapDefinition(2, 3)
        coef = drift_qstar_coefficients(tenor, rates, swap)
        assert coef == pytest.approx(1.0 / (1.0 + rates))

    def test_flat_curve_hand_value(self):
        tenor = TenorStructure([0, 1, 2, 3])
        r = 0.03
        rates = np.full(3, r)
        swap = SwapDefinition(1, 3)
        coef = drift_qstar_coefficients(tenor, rates, swap)
        base = 1.0 / 1.03
        # P(T_2)/A and P(T_3)/A with P(T_k) = 1.03^{-k}
        p2, p3 = 1.03**-2, 1.03**-3
        w3 = p3 / (p2 + p3)
        assert coef[0] == pytest.approx(base)
        assert coef[1] == pytest.approx(base)
        assert coef[2] == pytest.approx(base * w3)

    def test_paths_axis(self):
        tenor = TenorStructure([0, 1, 2, 3])
        rates = np.array([[0.01, 0.02, 0.03], [0.03, 0.02, 0.01]])
        coef = drift_qstar_coefficients(tenor, rates, SwapDefinition(1, 3))
        assert coef.shape == (2, 3)
