"""Two-step calibration of the rate model to a swaption surface.

Step one uses the smiles of one-period swaptions (where the swap rate
coincides with a single term rate and the basket loading is 1) to
estimate the kernel level ``kappa``, the spot-vol correlation knots and
the per-rate volatility levels ``alpha_j``; step two fills the factor
correlation matrix row by row from co-terminal ATM quotes through a
hypersphere parameterisation that keeps it a valid correlation matrix.

All objective evaluations share common random numbers: one master seed
fixes every Gaussian draw, so objectives are deterministic functions of
the parameters and derivative-free optimisation is stable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .asymptotics import v_bar
from .curve import DiscountCurve, SwapDefinition, forward_swap_rate
from .fmm import EtaSpec, FmmParams, xi_curve
from .kernel import RoughKernel, SimGrid, hybrid_scheme_paths, hybrid_variances
from .pricing import ArbitrageError, black_put, implied_vol
from .smm import map_fmm_to_smm


# ---------------------------------------------------------------------------
# quotes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SwaptionQuote:
    """One observed implied volatility.

    ``strike_offset`` is in absolute rate versus the ATM strike (the
    convention of broker smile grids); the ATM row has offset 0.
    """

    expiry: float
    tenor: float
    strike_offset: float
    iv: float


@dataclass
class SwaptionSurface:
    quotes: list[SwaptionQuote]
    atm_rates: dict[tuple[float, float], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(q.iv <= 0.0 for q in self.quotes):
            raise ValueError("implied vols must be positive")

    def atm_rate(self, expiry: float, tenor: float, curve: DiscountCurve) -> float:
        key = (expiry, tenor)
        if key in self.atm_rates:
            return self.atm_rates[key]
        swap = swap_for(curve, expiry, tenor)
        return forward_swap_rate(curve, swap)

    def cells(self, tenor: float | None = None):
        """Sorted (expiry, tenor) pairs present, optionally one tenor only."""
        seen = sorted({(q.expiry, q.tenor) for q in self.quotes})
        if tenor is None:
            return seen
        return [c for c in seen if abs(c[1] - tenor) < 1e-9]

    def smile(self, expiry: float, tenor: float) -> list[SwaptionQuote]:
        out = [
            q
            for q in self.quotes
            if abs(q.expiry - expiry) < 1e-9 and abs(q.tenor - tenor) < 1e-9
        ]
        return sorted(out, key=lambda q: q.strike_offset)

    def atm_quote(self, expiry: float, tenor: float) -> SwaptionQuote | None:
        for q in self.smile(expiry, tenor):
            if abs(q.strike_offset) < 1e-12:
                return q
        return None

    def coterminal_atm(self, year: float, min_tenor: float = 2.0):
        """ATM quotes with ``expiry + tenor == year`` and tenor at least 2."""
        out = []
        for e, tn in self.cells():
            if tn + e != year or tn < min_tenor - 1e-9:
                continue
            q = self.atm_quote(e, tn)
            if q is not None:
                out.append(q)
        return sorted(out, key=lambda q: q.tenor)


def swap_for(curve: DiscountCurve, expiry: float, tenor: float) -> SwapDefinition:
    """Swap indices whose dates match ``(expiry, expiry + tenor)``."""
    dates = np.asarray(curve.tenor.dates)
    i = np.nonzero(np.isclose(dates, expiry, atol=1e-9))[0]
    j = np.nonzero(np.isclose(dates, expiry + tenor, atol=1e-9))[0]
    if i.size == 0 or j.size == 0:
        raise ValueError(
            f"swaption ({expiry}y x {tenor}y) does not sit on the tenor grid"
        )
    return SwapDefinition(int(i[0]), int(j[0]))


# ---------------------------------------------------------------------------
# hypersphere correlation parameterisation
# ---------------------------------------------------------------------------


@dataclass
class CorrelationAngles:
    """Lower-triangular angles ``omega[i, j]`` (j < i) in [0, pi].

    Row ``i`` parameterises the i-th row of the Cholesky-like factor B;
    the first column pins the correlations to factor 0 via
    ``rho_i0 = cos(omega[i, 0])``. The calibration additionally freezes
    ``omega[2, 1] = 0`` and ``omega[i, 2] = pi/2`` for ``i >= 3`` (the
    second factor carries no information of its own in the quote set).
    """

    omega: np.ndarray

    def __post_init__(self) -> None:
        om = np.asarray(self.omega, dtype=float)
        if om.ndim != 2 or om.shape[0] != om.shape[1]:
            raise ValueError("omega must be square")
        low = np.tril(om, -1)
        if np.any(low < 0.0) or np.any(low > np.pi):
            raise ValueError("angles must lie in [0, pi]")
        self.omega = om

    @property
    def size(self) -> int:
        return self.omega.shape[0]

    @classmethod
    def standard(cls, n_factors: int, rho0: np.ndarray) -> "CorrelationAngles":
        """Default angles honouring the calibration constraints.

        ``rho0`` holds the factor-0 correlations of rows 1..n-1; free
        angles start at pi/2 (orthogonal completion).
        """
        om = np.full((n_factors, n_factors), 0.5 * np.pi)
        om[np.triu_indices(n_factors)] = 0.0
        for i in range(1, n_factors):
            om[i, 0] = math.acos(float(np.clip(rho0[i - 1], -1.0, 1.0)))
        if n_factors >= 3:
            om[2, 1] = 0.0
        for i in range(3, n_factors):
            om[i, 2] = 0.5 * np.pi
        return cls(om)

    def free_row_indices(self, i: int) -> list[int]:
        """Columns of row ``i`` that the second calibration step may move."""
        cols = [1] + list(range(3, i))
        return [c for c in cols if c < i]


def hypersphere_to_corr(angles: CorrelationAngles) -> np.ndarray:
    """Correlation matrix ``B B^T`` from trigonometric factor rows.

    ``b[i, j] = cos(omega[i, j]) * prod_{k<j} sin(omega[i, k])`` below
    the diagonal and ``b[i, i] = prod_{k<i} sin(omega[i, k])``; every
    row has unit norm, so the product has unit diagonal and is PSD by
    construction.
    """
    om = angles.omega
    n = angles.size
    b = np.zeros((n, n))
    for i in range(n):
        sin_run = 1.0
        for j in range(i):
            b[i, j] = math.cos(om[i, j]) * sin_run
            sin_run *= math.sin(om[i, j])
        b[i, i] = sin_run
    return b @ b.T


# ---------------------------------------------------------------------------
# interpolation of spot-vol correlation knots
# ---------------------------------------------------------------------------


def interpolate_rho0(knots: dict[int, float], n_rates: int) -> np.ndarray:
    """Full ``rho_0`` vector (indices 1..N) from knot values.

    Linear in the rate index between knots, flat beyond the first and
    last knot. Knot values must lie in [-1, 0].
    """
    if not knots:
        raise ValueError("need at least one knot")
    items = sorted(knots.items())
    for i, v in items:
        if not 1 <= i <= n_rates:
            raise ValueError(f"knot index {i} outside 1..{n_rates}")
        if not -1.0 <= v <= 0.0:
            raise ValueError(f"knot value {v} outside [-1, 0]")
    xs = np.array([i for i, _ in items], dtype=float)
    ys = np.array([v for _, v in items])
    return np.interp(np.arange(1, n_rates + 1, dtype=float), xs, ys)


# ---------------------------------------------------------------------------
# common-random-number pricing engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationSettings:
    """Monte Carlo and optimiser budget for the calibration pipeline."""

    n_paths: int = 8192
    steps_per_year: int = 48
    seed: int = 20240
    max_iter: int = 250
    n_restarts: int = 3
    alpha_tol: float = 1e-6
    max_sweeps: int = 50


class CrnSmmPricer:
    """Deterministic rough Bergomi pricer with cached Gaussian draws.

    One instance caches, per expiry grid, the Brownian increments of
    the two factors, the singular-interval residuals and the unit
    Volterra path (kernel level 1), so repricing under new parameters
    costs only elementwise work. ``kappa`` enters by scaling the unit
    Volterra path; the Hurst exponent is fixed per instance.
    """

    def __init__(self, hurst: float, settings: CalibrationSettings):
        self.hurst = hurst
        self.settings = settings
        self._draws: dict = {}

    def grid(self, expiry: float) -> SimGrid:
        return SimGrid(expiry, self.settings.steps_per_year)

    def _grid_draws(self, grid: SimGrid):
        key = (grid.n_steps, round(grid.horizon, 12))
        if key not in self._draws:
            rng = np.random.default_rng(
                np.random.SeedSequence((self.settings.seed, grid.n_steps))
            )
            n, m = grid.n_steps, self.settings.n_paths
            dw0 = rng.standard_normal((m, n)) * math.sqrt(grid.dt)
            z_sing = rng.standard_normal((m, n))
            dwp = rng.standard_normal((m, n)) * math.sqrt(grid.dt)
            unit = RoughKernel(1.0, self.hurst)
            y1 = hybrid_scheme_paths(unit, grid, dw0, z_sing)
            var1 = hybrid_variances(unit, grid)
            self._draws[key] = (dw0, dwp, y1, var1)
        return self._draws[key]

    def exposures(self, kappa: float, d_curve, rho: float, expiry: float):
        """Per-path exposure scalars for prices affine-in-``alpha``.

        For variance curves ``v(t) = alpha**2 d(t)`` the terminal log
        rate is ``alpha * A - alpha**2 * B / 2``; returns
        ``(A, B, W_T, dbar)`` with ``dbar`` the time-average of ``d``.
        """
        grid = self.grid(expiry)
        dw0, dwp, y1, var1 = self._grid_draws(grid)
        times = grid.times
        d_grid = np.asarray(d_curve(times), dtype=float)
        if np.any(d_grid <= 0.0):
            raise ValueError("variance curve must be positive")
        h = np.sqrt(d_grid[None, :-1]) * np.exp(
            0.5 * kappa * y1[:, :-1] - 0.25 * kappa**2 * var1[None, :-1]
        )
        dws = rho * dw0 + math.sqrt(max(1.0 - rho**2, 0.0)) * dwp
        a = np.sum(h * dws, axis=1)
        b = np.sum(h * h, axis=1) * grid.dt
        w_t = np.sum(dws, axis=1)
        return a, b, w_t, v_bar(d_curve, expiry)

    @staticmethod
    def put_price_from_exposures(exposures, alpha: float, expiry: float, k):
        """Control-variated normalised put prices at log-moneyness ``k``."""
        a, b, w_t, dbar = exposures
        s_rel = np.exp(alpha * a - 0.5 * alpha**2 * b)
        sig_cv = alpha * math.sqrt(dbar)
        s_cv = np.exp(sig_cv * w_t - 0.5 * sig_cv**2 * expiry)
        k = np.atleast_1d(np.asarray(k, dtype=float))
        strikes = np.exp(k)
        diff = np.maximum(strikes[None, :] - s_rel[:, None], 0.0) - np.maximum(
            strikes[None, :] - s_cv[:, None], 0.0
        )
        prices = diff.mean(axis=0) + black_put(k, sig_cv * math.sqrt(expiry))
        return prices

    def smile_ivs(self, kappa, d_curve, rho, alpha, expiry, ks):
        expo = self.exposures(kappa, d_curve, rho, expiry)
        prices = self.put_price_from_exposures(expo, alpha, expiry, ks)
        out = np.empty(len(prices))
        for i, (p, k) in enumerate(zip(prices, np.atleast_1d(ks))):
            out[i] = implied_vol(float(p), float(k), expiry)
        return out

    def atm_iv_of_alpha(self, exposures, expiry: float, k_atm: float):
        """Callable ``alpha -> implied vol`` at a single strike.

        Prices that collapse onto the arbitrage bound (possible for
        vanishing alpha) are reported as zero vol so root brackets stay
        well defined.
        """

        def f(alpha: float) -> float:
            p = self.put_price_from_exposures(exposures, alpha, expiry, [k_atm])[0]
            try:
                return implied_vol(float(p), k_atm, expiry)
            except ArbitrageError:
                return 0.0

        return f


# ---------------------------------------------------------------------------
# separate-tenor (standalone) calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparateTenorResult:
    kappa: float
    rho: float
    v0: float
    rmse: float
    rho_identified: bool


def separate_tenor_calibrate(
    smile: list[SwaptionQuote],
    hurst: float,
    curve: DiscountCurve,
    settings: CalibrationSettings = CalibrationSettings(),
    pricer: CrnSmmPricer | None = None,
) -> SeparateTenorResult:
    """Fit a standalone swap-rate model ``(v0, rho, kappa)`` to one smile.

    The forward-variance curve is pinned to
    ``v(t) = v0 exp(kappa^2 t^{2H} / (8H))`` so the expected spot vol
    stays at ``sqrt(v0)``; at H = 1/2 this is the lognormal SABR model.
    Least squares on implied vols via common-random-number Monte Carlo.
    """
    if len(smile) < 3:
        raise ValueError("need at least 3 strikes to identify the smile")
    expiry = smile[0].expiry
    tenor = smile[0].tenor
    if any(q.expiry != expiry or q.tenor != tenor for q in smile):
        raise ValueError("smile quotes must share one (expiry, tenor) cell")
    swap = swap_for(curve, expiry, tenor)
    s0 = forward_swap_rate(curve, swap)
    ks = np.array(
        [math.log((s0 + q.strike_offset) / s0) for q in smile]
    )  # ATM strike = forward
    target = np.array([q.iv for q in smile])
    if pricer is None:
        pricer = CrnSmmPricer(hurst, settings)

    def d_curve_factory(kappa):
        c = kappa**2 / (8.0 * hurst)
        return lambda t: np.exp(c * np.asarray(t, dtype=float) ** (2.0 * hurst))

    def objective(x):
        v0, rho, kappa = x
        try:
            ivs = pricer.smile_ivs(
                kappa, d_curve_factory(kappa), rho, math.sqrt(v0), expiry, ks
            )
        except ArbitrageError:
            return 1.0  # corner of the box: some wing is unpriceable
        return math.sqrt(float(np.mean((ivs - target) ** 2)))

    level = float(np.median(target))
    x0 = np.array([level**2, -0.3, 1.0])
    bounds = [(1e-6, 4.0), (-0.999, 0.0), (0.01, 5.0)]
    best = _nelder_mead_restarts(objective, x0, bounds, settings)
    v0, rho, kappa = best.x
    flat = float(target.max() - target.min()) < 1e-4
    return SeparateTenorResult(
        kappa=float(kappa),
        rho=float(rho),
        v0=float(v0),
        rmse=float(best.fun),
        rho_identified=not flat,
    )


def _nelder_mead_restarts(
    objective, x0, bounds, settings: CalibrationSettings, extra_starts=()
):
    """Nelder-Mead with box bounds and jittered restarts; returns the best fit."""
    rng = np.random.default_rng(np.random.SeedSequence((settings.seed, 0xA5)))
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = [np.asarray(x0, dtype=float)]
    starts += [np.asarray(s, dtype=float) for s in extra_starts]
    for _ in range(max(settings.n_restarts - 1, 0)):
        jitter = x0 * (1.0 + 0.2 * rng.standard_normal(len(x0))) + 0.05 * rng.standard_normal(len(x0))
        starts.append(np.clip(jitter, lo, hi))
    best = None
    for s in starts:
        res = minimize(
            objective,
            s,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "maxiter": settings.max_iter,
                "maxfev": settings.max_iter,
                "xatol": 1e-4,
                "fatol": 1e-7,
                "adaptive": True,
            },
        )
        if best is None or res.fun < best.fun:
            best = res
        if best.fun < 1e-7:
            break  # objective is an RMSE; this is an exact fit
    return best


# ---------------------------------------------------------------------------
# first step: kappa, alpha levels, spot-vol correlation knots
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FirstStepResult:
    kappa: float
    hurst: float
    alphas: np.ndarray  # per rate index 1..N
    rho0: np.ndarray  # per rate index 1..N
    knots: dict[int, float]
    rmse: float
    n_sweeps: int


def _caplet_d_curve(
    curve: DiscountCurve,
    hurst: float,
    kappa: float,
    rho0: np.ndarray,
    alphas: np.ndarray,
    j: int,
):
    """Unit-level forward-variance curve ``xi_j / alpha_j^2`` as a callable."""
    tenor = curve.tenor
    params = FmmParams(
        tenor=tenor,
        initial_rates=tuple(curve.forward_rates()),
        kernel=RoughKernel(kappa, hurst),
        alphas=tuple(np.maximum(alphas, 1e-12)),
        corr=_corr_with_rho0(tenor.n_periods, rho0),
        eta=EtaSpec(),
    )

    def d(t):
        return xi_curve(params, j, t) / params.alphas[j - 1] ** 2

    return d


def _corr_with_rho0(n: int, rho0: np.ndarray) -> np.ndarray:
    """Any valid correlation embedding the factor-0 row (block is irrelevant
    for the one-period smiles; xi depends on rho0 only)."""
    c = np.eye(n + 1)
    c[0, 1:] = rho0
    c[1:, 0] = rho0
    # PSD completion: rate block rho_ij = rho0_i rho0_j + delta_ij (1 - rho0_i^2)
    outer = np.outer(rho0, rho0)
    c[1:, 1:] = outer + np.diag(1.0 - rho0**2)
    return c


def _atm_targets(
    curve: DiscountCurve, surface: SwaptionSurface
) -> dict[int, tuple[float, float, float]]:
    """Per rate index: (expiry, ATM log-moneyness, ATM market IV)."""
    targets: dict[int, tuple[float, float, float]] = {}
    for j in range(2, curve.tenor.n_periods + 1):
        expiry = curve.tenor.dates[j - 1]
        tenor_len = curve.tenor.dates[j] - curve.tenor.dates[j - 1]
        q = surface.atm_quote(expiry, tenor_len)
        if q is None:
            continue
        swap = SwapDefinition(j - 1, j)
        s0 = forward_swap_rate(curve, swap)
        k_atm = math.log(surface.atm_rate(expiry, tenor_len, curve) / s0)
        targets[j] = (expiry, k_atm, q.iv)
    return targets


def _alpha_sweep(
    pricer: CrnSmmPricer,
    curve: DiscountCurve,
    hurst: float,
    kappa: float,
    rho0: np.ndarray,
    alphas: np.ndarray,
    targets: dict[int, tuple[float, float, float]],
    smile_cells=None,
):
    """One descending pass: solve targeted alphas, optionally price smiles.

    ``xi_j`` depends only on alphas with larger index, so a single pass
    in decreasing j is self-consistent; smile cells are priced with the
    exposures already built for their rate. Returns
    ``(max alpha change, squared smile error, strike count)``.
    """
    smile_by_j = {c[0]: c for c in smile_cells or []}
    delta = 0.0
    sq_err = 0.0
    count = 0
    for j in sorted(set(targets) | set(smile_by_j), reverse=True):
        d = _caplet_d_curve(curve, hurst, kappa, rho0, alphas, j)
        if j in targets:
            expiry, k_atm, iv_mkt = targets[j]
        else:
            expiry = smile_by_j[j][1]
        expo = pricer.exposures(kappa, d, float(rho0[j - 1]), expiry)
        if j in targets:
            f = pricer.atm_iv_of_alpha(expo, expiry, k_atm)
            new = _solve_alpha(f, iv_mkt, float(alphas[j - 1]))
            delta = max(delta, abs(new - alphas[j - 1]))
            alphas[j - 1] = new
        if j in smile_by_j:
            _, s_expiry, ks, ivs = smile_by_j[j]
            prices = pricer.put_price_from_exposures(
                expo, float(alphas[j - 1]), s_expiry, ks
            )
            model = np.array(
                [implied_vol(float(p), float(k), s_expiry) for p, k in zip(prices, ks)]
            )
            sq_err += float(np.sum((model - ivs) ** 2))
            count += len(ks)
    return delta, sq_err, count


def pin_alphas(
    pricer: CrnSmmPricer,
    curve: DiscountCurve,
    surface: SwaptionSurface,
    hurst: float,
    kappa: float,
    rho0: np.ndarray,
    alphas0: np.ndarray,
    settings: CalibrationSettings,
) -> tuple[np.ndarray, int]:
    """Volatility levels matching every observed one-period ATM quote.

    Sweeps rate indices from the last down to 2, root-finding each
    ``alpha_j`` against its ATM implied vol; the second sweep certifies
    ``max |change| < alpha_tol``. Rates without an ATM quote are
    interpolated linearly in the index afterwards.
    """
    n = curve.tenor.n_periods
    alphas = alphas0.copy()
    targets = _atm_targets(curve, surface)
    if not targets:
        raise ValueError("no one-period ATM quotes available to pin alphas")

    sweeps = 0
    for _ in range(settings.max_sweeps):
        sweeps += 1
        delta, _, _ = _alpha_sweep(
            pricer, curve, hurst, kappa, rho0, alphas, targets
        )
        if delta < settings.alpha_tol:
            break
    else:
        raise RuntimeError(
            f"alpha fixed point did not converge in {settings.max_sweeps} sweeps"
        )
    # fill uncalibrated indices by index interpolation (flat at the ends)
    known = sorted(targets)
    xs = np.array(known, dtype=float)
    ys = alphas[[j - 1 for j in known]]
    for j in range(1, n + 1):
        if j not in targets:
            alphas[j - 1] = np.interp(float(j), xs, ys)
    return alphas, sweeps


def _solve_alpha(iv_of_alpha, iv_target: float, guess: float) -> float:
    """Root of ``iv(alpha) = iv_target``; iv is increasing in alpha."""
    lo, hi = 1e-4, max(4.0 * guess, 1.0)
    f = lambda a: iv_of_alpha(a) - iv_target
    f_hi = f(hi)
    while f_hi < 0.0 and hi < 64.0:
        hi *= 2.0
        f_hi = f(hi)
    if f(lo) > 0.0 or f_hi < 0.0:
        raise RuntimeError("ATM level not attainable by any alpha in bounds")
    return brentq(f, lo, hi, xtol=1e-10)


def calibrate_first_step(
    surface: SwaptionSurface,
    hurst: float,
    curve: DiscountCurve,
    knot_indices: list[int],
    settings: CalibrationSettings = CalibrationSettings(),
) -> FirstStepResult:
    """Estimate ``(kappa, alpha_2..alpha_N, rho0 knots)`` from one-period smiles.

    Outer Nelder-Mead over ``(kappa, knots)`` minimising the smile RMSE
    under the mapped swap-rate model; inner sweep pinning each alpha to
    its ATM quote. The interpolated ``rho0`` is flat below the first
    and above the last knot.
    """
    n = curve.tenor.n_periods
    if not knot_indices:
        raise ValueError("need at least one rho0 knot index")
    knot_indices = sorted(knot_indices)
    pricer = CrnSmmPricer(hurst, settings)

    smile_cells = []
    for expiry, tenor_len in surface.cells():
        qs = surface.smile(expiry, tenor_len)
        if len(qs) >= 3 and _is_one_period(curve, expiry, tenor_len):
            swap = swap_for(curve, expiry, tenor_len)
            s0 = forward_swap_rate(curve, swap)
            atm = surface.atm_rate(expiry, tenor_len, curve)
            ks = np.array(
                [math.log((atm + q.strike_offset) / s0) for q in qs]
            )
            smile_cells.append((swap.end, expiry, ks, np.array([q.iv for q in qs])))
    if not smile_cells:
        raise ValueError("surface has no one-period smiles")

    targets = _atm_targets(curve, surface)
    if not targets:
        raise ValueError("no one-period ATM quotes available to pin alphas")
    state = {"alphas": np.full(n, 0.3)}

    def objective(x):
        kappa = x[0]
        knots = dict(zip(knot_indices, x[1:]))
        rho0 = interpolate_rho0(knots, n)
        alphas = state["alphas"].copy()
        try:
            # one descending sweep is exact: xi_j sees only later alphas
            _, sq_err, count = _alpha_sweep(
                pricer, curve, hurst, kappa, rho0, alphas, targets, smile_cells
            )
        except (RuntimeError, ArbitrageError):
            return 1.0
        state["alphas"] = alphas
        return math.sqrt(sq_err / count)

    x0 = np.array([1.0] + [-0.4] * len(knot_indices))
    bounds = [(0.01, 5.0)] + [(-0.999, 0.0)] * len(knot_indices)
    best = _nelder_mead_restarts(objective, x0, bounds, settings)
    kappa = float(best.x[0])
    knots = {i: float(v) for i, v in zip(knot_indices, best.x[1:])}
    rho0 = interpolate_rho0(knots, n)
    alphas, sweeps = pin_alphas(
        pricer, curve, surface, hurst, kappa, rho0, state["alphas"], settings
    )
    return FirstStepResult(
        kappa=kappa,
        hurst=hurst,
        alphas=alphas,
        rho0=rho0,
        knots=knots,
        rmse=float(best.fun),
        n_sweeps=sweeps,
    )


def _is_one_period(curve: DiscountCurve, expiry: float, tenor_len: float) -> bool:
    swap = swap_for(curve, expiry, tenor_len)
    return swap.end == swap.start + 1


# ---------------------------------------------------------------------------
# second step: correlation rows from co-terminal ATM quotes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SecondStepResult:
    angles: CorrelationAngles
    corr: np.ndarray
    rmse_by_year: dict[int, float]


def _fmm_from_pieces(
    curve: DiscountCurve, first: FirstStepResult, corr: np.ndarray
) -> FmmParams:
    return FmmParams(
        tenor=curve.tenor,
        initial_rates=tuple(curve.forward_rates()),
        kernel=RoughKernel(first.kappa, first.hurst),
        alphas=tuple(np.maximum(first.alphas, 1e-12)),
        corr=corr,
        eta=EtaSpec(),
    )


def calibrate_second_step(
    surface: SwaptionSurface,
    first: FirstStepResult,
    curve: DiscountCurve,
    settings: CalibrationSettings = CalibrationSettings(),
) -> SecondStepResult:
    """Fill the factor correlation row by row from co-terminal ATM quotes.

    Row ``m`` (the factor of the last rate entering co-terminal-year-m
    swaptions) is fitted to the ATM vols of all quotes with
    ``expiry + tenor = m`` and tenor >= 2, pricing through the mapped
    swap-rate model with common random numbers; earlier rows stay
    frozen. Years without quotes keep default (orthogonal) angles.
    """
    n = curve.tenor.n_periods
    angles = CorrelationAngles.standard(n + 1, first.rho0)
    pricer = CrnSmmPricer(first.hurst, settings)
    rmse_by_year: dict[int, float] = {}

    for m in range(3, n + 1):
        year = float(curve.tenor.dates[m])
        quotes = surface.coterminal_atm(year)
        free = angles.free_row_indices(m)
        if not quotes:
            warnings.warn(
                f"no co-terminal quotes for year {year}; row {m} keeps default angles",
                stacklevel=2,
            )
            continue
        prepared = []
        for q in quotes:
            swap = swap_for(curve, q.expiry, q.tenor)
            s0 = forward_swap_rate(curve, swap)
            k_atm = math.log(surface.atm_rate(q.expiry, q.tenor, curve) / s0)
            prepared.append((swap, q.expiry, k_atm, q.iv))

        def objective(x):
            angles.omega[m, free] = x
            corr = hypersphere_to_corr(angles)
            params = _fmm_from_pieces(curve, first, corr)
            err = 0.0
            for swap, expiry, k_atm, iv_mkt in prepared:
                try:
                    mapped = map_fmm_to_smm(params, curve, swap)
                    expo = pricer.exposures(
                        first.kappa,
                        lambda t: np.asarray(mapped.v_curve(t)) / mapped.v0(),
                        mapped.rho,
                        expiry,
                    )
                    price = pricer.put_price_from_exposures(
                        expo, math.sqrt(mapped.v0()), expiry, [k_atm]
                    )[0]
                    model_iv = implied_vol(float(price), k_atm, expiry)
                except (ArbitrageError, ValueError):
                    return 1.0  # angle corner maps to a degenerate basket
                err += (model_iv - iv_mkt) ** 2
            return math.sqrt(err / len(prepared))

        # correlation rows vary smoothly, so the previous row is the best
        # initial guess; the orthogonal default is kept as a fallback start
        default = angles.omega[m, free].copy()
        warm = default.copy()
        if m > 3:
            prev = angles.omega[m - 1]
            last_prev = prev[angles.free_row_indices(m - 1)[-1]]
            for pos, c in enumerate(free):
                warm[pos] = prev[c] if c <= m - 2 else last_prev
        bounds = [(0.01, math.pi - 0.01)] * len(free)
        extra = [default] if np.any(default != warm) else []
        best = _nelder_mead_restarts(objective, warm, bounds, settings, extra)
        angles.omega[m, free] = best.x
        rmse_by_year[int(round(year))] = float(best.fun)

    return SecondStepResult(
        angles=angles,
        corr=hypersphere_to_corr(angles),
        rmse_by_year=rmse_by_year,
    )


# ---------------------------------------------------------------------------
# synthetic surfaces (round-trip fixtures, trend experiments)
# ---------------------------------------------------------------------------


def synthetic_first_step_surface(
    curve: DiscountCurve,
    hurst: float,
    kappa: float,
    alphas: np.ndarray,
    rho0: np.ndarray,
    smile_expiries: list[float],
    offsets: list[float],
    settings: CalibrationSettings,
    pricer: CrnSmmPricer | None = None,
) -> SwaptionSurface:
    """One-period-quote surface generated by the calibration pricer itself.

    ATM quotes at every expiry, full smiles at ``smile_expiries``. Using
    the same settings and seed in calibration makes the objective vanish
    at the generating parameters.
    """
    n = curve.tenor.n_periods
    if pricer is None:
        pricer = CrnSmmPricer(hurst, settings)
    quotes = []
    for j in range(2, n + 1):
        expiry = curve.tenor.dates[j - 1]
        tenor_len = curve.tenor.dates[j] - curve.tenor.dates[j - 1]
        swap = SwapDefinition(j - 1, j)
        s0 = forward_swap_rate(curve, swap)
        is_smile = any(abs(expiry - e) < 1e-9 for e in smile_expiries)
        offs = offsets if is_smile else [0.0]
        ks = np.array([math.log((s0 + o) / s0) for o in offs])
        d = _caplet_d_curve(curve, hurst, kappa, rho0, alphas, j)
        ivs = pricer.smile_ivs(
            kappa, d, float(rho0[j - 1]), float(alphas[j - 1]), expiry, ks
        )
        for o, iv in zip(offs, ivs):
            quotes.append(SwaptionQuote(expiry, tenor_len, o, float(iv)))
    return SwaptionSurface(quotes=quotes)


def synthetic_coterminal_surface(
    curve: DiscountCurve,
    first: FirstStepResult,
    corr: np.ndarray,
    settings: CalibrationSettings,
    min_tenor: float = 2.0,
    pricer: CrnSmmPricer | None = None,
) -> SwaptionSurface:
    """ATM co-terminal quotes generated under a full correlation matrix."""
    n = curve.tenor.n_periods
    if pricer is None:
        pricer = CrnSmmPricer(first.hurst, settings)
    params = _fmm_from_pieces(curve, first, corr)
    quotes = []
    for m in range(3, n + 1):
        for i_start in range(1, m - 1):
            expiry = curve.tenor.dates[i_start]
            tenor_len = curve.tenor.dates[m] - expiry
            if tenor_len < min_tenor - 1e-9:
                continue
            swap = SwapDefinition(i_start, m)
            mapped = map_fmm_to_smm(params, curve, swap)
            expo = pricer.exposures(
                first.kappa,
                lambda t: np.asarray(mapped.v_curve(t)) / mapped.v0(),
                mapped.rho,
                expiry,
            )
            price = pricer.put_price_from_exposures(
                expo, math.sqrt(mapped.v0()), expiry, [0.0]
            )[0]
            iv = implied_vol(float(price), 0.0, expiry)
            quotes.append(SwaptionQuote(expiry, tenor_len, 0.0, float(iv)))
    return SwaptionSurface(quotes=quotes)
