"""Black pricing, implied-volatility inversion and Monte Carlo swaption pricing.

Prices are normalised: a put quote is ``E[(e^k - S_T/S_0)_+]`` with
log-moneyness ``k``, so the Black price depends only on ``(k, total
vol)``. Swaption prices re-attach the annuity at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .asymptotics import v_bar
from .curve import DiscountCurve, SwapDefinition, annuity, forward_swap_rate
from .fmm import FmmPaths
from .kernel import SimGrid
from .smm import SmmParams, simulate_smm

_SIGMA_LO = 1e-8
_SIGMA_HI = 5.0
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ArbitrageError(ValueError):
    """Price outside the static no-arbitrage band for its moneyness."""


@dataclass(frozen=True)
class McConfig:
    """Path count, master seed and variance-reduction switches."""

    n_paths: int
    seed: int = 0
    antithetic: bool = False
    control_variate: bool = True

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise ValueError("n_paths must be >= 2")


@dataclass(frozen=True)
class PricingResult:
    price: float
    std_error: float
    implied_vol: float | None
    iv_std_error: float | None


def norm_cdf(x):
    return ndtr(x)


def norm_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def black_put(k, v):
    """Normalised Black put ``e^k Phi(-d_-) - Phi(-d_+)``.

    ``k`` is log-moneyness, ``v`` the total volatility ``sigma sqrt(t)``.
    At ``v = 0`` the intrinsic value ``(e^k - 1)_+`` is returned.
    """
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=float)
    intrinsic = np.maximum(np.exp(k) - 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_minus = -k / v - v / 2.0
        d_plus = -k / v + v / 2.0
        live = np.exp(k) * ndtr(-d_minus) - ndtr(-d_plus)
    out = np.where(v > 0.0, live, intrinsic)
    if out.ndim == 0:
        return float(out)
    return out


def black_vega_total(k, v):
    """Derivative of :func:`black_put` in ``v`` (the total-vol vega)."""
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_plus = -np.asarray(k, dtype=float) / v + v / 2.0
    out = np.where(v > 0.0, norm_pdf(d_plus), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def implied_vol(price: float, k: float, t: float) -> float:
    """Annualised volatility solving ``black_put(k, sigma sqrt(t)) = price``.

    Bracketing (Brent on ``[1e-8, 5]``) followed by two Newton polish
    steps. Prices at or outside the band ``((e^k - 1)_+, e^k)`` raise
    :class:`ArbitrageError`.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    lower = max(math.exp(k) - 1.0, 0.0)
    upper = math.exp(k)
    if not lower < price < upper:
        raise ArbitrageError(
            f"put price {price} outside no-arbitrage band ({lower}, {upper}) at k={k}"
        )
    sqrt_t = math.sqrt(t)

    def objective(sigma):
        return black_put(k, sigma * sqrt_t) - price

    f_lo, f_hi = objective(_SIGMA_LO), objective(_SIGMA_HI)
    if f_lo > 0.0 or f_hi < 0.0:
        raise ArbitrageError(
            f"price {price} not attainable with sigma in [{_SIGMA_LO}, {_SIGMA_HI}]"
        )
    sigma = brentq(objective, _SIGMA_LO, _SIGMA_HI, xtol=1e-14, rtol=8.9e-16)
    for _ in range(2):
        vega = sqrt_t * black_vega_total(k, sigma * sqrt_t)
        if vega < 1e-280:
            break
        step = objective(sigma) / vega
        candidate = sigma - step
        if _SIGMA_LO < candidate < _SIGMA_HI:
            sigma = candidate
    return sigma


def _iv_with_error(price, se, k, t):
    """Implied vol plus a delta-method standard error; None when unpriceable."""
    try:
        iv = implied_vol(price, k, t)
    except ArbitrageError:
        return None, None
    vega = math.sqrt(t) * black_vega_total(k, iv * math.sqrt(t))
    iv_se = se / vega if vega > 1e-280 else float("inf")
    return iv, iv_se


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    """Mean and its standard error.

    Antithetic pairs are treated as independent draws, so with negative
    pair covariance the reported error is conservative.
    """
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    return mean, se


def mc_price_swaption_smm(
    params: SmmParams,
    k: float,
    t: float,
    grid: SimGrid,
    mc: McConfig,
    is_put: bool = True,
    paths=None,
    threads: int = 1,
) -> PricingResult:
    """Normalised swaption price under the swap-rate model by Monte Carlo.

    With the control variate enabled, each payoff is paired with a
    Black-Scholes payoff driven by the same Brownian level at the fixed
    volatility ``sqrt(vbar(t))``, whose expectation is added back
    analytically. Pass ``paths`` to reuse a simulation across strikes.
    """
    if t > grid.horizon + 1e-12:
        raise ValueError("maturity beyond grid horizon")
    if paths is None:
        paths = simulate_smm(params, grid, mc, obs_times=[t], threads=threads)
    s_rel = np.exp(paths.log_s[:, paths.obs_index(t)])
    payoff = np.maximum(np.exp(k) - s_rel, 0.0)
    if not is_put:
        payoff = payoff - (np.exp(k) - s_rel)  # parity: call = put - e^k + S
    if mc.control_variate:
        vb = v_bar(params.v_curve, t)
        sig_cv = math.sqrt(vb)
        w_t = paths.w_star[:, paths.obs_index(t)]
        s_cv = np.exp(sig_cv * w_t - 0.5 * sig_cv**2 * t)
        pay_cv = np.maximum(np.exp(k) - s_cv, 0.0)
        if not is_put:
            pay_cv = pay_cv - (np.exp(k) - s_cv)
        analytic = black_put(k, sig_cv * math.sqrt(t))
        if not is_put:
            analytic = analytic - (math.exp(k) - 1.0)
        mean, se = _mean_se(payoff - pay_cv)
        price = mean + analytic
    else:
        price, se = _mean_se(payoff)
    put_price = price if is_put else price + math.exp(k) - 1.0
    iv, iv_se = _iv_with_error(put_price, se, k, t)
    return PricingResult(price=price, std_error=se, implied_vol=iv, iv_std_error=iv_se)


def mc_price_swaption_fmm(
    paths: FmmPaths,
    curve: DiscountCurve,
    swap: SwapDefinition,
    strike: float,
    t: float,
    is_put: bool = True,
) -> PricingResult:
    """Swaption price from terminal-measure rate paths.

    The payoff is deflated by the terminal bond through

        price = P_0(T_N) * E[ (S_T - K)_+- * A_T / P_T(T_N) ],

    where the bond and annuity ratios are products of the simulated
    ``(1 + theta_i R^i_T)``. Implied vol is quoted on the
    annuity-normalised forward price.
    """
    tenor = paths.params.tenor
    swap.validate(tenor)
    if t > tenor.dates[swap.start] + 1e-12:
        raise ValueError("expiry after the swap start is not supported")
    s_t = paths.swap_rate(swap, t)
    ann_ratio = paths.annuity_ratio(swap, t)
    if is_put:
        raw = np.maximum(strike - s_t, 0.0)
    else:
        raw = np.maximum(s_t - strike, 0.0)
    p0_n = curve.discounts[tenor.n_periods]
    values = p0_n * raw * ann_ratio
    price, se = _mean_se(values)
    s0 = forward_swap_rate(curve, swap)
    a0 = annuity(curve, swap)
    k = math.log(strike / s0)
    norm_price = price / (a0 * s0)
    norm_se = se / (a0 * s0)
    put_norm = norm_price if is_put else norm_price + math.exp(k) - 1.0
    iv, iv_se = _iv_with_error(put_norm, norm_se, k, t)
    return PricingResult(price=price, std_error=se, implied_vol=iv, iv_std_error=iv_se)
