"""Forward market model with a shared rough-volatility factor.

The state is the vector of forward term rates ``R^1..R^N`` plus their
variance processes ``V^j_t = xi_j(t) * exp(Y_t - var(Y_t)/2)``, all
driven by one Volterra process ``Y`` against the factor ``W^0``.
Simulation runs under the terminal forward measure (numeraire
``P(T_N)``), where rate ``j`` carries the drift

    dR^j = gamma_j eta_j(R^j) sqrt(V^j) (dW^j - mu^j dt),
    mu^j = sum_{i>j} theta_i eta_i(R^i) gamma_i sqrt(V^i) rho_ij
           / (1 + theta_i R^i),

and prices under other measures are recovered by reweighting with bond
ratios, themselves products of ``(1 + theta_i R^i)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import sampling
from .curve import SwapDefinition, TenorStructure
from .kernel import (
    RoughKernel,
    SimGrid,
    gamma_ramp,
    hybrid_scheme_paths,
    hybrid_variances,
)


@dataclass(frozen=True)
class EtaSpec:
    """Local-volatility backbone ``eta(r)`` of the rate dynamics.

    ``lognormal`` is ``eta(r) = r`` (the only variant inside the
    regularity assumptions of the short-maturity expansion);
    ``shifted_power`` is ``eta(r) = |r + shift|**beta`` with
    ``shift > 0`` and ``beta in (0, 1]``, simulatable but outside the
    expansion's hypotheses for ``beta < 1``.
    """

    variant: str = "lognormal"
    beta: float = 1.0
    shift: float = 0.0

    def __post_init__(self) -> None:
        if self.variant == "lognormal":
            if self.shift != 0.0 or self.beta != 1.0:
                raise ValueError("lognormal variant takes no beta/shift")
        elif self.variant == "shifted_power":
            if self.shift <= 0.0:
                raise ValueError("shifted_power requires shift > 0")
            if not 0.0 < self.beta <= 1.0:
                raise ValueError("shifted_power requires beta in (0, 1]")
        else:
            raise ValueError(f"unknown eta variant {self.variant!r}")

    def value(self, r):
        if self.variant == "lognormal":
            return np.asarray(r, dtype=float)
        return np.abs(np.asarray(r, dtype=float) + self.shift) ** self.beta

    def local_factor(self, r):
        """``eta(r) / (r + shift)``, the log-coordinate diffusion loading."""
        r = np.asarray(r, dtype=float)
        if self.variant == "lognormal":
            return np.ones_like(r)
        return np.abs(r + self.shift) ** (self.beta - 1.0)


@dataclass(frozen=True)
class FmmParams:
    """Full parameter set of the terminal-measure rate simulation.

    ``corr`` is the (N+1) x (N+1) factor correlation with index 0 the
    volatility factor; the spot-vol row must be nonpositive, which is
    what keeps every rate a martingale under its own forward measure.
    """

    tenor: TenorStructure
    initial_rates: tuple[float, ...]
    kernel: RoughKernel
    alphas: tuple[float, ...]
    corr: np.ndarray
    eta: EtaSpec = EtaSpec()

    def __init__(self, tenor, initial_rates, kernel, alphas, corr, eta=EtaSpec()):
        n = tenor.n_periods
        initial_rates = tuple(float(r) for r in initial_rates)
        alphas = tuple(float(a) for a in alphas)
        corr = np.array(corr, dtype=float)
        if len(initial_rates) != n:
            raise ValueError(f"{len(initial_rates)} initial rates for N={n}")
        if any(r <= 0.0 for r in initial_rates):
            raise ValueError("initial rates must be positive")
        if len(alphas) != n:
            raise ValueError(f"{len(alphas)} alphas for N={n}")
        if any(a <= 0.0 for a in alphas):
            raise ValueError("alphas must be positive")
        if corr.shape != (n + 1, n + 1):
            raise ValueError(f"correlation must be {(n + 1, n + 1)}, got {corr.shape}")
        if np.any(corr[0, 1:] > 1e-12):
            raise ValueError("spot-vol correlations rho_0i must be nonpositive")
        corr.setflags(write=False)
        object.__setattr__(self, "tenor", tenor)
        object.__setattr__(self, "initial_rates", initial_rates)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "eta", eta)

    @property
    def n_rates(self) -> int:
        return self.tenor.n_periods

    @property
    def rho0(self) -> np.ndarray:
        """Spot-vol correlations ``rho_{0j}`` for j = 1..N."""
        return np.asarray(self.corr[0, 1:])

    def rate_corr(self) -> np.ndarray:
        """Rate-block correlations ``rho_ij`` for i, j = 1..N."""
        return np.asarray(self.corr[1:, 1:])


def _xi_drift_loads(params: FmmParams) -> np.ndarray:
    """Per-index loads ``theta_i eta_i(R0^i) alpha_i rho_0i kappa / (1+theta_i R0^i)``."""
    th = params.tenor.thetas
    r0 = np.asarray(params.initial_rates)
    return (
        th
        * params.eta.value(r0)
        / (1.0 + th * r0)
        * np.asarray(params.alphas)
        * params.rho0
        * params.kernel.kappa
    )


def _kernel_gamma_integral_vec(kernel: RoughKernel, tenor, i: int, t: np.ndarray):
    a = kernel.hurst + 0.5
    lo, hi = tenor.dates[i - 1], tenor.dates[i]
    ramp = (
        np.maximum(t - lo, 0.0) ** (a + 1.0) - np.maximum(t - hi, 0.0) ** (a + 1.0)
    ) / (a * (a + 1.0) * (hi - lo))
    return t**a / a - ramp


def xi_curve(params: FmmParams, j: int, t):
    """Forward-variance curve ``xi_j(t)`` of rate j.

    Parameterised by ``alpha_j`` so the expected spot volatility of
    rate j stays near ``alpha_j`` under its own forward measure:

        xi_j(t) = alpha_j**2 * exp(kappa**2 t**(2H) / (8H)
                  - sum_{i>j} load_i * int_0^t (t-s)**(H-1/2) gamma_i(s) ds).
    """
    params.tenor._check_index(j)
    t = np.asarray(t, dtype=float)
    k = params.kernel
    expo = k.kappa**2 * t ** (2.0 * k.hurst) / (8.0 * k.hurst)
    loads = _xi_drift_loads(params)
    for i in range(j + 1, params.n_rates + 1):
        expo = expo - loads[i - 1] * _kernel_gamma_integral_vec(k, params.tenor, i, t)
    return params.alphas[j - 1] ** 2 * np.exp(expo)


def xi_matrix(params: FmmParams, times: np.ndarray) -> np.ndarray:
    """``xi_j`` stacked over j = 1..N, shape (N, len(times))."""
    return np.vstack([xi_curve(params, j, times) for j in range(1, params.n_rates + 1)])


@dataclass(frozen=True)
class FmmPaths:
    """Simulated rates at observation times plus the shared vol state.

    ``rates[p, o, j-1]`` is ``R^j`` on path p at ``times[o]``;
    volatility states are reconstructed from the stored Volterra values
    rather than materialised per rate.
    """

    params: FmmParams
    times: np.ndarray
    rates: np.ndarray
    volterra: np.ndarray
    volterra_var: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.rates.shape[0]

    def obs_index(self, t: float) -> int:
        idx = np.nonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-9))[0]
        if idx.size == 0:
            raise ValueError(f"time {t} was not stored; observed {self.times}")
        return int(idx[0])

    def vol_state(self, j: int, t: float) -> np.ndarray:
        """``V^j_t`` per path."""
        o = self.obs_index(t)
        xi = float(xi_curve(self.params, j, self.times[o]))
        return xi * np.exp(self.volterra[:, o] - 0.5 * self.volterra_var[o])

    def bond_ratio(self, j: int, t: float) -> np.ndarray:
        """``P_t(T_j) / P_t(T_N) = prod_{i>j} (1 + theta_i R^i_t)`` per path."""
        o = self.obs_index(t)
        th = self.params.tenor.thetas
        r = self.rates[:, o, :]
        n = self.params.n_rates
        if j == n:
            return np.ones(self.n_paths)
        return np.prod(1.0 + th[j:] * r[:, j:], axis=1)

    def rn_weight(self, t: float) -> np.ndarray:
        """Terminal-to-risk-neutral change of measure at ``t``.

        ``prod_j (1 + theta_j R^j_t) / (1 + theta_j R^j_0)``, a unit-mean
        martingale under the simulation measure.
        """
        o = self.obs_index(t)
        th = self.params.tenor.thetas
        r0 = np.asarray(self.params.initial_rates)
        num = np.prod(1.0 + th * self.rates[:, o, :], axis=1)
        return num / np.prod(1.0 + th * r0)

    def swap_rate(self, swap: SwapDefinition, t: float) -> np.ndarray:
        """Forward swap rate per path at ``t`` from the live term rates."""
        swap.validate(self.params.tenor)
        pi_over_pn = self.bond_ratio(swap.start, t)
        pj_over_pn = self.bond_ratio(swap.end, t)
        ann = self.annuity_ratio(swap, t)
        return (pi_over_pn - pj_over_pn) / ann

    def annuity_ratio(self, swap: SwapDefinition, t: float) -> np.ndarray:
        """``A_t / P_t(T_N)`` per path."""
        th = self.params.tenor.thetas
        return sum(
            th[j - 1] * self.bond_ratio(j, t) for j in swap.periods
        )


def simulate_fmm(
    params: FmmParams,
    grid: SimGrid,
    mc,
    obs_times: Sequence[float] | None = None,
    threads: int = 1,
) -> FmmPaths:
    """Joint paths of all term rates under the terminal measure.

    Per step the (N+2) Gaussians (factor increments plus the singular
    Volterra residual) are drawn from deterministic per-chunk
    substreams; the full Volterra path is assembled first and the rates
    then advance by a log-Euler step in ``log(R + shift)`` with the
    inter-rate drift evaluated at the step's left endpoint.

    ``obs_times`` selects which grid times are stored (default: all).
    """
    n = params.n_rates
    tenor = params.tenor
    if grid.horizon > tenor.dates[-1] + 1e-12:
        raise ValueError("grid horizon extends past the final tenor date")
    if mc.n_paths < 2:
        raise ValueError("need at least 2 paths")

    times = grid.times
    n_steps = grid.n_steps
    dt = grid.dt
    if obs_times is None:
        obs_idx = np.arange(n_steps + 1)
    else:
        obs_idx = np.array(sorted({grid.index_of(t) for t in obs_times}), dtype=int)
    obs_pos = {int(i): o for o, i in enumerate(obs_idx)}

    chol = sampling.correlation_cholesky(params.corr)
    xi = xi_matrix(params, times)  # (N, n_steps+1)
    var_y = hybrid_variances(params.kernel, grid)
    gammas = np.vstack(
        [gamma_ramp(tenor, j, times) for j in range(1, n + 1)]
    )  # (N, n_steps+1)
    th = tenor.thetas
    r0 = np.asarray(params.initial_rates)
    shift = params.eta.shift
    # drift mixing matrix: mu^j = sum_{i>j} u_i rho_ij
    rho_rates = params.rate_corr()
    mix = np.where(np.arange(1, n + 1)[:, None] > np.arange(1, n + 1)[None, :], rho_rates, 0.0)

    rates = np.empty((mc.n_paths, len(obs_idx), n))
    volterra = np.empty((mc.n_paths, len(obs_idx)))

    def worker(start: int, stop: int, rng: np.random.Generator) -> None:
        m = stop - start
        z = sampling.standard_normals(
            rng, m, (n_steps, n + 2), getattr(mc, "antithetic", False)
        )
        dw = np.sqrt(dt) * (z[:, :, : n + 1] @ chol.T)  # (m, steps, N+1)
        y = hybrid_scheme_paths(params.kernel, grid, dw[:, :, 0], z[:, :, n + 1])
        x = np.broadcast_to(np.log(r0 + shift), (m, n)).copy()
        if 0 in obs_pos:
            rates[start:stop, obs_pos[0], :] = r0
            volterra[start:stop, obs_pos[0]] = 0.0
        for k in range(n_steps):
            r = np.exp(x) - shift
            v = xi[:, k] * np.exp(y[:, k, None] - 0.5 * var_y[k])
            sqv = np.sqrt(v)
            g = gammas[:, k]
            u = th * params.eta.value(r) * g * sqv / (1.0 + th * r)
            mu = u @ mix  # (m, N)
            sig = params.eta.local_factor(r) * g * sqv
            x += sig * (dw[:, k, 1:] - mu * dt) - 0.5 * sig**2 * dt
            if (k + 1) in obs_pos:
                o = obs_pos[k + 1]
                rates[start:stop, o, :] = np.exp(x) - shift
                volterra[start:stop, o] = y[:, k + 1]

    sampling.run_chunked(worker, mc.n_paths, mc.seed, threads)
    return FmmPaths(
        params=params,
        times=times[obs_idx],
        rates=rates,
        volterra=volterra,
        volterra_var=var_y[obs_idx],
    )


def drift_qstar_coefficients(
    tenor: TenorStructure, rates, swap: SwapDefinition
) -> np.ndarray:
    """Loadings on ``d<R^i, X>`` in the swap-measure drift of a factor.

    For i = 1..I+1 the loading is ``theta_i / (1 + theta_i R^i)``; for
    i = I+2..J it carries the partial annuity weight
    ``sum_{k=i}^J theta_k P(T_k) / A`` as an extra factor. Used as a
    diagnostic for the swap-measure drift of the volatility factor.

    ``rates`` may be a vector (N,) or an array (n_paths, N); the result
    has a trailing axis of length J.
    """
    swap.validate(tenor)
    r = np.atleast_2d(np.asarray(rates, dtype=float))
    if np.any(r <= -1.0):
        raise ValueError("rates must exceed -1/theta for bond positivity")
    th = tenor.thetas
    base = th / (1.0 + th * r)  # (paths, N)
    # P(T_k)/P(T_J) = prod_{l=k+1}^{J} (1 + theta_l R^l) for k <= J
    growth = 1.0 + th[: swap.end] * r[:, : swap.end]
    rev = np.cumprod(growth[:, ::-1], axis=1)[:, ::-1]  # prod_{l=k}^{J}
    p_over_pj = np.concatenate([rev[:, 1:], np.ones((r.shape[0], 1))], axis=1)
    weighted = th[: swap.end] * p_over_pj  # theta_k P(T_k)/P(T_J), k=1..J
    ann = weighted[:, swap.start :].sum(axis=1, keepdims=True)
    tail = np.cumsum(weighted[:, ::-1], axis=1)[:, ::-1] / ann  # sum_{k=i}^J / A
    out = base[:, : swap.end].copy()
    out[:, swap.start + 1 :] *= tail[:, swap.start + 1 :]
    if np.asarray(rates).ndim == 1:
        return out[0]
    return out
