"""Rough Bergomi dynamics for a forward swap rate, mapped from the rate model.

Under the swap measure the approximate model is

    dS*/S* = sqrt(V) dW*,   V_t = v(t) * exp(Y_t - var(Y_t)/2),

with the same power-law kernel. The mapping collapses the whole rate
model into the scalar pair ``(v(t), rho)``: the swap-decomposition
weights fix basket loadings ``pi_j``, the forward-variance curve is the
correlation-weighted basket of the per-rate curves, and ``rho`` is the
variance-weighted average spot-vol correlation. The rate-block
correlations enter only through ``v(t)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import sampling
from .curve import DiscountCurve, SwapDefinition, forward_swap_rate, pi_weights
from .fmm import FmmParams, xi_curve
from .kernel import RoughKernel, SimGrid, hybrid_scheme_paths, hybrid_variances


@dataclass(frozen=True)
class SmmParams:
    """Swap-rate rough Bergomi parameters.

    ``v_curve`` maps an array of times to forward variances; it must be
    positive. ``H = 1/2`` is allowed (the Markovian lognormal-vol
    limit) even though the asymptotic equivalence backing the mapping
    is proved only for H < 1/2.
    """

    s0: float
    kernel: RoughKernel
    v_curve: Callable[[np.ndarray], np.ndarray]
    rho: float

    def __post_init__(self) -> None:
        if self.s0 <= 0.0:
            raise ValueError("s0 must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [-1, 1], got {self.rho}")
        v0 = float(np.asarray(self.v_curve(np.zeros(1)))[0])
        if not v0 > 0.0:
            raise ValueError("v(0) must be positive")

    def v0(self) -> float:
        return float(np.asarray(self.v_curve(np.zeros(1)))[0])


def basket_loadings(
    fmm: FmmParams, curve: DiscountCurve, swap: SwapDefinition
) -> np.ndarray:
    """``pi_j = Pi^j_0 eta_j(R^j_0) / S_0`` over j = I+1..J."""
    s0 = forward_swap_rate(curve, swap)
    pis = pi_weights(curve, swap)
    r0 = np.asarray(fmm.initial_rates)[swap.start : swap.end]
    return pis * fmm.eta.value(r0) / s0


def map_fmm_to_smm(
    fmm: FmmParams, curve: DiscountCurve, swap: SwapDefinition
) -> SmmParams:
    """Collapse the rate model onto a swap-rate rough Bergomi model.

    Returns parameters with

        v(t)  = sum_{i,j} rho_ij pi_i pi_j sqrt(xi_i(t) xi_j(t)),
        rho   = sum_j rho_0j pi_j sqrt(xi_j(0)) / sqrt(v(0)),
        s0    = S_0.

    Raises if ``v(0)`` fails to be positive, which signals an invalid
    correlation input.
    """
    swap.validate(fmm.tenor)
    pi = basket_loadings(fmm, curve, swap)
    idx = list(swap.periods)
    rho_block = fmm.rate_corr()[np.ix_([i - 1 for i in idx], [i - 1 for i in idx])]
    rho0 = fmm.rho0[[i - 1 for i in idx]]

    def v_curve(t):
        t = np.asarray(t, dtype=float)
        sq = np.vstack([np.sqrt(xi_curve(fmm, j, t)) for j in idx])  # (m, nt)
        loaded = pi[:, None] * sq
        return np.einsum("it,ij,jt->t", loaded, rho_block, loaded)

    v0 = float(v_curve(np.zeros(1))[0])
    if v0 <= 0.0:
        raise ValueError(f"mapped v(0) = {v0:.3e} <= 0; invalid correlation input")
    xi0 = np.array([float(xi_curve(fmm, j, 0.0)) for j in idx])
    rho = float(np.sum(rho0 * pi * np.sqrt(xi0)) / np.sqrt(v0))
    s0 = forward_swap_rate(curve, swap)
    return SmmParams(s0=s0, kernel=fmm.kernel, v_curve=v_curve, rho=rho)


def tabulate_v_curve(params: SmmParams, horizon: float, per_year: int = 256):
    """(times, v) arrays sampling the forward-variance curve for output."""
    n = max(2, int(np.ceil(horizon * per_year)) + 1)
    t = np.linspace(0.0, horizon, n)
    return t, np.asarray(params.v_curve(t), dtype=float)


@dataclass(frozen=True)
class SmmPaths:
    """Swap-rate paths at observation times.

    Stores ``log(S/S0)``, the Volterra state, and the driving Brownian
    level ``W*`` (needed to pair control-variate paths with the same
    shocks).
    """

    params: SmmParams
    times: np.ndarray
    log_s: np.ndarray
    volterra: np.ndarray
    volterra_var: np.ndarray
    w_star: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.log_s.shape[0]

    def obs_index(self, t: float) -> int:
        idx = np.nonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-9))[0]
        if idx.size == 0:
            raise ValueError(f"time {t} was not stored; observed {self.times}")
        return int(idx[0])

    def swap_rate(self, t: float) -> np.ndarray:
        return self.params.s0 * np.exp(self.log_s[:, self.obs_index(t)])

    def vol_state(self, t: float) -> np.ndarray:
        o = self.obs_index(t)
        v = float(np.asarray(self.params.v_curve(np.array([self.times[o]])))[0])
        return v * np.exp(self.volterra[:, o] - 0.5 * self.volterra_var[o])


def simulate_smm(
    params: SmmParams,
    grid: SimGrid,
    mc,
    obs_times: Sequence[float] | None = None,
    threads: int = 1,
) -> SmmPaths:
    """Rough Bergomi paths of the swap rate under the swap measure.

    The variance state is exact at grid times (exponential of the
    hybrid-scheme Volterra draw with its discrete variance as
    compensator); the rate advances by log-Euler with the variance
    frozen at the step's left endpoint.
    """
    if mc.n_paths < 2:
        raise ValueError("need at least 2 paths")
    times = grid.times
    n_steps = grid.n_steps
    dt = grid.dt
    if obs_times is None:
        obs_idx = np.arange(n_steps + 1)
    else:
        obs_idx = np.array(sorted({grid.index_of(t) for t in obs_times}), dtype=int)

    var_y = hybrid_variances(params.kernel, grid)
    v_grid = np.asarray(params.v_curve(times), dtype=float)
    if np.any(v_grid <= 0.0):
        raise ValueError("v(t) must be positive on the simulation grid")
    rho = params.rho
    rho_perp = np.sqrt(max(1.0 - rho**2, 0.0))

    log_s = np.empty((mc.n_paths, len(obs_idx)))
    volterra = np.empty((mc.n_paths, len(obs_idx)))
    w_star = np.empty((mc.n_paths, len(obs_idx)))

    def worker(start: int, stop: int, rng: np.random.Generator) -> None:
        m = stop - start
        z = sampling.standard_normals(
            rng, m, (n_steps, 3), getattr(mc, "antithetic", False)
        )
        dw0 = np.sqrt(dt) * z[:, :, 0]
        dws = rho * dw0 + rho_perp * np.sqrt(dt) * z[:, :, 1]
        y = hybrid_scheme_paths(params.kernel, grid, dw0, z[:, :, 2])
        v = v_grid[None, :] * np.exp(y - 0.5 * var_y[None, :])
        incr = np.sqrt(v[:, :-1]) * dws - 0.5 * v[:, :-1] * dt
        ls = np.concatenate(
            [np.zeros((m, 1)), np.cumsum(incr, axis=1)], axis=1
        )
        ws = np.concatenate([np.zeros((m, 1)), np.cumsum(dws, axis=1)], axis=1)
        log_s[start:stop] = ls[:, obs_idx]
        volterra[start:stop] = y[:, obs_idx]
        w_star[start:stop] = ws[:, obs_idx]

    sampling.run_chunked(worker, mc.n_paths, mc.seed, threads)
    return SmmPaths(
        params=params,
        times=times[obs_idx],
        log_s=log_s,
        volterra=volterra,
        volterra_var=var_y[obs_idx],
        w_star=w_star,
    )
