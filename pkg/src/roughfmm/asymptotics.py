"""Short-maturity implied-volatility expansion and the SABR benchmark formula.

The expansion reads

    sigma(k, t) = sqrt(vbar(t)) * (1 + psi * k * t**(H - 1/2)) + o(t**H),

uniformly over ``|k| <= a sqrt(t)``, where ``vbar(t)`` averages the
forward-variance curve over ``[0, t]`` and ``psi`` collects the
spot-vol correlations of the basket. The unquantified remainder means
numerical checks assert decay of the ``t**(-H)``-scaled residual rather
than an absolute tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curve import DiscountCurve, SwapDefinition
from .fmm import FmmParams, xi_curve
from .kernel import RoughKernel
from .smm import SmmParams, basket_loadings

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_GL_X = 0.5 * (_GL_NODES + 1.0)  # nodes mapped to [0, 1]
_GL_W = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class AsymptoticInputs:
    """Everything the expansion needs: ``v_curve``, ``psi`` and the kernel."""

    v_curve: Callable[[np.ndarray], np.ndarray]
    psi: float
    kernel: RoughKernel

    def __post_init__(self) -> None:
        v0 = float(np.asarray(self.v_curve(np.zeros(1)))[0])
        if v0 <= 0.0:
            raise ValueError("v(0) must be positive")


def v_bar(v_curve: Callable, t: float) -> float:
    """Average forward variance ``int_0^1 v(t s) ds`` (64-node Gauss-Legendre)."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return float(np.asarray(v_curve(np.zeros(1)))[0])
    vals = np.asarray(v_curve(t * _GL_X), dtype=float)
    return float(np.sum(_GL_W * vals))


def psi_coefficient(fmm: FmmParams, curve: DiscountCurve, swap: SwapDefinition) -> float:
    """Skew slope coefficient of the expansion for a swap under the rate model.

    ``psi = kappa / ((2H+1)(H+3/2) v(0)) * sum_j rho_0j pi_j sqrt(xi_j(0))``.
    """
    k = fmm.kernel
    pi = basket_loadings(fmm, curve, swap)
    idx = [j - 1 for j in swap.periods]
    rho0 = fmm.rho0[idx]
    xi0 = np.array([float(xi_curve(fmm, j, 0.0)) for j in swap.periods])
    v0 = float(
        np.einsum(
            "i,ij,j->",
            pi * np.sqrt(xi0),
            fmm.rate_corr()[np.ix_(idx, idx)],
            pi * np.sqrt(xi0),
        )
    )
    if v0 <= 0.0:
        raise ValueError("v(0) must be positive")
    return k.kappa * float(np.sum(rho0 * pi * np.sqrt(xi0))) / (
        (2.0 * k.hurst + 1.0) * (k.hurst + 1.5) * v0
    )


def psi_from_smm(params: SmmParams) -> float:
    """``psi`` for a standalone swap-rate model (single-asset case)."""
    k = params.kernel
    return k.kappa * params.rho / (
        (2.0 * k.hurst + 1.0) * (k.hurst + 1.5) * np.sqrt(params.v0())
    )


def asymptotic_inputs_from_fmm(
    fmm: FmmParams, curve: DiscountCurve, swap: SwapDefinition
) -> AsymptoticInputs:
    from .smm import map_fmm_to_smm

    mapped = map_fmm_to_smm(fmm, curve, swap)
    return AsymptoticInputs(
        v_curve=mapped.v_curve,
        psi=psi_coefficient(fmm, curve, swap),
        kernel=fmm.kernel,
    )


def asymptotic_iv(inputs: AsymptoticInputs, k: float, t: float):
    """Expansion value ``sqrt(vbar(t)) (1 + psi k t**(H-1/2))``."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    vb = v_bar(inputs.v_curve, t)
    slope = inputs.psi * t ** (inputs.kernel.hurst - 0.5)
    return np.sqrt(vb) * (1.0 + slope * np.asarray(k, dtype=float))


def hagan_lognormal_iv(alpha: float, kappa: float, rho: float, t: float, k):
    """Lognormal (beta = 1) SABR smile approximation.

    ``alpha`` is the spot volatility, ``kappa`` the vol-of-vol of the
    volatility itself, ``rho`` the spot-vol correlation and ``k`` the
    log-moneyness ``ln(K/F)``. Includes the ``z/x(z)`` backbone and the
    ``(rho kappa alpha / 4 + (2 - 3 rho^2) kappa^2 / 24) t`` correction.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    k = np.asarray(k, dtype=float)
    z = -(kappa / alpha) * k
    zx = np.ones_like(z)
    small = np.abs(z) < 1e-6
    zs = z[small]
    zx[small] = 1.0 - rho * zs / 2.0 + (2.0 - 3.0 * rho**2) * zs**2 / 12.0
    zb = z[~small]
    x = np.log((np.sqrt(1.0 - 2.0 * rho * zb + zb**2) + zb - rho) / (1.0 - rho))
    zx[~small] = zb / x
    corr = 1.0 + (rho * kappa * alpha / 4.0 + (2.0 - 3.0 * rho**2) * kappa**2 / 24.0) * t
    out = alpha * zx * corr
    if out.ndim == 0:
        return float(out)
    return out
