"""Power-law Volterra kernel, tenor ramps and hybrid-scheme path generation.

The volatility driver is the Gaussian Volterra process

    Y_t = int_0^t zeta(t - s) dW_s,      zeta(u) = kappa * u**(H - 1/2),

simulated on a uniform grid by a hybrid scheme: the nearest interval
``(t_{i-1}, t_i]`` is integrated exactly (jointly Gaussian with the
Brownian increment), and the remaining history enters through a Riemann
sum whose evaluation points are chosen so each interval's kernel mass
is matched exactly. With that choice the scheme degenerates to
``Y = kappa * W`` at H = 1/2 with no special casing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from .curve import TenorStructure


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""


@dataclass(frozen=True)
class RoughKernel:
    """Kernel parameters: vol-of-vol ``kappa`` and Hurst exponent ``hurst``.

    ``hurst`` must lie in (0, 1/2]; the right endpoint is the Markovian
    limit where the kernel is constant. ``kappa = 0`` is admitted as the
    deterministic-volatility degenerate case.
    """

    kappa: float
    hurst: float

    def __post_init__(self) -> None:
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if not 0.0 < self.hurst <= 0.5:
            raise ValueError(f"hurst must be in (0, 0.5], got {self.hurst}")

    @property
    def alpha(self) -> float:
        """Power-law exponent ``H - 1/2`` of the kernel."""
        return self.hurst - 0.5

    def zeta(self, u):
        """Kernel value ``kappa * u**(H - 1/2)`` (singular at 0 for H < 1/2)."""
        return self.kappa * np.asarray(u, dtype=float) ** self.alpha

    def variance(self, t):
        """Exact variance ``kappa**2 t**(2H) / (2H)`` of ``Y_t``."""
        t = np.asarray(t, dtype=float)
        return self.kappa**2 * t ** (2.0 * self.hurst) / (2.0 * self.hurst)


@dataclass(frozen=True)
class SimGrid:
    """Uniform time grid on ``[0, horizon]`` with ``steps_per_year`` density."""

    horizon: float
    steps_per_year: int = 96

    def __post_init__(self) -> None:
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.horizon * self.steps_per_year - 1e-12))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``, which must sit on the grid."""
        i = int(round(t / self.dt))
        if not 0 <= i <= self.n_steps or abs(i * self.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not on the simulation grid")
        return i


def gamma_ramp(tenor: TenorStructure, j: int, t) -> np.ndarray:
    """Linear cut-off of the j-th rate's volatility through its accrual period.

    1 up to ``T_{j-1}``, falling linearly to 0 at ``T_j``, 0 afterwards.
    """
    tenor._check_index(j)
    lo, hi = tenor.dates[j - 1], tenor.dates[j]
    t = np.asarray(t, dtype=float)
    return np.clip((hi - t) / (hi - lo), 0.0, 1.0)


def volterra_covariance(kernel: RoughKernel, s: float, t: float) -> float:
    """Exact covariance ``Cov(Y_s, Y_t)`` of the Volterra process.

    Equals ``kappa**2 * int_0^{min(s,t)} (s-u)**(H-1/2) (t-u)**(H-1/2) du``;
    the diagonal is closed form, off-diagonal values use adaptive
    quadrature (the integrand has an integrable endpoint singularity).
    """
    if s < 0.0 or t < 0.0:
        raise ValueError("times must be nonnegative")
    lo, hi = (s, t) if s <= t else (t, s)
    if lo == 0.0 or kernel.kappa == 0.0:
        return 0.0
    if lo == hi:
        return float(kernel.variance(lo))
    a = kernel.alpha

    def integrand(u):
        return (lo - u) ** a * (hi - u) ** a

    val, err = quad(integrand, 0.0, lo, limit=400, epsabs=1e-12, epsrel=1e-11)
    if err > 1e-7 * max(1.0, abs(val)):
        raise QuadratureError(
            f"covariance quadrature error {err:.2e} at (s={s}, t={t}, H={kernel.hurst})"
        )
    return kernel.kappa**2 * val


def kernel_gamma_integral(
    kernel: RoughKernel, tenor: TenorStructure, i: int, t: float
) -> float:
    """Closed form of ``int_0^t (t-s)**(H-1/2) gamma_i(s) ds``.

    With ``a = H + 1/2`` and ``x_+ = max(x, 0)``:

        t**a / a - ((t-T_{i-1})_+**(a+1) - (t-T_i)_+**(a+1))
                   / (a (a+1) (T_i - T_{i-1}))
    """
    tenor._check_index(i)
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return 0.0
    a = kernel.hurst + 0.5
    lo, hi = tenor.dates[i - 1], tenor.dates[i]
    ramp = (max(t - lo, 0.0) ** (a + 1.0) - max(t - hi, 0.0) ** (a + 1.0)) / (
        a * (a + 1.0) * (hi - lo)
    )
    return t**a / a - ramp


def tail_weights(kernel: RoughKernel, n_steps: int, dt: float) -> np.ndarray:
    """Riemann-tail kernel weights ``zeta(b_k* dt)`` for lags k = 2..n.

    The evaluation abscissa ``b_k*`` matches the kernel's integral over
    each lag interval, i.e. ``zeta(b_k* dt) * dt = int zeta`` there, so
    the weight is ``kappa dt**alpha (k**(a+1) - (k-1)**(a+1)) / (a+1)``
    with ``a = alpha``. Index 0..1 of the returned array are zero.
    """
    a = kernel.alpha
    w = np.zeros(n_steps + 1)
    if n_steps >= 2:
        k = np.arange(2, n_steps + 1, dtype=float)
        w[2:] = kernel.kappa * dt**a * (k ** (a + 1.0) - (k - 1.0) ** (a + 1.0)) / (a + 1.0)
    return w


def singular_coefficients(kernel: RoughKernel, dt: float) -> tuple[float, float]:
    """Conditional-Gaussian coefficients for the nearest-interval integral.

    ``I_i = int_{t_{i-1}}^{t_i} zeta(t_i - s) dW_s`` given the Brownian
    increment ``dW_i`` is Gaussian with mean ``cm * dW_i`` and standard
    deviation ``cs``; returns ``(cm, cs)``. Both vanish appropriately at
    H = 1/2 where the integral equals ``kappa * dW_i`` exactly.
    """
    a = kernel.alpha
    cm = kernel.kappa * dt**a / (a + 1.0)
    var = kernel.kappa**2 * dt ** (2.0 * a + 1.0) * (
        1.0 / (2.0 * a + 1.0) - 1.0 / (a + 1.0) ** 2
    )
    return cm, math.sqrt(max(var, 0.0))


def hybrid_variances(kernel: RoughKernel, grid: SimGrid) -> np.ndarray:
    """Exact per-grid-time variance of the discrete hybrid-scheme process.

    Used as the lognormal compensator so that exponentials of the
    simulated process have mean one without discretisation bias.
    """
    n, dt = grid.n_steps, grid.dt
    a = kernel.alpha
    w = tail_weights(kernel, n, dt)
    var_sing = kernel.kappa**2 * dt ** (2.0 * a + 1.0) / (2.0 * a + 1.0)
    out = np.zeros(n + 1)
    out[1:] = var_sing + np.cumsum(np.concatenate(([0.0], w[2:] ** 2))) * dt
    return out


def hybrid_scheme_paths(
    kernel: RoughKernel,
    grid: SimGrid,
    driver_increments: np.ndarray,
    ortho_normals: np.ndarray | None = None,
) -> np.ndarray:
    """Volterra paths ``Y`` on the grid from given Brownian increments.

    Parameters
    ----------
    driver_increments : array (n_paths, n_steps)
        N(0, dt) increments of the driving Brownian motion; reusing the
        same array elsewhere yields shocks correlated with ``Y``.
    ortho_normals : array (n_paths, n_steps), optional
        Standard normals, independent of the driver, carrying the part
        of the nearest-interval integral not spanned by the increment.
        Required for H < 1/2 (at H = 1/2 the residual is zero).

    Returns
    -------
    array (n_paths, n_steps + 1) with ``Y[:, 0] = 0``.
    """
    n, dt = grid.n_steps, grid.dt
    dw = np.asarray(driver_increments, dtype=float)
    if dw.ndim != 2 or dw.shape[1] != n:
        raise ValueError(f"driver increments shape {dw.shape} != (n_paths, {n})")
    cm, cs = singular_coefficients(kernel, dt)
    if cs > 0.0:
        if ortho_normals is None:
            raise ValueError("ortho_normals are required for H < 1/2")
        z = np.asarray(ortho_normals, dtype=float)
        if z.shape != dw.shape:
            raise ValueError(f"ortho normals shape {z.shape} != {dw.shape}")
        singular = cm * dw + cs * z
    else:
        singular = cm * dw
    w = tail_weights(kernel, n, dt)
    y = np.zeros((dw.shape[0], n + 1))
    if n >= 2:
        tail = fftconvolve(dw, w[None, :], axes=1)[:, 1 : n + 1]
        y[:, 1:] = singular + tail
    else:
        y[:, 1:] = singular
    return y
