"""Tenor structures, discount curves and forward swap-rate decompositions.

All quantities live on the tenor dates only: the model never needs a
discount factor between pillars, so no interpolation is offered here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TenorStructure:
    """Payment grid ``T_0 < T_1 < ... < T_N`` with ``T_0 = 0``.

    Parameters
    ----------
    dates : sequence of float
        Year-times of the tenor dates, starting at 0. At least three
        dates (N >= 2) are required so that a swap can be formed.
    """

    dates: tuple[float, ...]

    def __init__(self, dates) -> None:
        dates = tuple(float(t) for t in dates)
        if len(dates) < 3:
            raise ValueError("need at least 3 tenor dates (N >= 2)")
        if abs(dates[0]) > 1e-14:
            raise ValueError(f"first tenor date must be 0, got {dates[0]}")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("tenor dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)

    @property
    def n_periods(self) -> int:
        return len(self.dates) - 1

    @property
    def thetas(self) -> np.ndarray:
        """Year fractions ``theta_j = T_j - T_{j-1}`` for j = 1..N."""
        d = np.asarray(self.dates)
        return np.diff(d)

    def theta(self, j: int) -> float:
        self._check_index(j)
        return self.dates[j] - self.dates[j - 1]

    def _check_index(self, j: int) -> None:
        if not 1 <= j <= self.n_periods:
            raise IndexError(f"period index {j} outside 1..{self.n_periods}")


@dataclass(frozen=True)
class DiscountCurve:
    """Zero-coupon prices ``P_0(T_j)`` on a tenor structure.

    ``discounts[j]`` is the price of the bond maturing at ``T_j``; the
    first entry must be 1. Prices in (0, 1] keep every forward term
    rate nonnegative when the curve is decreasing, which is the regime
    in which the swap-decomposition bound of :func:`pi_weights` holds.
    """

    tenor: TenorStructure
    discounts: tuple[float, ...]

    def __init__(self, tenor: TenorStructure, discounts) -> None:
        discounts = tuple(float(p) for p in discounts)
        if len(discounts) != len(tenor.dates):
            raise ValueError(
                f"{len(discounts)} discounts for {len(tenor.dates)} dates"
            )
        if abs(discounts[0] - 1.0) > 1e-12:
            raise ValueError("P_0(T_0) must equal 1")
        if any(p <= 0.0 for p in discounts):
            raise ValueError("discount factors must be positive")
        object.__setattr__(self, "tenor", tenor)
        object.__setattr__(self, "discounts", discounts)

    @classmethod
    def from_flat_rate(cls, tenor: TenorStructure, rate: float) -> "DiscountCurve":
        """Curve with ``P_0(T_j) = prod_k 1/(1 + theta_k * rate)``."""
        ps = [1.0]
        for th in tenor.thetas:
            ps.append(ps[-1] / (1.0 + th * rate))
        return cls(tenor, ps)

    def forward_rates(self) -> np.ndarray:
        """All forward term rates ``R^j_0`` for j = 1..N."""
        p = np.asarray(self.discounts)
        return (p[:-1] / p[1:] - 1.0) / self.tenor.thetas


@dataclass(frozen=True)
class SwapDefinition:
    """Swap over ``(T_I, T_J]`` with ``1 <= I < J <= N``."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if not (1 <= self.start < self.end):
            raise ValueError(f"need 1 <= I < J, got I={self.start}, J={self.end}")

    def validate(self, tenor: TenorStructure) -> None:
        if self.end > tenor.n_periods:
            raise IndexError(
                f"swap end {self.end} beyond last period {tenor.n_periods}"
            )

    @property
    def periods(self) -> range:
        """Accrual period indices j = I+1 .. J."""
        return range(self.start + 1, self.end + 1)


def forward_term_rate(curve: DiscountCurve, j: int) -> float:
    """Simple forward rate for ``(T_{j-1}, T_j]`` implied by bond prices.

    Returns ``(P_0(T_{j-1}) / P_0(T_j) - 1) / theta_j``.
    """
    curve.tenor._check_index(j)
    p = curve.discounts
    return (p[j - 1] / p[j] - 1.0) / curve.tenor.theta(j)


def annuity(curve: DiscountCurve, swap: SwapDefinition) -> float:
    """Sum of discounted accruals ``sum_j theta_j P_0(T_j)`` over the swap."""
    swap.validate(curve.tenor)
    return sum(curve.tenor.theta(j) * curve.discounts[j] for j in swap.periods)


def forward_swap_rate(curve: DiscountCurve, swap: SwapDefinition) -> float:
    """Fair fixed rate ``(P_0(T_I) - P_0(T_J)) / annuity``."""
    swap.validate(curve.tenor)
    a = annuity(curve, swap)
    if a <= 0.0:
        raise ZeroDivisionError("annuity must be positive")
    return (curve.discounts[swap.start] - curve.discounts[swap.end]) / a


def pi_weights(curve: DiscountCurve, swap: SwapDefinition) -> np.ndarray:
    """Exact time-0 loadings of the swap rate on its forward term rates.

    The swap rate's local-martingale part decomposes as
    ``dS = sum_j Pi^j dR^j*`` with

        Pi^j = theta_j P(T_j) / (A P(T_{j-1}))
               * (P(T_J) + S * sum_{k=j}^{J} theta_k P(T_k)).

    Returned in order j = I+1..J. These replace the classical frozen
    annuity weights ``theta_j P(T_j) / A``; the two coincide exactly
    only on a flat curve. When every ``R^j_0 >= 0`` the weights satisfy
    ``Pi^j R^j <= S``; with negative rates no such bound is guaranteed.
    """
    swap.validate(curve.tenor)
    p = curve.discounts
    a = annuity(curve, swap)
    s = forward_swap_rate(curve, swap)
    out = np.empty(swap.end - swap.start)
    tail = 0.0  # sum_{k=j}^{J} theta_k P(T_k), built backwards
    for pos in range(swap.end, swap.start, -1):
        tail += curve.tenor.theta(pos) * p[pos]
        out[pos - swap.start - 1] = (
            curve.tenor.theta(pos) * p[pos] / (a * p[pos - 1]) * (p[swap.end] + s * tail)
        )
    return out


def freezing_weights(curve: DiscountCurve, swap: SwapDefinition) -> np.ndarray:
    """Classical frozen weights ``theta_j P_0(T_j) / A_0``, j = I+1..J."""
    a = annuity(curve, swap)
    return np.array(
        [curve.tenor.theta(j) * curve.discounts[j] / a for j in swap.periods]
    )


def c_recursion(curve: DiscountCurve, swap: SwapDefinition) -> np.ndarray:
    """Correction factors ``C^j`` with ``Pi^j = theta_j P(T_j) C^j / A``.

    Built by the forward recursion ``C^{I+1} = 1``,
    ``C^{j+1} = (1 + theta_j R^j) C^j - theta_j S``. All ``C^j = 1``
    exactly when the curve is flat (every ``R^j = S``).
    """
    swap.validate(curve.tenor)
    s = forward_swap_rate(curve, swap)
    out = np.empty(swap.end - swap.start)
    out[0] = 1.0
    for pos, j in enumerate(range(swap.start + 1, swap.end)):
        rj = forward_term_rate(curve, j)
        th = curve.tenor.theta(j)
        out[pos + 1] = (1.0 + th * rj) * out[pos] - th * s
    return out
