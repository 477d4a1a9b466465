"""Figure rendering for the CLI report paths.

Figures are written next to the delimited output with deterministic
bytes: the Agg backend, fixed dpi, and no software/timestamp metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def render_smile_figure(
    path,
    title: str,
    strikes,
    market_iv,
    fmm_iv,
    fmm_se,
    smm_iv,
    smm_se,
) -> None:
    """Smile comparison: market dots, model lines, 2-SE bars, 3-SE bands."""
    strikes = 100.0 * np.asarray(strikes, dtype=float)
    to_pct = lambda x: 100.0 * np.asarray(x, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for iv, se, label, color in (
        (fmm_iv, fmm_se, "FMM", "tab:blue"),
        (smm_iv, smm_se, "Mapped SMM", "tab:orange"),
    ):
        iv, se = to_pct(iv), to_pct(se)
        ax.errorbar(
            strikes, iv, yerr=2.0 * se, fmt="o-", ms=3, capsize=3,
            label=f"{label} (±2 SE)", color=color, lw=1.0,
        )
        ax.fill_between(strikes, iv - 3.0 * se, iv + 3.0 * se, color=color, alpha=0.15)
    if market_iv is not None:
        ax.plot(strikes, to_pct(market_iv), "k^", ms=5, label="Market")
    ax.set_xlabel("strike (%)")
    ax.set_ylabel("implied vol (%)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_rmse_figure(path, hursts, rmses) -> None:
    """First-step fit quality against the Hurst exponent."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(hursts, 100.0 * np.asarray(rmses, dtype=float), "o-", color="tab:blue")
    ax.set_xlabel("Hurst exponent")
    ax.set_ylabel("smile RMSE (%)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_variance_curve_figure(path, times, values, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(times, values, color="tab:blue")
    ax.set_xlabel("time (years)")
    ax.set_ylabel("forward variance v(t)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
