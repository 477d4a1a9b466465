"""Forward market model with rough Volterra volatility.

Simulation of forward term rates under the terminal measure, exact
swap-rate decomposition, a mapped swap-rate rough Bergomi model,
short-maturity implied-volatility asymptotics, Monte Carlo swaption
pricing with control variates, and a two-step calibration pipeline.
"""

from .asymptotics import (
    AsymptoticInputs,
    asymptotic_iv,
    hagan_lognormal_iv,
    psi_coefficient,
    psi_from_smm,
    v_bar,
)
from .calibration import (
    CalibrationSettings,
    CorrelationAngles,
    SwaptionQuote,
    SwaptionSurface,
    calibrate_first_step,
    calibrate_second_step,
    hypersphere_to_corr,
    interpolate_rho0,
    separate_tenor_calibrate,
)
from .curve import (
    DiscountCurve,
    SwapDefinition,
    TenorStructure,
    annuity,
    c_recursion,
    forward_swap_rate,
    forward_term_rate,
    freezing_weights,
    pi_weights,
)
from .fmm import (
    EtaSpec,
    FmmParams,
    FmmPaths,
    drift_qstar_coefficients,
    simulate_fmm,
    xi_curve,
)
from .kernel import (
    RoughKernel,
    SimGrid,
    gamma_ramp,
    hybrid_scheme_paths,
    kernel_gamma_integral,
    volterra_covariance,
)
from .pricing import (
    ArbitrageError,
    McConfig,
    PricingResult,
    black_put,
    implied_vol,
    mc_price_swaption_fmm,
    mc_price_swaption_smm,
)
from .smm import SmmParams, SmmPaths, map_fmm_to_smm, simulate_smm

__version__ = "0.1.0"

__all__ = [
    "ArbitrageError",
    "AsymptoticInputs",
    "CalibrationSettings",
    "CorrelationAngles",
    "DiscountCurve",
    "EtaSpec",
    "FmmParams",
    "FmmPaths",
    "McConfig",
    "PricingResult",
    "RoughKernel",
    "SimGrid",
    "SmmParams",
    "SmmPaths",
    "SwapDefinition",
    "SwaptionQuote",
    "SwaptionSurface",
    "TenorStructure",
    "annuity",
    "asymptotic_iv",
    "black_put",
    "c_recursion",
    "calibrate_first_step",
    "calibrate_second_step",
    "drift_qstar_coefficients",
    "forward_swap_rate",
    "forward_term_rate",
    "freezing_weights",
    "gamma_ramp",
    "hagan_lognormal_iv",
    "hybrid_scheme_paths",
    "hypersphere_to_corr",
    "implied_vol",
    "interpolate_rho0",
    "kernel_gamma_integral",
    "map_fmm_to_smm",
    "mc_price_swaption_fmm",
    "mc_price_swaption_smm",
    "pi_weights",
    "psi_coefficient",
    "psi_from_smm",
    "separate_tenor_calibrate",
    "simulate_fmm",
    "simulate_smm",
    "v_bar",
    "volterra_covariance",
    "xi_curve",
]
