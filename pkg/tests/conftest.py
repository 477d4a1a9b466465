import numpy as np
import pytest

from roughfmm import DiscountCurve, FmmParams, RoughKernel, TenorStructure

_ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n, label): acceptance criterion metadata"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call":
        n = marker.args[0]
        label = marker.kwargs.get("label", item.name)
        _ACCEPTANCE_RESULTS[n] = (
            "PASS" if report.outcome == "passed" else report.outcome.upper(),
            label,
        )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_ACCEPTANCE_RESULTS):
        status, label = _ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {status} - {label}")


@pytest.fixture
def demo_curve():
    ts = TenorStructure([0, 1, 2, 3])
    return DiscountCurve(ts, [1.0, 0.99, 0.97, 0.94])


@pytest.fixture
def flat_curve_5y():
    ts = TenorStructure([0, 1, 2, 3, 4, 5])
    return DiscountCurve.from_flat_rate(ts, 0.03)


def decaying_corr(n_rates: int, rho0, decay: float = 0.9) -> np.ndarray:
    """Valid (N+1)-factor correlation: exp-decaying rate block, given vol row."""
    rho0 = np.asarray(rho0, dtype=float)
    corr = np.eye(n_rates + 1)
    corr[0, 1:] = rho0
    corr[1:, 0] = rho0
    idx = np.arange(n_rates)
    block = decay ** np.abs(np.subtract.outer(idx, idx))
    corr[1:, 1:] = block * np.sqrt(
        np.outer(1.0 - rho0**2, 1.0 - rho0**2)
    ) + np.outer(rho0, rho0)
    np.fill_diagonal(corr, 1.0)
    assert np.linalg.eigvalsh(corr).min() > -1e-10
    return corr


def standard_fmm(curve, hurst=0.2, kappa=1.0, alpha=0.3, rho0_level=-0.3, decay=0.9):
    n = curve.tenor.n_periods
    rho0 = np.full(n, rho0_level)
    return FmmParams(
        tenor=curve.tenor,
        initial_rates=tuple(curve.forward_rates()),
        kernel=RoughKernel(kappa, hurst),
        alphas=(alpha,) * n,
        corr=decaying_corr(n, rho0, decay),
    )
