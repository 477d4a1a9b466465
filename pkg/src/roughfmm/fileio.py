"""Text formats: key-value config/params documents and CSV tables.

Everything is plain, diffable text. Numeric output is fixed at six
significant digits so golden files stay stable across platforms.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .calibration import SwaptionQuote, SwaptionSurface
from .curve import DiscountCurve, TenorStructure
from .fmm import EtaSpec, FmmParams
from .kernel import RoughKernel


class InputError(ValueError):
    """Malformed input file; message carries file and line context."""


def fmt(x: float) -> str:
    """Canonical 6-significant-digit rendering used in all outputs."""
    return f"{float(x):.6g}"


# ---------------------------------------------------------------------------
# key = value documents (configs and parameter files)
# ---------------------------------------------------------------------------


def read_keyvalue(path) -> dict[str, str]:
    """Parse a flat ``key = value`` document.

    Blank lines and ``#`` comments are ignored; repeated keys are an
    error. Values stay as strings; callers coerce with the helpers
    below so errors can name the offending key.
    """
    out: dict[str, str] = {}
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise InputError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def write_keyvalue(path, items: dict) -> None:
    lines = []
    for key, value in items.items():
        if isinstance(value, (list, tuple, np.ndarray)):
            rendered = " ".join(fmt(v) for v in np.asarray(value).ravel())
        elif isinstance(value, float):
            rendered = fmt(value)
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    Path(path).write_text("\n".join(lines) + "\n")


def get_float(doc: dict, key: str, source: str, default=None) -> float:
    if key not in doc:
        if default is not None:
            return default
        raise InputError(f"{source}: missing required key {key!r}")
    try:
        return float(doc[key])
    except ValueError as exc:
        raise InputError(f"{source}: key {key!r} is not a number: {doc[key]!r}") from exc


def get_int(doc: dict, key: str, source: str, default=None) -> int:
    val = get_float(doc, key, source, default)
    if val != int(val):
        raise InputError(f"{source}: key {key!r} must be an integer, got {val}")
    return int(val)


def get_array(doc: dict, key: str, source: str) -> np.ndarray:
    if key not in doc:
        raise InputError(f"{source}: missing required key {key!r}")
    try:
        return np.array([float(tok) for tok in doc[key].split()])
    except ValueError as exc:
        raise InputError(f"{source}: key {key!r} has non-numeric entries") from exc


# ---------------------------------------------------------------------------
# model parameter documents
# ---------------------------------------------------------------------------


def write_fmm_params(path, params: FmmParams) -> None:
    doc: dict = {
        "tenor_dates": params.tenor.dates,
        "kappa": params.kernel.kappa,
        "hurst": params.kernel.hurst,
        "alphas": params.alphas,
        "rho0": params.rho0,
        "eta": params.eta.variant,
    }
    if params.eta.variant == "shifted_power":
        doc["eta_beta"] = params.eta.beta
        doc["eta_shift"] = params.eta.shift
    for i, row in enumerate(np.asarray(params.corr)):
        doc[f"corr_{i}"] = row
    write_keyvalue(path, doc)


def read_fmm_params(path, curve: DiscountCurve) -> FmmParams:
    """Parameter document plus a discount curve give the full model.

    The initial rates come from the curve; the document's tenor dates
    must match the curve's.
    """
    source = str(path)
    doc = read_keyvalue(path)
    dates = get_array(doc, "tenor_dates", source)
    if not np.allclose(dates, curve.tenor.dates, atol=1e-9):
        raise InputError(f"{source}: tenor dates disagree with the discount curve")
    n = len(dates) - 1
    kappa = get_float(doc, "kappa", source)
    hurst = get_float(doc, "hurst", source)
    alphas = get_array(doc, "alphas", source)
    rho0 = get_array(doc, "rho0", source)
    if len(alphas) != n or len(rho0) != n:
        raise InputError(f"{source}: alphas/rho0 must have {n} entries")
    corr = np.empty((n + 1, n + 1))
    n_rows = sum(f"corr_{i}" in doc for i in range(n + 1))
    if 0 < n_rows < n + 1:
        raise InputError(f"{source}: found {n_rows} corr_* rows, need {n + 1} or none")
    if n_rows:
        for i in range(n + 1):
            row = get_array(doc, f"corr_{i}", source)
            if len(row) != n + 1:
                raise InputError(f"{source}: corr_{i} must have {n + 1} entries")
            corr[i] = row
    else:
        corr = np.eye(n + 1)
        corr[0, 1:] = rho0
        corr[1:, 0] = rho0
        block = np.outer(rho0, rho0) + np.diag(1.0 - rho0**2)
        corr[1:, 1:] = block
    variant = doc.get("eta", "lognormal")
    if variant == "lognormal":
        eta = EtaSpec()
    else:
        eta = EtaSpec(
            variant="shifted_power",
            beta=get_float(doc, "eta_beta", source, 1.0),
            shift=get_float(doc, "eta_shift", source),
        )
    return FmmParams(
        tenor=curve.tenor,
        initial_rates=tuple(curve.forward_rates()),
        kernel=RoughKernel(kappa, hurst),
        alphas=tuple(alphas),
        corr=corr,
        eta=eta,
    )


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------


def read_curve_csv(path) -> DiscountCurve:
    """``maturity_years,discount_factor`` rows; must start at (0, 1)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    dates, discounts = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if lineno == 1 and not _is_number(row[0]):
                if [c.strip() for c in row] != ["maturity_years", "discount_factor"]:
                    raise InputError(
                        f"{path}:1: expected header 'maturity_years,discount_factor'"
                    )
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                dates.append(float(row[0]))
                discounts.append(float(row[1]))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: non-numeric entry") from exc
    try:
        return DiscountCurve(TenorStructure(dates), discounts)
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_curve_csv(path, curve: DiscountCurve) -> None:
    rows = [["maturity_years", "discount_factor"]]
    for t, p in zip(curve.tenor.dates, curve.discounts):
        rows.append([fmt(t), fmt(p)])
    write_csv(path, rows)


def read_surface_csv(path) -> SwaptionSurface:
    """``expiry_years,tenor_years,strike_offset,market_iv`` rows.

    ``strike_offset`` is in absolute rate against the ATM strike; the
    ATM row carries offset 0.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    quotes = []
    header = ["expiry_years", "tenor_years", "strike_offset", "market_iv"]
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if lineno == 1 and not _is_number(row[0]):
                if [c.strip() for c in row] != header:
                    raise InputError(f"{path}:1: expected header {','.join(header)}")
                continue
            if len(row) != 4:
                raise InputError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                quotes.append(
                    SwaptionQuote(
                        expiry=float(row[0]),
                        tenor=float(row[1]),
                        strike_offset=float(row[2]),
                        iv=float(row[3]),
                    )
                )
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: non-numeric entry") from exc
    if not quotes:
        raise InputError(f"{path}: surface is empty")
    try:
        return SwaptionSurface(quotes=quotes)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_surface_csv(path, surface: SwaptionSurface) -> None:
    rows = [["expiry_years", "tenor_years", "strike_offset", "market_iv"]]
    for q in surface.quotes:
        rows.append([fmt(q.expiry), fmt(q.tenor), fmt(q.strike_offset), fmt(q.iv)])
    write_csv(path, rows)


def write_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False
