"""Command-line front end.

Every command is a pure function of its input files, config and seed:
repeated runs write byte-identical output, independent of the thread
count. Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio, report
from .asymptotics import asymptotic_inputs_from_fmm, asymptotic_iv
from .calibration import (
    CalibrationSettings,
    calibrate_first_step,
    calibrate_second_step,
    swap_for,
)
from .curve import annuity, forward_swap_rate
from .fileio import InputError, fmt, get_array, get_float, get_int
from .fmm import FmmParams, simulate_fmm
from .kernel import RoughKernel, SimGrid
from .pricing import ArbitrageError, McConfig, mc_price_swaption_fmm, mc_price_swaption_smm
from .smm import map_fmm_to_smm, simulate_smm, tabulate_v_curve

ENV_SEED = "ROUGHFMM_SEED"
ENV_THREADS = "ROUGHFMM_THREADS"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        doc = fileio.read_keyvalue(args.config)
        source = str(args.config)
        seed = _resolve_seed(args, doc, source)
        threads = _resolve_threads(args, doc, source)
        out_dir = Path(args.out or doc.get("out", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = {
            "price": cmd_price,
            "calibrate": cmd_calibrate,
            "simulate": cmd_simulate,
            "map-smm": cmd_map_smm,
            "smile-report": cmd_smile_report,
        }[args.command]
        handler(doc, source, seed, threads, out_dir)
        return 0
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (ArbitrageError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughfmm",
        description="Rate simulation, swaption pricing and calibration "
        "under rough Volterra volatility.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("price", "swaption IV table under the rate model, the mapped swap-rate "
                  "model and the short-maturity expansion"),
        ("calibrate", "two-step fit of the model to a swaption surface"),
        ("simulate", "terminal-measure path summary of the rate model"),
        ("map-smm", "map rate-model parameters onto the swap-rate model"),
        ("smile-report", "per-smile CSV and figure comparing models to quotes"),
    ]:
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="key = value run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None, help="worker thread count")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def _resolve_seed(args, doc, source) -> int:
    if args.seed is not None:
        return args.seed
    if ENV_SEED in os.environ:
        try:
            return int(os.environ[ENV_SEED])
        except ValueError as exc:
            raise InputError(f"{ENV_SEED} must be an integer") from exc
    return get_int(doc, "seed", source, default=0)


def _resolve_threads(args, doc, source) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    if ENV_THREADS in os.environ:
        try:
            return max(1, int(os.environ[ENV_THREADS]))
        except ValueError as exc:
            raise InputError(f"{ENV_THREADS} must be an integer") from exc
    return max(1, get_int(doc, "threads", source, default=1))


def _load_curve(doc, source):
    if "curve" not in doc:
        raise InputError(f"{source}: missing required key 'curve'")
    return fileio.read_curve_csv(doc["curve"])


def _load_params(doc, source, curve):
    if "params" not in doc:
        raise InputError(f"{source}: missing required key 'params'")
    return fileio.read_fmm_params(doc["params"], curve)


def _load_surface(doc, source):
    if "surface" not in doc:
        raise InputError(f"{source}: missing required key 'surface'")
    return fileio.read_surface_csv(doc["surface"])


def _swaption_cells(doc, source, curve):
    expiries = get_array(doc, "expiries", source)
    tenors = get_array(doc, "tenors", source)
    if len(expiries) != len(tenors):
        raise InputError(f"{source}: 'expiries' and 'tenors' must pair up")
    cells = list(zip(expiries, tenors))
    for e, tn in cells:
        _checked_swap(curve, e, tn, source)
    return cells


def _checked_swap(curve, expiry, tenor, source):
    try:
        return swap_for(curve, expiry, tenor)
    except ValueError as exc:
        raise InputError(f"{source}: {exc}") from exc


def _mc_settings(doc, source, seed):
    return (
        McConfig(
            n_paths=get_int(doc, "n_paths", source, default=100_000),
            seed=seed,
            antithetic=bool(get_int(doc, "antithetic", source, default=0)),
            control_variate=bool(get_int(doc, "control_variate", source, default=1)),
        ),
        get_int(doc, "steps_per_year", source, default=96),
    )


def _cell_rows(curve, params, expiry, tenor, offsets, mc, spy, seed, threads, fmm_paths):
    """IV table rows for one (expiry, tenor) cell."""
    swap = swap_for(curve, expiry, tenor)
    s0 = forward_swap_rate(curve, swap)
    mapped = map_fmm_to_smm(params, curve, swap)
    grid = SimGrid(expiry, spy)
    smm_paths = simulate_smm(mapped, grid, mc, obs_times=[expiry], threads=threads)
    asym = asymptotic_inputs_from_fmm(params, curve, swap)
    rows = []
    for off in offsets:
        strike = s0 + off
        if strike <= 0.0:
            continue
        k = math.log(strike / s0)
        fmm_res = mc_price_swaption_fmm(fmm_paths, curve, swap, strike, expiry)
        smm_res = mc_price_swaption_smm(
            mapped, k, expiry, grid, mc, paths=smm_paths
        )
        rows.append(
            {
                "expiry": expiry,
                "tenor": tenor,
                "strike_offset": off,
                "strike": strike,
                "fmm_iv": fmm_res.implied_vol,
                "fmm_se": fmm_res.iv_std_error,
                "smm_iv": smm_res.implied_vol,
                "smm_se": smm_res.iv_std_error,
                "asym_iv": float(asymptotic_iv(asym, k, expiry)),
            }
        )
    return rows


def cmd_price(doc, source, seed, threads, out_dir) -> None:
    curve = _load_curve(doc, source)
    params = _load_params(doc, source, curve)
    cells = _swaption_cells(doc, source, curve)
    offsets = get_array(doc, "strike_offsets", source)
    mc, spy = _mc_settings(doc, source, seed)

    # one rate simulation per distinct expiry serves every tenor at that expiry
    rows = []
    for expiry in sorted({e for e, _ in cells}):
        grid = SimGrid(expiry, spy)
        fmm_paths = simulate_fmm(
            params, grid, mc, obs_times=[expiry], threads=threads
        )
        for e, tenor in cells:
            if e != expiry:
                continue
            rows.extend(
                _cell_rows(
                    curve, params, e, tenor, offsets, mc, spy, seed, threads, fmm_paths
                )
            )

    header = [
        "expiry", "tenor", "strike_offset", "strike",
        "fmm_iv", "fmm_se", "smm_iv", "smm_se", "asym_iv",
    ]
    table = [header] + [[fmt(r[c]) if r[c] is not None else "nan" for c in header] for r in rows]
    fileio.write_csv(out_dir / "prices.csv", table)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    for row in table:
        print("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    print(f"wrote {out_dir / 'prices.csv'}")


def cmd_simulate(doc, source, seed, threads, out_dir) -> None:
    curve = _load_curve(doc, source)
    params = _load_params(doc, source, curve)
    mc, spy = _mc_settings(doc, source, seed)
    horizon = get_float(doc, "horizon", source)
    grid = SimGrid(horizon, spy)
    obs_per_year = get_int(doc, "obs_per_year", source, default=12)
    stride = max(1, round(spy / obs_per_year))
    obs = list(grid.times[::stride])
    if obs[-1] != grid.times[-1]:
        obs.append(grid.times[-1])
    paths = simulate_fmm(params, grid, mc, obs_times=obs, threads=threads)
    n = params.n_rates
    header = ["time"]
    for j in range(1, n + 1):
        header += [f"mean_rate_{j}", f"std_rate_{j}", f"mean_vol_state_{j}"]
    header.append("mean_rn_weight")
    rows = [header]
    for o, t in enumerate(paths.times):
        row = [fmt(t)]
        for j in range(1, n + 1):
            rj = paths.rates[:, o, j - 1]
            vj = paths.vol_state(j, t)
            row += [fmt(rj.mean()), fmt(rj.std()), fmt(vj.mean())]
        row.append(fmt(paths.rn_weight(t).mean()))
        rows.append(row)
    fileio.write_csv(out_dir / "paths_summary.csv", rows)
    print(f"wrote {out_dir / 'paths_summary.csv'}")


def cmd_map_smm(doc, source, seed, threads, out_dir) -> None:
    curve = _load_curve(doc, source)
    params = _load_params(doc, source, curve)
    expiry = get_float(doc, "expiry", source)
    tenor = get_float(doc, "tenor", source)
    swap = _checked_swap(curve, expiry, tenor, source)
    mapped = map_fmm_to_smm(params, curve, swap)
    fileio.write_keyvalue(
        out_dir / "smm_params.txt",
        {
            "s0": mapped.s0,
            "rho": mapped.rho,
            "kappa": mapped.kernel.kappa,
            "hurst": mapped.kernel.hurst,
            "v0": mapped.v0(),
            "annuity": annuity(curve, swap),
        },
    )
    times, values = tabulate_v_curve(mapped, expiry)
    rows = [["time", "forward_variance"]]
    rows += [[fmt(t), fmt(v)] for t, v in zip(times, values)]
    fileio.write_csv(out_dir / "v_curve.csv", rows)
    report.render_variance_curve_figure(
        out_dir / "v_curve.png", times, values, f"{fmt(expiry)}y x {fmt(tenor)}y"
    )
    print(f"wrote {out_dir / 'smm_params.txt'}, {out_dir / 'v_curve.csv'}")


def cmd_smile_report(doc, source, seed, threads, out_dir) -> None:
    curve = _load_curve(doc, source)
    params = _load_params(doc, source, curve)
    surface = _load_surface(doc, source)
    mc, spy = _mc_settings(doc, source, seed)
    written = []
    for expiry, tenor in surface.cells():
        quotes = surface.smile(expiry, tenor)
        if len(quotes) < 2:
            continue
        swap = _checked_swap(curve, expiry, tenor, str(doc.get("surface")))
        s0 = forward_swap_rate(curve, swap)
        atm = surface.atm_rate(expiry, tenor, curve)
        offsets = [q.strike_offset for q in quotes]
        grid = SimGrid(expiry, spy)
        fmm_paths = simulate_fmm(params, grid, mc, obs_times=[expiry], threads=threads)
        rows = _cell_rows(
            curve, params, expiry, tenor, offsets, mc, spy, seed, threads, fmm_paths
        )
        tag = f"{fmt(expiry)}x{fmt(tenor)}".replace(".", "p")
        table = [["strike", "market_iv", "fmm_iv", "fmm_se", "smm_iv", "smm_se"]]
        strikes, miv, fiv, fse, siv, sse = [], [], [], [], [], []
        for q, r in zip(quotes, rows):
            table.append(
                [
                    fmt(atm + q.strike_offset),
                    fmt(q.iv),
                    fmt(r["fmm_iv"]),
                    fmt(r["fmm_se"]),
                    fmt(r["smm_iv"]),
                    fmt(r["smm_se"]),
                ]
            )
            strikes.append(atm + q.strike_offset)
            miv.append(q.iv)
            fiv.append(r["fmm_iv"])
            fse.append(r["fmm_se"])
            siv.append(r["smm_iv"])
            sse.append(r["smm_se"])
        csv_path = out_dir / f"smile_{tag}.csv"
        fileio.write_csv(csv_path, table)
        report.render_smile_figure(
            out_dir / f"smile_{tag}.png",
            f"{fmt(expiry)}y x {fmt(tenor)}y",
            strikes, miv, fiv, fse, siv, sse,
        )
        written.append(csv_path.name)
    if not written:
        raise InputError("surface has no smiles with at least 2 strikes")
    print("wrote " + ", ".join(written))


def cmd_calibrate(doc, source, seed, threads, out_dir) -> None:
    curve = _load_curve(doc, source)
    surface = _load_surface(doc, source)
    hurst = get_float(doc, "hurst", source)
    knot_indices = [int(i) for i in get_array(doc, "knot_indices", source)]
    settings = CalibrationSettings(
        n_paths=get_int(doc, "calib_paths", source, default=16384),
        steps_per_year=get_int(doc, "calib_steps_per_year", source, default=48),
        seed=seed,
        max_iter=get_int(doc, "max_iter", source, default=400),
        n_restarts=get_int(doc, "restarts", source, default=3),
    )
    sweep = []
    if "hurst_sweep" in doc:
        sweep = [float(h) for h in get_array(doc, "hurst_sweep", source)]

    sweep_rows = []
    for h in sweep:
        res = calibrate_first_step(surface, h, curve, knot_indices, settings)
        sweep_rows.append(_first_step_row(res, knot_indices))
        print(f"first step at H={fmt(h)}: kappa={fmt(res.kappa)} rmse={fmt(res.rmse)}")

    first = calibrate_first_step(surface, hurst, curve, knot_indices, settings)
    print(f"first step at H={fmt(hurst)}: kappa={fmt(first.kappa)} rmse={fmt(first.rmse)}")
    second = calibrate_second_step(surface, first, curve, settings)
    for year, rmse in second.rmse_by_year.items():
        print(f"second step year {year}: rmse={fmt(rmse)}")

    # all outputs are written only after both steps succeed
    model = FmmParams(
        tenor=curve.tenor,
        initial_rates=tuple(curve.forward_rates()),
        kernel=RoughKernel(first.kappa, first.hurst),
        alphas=tuple(first.alphas),
        corr=second.corr,
    )
    fileio.write_fmm_params(out_dir / "fmm_params.txt", model)

    header = (
        ["hurst", "kappa"]
        + [f"alpha_{i}" for i in knot_indices]
        + [f"rho0_{i}" for i in knot_indices]
        + ["rmse"]
    )
    rows = [header] + sweep_rows + [_first_step_row(first, knot_indices)]
    fileio.write_csv(out_dir / "first_step.csv", rows)
    if sweep_rows:
        hs = [float(r[0]) for r in rows[1:]]
        rmses = [float(r[-1]) for r in rows[1:]]
        order = np.argsort(hs)
        report.render_rmse_figure(
            out_dir / "rmse_vs_hurst.png",
            np.asarray(hs)[order],
            np.asarray(rmses)[order],
        )
    second_rows = [["coterminal_year", "rmse"]]
    second_rows += [[str(y), fmt(r)] for y, r in sorted(second.rmse_by_year.items())]
    fileio.write_csv(out_dir / "second_step.csv", second_rows)
    print(f"wrote {out_dir / 'fmm_params.txt'}")


def _first_step_row(res, knot_indices):
    return (
        [fmt(res.hurst), fmt(res.kappa)]
        + [fmt(res.alphas[i - 1]) for i in knot_indices]
        + [fmt(res.rho0[i - 1]) for i in knot_indices]
        + [fmt(res.rmse)]
    )


if __name__ == "__main__":
    sys.exit(main())
