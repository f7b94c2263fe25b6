"""Command-line surface: simulate, test-cov, test-pcov, factors, farm, backtest.

Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error,
3 is reserved for the test commands to signal rejection at the 5% level
so shell pipelines can branch on the outcome.  Every artifact-writing
command drops a resolved-config echo next to its outputs, and identical
config + seed reproduce outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .backtest import BacktestConfig, rank_table, report_to_json, rolling_backtest
from .covstruct import (
    IndexSet,
    block_pairs,
    cov_structure_test,
    offdiag_pairs,
    pcov_structure_test,
    row_pairs,
)
from .factors import select_factor_count
from .hac import KernelSpec, default_bandwidth
from .panel import PanelError, load_panel_csv
from .pipeline import farm_fit, farm_predict_at, load_farm_model, save_farm_model, stagewise_report
from .regression import first_stage_filter
from .simulate import SimulationConfig, power_config, run_info_gains, run_size_power

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_REJECT = 3

PRESETS = {
    # Size of the covariance test, dependence chain off.
    "table1-panel-a": {"mode": "size-power", "scenario": "known-factors", "power": False,
                       "T": 100, "n": 50, "phi": 0.0},
    "table1-panel-b": {"mode": "size-power", "scenario": "known-r", "power": False,
                       "T": 500, "n": 250, "phi": 0.0},
    # Power against the planted dependence chain.
    "table2-panel-a": {"mode": "size-power", "scenario": "known-factors", "power": True,
                       "T": 500, "n": 250, "phi": 0.0},
    "table2-panel-b": {"mode": "size-power", "scenario": "known-r", "power": True,
                       "T": 700, "n": 350, "phi": 0.0},
    # Cross-validated prediction MSE comparison.
    "table3": {"mode": "info-gains", "T": 500, "n": 250, "phi": 0.5, "power": True},
}


class CliError(Exception):
    """Configuration error: maps to exit code 2."""


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
    except OSError as err:
        raise CliError(f"cannot read config file: {err}") from None
    return values


def _resolved(args: argparse.Namespace, extra: dict | None = None) -> dict:
    # The output directory and worker count do not affect results, so they
    # stay out of the echo: identical configs hash identically wherever
    # the artifacts land.
    skip = ("func", "out", "threads")
    doc = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    if extra:
        doc.update(extra)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(doc.items())}


def _write_provenance(outdir: Path, command: str, args, input_paths=()) -> None:
    digest = hashlib.sha256()
    digest.update(json.dumps(_resolved(args), sort_keys=True, default=str).encode())
    for p in input_paths:
        try:
            digest.update(Path(p).read_bytes())
        except OSError:
            pass
    doc = {
        "command": command,
        "config": _resolved(args),
        "content_hash": digest.hexdigest(),
    }
    (outdir / f"{command}_config.json").write_text(
        json.dumps(doc, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )


def _outdir(args) -> Path:
    out = Path(getattr(args, "out", ".") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads(args) -> int:
    t = getattr(args, "threads", None)
    if t is None:
        t = os.environ.get("FARM_THREADS", "1")
    t = int(t)
    if t == 0:
        t = os.cpu_count() or 1
    return max(t, 1)


def _parse_pairs(spec: str, n: int, series_ids) -> IndexSet:
    if spec == "offdiag":
        return offdiag_pairs(n)
    if spec.startswith("row:"):
        label = spec[4:]
        if label in series_ids:
            i = series_ids.index(label)
        else:
            try:
                i = int(label) - 1
            except ValueError:
                raise CliError(f"bad row spec {spec!r}") from None
        if not 0 <= i < n:
            raise CliError(f"row index {label} out of range 1..{n}")
        return row_pairs(n, i)
    if spec.startswith("blocks:"):
        path = spec[7:]
        if not path or not Path(path).is_file():
            raise CliError(f"blocks file {path!r} not found")
        blocks: dict[int, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 2:
                    raise CliError(f"{path}:{lineno}: expected 'series,block'")
                sid, block = parts
                if sid in series_ids:
                    blocks[series_ids.index(sid)] = block
                else:
                    try:
                        blocks[int(sid) - 1] = block
                    except ValueError:
                        raise CliError(f"{path}:{lineno}: unknown series {sid!r}") from None
        return block_pairs(n, blocks)
    if spec.startswith("list:"):
        path = spec[5:]
        if not path or not Path(path).is_file():
            raise CliError(f"pair list file {path!r} not found")
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise CliError(f"{path}:{lineno}: expected 'i,j'")
                try:
                    pairs.append((int(parts[0]) - 1, int(parts[1]) - 1))
                except ValueError:
                    raise CliError(f"{path}:{lineno}: bad pair {line!r}") from None
        try:
            return IndexSet(tuple(pairs), n)
        except ValueError as err:
            raise CliError(str(err)) from None
    raise CliError(f"unknown pairs spec {spec!r}")


def _parse_null(spec: str, d: int):
    if spec == "zero":
        return 0.0
    if Path(spec).is_file():
        values = np.loadtxt(spec, delimiter=",").ravel()
        if len(values) != d:
            raise CliError(f"null file has {len(values)} values for d = {d}")
        return values
    raise CliError(f"null spec {spec!r} is neither 'zero' nor a readable file")


def _factor_rule(rule: str) -> tuple[str, int | None]:
    rule = rule.lower()
    if rule.startswith("fixed:"):
        try:
            return "fixed", int(rule.split(":", 1)[1])
        except ValueError:
            raise CliError(f"bad fixed factor rule {rule!r}") from None
    if rule in ("er", "ic1", "ic2", "ic3", "ic4"):
        return rule, None
    raise CliError(f"unknown factor rule {rule!r}")


def cmd_simulate(args) -> int:
    if args.preset not in PRESETS:
        raise CliError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[args.preset]
    config = SimulationConfig(
        T=preset["T"], n=preset["n"], phi=preset["phi"],
        replications=args.reps, seed=args.seed,
    )
    if preset["power"]:
        config = power_config(config)
    outdir = _outdir(args)
    threads = _threads(args)
    if preset["mode"] == "size-power":
        result = run_size_power(config, preset["scenario"], draws=args.draws,
                                threads=threads)
        rows = [
            {"scenario": preset["scenario"], "T": config.T, "n": config.n,
             "level": lvl, "rejection_rate": rate}
            for lvl, rate in result.rejection_rates.items()
        ]
        path = outdir / "rejections.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        sidecar = {
            "preset": args.preset, "seed": args.seed, "replications": config.replications,
            "rates": {str(k): v for k, v in result.rejection_rates.items()},
        }
    else:
        result = run_info_gains(config, threads=threads)
        path = outdir / "info_gains.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "mean_mse"])
            for m in result.methods:
                writer.writerow([m, format(result.mean_mse[m], ".17g")])
        sidecar = {
            "preset": args.preset, "seed": args.seed, "replications": config.replications,
            "mean_mse": result.mean_mse,
        }
    (outdir / "simulate_meta.json").write_text(
        json.dumps(sidecar, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_provenance(outdir, "simulate", args)
    print(f"wrote {path}")
    return EXIT_OK


def _run_structure_test(args, partial: bool) -> int:
    panel = load_panel_csv(args.panel, orientation=args.orientation)
    n, t_len = panel.shape
    pairs = _parse_pairs(args.pairs, n, list(panel.series_ids))
    null = _parse_null(args.null, pairs.d)
    bandwidth = args.bandwidth if args.bandwidth else default_bandwidth(t_len)
    kernel = KernelSpec(args.kernel, bandwidth)
    tester = pcov_structure_test if partial else cov_structure_test
    result = tester(panel.values, pairs, null, kernel=kernel, draws=args.draws,
                    seed=args.seed)
    doc = result.to_json()
    print(doc)
    outdir = _outdir(args)
    name = "test_pcov" if partial else "test_cov"
    (outdir / f"{name}_result.json").write_text(doc + "\n", encoding="utf-8")
    _write_provenance(outdir, name, args, input_paths=[args.panel])
    return EXIT_REJECT if result.reject(0.05) else EXIT_OK


def cmd_test_cov(args) -> int:
    return _run_structure_test(args, partial=False)


def cmd_test_pcov(args) -> int:
    return _run_structure_test(args, partial=True)


def cmd_factors(args) -> int:
    panel = load_panel_csv(args.panel, orientation=args.orientation)
    method, fixed_r = _factor_rule(args.rule)
    demeaned, _ = first_stage_filter(panel, None, add_intercept=True)
    sel = select_factor_count(demeaned, method, kmax=args.kmax, fixed_r=fixed_r)
    doc = {
        "method": sel.method,
        "kmax": sel.kmax,
        "chosen_r": sel.chosen_r,
        "criterion_values": list(sel.criterion_values),
    }
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_farm_fit(args) -> int:
    panel = load_panel_csv(args.panel, orientation=args.orientation)
    method, fixed_r = _factor_rule(args.factors)
    covariates = None
    if args.covariates:
        # One shared (T x k) covariate block applied to every series, e.g.
        # observed factors; time-major CSV with header and index column.
        cov_panel = load_panel_csv(args.covariates, orientation="rows-are-time")
        if cov_panel.n_periods != panel.n_periods:
            raise CliError(
                f"covariates cover {cov_panel.n_periods} periods, panel has "
                f"{panel.n_periods}"
            )
        covariates = [cov_panel.values.T] * panel.n_series
    model = farm_fit(
        panel,
        covariates=covariates,
        selection_method=method,
        fixed_r=fixed_r,
        kmax=args.kmax,
        targets=[int(t) - 1 for t in args.targets.split(",")] if args.targets else None,
        run_diagnostics=args.diagnostics,
        skip_factors=True if (method == "fixed" and fixed_r == 0) else None,
        seed=args.seed,
    )
    outdir = _outdir(args)
    save_farm_model(model, outdir / "model.json")
    (outdir / "report.json").write_text(
        json.dumps(stagewise_report(model), sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_provenance(outdir, "farm_fit", args, input_paths=[args.panel])
    print(f"wrote {outdir / 'model.json'}")
    return EXIT_OK


def cmd_farm_predict(args) -> int:
    model = load_farm_model(args.model)
    i = int(args.target) - 1
    if args.at_row is None:
        raise CliError("farm predict needs --at-row")
    t = int(args.at_row)
    value = farm_predict_at(model, i, t)
    print(format(value, ".17g"))
    return EXIT_OK


def cmd_backtest(args) -> int:
    panel = load_panel_csv(args.panel, orientation=args.orientation)
    method, fixed_r = _factor_rule(args.factor_rule)
    groups = None
    if args.groups:
        groups = {}
        with open(args.groups, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                sid, label = (p.strip() for p in line.split(",", 1))
                groups[sid] = label
    config = BacktestConfig(
        window=args.window,
        p=args.p,
        factor_rule=method,
        fixed_r=fixed_r,
        methods=tuple(m.strip().lower() for m in args.methods.split(",")),
        groups=groups,
        pcr_lead=args.pcr_lead,
        grid_size=args.grid_size,
    )
    if config.window + config.p >= panel.n_periods:
        raise CliError(
            f"window {config.window} does not fit the sample T = {panel.n_periods}"
        )
    report = rolling_backtest(panel, config)
    outdir = _outdir(args)
    rows = rank_table(report)
    path = outdir / "ranks.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    (outdir / "errors.json").write_text(report_to_json(report) + "\n", encoding="utf-8")
    _write_provenance(outdir, "backtest", args, input_paths=[args.panel])
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="farmpanel",
        description="Three-stage panel estimation, covariance-structure tests, "
                    "simulation and forecasting harnesses.",
    )
    parser.add_argument("--config", help="plain 'key = value' config file; flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (0 = all cores, env FARM_THREADS)")

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo preset")
    p_sim.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument("--draws", type=int, default=500, help="bootstrap draws per test")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    for name, fn in (("test-cov", cmd_test_cov), ("test-pcov", cmd_test_pcov)):
        p_t = sub.add_parser(name, help=f"{name} on a residual panel CSV")
        p_t.add_argument("panel")
        p_t.add_argument("--orientation", default="rows-are-series",
                         choices=["rows-are-series", "rows-are-time"])
        p_t.add_argument("--pairs", default="offdiag",
                         help="offdiag | row:<i|id> | blocks:<file> | list:<file>")
        p_t.add_argument("--null", default="zero", help="'zero' or a CSV of d values")
        p_t.add_argument("--kernel", default="bartlett", choices=["bartlett", "parzen", "qs"])
        p_t.add_argument("--bandwidth", type=float, default=None,
                         help="kernel bandwidth (default floor(T/3))")
        p_t.add_argument("--B", dest="draws", type=int, default=1000)
        add_common(p_t)
        p_t.set_defaults(func=fn)

    p_f = sub.add_parser("factors", help="factor-count selection on a panel CSV")
    p_f.add_argument("panel")
    p_f.add_argument("--orientation", default="rows-are-series",
                     choices=["rows-are-series", "rows-are-time"])
    p_f.add_argument("--rule", default="er", help="er | ic1..ic4 | fixed:<r>")
    p_f.add_argument("--kmax", type=int, default=None)
    add_common(p_f)
    p_f.set_defaults(func=cmd_factors)

    p_farm = sub.add_parser("farm", help="fit or predict with the three-stage model")
    farm_sub = p_farm.add_subparsers(dest="farm_command", required=True)

    p_fit = farm_sub.add_parser("fit")
    p_fit.add_argument("panel")
    p_fit.add_argument("--orientation", default="rows-are-series",
                       choices=["rows-are-series", "rows-are-time"])
    p_fit.add_argument("--factors", default="er", help="er | ic1..ic4 | fixed:<r>")
    p_fit.add_argument("--kmax", type=int, default=None)
    p_fit.add_argument("--targets", default=None, help="comma list of 1-based series")
    p_fit.add_argument("--covariates", default=None,
                       help="time-major CSV of shared observed covariates (T x k)")
    p_fit.add_argument("--diagnostics", action="store_true")
    add_common(p_fit)
    p_fit.set_defaults(func=cmd_farm_fit)

    p_pred = farm_sub.add_parser("predict")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--target", required=True, help="1-based series index")
    p_pred.add_argument("--at-row", dest="at_row", default=None,
                        help="in-sample time index (0-based)")
    add_common(p_pred)
    p_pred.set_defaults(func=cmd_farm_predict)

    p_b = sub.add_parser("backtest", help="rolling one-step forecast comparison")
    p_b.add_argument("panel")
    p_b.add_argument("--orientation", default="rows-are-series",
                     choices=["rows-are-series", "rows-are-time"])
    p_b.add_argument("--window", type=int, default=480)
    p_b.add_argument("--p", type=int, default=4)
    p_b.add_argument("--methods", default="ar,sr,pcr,farmpredict")
    p_b.add_argument("--factor-rule", dest="factor_rule", default="er")
    p_b.add_argument("--groups", default=None, help="CSV file: series_id,group")
    p_b.add_argument("--pcr-lead", dest="pcr_lead", action="store_true")
    p_b.add_argument("--grid-size", dest="grid_size", type=int, default=50)
    add_common(p_b)
    p_b.set_defaults(func=cmd_backtest)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Prepend config-file values as defaults; explicit flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise CliError("--config needs a file path")
    values = _read_config_file(argv[idx + 1])
    extra: list[str] = []
    for key, value in values.items():
        flag = "--" + key.replace("_", "-")
        if flag not in argv:
            extra.extend([flag, value])
    # Insert after the subcommand tokens so argparse scoping works.
    return argv + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as err:
        # argparse exits 2 on usage errors and 0 on --help.
        return int(err.code or 0)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except PanelError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
