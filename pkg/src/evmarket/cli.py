"""Command-line entry point.

Subcommands: ``estimate`` (panel CSV to coefficient tables), ``simulate``
(coefficients + seed state to a trajectory), ``forecast`` (panel + scenario
files to a comparison report), ``synth`` (synthetic panel CSV), and
``describe`` (column-binding audit). Every file-producing run writes a
``manifest.json`` with input hashes and config next to its outputs; numeric
output uses 6 significant digits unless ``--full-precision`` is set.
Errors are emitted as JSON objects on stderr with exit status 1; usage
errors exit 2.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import hashlib
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .dynamics import (
    DynamicsParams,
    ExogenousYear,
    MarketState,
    calibrate_constant,
    reduced_form_trajectory,
    simulate_horizon,
)
from .errors import DomainError, EvMarketError, SchemaError
from .estimator import EstimationResult
from .modelspec import (
    COL_EV_STOCK,
    COL_STATIONS,
    describe_bindings,
    estimate_demand,
    estimate_supply,
)
from .panel import load_panel, load_schema_sidecar, panel_to_csv
from .policy import (
    Scenario,
    Trajectory,
    compare_scenarios,
    forecast_from_panel,
    project_fleet,
)
from .synth import SynthConfig, generate_panel

OUT_DIR_ENV = "EVMARKET_OUT_DIR"


def _round_sig(x, sig: int = 6):
    if isinstance(x, float) and math.isfinite(x) and x != 0.0:
        return float(f"{x:.{sig}g}")
    return x


def _round_tree(obj, sig: int = 6):
    if isinstance(obj, dict):
        return {k: _round_tree(v, sig) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v, sig) for v in obj]
    return _round_sig(obj, sig)


class _Emitter:
    """Writes artifacts into the output directory with one precision policy."""

    def __init__(self, out_dir: Path, full_precision: bool):
        self.out_dir = out_dir
        self.full = full_precision
        self.written: list[str] = []

    def float_fmt(self, x: float) -> str:
        return repr(x) if self.full else f"{x:.6g}"

    def json_text(self, data: dict) -> str:
        if not self.full:
            data = _round_tree(data)
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def write_json(self, name: str, data: dict) -> Path:
        return self.write_text(name, self.json_text(data))

    def write_text(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8")
        self.written.append(name)
        return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_manifest(emitter: _Emitter, command: str, args: argparse.Namespace,
                    inputs: list, config: dict) -> None:
    hashes = {}
    for p in inputs:
        if p and p != "-" and Path(p).exists():
            hashes[str(p)] = _sha256(p)
    stamp = args.timestamp or datetime.datetime.now(
        datetime.timezone.utc).isoformat(timespec="seconds")
    manifest = {
        "command": command,
        "argv": list(args._raw_argv),
        "inputs": hashes,
        "config": config,
        "version": __version__,
        "timestamp": stamp,
        "outputs": sorted(emitter.written),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    emitter.out_dir.mkdir(parents=True, exist_ok=True)
    (emitter.out_dir / "manifest.json").write_text(text, encoding="utf-8")


def _load_panel_arg(args) -> "Panel":
    schema = load_schema_sidecar(args.schema) if args.schema else None
    mode = "lenient" if args.lenient else "strict"
    if args.panel == "-":
        return load_panel(sys.stdin, schema=schema, mode=mode)
    return load_panel(args.panel, schema=schema, mode=mode)


def _coeffs_from_json(path) -> dict[str, float]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    coeffs = data.get("coefficients", data)
    if not isinstance(coeffs, dict):
        raise SchemaError(f"{path}: expected a coefficients object")
    return {str(k): float(v) for k, v in coeffs.items()}


def _cmd_estimate(args) -> int:
    panel = _load_panel_arg(args)
    demand = estimate_demand(panel, method=args.method,
                             burden_log=args.burden_log)
    supply = estimate_supply(panel, method=args.method)
    emitter = _Emitter(args.out, args.full_precision)
    emitter.write_json("demand.json", demand.to_json_dict())
    emitter.write_json("supply.json", supply.to_json_dict())
    demand_txt = demand.to_table("Regression results: EV demand")
    supply_txt = supply.to_table("Regression results: charging stations")
    emitter.write_text("demand.txt", demand_txt + "\n")
    emitter.write_text("supply.txt", supply_txt + "\n")
    if panel.issues:
        emitter.write_json("load_issues.json",
                           {"issues": [str(i) for i in panel.issues]})
    print(demand_txt)
    print()
    print(supply_txt)
    _write_manifest(emitter, "estimate", args,
                    [args.panel, args.schema],
                    {"method": args.method, "burden_log": args.burden_log,
                     "lenient": args.lenient})
    return 0


def _state_from_json(path) -> MarketState:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return MarketState(year=int(data["year"]),
                           sales=float(data["sales"]),
                           ev_stock=float(data["ev_stock"]),
                           station_stock=float(data["station_stock"]))
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"{path}: malformed state JSON: {err}") from err


def _exog_from_json(path) -> tuple[ExogenousYear, tuple[float, float] | None]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    bounds = data.pop("saturation_bounds", None)
    if bounds is not None:
        bounds = (float(bounds[0]), float(bounds[1]))
    try:
        exog = ExogenousYear(**{k: float(v) for k, v in data.items()})
    except TypeError as err:
        raise SchemaError(f"{path}: malformed exogenous JSON: {err}") from err
    return exog, bounds


def _cmd_simulate(args) -> int:
    demand = _coeffs_from_json(args.demand_json)
    supply = _coeffs_from_json(args.supply_json)
    state = _state_from_json(args.state)
    exog, bounds = _exog_from_json(args.exog)
    if args.reduced:
        k = demand[COL_STATIONS] * supply[COL_EV_STOCK]
        if state.sales <= 0:
            raise DomainError("reduced-form mode needs positive seed sales")
        prev = (state.ev_stock - state.sales) / args.delta if args.delta > 0 \
            else 0.0
        prev = max(prev, 0.0)
        c = calibrate_constant(state.sales, prev, k, args.delta)
        params = DynamicsParams(c=c, k=k, delta=args.delta)
        states = reduced_form_trajectory(params, state, args.years)
        label = "reduced"
    else:
        states = simulate_horizon(state, args.years, demand, supply,
                                  lambda _y: exog, delta=args.delta,
                                  saturation_bounds=bounds)
        label = "structural"
    emitter = _Emitter(args.out, args.full_precision)
    fmt = emitter.float_fmt
    lines = ["year,sales,ev_stock,station_stock"]
    for s in states:
        lines.append(f"{s.year},{fmt(s.sales)},{fmt(s.ev_stock)},"
                     f"{fmt(s.station_stock)}")
    emitter.write_text("trajectory.csv", "\n".join(lines) + "\n")
    emitter.write_json("trajectory.json", {
        "mode": label,
        "states": [
            {"year": s.year, "sales": s.sales, "ev_stock": s.ev_stock,
             "station_stock": s.station_stock} for s in states
        ],
    })
    _write_manifest(emitter, "simulate", args,
                    [args.demand_json, args.supply_json, args.state,
                     args.exog],
                    {"years": args.years, "delta": args.delta,
                     "reduced": args.reduced})
    return 0


def _read_population_csv(path) -> tuple[list, dict[int, float]]:
    """Rows year,population[,vehicles]; vehicle rows form the fit history."""
    import csv as _csv
    history = []
    path_by_year: dict[int, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None or \
                not {"year", "population"} <= set(reader.fieldnames):
            raise SchemaError(
                f"{path}: population CSV needs year,population[,vehicles]")
        for row in reader:
            year = int(row["year"])
            pop = float(row["population"])
            path_by_year[year] = pop
            veh = (row.get("vehicles") or "").strip()
            if veh:
                history.append((pop, float(veh)))
    return history, path_by_year


def _read_oil_csv(path) -> dict[int, float]:
    import csv as _csv
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None or \
                not {"year", "oil_price"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: oil CSV needs year,oil_price columns")
        for row in reader:
            out[int(row["year"])] = float(row["oil_price"])
    return out


def _cmd_forecast(args) -> int:
    panel = _load_panel_arg(args)
    scenarios = [Scenario.from_json_file(p) for p in args.scenario]
    demand = estimate_demand(panel, method=args.method)
    supply = estimate_supply(panel, method=args.method)
    history, pop_path = _read_population_csv(args.population)
    projection = project_fleet(history, pop_path)
    oil_path = _read_oil_csv(args.oil_path) if args.oil_path else None
    seed_year = args.seed_year if args.seed_year else max(panel.years)
    horizon = args.horizon if args.horizon else max(pop_path) - seed_year
    if horizon <= 0:
        raise DomainError("forecast horizon must cover at least one year",
                          horizon=horizon)

    def run(scn: Scenario) -> Trajectory:
        return forecast_from_panel(scn, panel, demand, supply, projection,
                                   horizon, seed_year=seed_year,
                                   delta=args.delta, oil_path=oil_path)

    with concurrent.futures.ThreadPoolExecutor(
            max_workers=max(1, len(scenarios))) as pool:
        trajectories = list(pool.map(run, scenarios))

    report = compare_scenarios(trajectories)
    emitter = _Emitter(args.out, args.full_precision)
    for t in trajectories:
        emitter.write_text(f"trajectory_{t.scenario.name}.csv",
                           t.to_csv(emitter.float_fmt))
    emitter.write_text("comparison.csv", report.to_csv(emitter.float_fmt))
    emitter.write_json("comparison.json", report.to_json_dict())
    print(report.to_csv(emitter.float_fmt), end="")
    _write_manifest(emitter, "forecast", args,
                    [args.panel, args.schema, args.population, args.oil_path,
                     *args.scenario],
                    {"method": args.method, "delta": args.delta,
                     "seed_year": seed_year, "horizon": horizon})
    return 0


def _cmd_synth(args) -> int:
    config = SynthConfig(n_zips=args.zips, n_years=args.years,
                         endogeneity_rho=args.rho, noise_sd=args.noise,
                         seed=args.seed, delta=args.delta)
    panel = generate_panel(config)
    text = panel_to_csv(panel)
    if args.out_csv == "-":
        sys.stdout.write(text)
        return 0
    Path(args.out_csv).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out_csv).write_text(text, encoding="utf-8")
    emitter = _Emitter(args.out, args.full_precision)
    _write_manifest(emitter, "synth", args, [],
                    {"seed": args.seed, "zips": args.zips,
                     "years": args.years, "rho": args.rho,
                     "noise": args.noise, "delta": args.delta,
                     "out_csv": str(args.out_csv)})
    return 0


def _cmd_describe(args) -> int:
    print(json.dumps(describe_bindings(burden_log=args.burden_log), indent=2,
                     sort_keys=True))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evmarket",
        description="Two-sided EV market estimation and policy forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path,
                        default=Path(os.environ.get(OUT_DIR_ENV, ".")),
                        help="output directory (env %s)" % OUT_DIR_ENV)
    common.add_argument("--full-precision", action="store_true",
                        help="emit full float precision instead of 6 "
                             "significant digits")
    common.add_argument("--timestamp", default=None,
                        help="override the manifest timestamp (for "
                             "reproducible artifacts)")

    panel_common = argparse.ArgumentParser(add_help=False)
    panel_common.add_argument("--panel", required=True,
                              help="panel CSV path, or - for stdin")
    panel_common.add_argument("--schema", default=None,
                              help="JSON sidecar remapping column names")
    panel_common.add_argument("--lenient", action="store_true",
                              help="drop invalid rows instead of aborting")

    p_est = sub.add_parser("estimate", parents=[common, panel_common],
                           help="fit the demand and supply equations")
    p_est.add_argument("--method", choices=["ols", "tsls", "gmm"],
                       default="gmm")
    p_est.add_argument("--burden-log", action="store_true",
                       help="use log burden instead of the linear form")
    p_est.set_defaults(func=_cmd_estimate)

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="simulate a trajectory from coefficients")
    p_sim.add_argument("--demand-json", required=True)
    p_sim.add_argument("--supply-json", required=True)
    p_sim.add_argument("--state", required=True,
                       help="JSON market state (year, sales, ev_stock, "
                            "station_stock)")
    p_sim.add_argument("--exog", required=True,
                       help="JSON exogenous values (optionally "
                            "saturation_bounds)")
    p_sim.add_argument("--years", type=int, required=True)
    p_sim.add_argument("--delta", type=float, default=0.95)
    p_sim.add_argument("--reduced", action="store_true",
                       help="use the reduced-form recursion instead of the "
                            "coupled stepper")
    p_sim.set_defaults(func=_cmd_simulate)

    p_fc = sub.add_parser("forecast", parents=[common, panel_common],
                          help="evaluate policy scenarios")
    p_fc.add_argument("--scenario", action="append", required=True,
                      help="scenario JSON file (repeatable)")
    p_fc.add_argument("--method", choices=["ols", "tsls", "gmm"],
                      default="gmm")
    p_fc.add_argument("--delta", type=float, default=0.95)
    p_fc.add_argument("--seed-year", type=int, default=None,
                      help="panel year seeding the forecast (default: last)")
    p_fc.add_argument("--horizon", type=int, default=None,
                      help="years to simulate (default: to the end of the "
                           "population path)")
    p_fc.add_argument("--population", required=True,
                      help="CSV year,population[,vehicles]")
    p_fc.add_argument("--oil-path", default=None,
                      help="CSV year,oil_price overriding the held oil price")
    p_fc.set_defaults(func=_cmd_forecast)

    p_syn = sub.add_parser("synth", parents=[common],
                           help="generate a synthetic panel CSV")
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--zips", type=int, default=50)
    p_syn.add_argument("--years", type=int, default=6)
    p_syn.add_argument("--rho", type=float, default=0.0)
    p_syn.add_argument("--noise", type=float, default=0.25)
    p_syn.add_argument("--delta", type=float, default=0.95)
    p_syn.add_argument("--out-csv", default="-",
                       help="output CSV (default - for stdout)")
    p_syn.set_defaults(func=_cmd_synth)

    p_desc = sub.add_parser("describe", parents=[common],
                            help="emit the equation column bindings as JSON")
    p_desc.add_argument("--burden-log", action="store_true")
    p_desc.set_defaults(func=_cmd_describe)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    args._raw_argv = argv
    try:
        return args.func(args)
    except EvMarketError as err:
        sys.stderr.write(json.dumps(err.to_json_dict(), sort_keys=True)
                         + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
