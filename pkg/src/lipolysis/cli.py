"""Command-line entry point: ``lipolysis <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 sweep finished with failed cells.  Errors are reported on stderr as a
single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .integrator import IntegrationError, IntegratorConfig
from .kinetics import DimensionalParams, ModelParams, conservation_residuals, nondimensionalize, simulate
from .qssa import (
    MODELS,
    DiscriminantError,
    MissingEventError,
    NoRootError,
    expansion_terms_kappa,
    expansion_terms_V,
    q_first_order_L,
    qssa_approx,
    qssa_curve,
    qssa_input,
    simulate_reduced,
    solve_qssa,
    timescales,
    vkappa_condition,
)
from .sensitivity import fd_sensitivity_oracle, sign_discrepancy_probe, simulate_qssa_sensitivity, simulate_sensitivity
from .sweep import SCHEMA, SweepGrid, fmt, gnuplot_script, maps_to_json, run_sweep, staged_curves

COMMANDS = ("simulate", "qssa", "asymptotics", "sensitivity", "timescales", "sweep")
DEFAULT_T_END = {"simulate": 100.0, "qssa": 100.0, "asymptotics": 10.0,
                 "sensitivity": 10.0, "timescales": 50.0, "sweep": 1000.0}
PARAM_KEYS = ("K", "L", "V", "kappa", "q0")

# command -> {option: (type, default, help)}
OPTIONS = {
    "simulate": {"points": (int, 201, "number of output times")},
    "qssa": {"points": (int, 100, "number of TG grid points"),
             "s_min": (float, 0.01, "smallest TG value on the grid")},
    "asymptotics": {"regime": (str, "V", "expansion regime: L, V or kappa"),
                    "points": (int, 401, "number of output times"),
                    "window": (float, 3.0, "error window starts at window * t_m")},
    "sensitivity": {"points": (int, 201, "number of output times"),
                    "h": (float, 1e-4, "relative finite-difference step")},
    "timescales": {"percentile": (float, 90.0, "reference decay percentage")},
    "sweep": {"metrics": (list, ["t_s_pct"], "comma-separated metric names"),
              "log10_v": (list, [-2.0, 2.0], "log10 V range lo,hi"),
              "log10_kappa": (list, [-2.0, 2.0], "log10 kappa range lo,hi"),
              "n_v": (int, 41, "number of V values"),
              "n_kappa": (int, 41, "number of kappa values"),
              "thresholds": (list, [50.0], "comma-separated percentages"),
              "kappa_zero": (bool, False, "prepend a kappa=0 column"),
              "staged": (bool, False, "relative changes over V at staged percentages"),
              "staged_kappa": (float, 10.0, "kappa for staged mode"),
              "products": (str, "complement", "staged product percentages: complement or same"),
              "gnuplot": (bool, False, "write a gnuplot script next to each CSV")},
}


class ConfigError(ValueError):
    pass


class PartialSweep(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _csv_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lipolysis", description="Lipolysis kinetics with DG transacylation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        for key in PARAM_KEYS:
            p.add_argument(f"--{key}", type=float, default=None)
        p.add_argument("--dimensional-file", default=None, help="JSON with dimensional constants")
        p.add_argument("--config", default=None, help="JSON config; flags take precedence")
        p.add_argument("--model", choices=("full",) + MODELS, default=None)
        p.add_argument("--t-end", type=float, default=None)
        p.add_argument("--rtol", type=float, default=None)
        p.add_argument("--atol", type=float, default=None)
        p.add_argument("--method", choices=("rodas4", "dopri5"), default=None)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
        for opt, (typ, _, hlp) in OPTIONS.get(name, {}).items():
            flag = "--" + opt.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True, default=None, help=hlp)
            elif typ is list:
                p.add_argument(flag, type=_csv_list, default=None, help=hlp)
            else:
                p.add_argument(flag, type=typ, default=None, help=hlp)
    return parser


# -- config resolution ---------------------------------------------------


def _load_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {what} {path!r}: {exc}") from exc


def resolve_config(args) -> dict:
    """Merge defaults, an optional config file and explicit flags."""
    base = _load_json(args.config, "config") if args.config else {}
    if not isinstance(base, dict):
        raise ConfigError("config file must hold a JSON object")
    cmd = args.command

    # A dumped config carries the derived parameters next to the
    # dimensional block; only the latter is authoritative.
    params = {} if base.get("dimensional") else dict(base.get("params") or {})
    if cmd == "sweep" and "V" not in params and not (base.get("dimensional") or args.dimensional_file):
        params.setdefault("V", 1.0)  # unused: the sweep grid sets V per cell
    for key in PARAM_KEYS:
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    dimensional = base.get("dimensional")
    if args.dimensional_file:
        dimensional = _load_json(args.dimensional_file, "dimensional file")
    if dimensional and params:
        raise ConfigError("give either nondimensional parameters or a dimensional file, not both")
    if dimensional:
        try:
            resolved = nondimensionalize(DimensionalParams(**dimensional))
        except TypeError as exc:
            raise ConfigError(f"bad dimensional parameters: {exc}") from exc
    else:
        missing = [k for k in ("K", "L", "V") if k not in params]
        if missing:
            raise ConfigError(f"missing parameters: {', '.join(missing)}")
        unknown = set(params) - set(PARAM_KEYS)
        if unknown:
            raise ConfigError(f"unknown parameters: {sorted(unknown)}")
        resolved = ModelParams(**params)

    integ = {"rtol": 1e-8, "atol": 1e-10, "t_end": DEFAULT_T_END[cmd], "method": "rodas4"}
    integ.update(base.get("integrator") or {})
    for key, attr in (("rtol", "rtol"), ("atol", "atol"), ("t_end", "t_end"), ("method", "method")):
        val = getattr(args, attr)
        if val is not None:
            integ[key] = val
    IntegratorConfig(**integ)

    options = {k: d for k, (_, d, _) in OPTIONS.get(cmd, {}).items()}
    options.update(base.get("options") or {})
    for k in OPTIONS.get(cmd, {}):
        val = getattr(args, k)
        if val is not None:
            options[k] = val

    return {
        "schema": SCHEMA,
        "command": cmd,
        "model": args.model or base.get("model") or "full",
        "params": resolved.as_dict(),
        "dimensional": dimensional or None,
        "integrator": integ,
        "format": args.format or base.get("format") or "csv",
        "options": options,
    }


# -- output --------------------------------------------------------------


def _emit_table(columns, rows, meta, config, out):
    if config["format"] == "json":
        doc = {"schema": SCHEMA, "columns": list(columns),
               "data": [[float(x) for x in r] for r in rows], "meta": meta}
        _write(out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    _write(out, buf.getvalue())
    if out:
        _write(out + ".meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _meta(config, **extra):
    meta = {"config": config}
    meta.update(extra)
    return meta


# -- commands ------------------------------------------------------------


def _params(config) -> ModelParams:
    return ModelParams(**config["params"])


def _integ(config) -> IntegratorConfig:
    return IntegratorConfig(**config["integrator"])


def cmd_simulate(config, out, threads):
    p, icfg = _params(config), _integ(config)
    grid = np.linspace(0.0, icfg.t_end, config["options"]["points"])
    model = config["model"]
    traj = simulate(p, icfg, t_eval=grid) if model == "full" else simulate_reduced(p, model, icfg, t_eval=grid)
    res = conservation_residuals(traj.y, p)
    rows = np.column_stack([traj.t, traj.y, res])
    cols = ["t", "s", "q", "p", "f", "residual_mass", "residual_acyl"]
    _emit_table(cols, rows, _meta(config, status=traj.status, n_steps=traj.n_steps), config, out)


def cmd_qssa(config, out, threads):
    p = _params(config)
    opts = config["options"]
    rows = []
    for s in np.linspace(opts["s_min"], 1.0, opts["points"]):
        exact = solve_qssa(s, p)
        try:
            approx = qssa_approx(qssa_input(s, p), p.kappa).q_tilde
        except DiscriminantError:
            approx = float("nan")
        rel = abs(approx - exact.q_tilde) / exact.q_tilde
        rows.append([s, exact.q_tilde, approx, rel, float(rel <= 0.1), float(exact.valid_half)])
    cols = ["s", "q_exact", "q_approx", "rel_error", "within_10pct", "q_le_half"]
    meta = _meta(config, condition_v_kappa=vkappa_condition(p.V, p.kappa))
    _emit_table(cols, rows, meta, config, out)


def cmd_asymptotics(config, out, threads):
    p, icfg = _params(config), _integ(config)
    opts = config["options"]
    regime = opts["regime"]
    traj = simulate(p, icfg, t_eval=np.linspace(0.0, icfg.t_end, opts["points"]))
    s = np.clip(traj.s, 0.0, None)
    if regime == "V":
        partial = np.cumsum(expansion_terms_V(s, p), axis=0)
    elif regime == "kappa":
        partial = np.cumsum(expansion_terms_kappa(s, p), axis=0)
    elif regime == "L":
        partial = np.array([qssa_curve(s, p), q_first_order_L(s, p)])
    else:
        raise ConfigError(f"unknown regime {regime!r}")
    orders = list(range(len(partial))) if regime == "L" else list(range(1, len(partial) + 1))
    t_m = timescales(p, cfg=IntegratorConfig(icfg.rtol, icfg.atol, DEFAULT_T_END["timescales"])).t_m
    window = traj.t >= opts["window"] * t_m
    errors = {str(o): float(np.max(np.abs(traj.q[window] - row[window]))) if window.any() else None
              for o, row in zip(orders, partial)}
    cols = ["t", "s", "q_full"] + [f"q_order{o}" for o in orders]
    rows = np.column_stack([traj.t, s, traj.q] + list(partial))
    _emit_table(cols, rows, _meta(config, t_m=t_m, sup_error=errors), config, out)


def cmd_sensitivity(config, out, threads):
    p, icfg = _params(config), _integ(config)
    opts = config["options"]
    grid = np.linspace(0.0, icfg.t_end, opts["points"])
    full = simulate_sensitivity(p, icfg, t_eval=grid)
    red = simulate_qssa_sensitivity(p, icfg, t_eval=grid)
    cols = ["t", "ds_dk", "dq_dk", "dp_dk", "df_dk", "qssa_ds_dk", "qssa_dq_dk", "qssa_dp_dk"]
    blocks = [grid, full.sens, red.ds_dk, red.dq_dk, red.dp_dk]
    if p.kappa > 0:
        blocks.append(fd_sensitivity_oracle(p, grid, opts["h"]))
        cols += ["fd_ds_dk", "fd_dq_dk", "fd_dp_dk", "fd_df_dk"]
    report = sign_discrepancy_probe(p, t_end=icfg.t_end, cfg=icfg)
    meta = _meta(config, sign_discrepancy=report.__dict__ if report else "none")
    _emit_table(cols, np.column_stack(blocks), meta, config, out)


def cmd_timescales(config, out, threads):
    p, icfg = _params(config), _integ(config)
    report = timescales(p, cfg=icfg, percentile=config["options"]["percentile"]).as_dict()
    if config["format"] == "json":
        _write(out, json.dumps({"schema": SCHEMA, "report": report, "meta": _meta(config)},
                               indent=2, sort_keys=True) + "\n")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "value"])
    for k, v in report.items():
        w.writerow([k, str(v).lower() if isinstance(v, bool) else fmt(v)])
    _write(out, buf.getvalue())
    if out:
        _write(out + ".meta.json", json.dumps(_meta(config), indent=2, sort_keys=True) + "\n")


def _suffixed(out, tag):
    path = Path(out)
    return str(path.with_name(f"{path.stem}.{tag}{path.suffix or '.csv'}"))


def cmd_sweep(config, out, threads):
    p, icfg = _params(config), _integ(config)
    opts = config["options"]
    if opts["staged"]:
        curves = staged_curves(10.0 ** np.linspace(*map(float, opts["log10_v"]), opts["n_v"]),
                               opts["staged_kappa"], [float(x) for x in opts["thresholds"]],
                               K=p.K, L=p.L, q0=p.q0, products=opts["products"], cfg=icfg)
        _write(out, curves.to_csv())
        if out:
            _write(out + ".meta.json", json.dumps(_meta(config), indent=2, sort_keys=True) + "\n")
        return
    grid = SweepGrid.logspace(tuple(map(float, opts["log10_v"])), tuple(map(float, opts["log10_kappa"])),
                              opts["n_v"], opts["n_kappa"], K=p.K, L=p.L, q0=p.q0,
                              thresholds=tuple(float(x) for x in opts["thresholds"]))
    if opts["kappa_zero"]:
        grid = SweepGrid(grid.v_values, (0.0,) + grid.kappa_values, grid.K, grid.L, grid.q0, grid.thresholds)
    maps = run_sweep(grid, opts["metrics"], icfg, threads)
    meta = _meta(config, grid_note="default log10 ranges [-2, 2] are a chosen reconstruction bracketing all regimes")
    for m in maps:
        m.meta = dict(m.meta, **meta)
    if config["format"] == "json":
        _write(out, maps_to_json(maps))
    else:
        if len(maps) > 1 and out is None:
            raise ConfigError("several maps requested: give --out or use --format json")
        for m in maps:
            path = out if len(maps) == 1 else _suffixed(out, f"{m.metric}_{m.threshold:g}")
            _write(path, m.to_csv())
            if path:
                _write(path + ".meta.json", json.dumps(m.meta, indent=2, sort_keys=True) + "\n")
                if opts["gnuplot"]:
                    _write(str(Path(path).with_suffix(".gp")), gnuplot_script(path, f"{m.metric} {m.threshold:g}%"))
    if any(m.n_failed for m in maps):
        raise PartialSweep(f"{sum(m.n_failed for m in maps)} cells failed")


HANDLERS = {
    "simulate": cmd_simulate,
    "qssa": cmd_qssa,
    "asymptotics": cmd_asymptotics,
    "sensitivity": cmd_sensitivity,
    "timescales": cmd_timescales,
    "sweep": cmd_sweep,
}


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if config["command"] != "simulate" and config["model"] != "full":
            raise ConfigError("--model only applies to simulate")
        if args.dump_config:
            _write(args.out, json.dumps(config, indent=2, sort_keys=True) + "\n")
            return 0
        HANDLERS[config["command"]](config, args.out, args.threads)
    except (ConfigError, TypeError) as exc:
        return _fail(2, "config", str(exc))
    except (IntegrationError, NoRootError, MissingEventError, ArithmeticError) as exc:
        return _fail(3, "numeric", str(exc))
    except PartialSweep as exc:
        return _fail(4, "partial_sweep", str(exc))
    except ValueError as exc:
        return _fail(2, "config", str(exc))
    except OSError as exc:
        return _fail(2, "config", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
