"""Command line entry point: ``metastable-csma <exact|simulate|predict|verify|sweep>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness as H
from .exact_oracle import nu_check
from .landscape import landscape_report
from .rates import RateSchedule, ScheduleError
from .simulator import simulate_many, summarize_trials
from .topology import GraphError, enumerate_configs, parse_graph_spec

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load_json_arg(text: str) -> dict:
    p = Path(text)
    if not text.lstrip().startswith("{") and p.exists():
        text = p.read_text()
    return json.loads(text)


def _config_dict(args) -> dict:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise H.ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key, attr in (("graph", "graph"), ("replicates", "replicates"), ("t_max", "t_max"),
                      ("seed", "seed"), ("M", "M")):
        val = getattr(args, attr, None)
        if val is not None:
            d[key] = val
    if getattr(args, "schedule", None):
        try:
            d["schedule"] = _load_json_arg(args.schedule)
        except (OSError, json.JSONDecodeError) as exc:
            raise H.ConfigError(f"bad --schedule: {exc}") from None
    if getattr(args, "jobs", None) is not None:
        d["jobs"] = args.jobs
    return d


def _graph_and_schedule(d: dict):
    try:
        return parse_graph_spec(d["graph"]), RateSchedule.from_dict(d["schedule"])
    except KeyError as exc:
        raise H.ConfigError(f"missing config key {exc}") from None
    except (GraphError, ScheduleError, ValueError) as exc:
        raise H.ConfigError(str(exc)) from None


def _emit(text: str, out, default_name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.suffix == "" or path.is_dir():
        path = path / default_name
    H.atomic_write(path, text)


def cmd_exact(args) -> int:
    d = _config_dict(args)
    g, s = _graph_and_schedule(d)
    times = d.get("times", [0.0])
    _emit(H.exact_table(g, s, [float(t) for t in times]), args.out, "exact.csv")
    return EXIT_PASS


def cmd_simulate(args) -> int:
    d = _config_dict(args)
    g, s = _graph_and_schedule(d)
    reps = int(d.get("replicates", 100))
    t_max = float(d.get("t_max", 1e6))
    samples = simulate_many(g, s, g.u_mask, g.v_mask, int(d.get("seed", 0)), reps, t_max,
                            regen_log=args.regen_log, jobs=int(d.get("jobs", 1)))
    _emit(H.samples_csv(samples), args.out, "samples.csv")
    if args.regen_log:
        rows = []
        for h in samples:
            lg = h.regen_log
            summ = summarize_trials([h])
            rows.append((h.replicate, lg.n_trials, summ.n_success,
                         "" if lg.first_success is None else lg.first_success,
                         summ.mean_failed_length))
        text = H.csv_text(["replicate", "n_trials", "n_success", "first_success",
                           "mean_failed_length"], rows)
        if args.out is None:
            sys.stderr.write(text)
        else:
            out = Path(args.out)
            base = out if (out.suffix == "" or out.is_dir()) else out.with_name(out.stem + "_trials.csv")
            _emit(text, base, "trials.csv")
    return EXIT_PASS


def cmd_predict(args) -> int:
    d = _config_dict(args)
    cfg = H.ExperimentConfig.from_dict(d)
    space = enumerate_configs(cfg.graph)
    M = cfg.resolve_M(nu_check(space, cfg.schedule, cfg.graph, 0.0))
    _emit(H.predict_table(cfg.graph, cfg.schedule, M, cfg.tau_grid, cfg.thresholds, cfg.slack),
          args.out, "prediction.csv")
    return EXIT_PASS


def cmd_verify(args) -> int:
    d = _config_dict(args)
    if args.landscape:
        g, s = _graph_and_schedule(d)
        rep = landscape_report(enumerate_configs(g), g, s)
        _emit(json.dumps(rep, indent=2) + "\n", args.out, "landscape.json")
        return EXIT_PASS
    cfg = H.ExperimentConfig.from_dict(d)
    rep = H.run_experiment(cfg, args.out)
    if rep.error and rep.error.get("stage") == "config":
        return EXIT_CONFIG
    print(f"{'PASS' if rep.passed else 'FAIL'} sup_distance={rep.sup_distance:.4f} "
          f"tolerance={rep.tolerance} regime={rep.regime} M={rep.M:.6g}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    d = _config_dict(args)
    axis = d.pop("sweep", None)
    if not axis:
        raise H.ConfigError("config needs a 'sweep': {'param': ..., 'values': [...]} block")
    reports = H.sweep(d, axis.get("param"), axis.get("values", []), args.out, jobs=int(d.get("jobs", 1)))
    if args.out is None:
        sys.stdout.write(H.sweep_csv(axis["param"], axis["values"], reports))
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metastable-csma", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("exact", cmd_exact), ("simulate", cmd_simulate), ("predict", cmd_predict),
                     ("verify", cmd_verify), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
        p.add_argument("--config", help="experiment JSON file")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--graph", help="complete:m,n | torus:m,n | file:PATH")
        p.add_argument("--schedule", help="schedule JSON (inline or path)")
        if name in ("simulate", "verify", "sweep"):
            p.add_argument("--replicates", type=int)
            p.add_argument("--t-max", dest="t_max", type=float)
        if name == "simulate":
            p.add_argument("--regen-log", action="store_true")
        if name in ("predict", "verify"):
            p.add_argument("--M", type=float)
        if name == "verify":
            p.add_argument("--landscape", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (H.ConfigError, GraphError, ScheduleError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
