"""Experiment configs, verification runs, sweeps and CSV/JSON output."""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import rates as R
from .exact_oracle import expected_hitting_time, hitting_prob_before_return, nu_check
from .landscape import check_assumptions
from .predictor import DEFAULT_THRESHOLDS, predicted_survival
from .rates import RateSchedule
from .simulator import estimate_survival, simulate_many
from .topology import BipartiteGraph, enumerate_configs, parse_graph_spec

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def ks_distance(samples: Sequence[float], cdf: Callable[[float], float]) -> float:
    """Two-sided Kolmogorov-Smirnov statistic of a sample against a cdf."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    if n == 0:
        raise ValueError("empty sample")
    f = np.array([cdf(x) for x in xs], dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - f)), np.max(np.abs((i - 1) / n - f))))


@dataclass
class ExperimentConfig:
    graph: BipartiteGraph
    schedule: RateSchedule
    M_spec: object
    replicates: int = 1000
    seed: int = 0
    tau_grid: tuple = (0.25, 0.5, 0.75, 1.0)
    t_max: Optional[float] = None
    tolerance: float = 0.05
    thresholds: tuple = DEFAULT_THRESHOLDS
    slack: float = 0.0
    jobs: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            graph = parse_graph_spec(d["graph"])
            schedule = RateSchedule.from_dict(d["schedule"])
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        tau = d.get("tau_grid", list(cls.tau_grid))
        if isinstance(tau, dict):
            tau = np.linspace(tau["start"], tau["stop"], int(tau["num"])).tolist()
        tau = tuple(float(x) for x in tau)
        if not tau or any(b <= a for a, b in zip(tau, tau[1:])) or tau[0] < 0:
            raise ConfigError("tau_grid must be nonempty, nonnegative and strictly increasing")
        reps = int(d.get("replicates", 1000))
        if reps < 1:
            raise ConfigError("replicates must be >= 1")
        thr = tuple(float(x) for x in d.get("thresholds", DEFAULT_THRESHOLDS))
        if len(thr) != 2 or not thr[0] < thr[1]:
            raise ConfigError("thresholds must be [low, high] with low < high")
        t_max = d.get("t_max")
        return cls(
            graph=graph, schedule=schedule, M_spec=d.get("M", "critical"), replicates=reps,
            seed=int(d.get("seed", 0)), tau_grid=tau,
            t_max=None if t_max is None else float(t_max),
            tolerance=float(d.get("tolerance", 0.05)), thresholds=thr,
            slack=float(d.get("slack", 0.0)), jobs=int(d.get("jobs", 1)), raw=copy.deepcopy(d),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def resolve_M(self, nu0: float) -> float:
        """Absolute M, ``"critical"`` (1/nu0), ``{"critical_multiple": c}`` or ``{"power": p, "coef": c}``."""
        spec = self.M_spec
        if spec == "critical":
            M = 1.0 / nu0
        elif isinstance(spec, (int, float)):
            M = float(spec)
        elif isinstance(spec, dict) and "critical_multiple" in spec:
            M = float(spec["critical_multiple"]) / nu0
        elif isinstance(spec, dict) and "power" in spec:
            M = float(spec.get("coef", 1.0)) * self.schedule.lam ** float(R.as_fraction(spec["power"]))
        else:
            raise ConfigError(f"unrecognised M spec {spec!r}")
        if not (M > 0 and math.isfinite(M)):
            raise ConfigError(f"M resolved to {M}")
        return M


@dataclass
class VerificationReport:
    graph: str
    schedule: dict
    M: float = math.nan
    nu0: float = math.nan
    regime: str = ""
    product: float = math.nan
    replicates: int = 0
    seed: int = 0
    t_max: float = math.nan
    tau: list = field(default_factory=list)
    empirical: list = field(default_factory=list)
    se: list = field(default_factory=list)
    predicted: list = field(default_factory=list)
    sup_distance: float = math.nan
    ks_distance: Optional[float] = None
    tolerance: float = 0.05
    censored_fraction: float = 0.0
    assumptions: dict = field(default_factory=dict)
    assumptions_ok: bool = False
    passed: bool = False
    runtime_s: float = 0.0
    error: Optional[dict] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _assumptions_ok(rep: dict, regime: str) -> bool:
    """Isoperimetric assumption always; the energy barrier only in the critical case.

    Complete bipartite graphs pass the energy barrier regardless of beta_v,
    since lowering beta_v does not change the law from u.
    """
    iso = rep["complete_bipartite_multi_u"] or rep["stability_inequality"]
    if regime != "critical":
        return iso
    return iso and (rep["energy_barrier"] or rep["complete_bipartite_multi_u"])


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: Optional[int] = None) -> VerificationReport:
    """Landscape checks, oracle, simulation and prediction, compared on the tau grid."""
    started = time.perf_counter()
    g, s = cfg.graph, cfg.schedule
    rep = VerificationReport(graph=g.name, schedule=s.to_dict(), replicates=cfg.replicates,
                             seed=cfg.seed, tolerance=cfg.tolerance, tau=list(cfg.tau_grid))
    stage = "state space"
    samples = []
    try:
        space = enumerate_configs(g)
        stage = "landscape"
        rep.assumptions = check_assumptions(space, g, s).to_dict()
        stage = "oracle"
        rep.nu0 = nu_check(space, s, g, 0.0)
        rep.M = cfg.resolve_M(rep.nu0)
        stage = "prediction"
        pred = predicted_survival(g, s, rep.M, cfg.tau_grid, space=space,
                                  slack=cfg.slack, thresholds=cfg.thresholds)
        rep.regime, rep.product = pred.regime, pred.product
        rep.predicted = pred.survival.tolist()
        stage = "simulation"
        rep.t_max = cfg.t_max if cfg.t_max is not None else 2.0 * rep.M * max(cfg.tau_grid)
        samples = simulate_many(g, s, g.u_mask, g.v_mask, cfg.seed, cfg.replicates, rep.t_max,
                                jobs=cfg.jobs if jobs is None else jobs)
        stage = "comparison"
        curve = estimate_survival(samples, rep.M, cfg.tau_grid)
        rep.empirical = curve.survival.tolist()
        rep.se = curve.se.tolist()
        rep.censored_fraction = curve.censored_fraction
        rep.sup_distance = sup_distance(rep.empirical, rep.predicted)
        if s.is_frozen_at_zero and curve.censored_fraction == 0:
            rate = rep.M * rep.nu0
            rep.ks_distance = ks_distance([h.t_v / rep.M for h in samples],
                                          lambda x: -math.expm1(-rate * x))
        rep.assumptions_ok = _assumptions_ok(rep.assumptions, rep.regime)
        rep.passed = bool(rep.sup_distance <= cfg.tolerance and rep.assumptions_ok)
    except Exception as exc:  # noqa: BLE001 - every stage failure becomes report data
        log.exception("experiment failed at %s", stage)
        rep.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
        rep.passed = False
    rep.runtime_s = time.perf_counter() - started
    if out_dir is not None:
        write_outputs(out_dir, rep, samples)
    return rep


def sup_distance(empirical: Sequence[float], predicted: Sequence[float]) -> float:
    return float(max(abs(a - b) for a, b in zip(empirical, predicted)))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def samples_csv(samples) -> str:
    return csv_text(["replicate", "seed", "t_v", "n_events", "timeout"],
                    ((h.replicate, h.seed, h.t_v, h.n_events, h.timeout) for h in samples))


def write_outputs(out_dir, rep: VerificationReport, samples) -> None:
    out = Path(out_dir)
    atomic_write(out / "samples.csv", samples_csv(samples))
    atomic_write(out / "survival.csv", csv_text(
        ["tau", "empirical", "se", "predicted"],
        zip(rep.tau, rep.empirical, rep.se, rep.predicted)))
    atomic_write(out / "report.json", json.dumps(rep.to_dict(), indent=2, default=str) + "\n")


def read_survival_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in ("tau", "empirical", "se", "predicted")}


SWEEP_PARAMS = {"lambda", "M", "beta_u", "beta_v", "c_u", "c_v", "mu_u", "mu_v"}


def sweep(template: dict, param: str, values: Sequence, out_dir=None, jobs: int = 1) -> list:
    """Run the template once per axis value; point ``k`` uses seed ``base + k``."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"cannot sweep over {param!r}")
    values = list(values)
    if not values:
        raise ConfigError("empty sweep axis")
    base = int(template.get("seed", 0))
    reports = []
    for k, val in enumerate(values):
        d = copy.deepcopy(template)
        d["seed"] = base + k
        if param == "M":
            d["M"] = val
        else:
            d.setdefault("schedule", {})[param] = val
        point_dir = None if out_dir is None else Path(out_dir) / f"point_{k:03d}"
        try:
            cfg = ExperimentConfig.from_dict(d)
        except ConfigError as exc:
            r = VerificationReport(graph=str(d.get("graph")), schedule=d.get("schedule", {}), seed=d["seed"])
            r.error = {"stage": "config", "type": "ConfigError", "message": str(exc)}
            reports.append(r)
            continue
        reports.append(run_experiment(cfg, point_dir, jobs=jobs))
    if out_dir is not None:
        atomic_write(Path(out_dir) / "sweep.csv", sweep_csv(param, values, reports))
    return reports


def sweep_csv(param: str, values, reports) -> str:
    rows = []
    for k, (val, r) in enumerate(zip(values, reports)):
        rows.append((k, val, r.seed, r.M, r.nu0, r.regime, r.product, r.sup_distance,
                     r.passed, "" if r.error is None else r.error["message"]))
    return csv_text(["index", param, "seed", "M", "nu0", "regime", "product", "sup_distance",
                     "passed", "error"], rows)


def exact_table(g: BipartiteGraph, s: RateSchedule, times: Sequence[float]) -> str:
    """CSV of frozen-parameter oracle values along a time grid."""
    space = enumerate_configs(g)
    rows = []
    for t in times:
        lu, lv = R.lambda_u_at(s, t), R.lambda_v_at(s, t)
        gam = R.gamma_at(s, g, t)
        eps = hitting_prob_before_return(space, lu, lv)
        mean = expected_hitting_time(space, lu, lv, space.u_index, space.v_index)
        rows.append((t, lu, lv, gam, eps, eps * gam, mean))
    return csv_text(["t", "lambda_u", "lambda_v", "gamma", "eps_check", "nu_check", "mean_T_uv"], rows)


def predict_table(g: BipartiteGraph, s: RateSchedule, M: float, tau_grid,
                  thresholds=DEFAULT_THRESHOLDS, slack: float = 0.0) -> str:
    p = predicted_survival(g, s, M, tau_grid, thresholds=thresholds, slack=slack)
    return csv_text(["tau", "survival_predicted", "regime", "M", "nu0"],
                    ((x, y, p.regime, p.M, p.nu0) for x, y in zip(p.tau, p.survival)))
