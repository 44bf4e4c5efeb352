"""Batch experiments: instance generation, runs of each algorithm, CSV traces and summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .baseline import random_baseline
from .generate import random_chordal_dag, random_cpts
from .graph import cpdag_of, shd
from .network import joint, realizations
from .separating import TargetFamily, graph_separating_system
from .tracker import NetworkOracle, build_hypotheses, estimate_graph, run

logger = logging.getLogger(__name__)

SCHEMA = "# schema v1"
COLUMNS = ("trial", "t", "samples", "arm", "d_t", "shd", "terminated")
ALGORITHMS = ("exact", "practical", "random-baseline")


@dataclass
class ExperimentConfig:
    nodes: int = 4
    rho: float = 0.5
    card: int = 2
    delta: float = 0.1
    algo: str = "practical"
    trials: int = 50
    seed: int = 0
    max_samples: int = 100_000
    targets: str = "auto"  # "auto" or a path to a target-family JSON file
    out: str | None = None
    log_every: int = 100
    workers: int = 1

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("nodes must be at least 2")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if self.card < 2:
            raise ValueError("card must be at least 2")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.algo not in ALGORITHMS:
            raise ValueError(f"algo must be one of {ALGORITHMS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.max_samples < 0:
            raise ValueError("max_samples must be nonnegative")
        if self.log_every < 1:
            raise ValueError("log_every must be at least 1")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class TrialRecord:
    trial: int
    t: int
    samples: int
    arm: str
    d_t: float
    shd: int
    terminated: bool


@dataclass
class TrialOutcome:
    trial: int
    records: list
    terminated: bool
    final_shd: int
    samples: int
    error: str | None = None
    extra: dict = field(default_factory=dict)


def trial_seed(seed: int, trial: int) -> int:
    return seed ^ trial


def make_instance(config: ExperimentConfig, rng: np.random.Generator):
    """(dag, net, cpdag, targets) for one trial."""
    dag = random_chordal_dag(config.nodes, config.rho, rng)
    net = random_cpts(dag, config.card, rng)
    cpdag = cpdag_of(dag)
    if config.targets == "auto":
        targets = graph_separating_system(cpdag)
    else:
        path = Path(config.targets)
        try:
            targets = TargetFamily.from_json(path.read_text())
        except OSError as e:
            raise OSError(f"cannot read targets file {path}: {e}") from e
    return dag, net, cpdag, targets


def _keep(t: int, last: int, every: int, shd_changed: bool) -> bool:
    return shd_changed or t == last or t % every == 0


def _tracker_trial(config, trial, rng, dag, net, cpdag, targets) -> TrialOutcome:
    hyp = build_hypotheses(cpdag, joint(net), targets, config.algo)
    env = NetworkOracle(net, hyp.arms, hyp.arm_scopes)
    res = run(env, hyp, config.delta, rng, max_samples=config.max_samples)
    # SHD only changes when some group's most likely hypothesis does
    change_shd = {t: shd(estimate_graph(hyp, list(b))[0], dag) for t, b in res.best_events}
    labels = [a.label() for a in hyp.arms]
    records = []
    cur = change_shd[0]
    last = len(res.arm_trace)
    for i, (arm, d) in enumerate(zip(res.arm_trace.tolist(), res.d_trace.tolist())):
        t = i + 1
        changed = t in change_shd and change_shd[t] != cur
        cur = change_shd.get(t, cur)
        if _keep(t, last, config.log_every, changed):
            records.append(TrialRecord(trial, t, t, labels[arm], d, cur, res.terminated and t == last))
    return TrialOutcome(
        trial, records, res.terminated, shd(res.graph, dag), res.stopping_time,
        extra={"initial_shd": change_shd[0], "tracking_violations": res.tracking_violations},
    )


def _baseline_trial(config, trial, rng, dag, net, cpdag, targets) -> TrialOutcome:
    res = random_baseline(net, cpdag, list(targets), config.max_samples, rng)
    event_shd = {t: shd(g, dag) for t, g in res.events}
    labels = {}
    records = []
    cur = event_shd[0]
    last = len(res.arm_trace)
    for i, (ti, r) in enumerate(res.arm_trace):
        t = i + 1
        changed = t in event_shd and event_shd[t] != cur
        cur = event_shd.get(t, cur)
        if _keep(t, last, config.log_every, changed):
            key = (ti, r)
            if key not in labels:
                labels[key] = realizations(res.targets[ti], net.cards)[r].label()
            records.append(TrialRecord(trial, t, t, labels[key], math.nan, cur, False))
    return TrialOutcome(trial, records, False, shd(res.final, dag), last, extra={"initial_shd": event_shd[0]})


def run_trial(config: ExperimentConfig, trial: int) -> TrialOutcome:
    rng = np.random.default_rng(trial_seed(config.seed, trial))
    try:
        dag, net, cpdag, targets = make_instance(config, rng)
        if config.algo == "random-baseline":
            return _baseline_trial(config, trial, rng, dag, net, cpdag, targets)
        return _tracker_trial(config, trial, rng, dag, net, cpdag, targets)
    except Exception as e:  # isolate failures so one bad trial does not sink the batch
        logger.error("trial %d failed: %s", trial, e)
        return TrialOutcome(trial, [], False, -1, 0, error="".join(traceback.format_exception_only(type(e), e)).strip())


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def write_csv(outcomes: list, stream) -> None:
    stream.write(SCHEMA + "\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COLUMNS)
    for o in outcomes:
        for r in o.records:
            w.writerow([r.trial, r.t, r.samples, r.arm, _fmt_float(r.d_t), r.shd, int(r.terminated)])


def read_csv(stream) -> list[TrialRecord]:
    """Trace rows from a CSV in this schema (comment lines are skipped)."""
    lines = [ln for ln in stream if not ln.startswith("#")]
    rows = []
    for row in csv.DictReader(lines):
        missing = set(COLUMNS) - set(row)
        if missing:
            raise ValueError(f"trace CSV lacks columns {sorted(missing)}")
        d = row["d_t"]
        rows.append(
            TrialRecord(
                int(row["trial"]), int(row["t"]), int(row["samples"]), row["arm"],
                math.nan if d == "" else float(d), int(row["shd"]), row["terminated"] in ("1", "True", "true"),
            )
        )
    return rows


def samples_to_shd0(records: list, budget: int) -> int:
    """First sample count from which a trial's SHD stays 0; ``budget`` if it never settles."""
    if not records or records[-1].shd != 0:
        return budget
    first = records[-1].samples
    for r in reversed(records):
        if r.shd != 0:
            break
        first = r.samples
    return first


def summarize(records: list, grid=None, budget: int | None = None) -> dict:
    """Mean SHD and a band of two sample standard deviations at each grid sample count.

    A trial's SHD is carried forward from its last logged row.
    """
    by_trial = {}
    for r in records:
        by_trial.setdefault(r.trial, []).append(r)
    if not by_trial:
        return {"trials": 0, "samples": [], "mean": [], "lower": [], "upper": [], "samples_to_shd0": {}}
    for rs in by_trial.values():
        rs.sort(key=lambda r: r.samples)
    top = max(rs[-1].samples for rs in by_trial.values())
    budget = top if budget is None else budget
    if grid is None:
        grid = np.unique(np.linspace(1, max(top, 1), num=min(200, max(top, 1))).round().astype(int))
    grid = np.asarray(grid, dtype=int)
    curves = []
    for rs in by_trial.values():
        xs = np.array([r.samples for r in rs])
        ys = np.array([r.shd for r in rs], dtype=float)
        idx = np.searchsorted(xs, grid, side="right") - 1
        curves.append(np.where(idx >= 0, ys[np.clip(idx, 0, None)], ys[0]))
    c = np.array(curves)
    mean = c.mean(axis=0)
    std = c.std(axis=0, ddof=1) if len(c) > 1 else np.zeros_like(mean)
    return {
        "trials": len(by_trial),
        "samples": grid.tolist(),
        "mean": mean.tolist(),
        "lower": (mean - 2 * std).tolist(),
        "upper": (mean + 2 * std).tolist(),
        "samples_to_shd0": {str(k): samples_to_shd0(rs, budget) for k, rs in sorted(by_trial.items())},
        "terminated": {str(k): any(r.terminated for r in rs) for k, rs in sorted(by_trial.items())},
    }


def run_benchmark(config: ExperimentConfig) -> tuple[str, dict]:
    """Run every trial and return the CSV text and a JSON-ready summary."""
    ids = list(range(config.trials))
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            outcomes = list(pool.map(run_trial, [config] * len(ids), ids))
    else:
        outcomes = [run_trial(config, i) for i in ids]
    buf = io.StringIO()
    write_csv(outcomes, buf)
    summary = summarize([r for o in outcomes for r in o.records], budget=config.max_samples)
    summary["config"] = asdict(config)
    summary["final_shd"] = {str(o.trial): o.final_shd for o in outcomes}
    summary["wrong_terminations"] = sum(1 for o in outcomes if o.terminated and o.final_shd != 0)
    summary["errors"] = {str(o.trial): o.error for o in outcomes if o.error}
    text = buf.getvalue()
    if config.out:
        path = Path(config.out)
        try:
            path.write_text(text)
            path.with_suffix(path.suffix + ".summary.json").write_text(json.dumps(summary, indent=2))
        except OSError as e:
            raise OSError(f"cannot write benchmark output to {path}: {e}") from e
    return text, summary
