"""Monte-Carlo experiment runner with deterministic seeding and CSV output.

Every trial draws one feasible problem from its own seed stream, runs each
requested algorithm on that identical problem and records the bounds next
to the achieved power. Rows are written in (sweep, trial, algorithm) order
whatever the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import scfa
from .baselines import ALGORITHMS
from .bounds import compute_bounds
from .core import ENUMERATION_GUARD, count_link_matrices
from .model import SystemParams, sample_feasible_problem, trial_rng

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "TrialRecord",
    "CSV_HEADER",
    "SWEEP_PARAMS",
    "run_trial",
    "run_experiment",
    "read_records",
    "summarize",
    "format_summary",
]

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("gamma_db", "K", "N", "L", "gamma_ch", "pt_watt")
_INT_PARAMS = ("K", "N", "L")
SANDWICH_TOL = 1e-6

CSV_HEADER = [
    "sweep_param", "sweep_value", "trial", "algorithm", "feasible", "p_total_w", "p_cp_w",
    "p_rrh_w", "p_lower_w", "p_upper_w", "sinr_min_ratio", "convex_solves", "gradient_iters",
    "wall_time_s",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _strict_keys(data: dict, allowed, what: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a JSON object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {what} key(s): {', '.join(unknown)}")


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep of a single system parameter over a list of values."""

    base: SystemParams = field(default_factory=SystemParams)
    sweep_param: str = "gamma_db"
    sweep_values: tuple = (5.0,)
    algorithms: tuple = ("scfa",)
    trials: int = 1
    master_seed: int = 0
    output_path: str = "results.csv"

    def __post_init__(self):
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.sweep_param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep_param must be one of {SWEEP_PARAMS}")
        if not self.sweep_values:
            raise ConfigError("sweep_values must be nonempty")
        if not self.algorithms:
            raise ConfigError("algorithms must be nonempty")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithm(s): {', '.join(bad)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("algorithms must not repeat")
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) \
                or self.master_seed < 0:
            raise ConfigError("master_seed must be a nonnegative integer")
        points = [self.point_params(i) for i in range(len(self.sweep_values))]
        if "es" in self.algorithms:
            for value, p in zip(self.sweep_values, points):
                if count_link_matrices(p.K, p.N) > ENUMERATION_GUARD:
                    raise ConfigError(f"es refused at {self.sweep_param}={value}: "
                                      f"(2^N-1)^K exceeds {ENUMERATION_GUARD:g}")

    def point_params(self, index: int) -> SystemParams:
        value = self.sweep_values[index]
        if self.sweep_param in _INT_PARAMS:
            if float(value) != int(value):
                raise ConfigError(f"{self.sweep_param} values must be integers")
            value = int(value)
        else:
            value = float(value)
        try:
            return self.base.with_(**{self.sweep_param: value})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        names = [f.name for f in fields(cls)]
        _strict_keys(data, names, "config")
        kwargs = dict(data)
        if "base" in kwargs:
            base = kwargs["base"]
            _strict_keys(base, [f.name for f in fields(SystemParams)], "base")
            try:
                kwargs["base"] = SystemParams(**base)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid base parameters: {exc}") from exc
        for key in ("sweep_values", "algorithms"):
            if key in kwargs and not isinstance(kwargs[key], (list, tuple)):
                raise ConfigError(f"{key} must be a list")
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sweep_values"] = list(self.sweep_values)
        out["algorithms"] = list(self.algorithms)
        return out


@dataclass
class TrialRecord:
    """One CSV row: an algorithm's outcome on one trial."""

    sweep_param: str
    sweep_value: float
    trial: int
    algorithm: str
    feasible: bool
    p_total_w: float
    p_cp_w: float
    p_rrh_w: float
    p_lower_w: float
    p_upper_w: float
    sinr_min_ratio: float
    convex_solves: int
    gradient_iters: int
    wall_time_s: float
    problem_hash: str = ""

    def row(self) -> list:
        return [self.sweep_param, _num(self.sweep_value), self.trial, self.algorithm,
                int(self.feasible), _num(self.p_total_w), _num(self.p_cp_w), _num(self.p_rrh_w),
                _num(self.p_lower_w), _num(self.p_upper_w), _num(self.sinr_min_ratio),
                int(self.convex_solves), int(self.gradient_iters), _num(self.wall_time_s)]


def _num(x) -> str:
    """Round-trip text for a number; numpy scalars are unwrapped first."""
    return repr(x.item() if isinstance(x, np.generic) else x)


def problem_hash(problem) -> str:
    h = hashlib.sha256()
    for arr in (problem.h_hat, problem.err_var, problem.gamma):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def _run_algorithm(name, problem, trace_path):
    if name == "scfa":
        rep, tr = scfa.run(problem, trace=trace_path is not None)
        if tr is not None:
            scfa.write_trace(trace_path, tr)
        return rep
    return ALGORITHMS[name](problem)


def run_trial(spec: ExperimentSpec, sweep_index: int, trial_index: int,
              trace_dir: str | None = None) -> list[TrialRecord]:
    """Draw the trial's problem and run every requested algorithm on it."""
    params = spec.point_params(sweep_index)
    rng = trial_rng(spec.master_seed, sweep_index, trial_index)
    _, problem = sample_feasible_problem(params, rng)
    bounds = compute_bounds(problem)
    digest = problem_hash(problem)
    value = spec.sweep_values[sweep_index]
    records = []
    for name in sorted(spec.algorithms):
        trace_path = None
        if trace_dir is not None and name == "scfa":
            trace_path = os.path.join(trace_dir, f"scfa_s{sweep_index}_t{trial_index}.csv")
        rep = _run_algorithm(name, problem, trace_path)
        if rep.feasible and not (bounds.p_lower - SANDWICH_TOL <= rep.p_total
                                 <= bounds.p_upper + SANDWICH_TOL):
            log.warning("bound sandwich violated: %s sweep=%s trial=%d P=%.9g bounds=[%.9g, %.9g]",
                        name, value, trial_index, rep.p_total, bounds.p_lower, bounds.p_upper)
        records.append(TrialRecord(
            spec.sweep_param, float(value), trial_index, name, bool(rep.feasible),
            float(rep.p_total), float(rep.p_cp), float(rep.p_rrh), float(bounds.p_lower),
            float(bounds.p_upper), rep.sinr_min_ratio(problem.gamma), int(rep.convex_solves),
            int(rep.gradient_iters), float(rep.wall_time), digest))
    return records


def _task(args):
    return run_trial(*args)


def run_experiment(spec: ExperimentSpec, jobs: int = 1, trace: bool = False,
                   debug: bool = False) -> Path:
    """Run every (sweep value, trial) pair and write the CSV to ``spec.output_path``.

    With ``debug`` an extra ``problem_hash`` column identifies the instance
    each row was computed on.
    """
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    trace_dir = None
    if trace:
        trace_dir = str(out.with_name(out.stem + "_traces"))
        os.makedirs(trace_dir, exist_ok=True)
    tasks = [(spec, s, t, trace_dir) for s in range(len(spec.sweep_values))
             for t in range(spec.trials)]
    if jobs == 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER + (["problem_hash"] if debug else []))
        for records in results:
            for rec in records:
                writer.writerow(rec.row() + ([rec.problem_hash] if debug else []))
    return out


def read_records(path) -> list[dict]:
    """Load a results CSV, converting numeric columns."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"malformed results file, missing columns: {', '.join(missing)}")
        rows = []
        for r in reader:
            r = dict(r)
            for c in ("sweep_value", "p_total_w", "p_cp_w", "p_rrh_w", "p_lower_w", "p_upper_w",
                      "sinr_min_ratio", "wall_time_s"):
                r[c] = float(r[c])
            for c in ("trial", "convex_solves", "gradient_iters"):
                r[c] = int(r[c])
            r["feasible"] = r["feasible"] in ("1", "True", "true")
            rows.append(r)
    return rows


def summarize(path) -> list[dict]:
    """Per sweep point and algorithm: power means/medians and normalized mean run time.

    Power statistics use feasible rows only. Run times are normalized so the
    slowest algorithm at each sweep point has mean time 1.
    """
    rows = read_records(path)
    if not rows:
        raise ValueError(f"{path} contains no data rows")
    groups = defaultdict(list)
    for r in rows:
        groups[(r["sweep_param"], r["sweep_value"], r["algorithm"])].append(r)
    table = []
    for (param, value, alg), rs in sorted(groups.items()):
        ok = [r for r in rs if r["feasible"]]
        p = np.array([r["p_total_w"] for r in ok])
        table.append({
            "sweep_param": param,
            "sweep_value": value,
            "algorithm": alg,
            "trials": len(rs),
            "feasible": len(ok),
            "mean_p_total_w": float(p.mean()) if ok else float("nan"),
            "median_p_total_w": float(np.median(p)) if ok else float("nan"),
            "mean_p_lower_w": float(np.mean([r["p_lower_w"] for r in rs])),
            "mean_p_upper_w": float(np.mean([r["p_upper_w"] for r in rs])),
            "mean_convex_solves": float(np.mean([r["convex_solves"] for r in rs])),
            "mean_wall_time_s": float(np.mean([r["wall_time_s"] for r in rs])),
        })
    slowest = defaultdict(float)
    for row in table:
        key = (row["sweep_param"], row["sweep_value"])
        slowest[key] = max(slowest[key], row["mean_wall_time_s"])
    for row in table:
        top = slowest[(row["sweep_param"], row["sweep_value"])]
        row["norm_wall_time"] = row["mean_wall_time_s"] / top if top > 0 else 1.0
    return table


def format_summary(table: list[dict]) -> str:
    cols = ["sweep_param", "sweep_value", "algorithm", "trials", "feasible", "mean_p_total_w",
            "median_p_total_w", "mean_p_lower_w", "mean_p_upper_w", "mean_convex_solves",
            "mean_wall_time_s", "norm_wall_time"]
    lines = [",".join(cols)]
    for row in table:
        cells = [f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in cols]
        lines.append(",".join(cells))
    return "\n".join(lines)
