"""Configuration, trial orchestration and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .core import (
    Aggregate,
    AggregateFunction,
    ConfigError,
    init_mass_states,
    init_value_states,
    true_aggregate,
)
from .engine import FaultPlan, Mode, Simulator
from .metrics import MetricsRow, drain_and_audit, messages_to_accuracy, sample_row, time_to_accuracy
from .protocols import PROTOCOLS, PushPull, PushSum, RandomGrouping, Variant
from .topology import generate_erdos_renyi, induced_subgraph, largest_connected_component, write_topology

logger = logging.getLogger(__name__)

CURVES_HEADER = [
    "trial", "seed", "protocol", "mode", "time", "rmse", "cv_rmse",
    "mass_s", "mass_w", "messages_cum", "buffer_max", "nodes_alive",
]
SUMMARY_HEADER = [
    "protocol", "mode", "eps", "mean_time", "std_time", "mean_msgs", "std_msgs", "reach_rate", "trials",
]

# Timeouts used for push-pull exchanges when a fault plan is active and
# ppg_timeout is left on "auto"; fault-free runs never time out.
AUTO_PPG_TIMEOUT = {Mode.SYNC: 3.0, Mode.ASYNC: 5.0}


@dataclass
class ExperimentConfig:
    protocol: str = "psp"
    n: int = 1000
    avg_degree: float = 5.0
    trials: int = 50
    base_seed: int = 1
    mode: str = "sync"
    loss_prob: float = 0.0
    fifo: bool = True
    crash_spec: str = ""
    aggregate: str = "count"
    distinguished_node: int = 0
    input_min: float = 0.0
    input_max: float = 100.0
    eps: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    budget: int = 500
    drg_leader_prob: float = 0.2
    drg_jack_timeout: float = 2.0
    drg_gam_timeout: float = 4.0
    ppg_timeout: Optional[float] = None  # None = auto
    oracle_loss_recovery: bool = False
    d_min: float = 0.1
    d_max: float = 2.0
    early_stop: int = 0
    stall_stop: int = 0
    workers: int = 1
    out: str = "results"
    topology_out: str = ""

    def validate(self) -> "ExperimentConfig":
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol: unknown value {self.protocol!r} (valid: {', '.join(PROTOCOLS)})")
        if self.mode not in ("sync", "async"):
            raise ConfigError(f"mode: unknown value {self.mode!r} (valid: sync, async)")
        if self.n < 2:
            raise ConfigError(f"n: need at least 2 nodes, got {self.n}")
        if not 0 < self.avg_degree < self.n:
            raise ConfigError(f"avg_degree: must lie in (0, {self.n}), got {self.avg_degree}")
        if self.trials < 1:
            raise ConfigError(f"trials: must be >= 1, got {self.trials}")
        if self.base_seed < 0:
            raise ConfigError(f"base_seed: must be >= 0, got {self.base_seed}")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError(f"loss_prob: must lie in [0, 1], got {self.loss_prob}")
        AggregateFunction.parse(self.aggregate)
        if self.aggregate == "sum" and self.protocol != "psp":
            raise ConfigError("aggregate: sum is only available for protocol psp")
        if not self.eps or any(not e > 0 for e in self.eps):
            raise ConfigError(f"eps: need positive targets, got {self.eps}")
        if self.budget < 1:
            raise ConfigError(f"budget: must be >= 1, got {self.budget}")
        if not 0.0 <= self.drg_leader_prob <= 1.0:
            raise ConfigError(f"drg_leader_prob: must lie in [0, 1], got {self.drg_leader_prob}")
        for key in ("drg_jack_timeout", "drg_gam_timeout"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key}: must be > 0")
        if self.ppg_timeout is not None and not self.ppg_timeout > 0:
            raise ConfigError(f"ppg_timeout: must be > 0 or 'auto', got {self.ppg_timeout}")
        if self.oracle_loss_recovery and self.protocol != "psp":
            raise ConfigError("oracle_loss_recovery: only available for protocol psp")
        if self.mode == "async" and not 0 < self.d_min <= self.d_max:
            raise ConfigError(f"d_min: need 0 < d_min <= d_max, got {self.d_min}, {self.d_max}")
        if self.early_stop < 0:
            raise ConfigError(f"early_stop: must be >= 0, got {self.early_stop}")
        if self.stall_stop < 0:
            raise ConfigError(f"stall_stop: must be >= 0, got {self.stall_stop}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        parse_crash_spec(self.crash_spec)
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _parse_bool(key: str, text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def parse_value(key: str, text: str) -> Any:
    if key not in _FIELDS:
        raise ConfigError(f"{key}: unknown key (valid: {', '.join(_FIELDS)})")
    text = text.strip()
    default = _FIELDS[key].default
    try:
        if key == "eps":
            return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
        if key == "ppg_timeout":
            return None if text.lower() in ("auto", "") else float(text)
        if isinstance(default, bool):
            return _parse_bool(key, text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: malformed value {text!r}") from None
    if key in ("protocol", "mode", "aggregate"):
        return text.lower()
    return text


def parse_config(text: str = "", overrides: Optional[dict[str, Any]] = None) -> ExperimentConfig:
    """Read ``key = value`` lines; ``overrides`` (already typed or str) win."""
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, val)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        values[key] = parse_value(key, val) if isinstance(val, str) else val
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    return ExperimentConfig(**values).validate()


# --------------------------------------------------------------------- seeds


def derive_seed(base_seed: int, trial: int) -> int:
    """seed_i = first 64-bit word of SeedSequence([base_seed, trial])."""
    return int(np.random.SeedSequence([base_seed, trial]).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- crash spec


def parse_crash_spec(spec: str) -> list[tuple]:
    """Entries separated by ';'. ``round:<t> nodes:<k>`` with k a count or a
    percentage of the component, or ``at:<t>:<id>``."""
    entries: list[tuple] = []
    for part in (p.strip() for p in spec.split(";")):
        if not part:
            continue
        try:
            if part.startswith("at:"):
                _, t, node = part.split(":")
                entries.append(("at", float(t), int(node)))
                continue
            fields = dict(tok.split(":", 1) for tok in part.split())
            t = float(fields["round"])
            k = fields["nodes"]
            count = ("pct", float(k[:-1])) if k.endswith("%") else ("count", int(k))
            entries.append(("random", t, count))
        except (ValueError, KeyError):
            raise ConfigError(
                f"crash_spec: cannot parse {part!r} (use 'round:<t> nodes:<k>' or 'at:<t>:<id>')"
            ) from None
        if t < 0:
            raise ConfigError(f"crash_spec: negative time in {part!r}")
    return entries


def build_crash_schedule(spec: str, n: int, rng: random.Random) -> list[tuple[float, int]]:
    schedule: list[tuple[float, int]] = []
    doomed: set[int] = set()
    for entry in sorted(parse_crash_spec(spec), key=lambda e: e[1]):
        if entry[0] == "at":
            _, t, node = entry
            schedule.append((t, node))
            doomed.add(node)
            continue
        _, t, (kind, k) = entry
        count = int(round(n * k / 100)) if kind == "pct" else k
        pool = [u for u in range(n) if u not in doomed]
        for node in rng.sample(pool, min(count, len(pool))):
            schedule.append((t, node))
            doomed.add(node)
    return sorted(schedule)


# -------------------------------------------------------------------- trials


@dataclass
class TrialResult:
    index: int
    seed: int
    rows: list[MetricsRow]
    time_to_accuracy: dict[float, Optional[float]]
    messages_to_accuracy: dict[float, Optional[int]]
    audit: Any
    component_size: int
    truth: float
    final_median: Optional[float]
    final_mean: Optional[float]
    counters: dict[str, int]


def make_protocol(cfg: ExperimentConfig, fn: AggregateFunction, n: int, inputs, faulty: bool):
    if cfg.protocol == "psp":
        return PushSum(init_mass_states(fn, n, inputs))
    values = init_value_states(fn, n, inputs)
    if cfg.protocol == "drg":
        return RandomGrouping(
            values, fn, p_leader=cfg.drg_leader_prob,
            jack_timeout=cfg.drg_jack_timeout, gam_timeout=cfg.drg_gam_timeout,
        )
    timeout = cfg.ppg_timeout
    if timeout is None and faulty:
        timeout = AUTO_PPG_TIMEOUT[Mode(cfg.mode)]
    return PushPull(values, fn, Variant(cfg.protocol), timeout=timeout)


def setup_trial(cfg: ExperimentConfig, index: int, audit_every_event: bool = False):
    """Build the simulator for one trial; returns (sim, truth, seed, topology)."""
    seed = derive_seed(cfg.base_seed, index)
    topo_rng = np.random.default_rng(seed)
    full = generate_erdos_renyi(cfg.n, cfg.avg_degree, topo_rng)
    topo, _ = induced_subgraph(full, largest_connected_component(full))
    n = topo.n
    fn = AggregateFunction.parse(cfg.aggregate, min(cfg.distinguished_node, n - 1))
    inputs = None
    if fn.kind is not Aggregate.COUNT:
        inputs = topo_rng.uniform(cfg.input_min, cfg.input_max, n).tolist()
    crash_rng = random.Random(seed ^ 0x5DEECE66D)
    faults = FaultPlan(
        loss_prob=cfg.loss_prob,
        fifo=cfg.fifo,
        crash_schedule=build_crash_schedule(cfg.crash_spec, n, crash_rng),
    )
    proto = make_protocol(cfg, fn, n, inputs, faulty=not faults.fault_free)
    sim = Simulator(
        topo, proto,
        mode=Mode(cfg.mode), faults=faults, d_min=cfg.d_min, d_max=cfg.d_max,
        rng=random.Random(seed), oracle_loss_recovery=cfg.oracle_loss_recovery,
        audit_every_event=audit_every_event,
    )
    return sim, true_aggregate(fn, n, inputs), seed, full


def run_trial(cfg: ExperimentConfig, index: int) -> TrialResult:
    sim, truth, seed, full = setup_trial(cfg, index)
    if cfg.topology_out and index == 0:
        write_topology(full, cfg.topology_out, seed)
    rows = [sample_row(sim, truth)]
    target = min(cfg.eps)
    streak = 0
    for _ in range(cfg.budget):
        sim.step()
        row = sample_row(sim, truth)
        rows.append(row)
        if cfg.early_stop:
            streak = streak + 1 if row.cv_rmse is not None and row.cv_rmse <= target else 0
            if streak >= cfg.early_stop:
                break
        if cfg.stall_stop and stalled(rows, cfg.stall_stop):
            break
    defined = [e for e in sim.protocol.estimates() if e is not None]
    final_median = statistics.median(defined) if defined else None
    final_mean = statistics.fmean(defined) if defined else None
    report = drain_and_audit(sim)
    proto = sim.protocol
    counters = {
        "messages_sent": sim.messages_sent,
        "messages_lost": sim.messages_lost,
        "crash_warnings": sim.crash_warnings,
    }
    for name in ("stale_pulls", "cancellations", "timeouts", "max_buffer", "groups_formed", "stale_jacks"):
        if hasattr(proto, name):
            counters[name] = getattr(proto, name)
    return TrialResult(
        index=index,
        seed=seed,
        rows=rows,
        time_to_accuracy={e: time_to_accuracy(rows, e) for e in cfg.eps},
        messages_to_accuracy={e: messages_to_accuracy(rows, e) for e in cfg.eps},
        audit=report,
        component_size=sim.n,
        truth=truth,
        final_median=final_median,
        final_mean=final_mean,
        counters=counters,
    )


def stalled(rows: Sequence[MetricsRow], window: int, rel: float = 1e-6) -> bool:
    """True when cv_rmse moved by less than ``rel`` over the last ``window`` rows."""
    if len(rows) <= window:
        return False
    recent = [r.cv_rmse for r in rows[-window - 1:]]
    if any(c is None for c in recent):
        return False
    lo, hi = min(recent), max(recent)
    return hi - lo <= rel * hi


def _run_indexed(args):
    cfg, index = args
    return run_trial(cfg, index)


def run_trials(cfg: ExperimentConfig, indices: Optional[Sequence[int]] = None) -> list[TrialResult]:
    indices = list(range(cfg.trials)) if indices is None else list(indices)
    if cfg.workers > 1 and len(indices) > 1:
        from multiprocessing import get_context

        with get_context("spawn").Pool(cfg.workers) as pool:
            results = pool.map(_run_indexed, [(cfg, i) for i in indices])
    else:
        results = [run_trial(cfg, i) for i in indices]
    return sorted(results, key=lambda r: r.index)


@dataclass
class SummaryRow:
    protocol: str
    mode: str
    eps: float
    mean_time: Optional[float]
    std_time: Optional[float]
    mean_msgs: Optional[float]
    std_msgs: Optional[float]
    reach_rate: float
    trials: int

    @property
    def reached(self) -> int:
        return round(self.reach_rate * self.trials)


def _mean_std(xs: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    if not xs:
        return None, None
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def summarize(cfg: ExperimentConfig, results: Sequence[TrialResult]) -> list[SummaryRow]:
    out = []
    for eps in cfg.eps:
        times = [r.time_to_accuracy[eps] for r in results if r.time_to_accuracy[eps] is not None]
        msgs = [r.messages_to_accuracy[eps] for r in results if r.messages_to_accuracy[eps] is not None]
        mt, st = _mean_std(times)
        mm, sm = _mean_std(msgs)
        out.append(SummaryRow(cfg.protocol, cfg.mode, eps, mt, st, mm, sm, len(times) / len(results), len(results)))
    return out


def run_experiment(cfg: ExperimentConfig) -> tuple[list[TrialResult], list[SummaryRow]]:
    cfg.validate()
    results = run_trials(cfg)
    return results, summarize(cfg, results)


# -------------------------------------------------------------------- output


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return f"{x:.9g}"


def write_results(cfg: ExperimentConfig, results: Sequence[TrialResult], summary: Sequence[SummaryRow], out) -> tuple[Path, Path]:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        curves = out / "curves.csv"
        with curves.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVES_HEADER)
            for r in sorted(results, key=lambda r: r.index):
                for row in r.rows:
                    w.writerow([
                        r.index, r.seed, cfg.protocol, cfg.mode, _num(float(row.time)), _num(row.rmse),
                        _num(row.cv_rmse), _num(row.mass_s), _num(row.mass_w), row.messages_cum,
                        row.buffer_max, row.nodes_alive,
                    ])
        summ = out / "summary.csv"
        with summ.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for s in summary:
                if s.mean_time is None:
                    timing = ["NOT_REACHED"] * 4
                else:
                    timing = [_num(s.mean_time), _num(s.std_time), _num(s.mean_msgs), _num(s.std_msgs)]
                w.writerow([s.protocol, s.mode, _num(s.eps), *timing, _num(s.reach_rate), s.trials])
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc.strerror or exc}") from exc
    return curves, summ


# --------------------------------------------------------------------- sweep


def sweep(cfg: ExperimentConfig, grid: dict[str, Sequence[Any]]) -> list[tuple[dict[str, Any], list[SummaryRow]]]:
    """Run the full experiment for every point of a parameter grid."""
    import itertools

    keys = sorted(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        point = dict(zip(keys, combo))
        sub = dataclasses.replace(cfg, **point).validate()
        results = run_trials(sub)
        out.append((point, summarize(sub, results)))
    return out


def fmt_summary(rows: Sequence[SummaryRow]) -> str:
    lines = []
    for s in rows:
        if s.mean_time is None:
            lines.append(f"{s.protocol:5s} {s.mode:5s} eps={s.eps:<8g} NOT_REACHED (0/{s.trials})")
        else:
            lines.append(
                f"{s.protocol:5s} {s.mode:5s} eps={s.eps:<8g} time={s.mean_time:8.2f}±{s.std_time:<7.2f} "
                f"msgs={s.mean_msgs:10.0f} reach={s.reach_rate:.2f}"
            )
    return "\n".join(lines)


