"""Batch experiments, timing scans and the invariant sweep.

Output files (CSV with a header row, floats written with ``repr`` so they
round-trip exactly):

``runs.csv``
    ``policy,true_state,true_mode,step,action,outcome,reward_after,wall_time``;
    one row per executed step.  ``wall_time`` is the last column and the
    only nondeterministic one.
``parity.csv``
    ``true_state,true_mode,greedy_policy,greedy_reward,brute_reward,equal``.
``latency_hist.csv``
    ``policy,bin_lo,bin_hi,count``: mean per-step latency over true pairs.
``indistinguishable_cdf.csv``
    ``policy,mode,size,fraction``: fraction of true states whose largest
    final indistinguishable set (over the swept modes, or for one mode)
    has at most ``size`` states.
``timing.csv``
    ``n_modes,mean_latency,selections`` plus ``# fit`` comment lines.
``summary.json``, ``factors.json``, ``plots.gp``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from activediag.circuit import CircuitModel, load_circuit, with_fault_prone
from activediag.errors import ModelError
from activediag.faults import FaultSpec, compile_model
from activediag.model import DiagnosisModel, load_model
from activediag.policies import RunRecord, make_policy, run_policy

log = logging.getLogger(__name__)

PARITY_ATOL = 1e-9


def load_fault_file(path, sensors) -> tuple[FaultSpec, dict | None]:
    """Read a fault config: either a bare list of sensor entries or an object
    with ``faults``, optional ``sensor_alphabet`` and optional ``state_prior``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if isinstance(doc, list):
        doc = {"faults": doc}
    if not isinstance(doc, dict) or "faults" not in doc:
        raise ModelError(f"{path}: expected a list or an object with 'faults'")
    spec = FaultSpec.from_config(doc["faults"], sensors, int(doc.get("sensor_alphabet", 2)))
    return spec, doc.get("state_prior")


def build_model(circuit=None, model=None, faults=None) -> DiagnosisModel:
    """Model from an explicit model file, or from a circuit plus fault config.

    A circuit without a fault config gets flip (0.2) and stuck-at-1 (0.4)
    faults on each sensor it marks fault-prone.
    """
    if (circuit is None) == (model is None):
        raise ModelError("give exactly one of a circuit or a model file")
    if model is not None:
        if faults is not None:
            raise ModelError("fault configs apply to circuits, not to explicit model files")
        return load_model(model)
    circ = circuit if isinstance(circuit, CircuitModel) else load_circuit(circuit)
    if faults is None:
        return compile_model(circ, circ.fault_spec())
    spec, state_prior = load_fault_file(faults, circ.sensor_ids)
    return compile_model(circ, spec, state_prior)


@dataclass
class ExperimentConfig:
    circuit: str | None = None
    model: str | None = None
    faults: str | None = None
    budget: int = 6
    policies: list[str] = field(default_factory=lambda: ["greedy-partition", "brute-force"])
    jobs: int = 1
    out: str = "results"
    seed: int = 0
    pairs: list[tuple[str, str]] | None = None  # None: every supported pair
    timing_repeats: int = 3
    factor_budget: int | None = None
    cap: int = 10**7

    def validate(self):
        if self.budget < 1:
            raise ModelError("budget must be at least 1")
        if not self.policies:
            raise ModelError("at least one policy is required")
        for p in (self.circuit, self.model, self.faults):
            if p is not None and not Path(p).is_file():
                raise ModelError(f"no such file: {p}")
        if self.jobs < 1:
            raise ModelError("jobs must be positive")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        base = Path(path).parent
        for key in ("circuit", "model", "faults"):
            if doc.get(key):
                doc[key] = str((base / doc[key]).resolve()) if not Path(doc[key]).is_absolute() else doc[key]
        if doc.get("pairs"):
            doc["pairs"] = [tuple(p) for p in doc["pairs"]]
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ModelError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**doc)


@dataclass
class PolicySummary:
    policy: str
    runs: int
    f_avg: float
    latency_mean: float
    latency_median: float
    latency_max: float
    histogram: list[tuple[float, float, int]]
    cdf: dict[str, list[tuple[int, float]]]


@dataclass
class ExperimentSummary:
    model: str
    budget: int
    pairs: int
    policies: dict[str, PolicySummary]
    parity: list[dict]
    parity_fraction: float | None
    factors: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("parity")
        d["parity_rows"] = len(self.parity)
        return d


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(c) for c in row])


def _histogram(values, bins=10) -> list[tuple[float, float, int]]:
    if not values:
        return []
    counts, edges = np.histogram(values, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]


def indistinguishable_cdf(records: list[RunRecord], n_states: int) -> dict[str, list[tuple[int, float]]]:
    """Per-mode and overall (``"all"``: max over modes) cumulative fractions of
    true states by final indistinguishable-set size."""
    by_mode: dict[str, dict[str, int]] = {}
    worst: dict[str, int] = {}
    for r in records:
        size = len(r.final_indistinguishable)
        by_mode.setdefault(r.true_mode, {})[r.true_state] = size
        worst[r.true_state] = max(worst.get(r.true_state, 0), size)

    def curve(sizes):
        vals = np.array(sorted(sizes.values()))
        return [(n, float(np.count_nonzero(vals <= n)) / len(vals)) for n in range(1, n_states + 1)]

    out = {"all": curve(worst)}
    for mode, sizes in by_mode.items():
        out[mode] = curve(sizes)
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Run every policy on every selected true pair and write the artifacts."""
    config.validate()
    model = build_model(config.circuit, config.model, config.faults)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.pairs is None:
        pairs = model.supported_pairs()
    else:
        pairs = [(model.state_index(x), model.mode_index(q)) for x, q in config.pairs]
    policies = [make_policy(name, config.budget, config.seed) for name in config.policies]
    tasks = [(p, pair) for p in policies for pair in pairs]
    log.info("running %d policies on %d true pairs", len(policies), len(pairs))

    def one(task):
        policy, pair = task
        return run_policy(model, policy, pair, config.budget, timing_repeats=config.timing_repeats)

    records: list[RunRecord] = []
    try:
        if config.jobs == 1:
            for task in tasks:
                records.append(one(task))
        else:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                for rec in pool.map(one, tasks):
                    records.append(rec)
    finally:
        _write_runs(out / "runs.csv", records)

    summaries = {}
    by_policy: dict[str, list[RunRecord]] = {}
    for r in records:
        by_policy.setdefault(r.policy, []).append(r)
    for name, recs in by_policy.items():
        weights = np.array([model.prior[model.state_index(r.true_state), model.mode_index(r.true_mode)] for r in recs])
        rewards = np.array([r.final_reward for r in recs])
        latencies = [s.wall_time for r in recs for s in r.trace]
        summaries[name] = PolicySummary(
            policy=name,
            runs=len(recs),
            f_avg=float(weights @ rewards / weights.sum()),
            latency_mean=statistics.fmean(latencies) if latencies else 0.0,
            latency_median=statistics.median(latencies) if latencies else 0.0,
            latency_max=max(latencies, default=0.0),
            histogram=_histogram([r.mean_latency for r in recs]),
            cdf=indistinguishable_cdf(recs, len(model.states)),
        )

    parity = _parity(by_policy)
    _write_csv(
        out / "parity.csv",
        ["true_state", "true_mode", "greedy_policy", "greedy_reward", "brute_reward", "equal"],
        [[p["true_state"], p["true_mode"], p["greedy_policy"], p["greedy_reward"], p["brute_reward"], int(p["equal"])] for p in parity],
    )
    _write_csv(
        out / "latency_hist.csv",
        ["policy", "bin_lo", "bin_hi", "count"],
        [[s.policy, lo, hi, c] for s in summaries.values() for lo, hi, c in s.histogram],
    )
    _write_csv(
        out / "indistinguishable_cdf.csv",
        ["policy", "mode", "size", "fraction"],
        [[s.policy, mode, n, frac] for s in summaries.values() for mode, curve in s.cdf.items() for n, frac in curve],
    )

    factors = None
    if config.factor_budget:
        from activediag.guarantees import factor_report

        report = factor_report(model, config.factor_budget, cap=config.cap)
        (out / "factors.json").write_text(json.dumps(report.to_dict(), indent=2))
        factors = "factors.json"

    equal = [p["equal"] for p in parity]
    summary = ExperimentSummary(
        model=repr(model),
        budget=config.budget,
        pairs=len(pairs),
        policies=summaries,
        parity=parity,
        parity_fraction=(sum(equal) / len(equal)) if equal else None,
        factors=factors,
    )
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2))
    write_gnuplot(out / "plots.gp")
    return summary


def _write_runs(path: Path, records: list[RunRecord]):
    rows = []
    for r in records:
        for i, s in enumerate(r.trace, 1):
            rows.append([r.policy, r.true_state, r.true_mode, i, s.action, s.outcome, s.reward_after, s.wall_time])
    _write_csv(path, ["policy", "true_state", "true_mode", "step", "action", "outcome", "reward_after", "wall_time"], rows)


def _parity(by_policy: dict[str, list[RunRecord]]) -> list[dict]:
    brute = by_policy.get("brute-force")
    if not brute:
        return []
    brute_by_pair = {(r.true_state, r.true_mode): r.final_reward for r in brute}
    rows = []
    for name, recs in by_policy.items():
        if not name.startswith("greedy"):
            continue
        for r in recs:
            b = brute_by_pair.get((r.true_state, r.true_mode))
            if b is None:
                continue
            rows.append({
                "true_state": r.true_state,
                "true_mode": r.true_mode,
                "greedy_policy": name,
                "greedy_reward": r.final_reward,
                "brute_reward": b,
                "equal": abs(r.final_reward - b) <= PARITY_ATOL,
            })
    return rows


def write_gnuplot(path: Path):
    path.write_text(
        "# gnuplot -p plots.gp  (run inside the output directory)\n"
        "set datafile separator ','\n"
        "set multiplot layout 1,2\n"
        "set title 'mean selection latency per true pair'\n"
        "set xlabel 'seconds'; set ylabel 'true pairs'\n"
        "plot 'latency_hist.csv' every ::1 using (($2+$3)/2):4 with boxes title 'all policies'\n"
        "set title 'largest indistinguishable set'\n"
        "set xlabel 'size'; set ylabel 'fraction of true states'\n"
        "plot 'indistinguishable_cdf.csv' every ::1 using 3:($2 eq 'all' ? $4 : 1/0) with steps title 'all modes'\n"
        "unset multiplot\n"
    )


# -- timing -----------------------------------------------------------------


@dataclass
class TimingScan:
    rows: list[tuple[int, float, int]]
    slope: float | None = None
    intercept: float | None = None
    r_squared: float | None = None


def linear_fit(xs, ys) -> tuple[float, float, float]:
    """Least-squares line; returns ``(slope, intercept, r_squared)``."""
    x, y = np.asarray(xs, float), np.asarray(ys, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def timing_scan(
    circuit,
    mode_counts=(1, 3, 9, 27),
    *,
    budget: int = 6,
    sample: int = 16,
    seed: int = 0,
    repeats: int = 3,
    p_flip: float = 0.2,
    p_stuck_one: float = 0.4,
    policy: str = "greedy-partition",
    out=None,
) -> TimingScan:
    """Mean selection latency as the number of fault-prone sensors grows.

    Each fault-prone sensor carries flip and stuck-at-1 faults, so ``|Q|`` is
    a power of 3; sensors are made fault-prone in declaration order.  The
    same sampled true states (with all sensors healthy) are used for every
    ``|Q|``.  Runs single threaded.
    """
    circ = circuit if isinstance(circuit, CircuitModel) else load_circuit(circuit)
    per_sensor = 1 + (p_flip is not None) + (p_stuck_one is not None)
    rng = np.random.default_rng(seed)
    n_states = 2 ** len(circ.health_unknown)
    states = sorted(rng.choice(n_states, size=min(sample, n_states), replace=False).tolist())
    rows = []
    for n in mode_counts:
        m = round(math.log(n, per_sensor)) if n > 1 else 0
        if per_sensor**m != n or m > len(circ.sensors):
            raise ModelError(f"|Q|={n} is not reachable with {per_sensor} kinds per sensor on {len(circ.sensors)} sensors")
        c = with_fault_prone(circ, circ.sensor_ids[:m])
        model = compile_model(c, c.fault_spec(p_flip, p_stuck_one))
        healthy = model.modes[0]
        pol = make_policy(policy, budget, seed)
        latencies = []
        for x in states:
            rec = run_policy(model, pol, (x, healthy), budget, timing_repeats=repeats)
            latencies.extend(s.wall_time for s in rec.trace)
        rows.append((n, statistics.fmean(latencies), len(latencies)))
    scan = TimingScan(rows)
    if len(rows) > 1:
        scan.slope, scan.intercept, scan.r_squared = linear_fit([r[0] for r in rows], [r[1] for r in rows])
    if out is not None:
        path = Path(out)
        _write_csv(path, ["n_modes", "mean_latency", "selections"], rows)
        if scan.r_squared is not None:
            with path.open("a") as fh:
                fh.write(f"# fit slope={scan.slope!r} intercept={scan.intercept!r} r2={scan.r_squared!r}\n")
    return scan
