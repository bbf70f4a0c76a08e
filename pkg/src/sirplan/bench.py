"""Experiment grid, benchmark runner and report emission."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .formats import sample_trajectory, trajectory_csv
from .planning import (
    YEAR_DAYS,
    FixedStep,
    Plan,
    PlanningInstance,
    TemporalCheckConfig,
    Variant,
    VariableStep,
    reverify_with_oracle,
)
from .sir import EpidemicParams
from .solver import (
    SolveReport,
    Status,
    as_variable_step,
    solve_problem1,
    solve_problem1_variable_step,
    solve_problem2,
)

log = logging.getLogger(__name__)

POPULATION = 5000.0
RATE_TRIPLES = ((0.2, 0.1, 0.15), (0.25, 0.15, 0.2))
CAPS = (200.0, 250.0)
INITIAL_INFECTED = (30.0, 40.0, 50.0, 60.0)
DELTAS = (14.0, 21.0, 28.0)
P_CAP = 0.2
Q_FLOOR = 0.8
VARIABLE_POLICY = VariableStep(7.0, 28.0, 168.0)
VARIABLE_HORIZON = 8

#: Written in place of a runtime or quality value for unsolved instances.
SENTINEL = "NA"

_PROBLEM_LABEL = {Variant.PROBLEM1: "1", Variant.PROBLEM2: "2", Variant.PROBLEM1_VARIABLE: "1v"}


@dataclass(frozen=True)
class GridEntry:
    """One benchmark instance.

    Variable-step entries are companions of a fixed-step Problem 1 instance;
    ``paired_delta`` names that instance's step duration.
    """

    instance_id: str
    instance: PlanningInstance
    paired_delta: float | None = None


def _fmt(x: float) -> str:
    return f"{x:g}"


def _instance_id(problem: str, rates, cap, infected, delta) -> str:
    b_no, b_lock, c = rates
    return (f"p{problem}-b{_fmt(b_no)}-{_fmt(b_lock)}-c{_fmt(c)}"
            f"-K{_fmt(cap)}-I{_fmt(infected)}-d{_fmt(delta)}")


def generate_grid(include_variable: bool = True) -> list[GridEntry]:
    """The 96 fixed-step instances (48 per problem) plus 48 variable-step companions."""
    entries: list[GridEntry] = []
    for problem in (Variant.PROBLEM1, Variant.PROBLEM2):
        for rates in RATE_TRIPLES:
            params = EpidemicParams(POPULATION, *rates)
            for cap in CAPS:
                for delta in DELTAS:
                    for infected in INITIAL_INFECTED:
                        goal = ({"removed_cap_fraction": P_CAP} if problem is Variant.PROBLEM1
                                else {"removed_floor_fraction": Q_FLOOR})
                        inst = PlanningInstance(params, cap, infected, problem, FixedStep(delta), **goal)
                        label = _PROBLEM_LABEL[problem]
                        entries.append(GridEntry(_instance_id(label, rates, cap, infected, delta), inst))
    if include_variable:
        for entry in [e for e in entries if e.instance.variant is Variant.PROBLEM1]:
            base = entry.instance
            inst = PlanningInstance(base.params, base.infection_cap, base.initial_infected,
                                    Variant.PROBLEM1_VARIABLE, VARIABLE_POLICY,
                                    horizon=VARIABLE_HORIZON, removed_cap_fraction=P_CAP)
            delta = base.step_policy.delta
            p = base.params
            rid = _instance_id("1v", (p.rate_no_lockdown, p.rate_lockdown, p.removal_rate),
                               base.infection_cap, base.initial_infected, delta)
            entries.append(GridEntry(rid, inst, paired_delta=delta))
    return entries


@dataclass
class BenchRecord:
    instance_id: str
    variant: str
    N: float
    b_no_lockdown: float
    b_lockdown: float
    c: float
    K: float
    I: float
    p: float | None
    q: float | None
    delta: float | None
    delta_lb: float | None
    delta_ub: float | None
    F: float | None
    status: str
    objective: float | None
    total_action_duration_days: float | None
    wall_time_s: float
    nodes: int
    horizon: int | None = None
    reverified: bool | None = None
    actions: list[int] | None = field(default=None)
    durations: list[float] | None = field(default=None)

    @property
    def solved(self) -> bool:
        return self.status in (Status.OPTIMAL.value, Status.FEASIBLE.value)

    def to_instance(self) -> PlanningInstance:
        params = EpidemicParams(self.N, self.b_no_lockdown, self.b_lockdown, self.c)
        variant = Variant(self.variant)
        if variant is Variant.PROBLEM1_VARIABLE:
            return PlanningInstance(params, self.K, self.I, variant,
                                    VariableStep(self.delta_lb, self.delta_ub, self.F),
                                    horizon=VARIABLE_HORIZON if self.horizon is None else self.horizon,
                                    removed_cap_fraction=self.p)
        return PlanningInstance(params, self.K, self.I, variant, FixedStep(self.delta),
                                removed_cap_fraction=self.p, removed_floor_fraction=self.q)

    def to_plan(self) -> Plan | None:
        if self.actions is None:
            return None
        return Plan.from_actions(self.to_instance(), self.actions, self.durations)


def _record(entry: GridEntry, report: SolveReport, reverified: bool | None) -> BenchRecord:
    inst = entry.instance
    p = inst.params
    policy = inst.step_policy
    fixed = isinstance(policy, FixedStep)
    plan = report.plan
    return BenchRecord(
        instance_id=entry.instance_id,
        variant=inst.variant.value,
        N=p.population,
        b_no_lockdown=p.rate_no_lockdown,
        b_lockdown=p.rate_lockdown,
        c=p.removal_rate,
        K=inst.infection_cap,
        I=inst.initial_infected,
        p=inst.removed_cap_fraction,
        q=inst.removed_floor_fraction,
        delta=policy.delta if fixed else entry.paired_delta,
        delta_lb=None if fixed else policy.lower,
        delta_ub=None if fixed else policy.upper,
        F=None if fixed else policy.total,
        status=report.status.value,
        objective=report.objective,
        total_action_duration_days=None if plan is None else plan.total_action_duration,
        wall_time_s=report.wall_time,
        nodes=report.nodes_expanded,
        horizon=report.horizon,
        reverified=reverified,
        actions=None if plan is None else list(plan.actions),
        durations=None if plan is None else list(plan.durations),
    )


def _oracle_ok(entry: GridEntry, report: SolveReport, cfg: TemporalCheckConfig) -> bool | None:
    if report.plan is None:
        return None
    span = YEAR_DAYS if entry.instance.variant is Variant.PROBLEM2 else None
    return reverify_with_oracle(report.plan, entry.instance, increment=cfg.increment,
                                total_span=span).passed


def _solve_entry(entry: GridEntry, budget: float, cfg: TemporalCheckConfig,
                 warm_starts=()) -> BenchRecord:
    inst = entry.instance
    try:
        if inst.variant is Variant.PROBLEM1:
            report = solve_problem1(inst, budget, cfg)
        elif inst.variant is Variant.PROBLEM2:
            report = solve_problem2(inst, budget, cfg)
        else:
            report = solve_problem1_variable_step(inst, budget, cfg, warm_starts=warm_starts)
        return _record(entry, report, _oracle_ok(entry, report, cfg))
    except Exception as exc:  # one failing instance never aborts the run
        log.exception("instance %s failed", entry.instance_id)
        policy = inst.step_policy
        fixed = isinstance(policy, FixedStep)
        p = inst.params
        return BenchRecord(entry.instance_id, inst.variant.value, p.population, p.rate_no_lockdown,
                           p.rate_lockdown, p.removal_rate, inst.infection_cap, inst.initial_infected,
                           inst.removed_cap_fraction, inst.removed_floor_fraction,
                           policy.delta if fixed else entry.paired_delta,
                           None if fixed else policy.lower, None if fixed else policy.upper,
                           None if fixed else policy.total, f"Error: {type(exc).__name__}",
                           None, None, 0.0, 0)


def _run_many(jobs: list[tuple], workers: int) -> list[BenchRecord]:
    if workers <= 1 or len(jobs) <= 1:
        return [_solve_entry(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_solve_entry, *job) for job in jobs]
        return [f.result() for f in futures]


def _companion_key(inst: PlanningInstance):
    return (inst.params, inst.infection_cap, inst.initial_infected)


def run_benchmark(grid: Sequence[GridEntry], per_instance_budget: float = 60.0, workers: int = 1,
                  cfg: TemporalCheckConfig = TemporalCheckConfig()) -> list[BenchRecord]:
    """Solve every grid entry and re-verify each returned plan with the RK4 oracle.

    Fixed-step instances run first. Variable-step companions sharing the same
    epidemic (they differ only in ``paired_delta``) are solved once, seeded with
    every fixed-step Problem 1 plan for that epidemic that can be re-expressed
    in the variable-step space. Records come back in grid order.
    """
    if per_instance_budget <= 0:
        raise ValueError("per-instance budget must be positive")
    fixed = [e for e in grid if e.instance.variant is not Variant.PROBLEM1_VARIABLE]
    variable = [e for e in grid if e.instance.variant is Variant.PROBLEM1_VARIABLE]
    records = dict(zip((e.instance_id for e in fixed),
                       _run_many([(e, per_instance_budget, cfg) for e in fixed], workers)))

    warm: dict[tuple, list] = {}
    for e in fixed:
        rec = records[e.instance_id]
        if e.instance.variant is Variant.PROBLEM1 and rec.actions is not None:
            warm.setdefault(_companion_key(e.instance), []).append((rec.actions, rec.durations))
    unique: dict[tuple, GridEntry] = {}
    for e in variable:
        unique.setdefault((_companion_key(e.instance), e.instance), e)
    jobs = []
    for (key, inst), e in unique.items():
        starts = []
        for acts, durs in warm.get(key, []):
            converted = as_variable_step(acts, durs, inst.step_policy, inst.horizon)
            if converted is not None:
                starts.append(converted)
        jobs.append((e, per_instance_budget, cfg, starts))
    solved = dict(zip(unique, _run_many(jobs, workers)))
    for e in variable:
        rec = solved[(_companion_key(e.instance), e.instance)]
        records[e.instance_id] = _record_for(e, rec)
    return [records[e.instance_id] for e in grid]


def _record_for(entry: GridEntry, shared: BenchRecord) -> BenchRecord:
    rec = BenchRecord(**asdict(shared))
    rec.instance_id = entry.instance_id
    rec.delta = entry.paired_delta
    return rec


# --- reports ----------------------------------------------------------------

def _csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return SENTINEL if x is None else f"{x:.6f}"


def coverage_rows(records: Sequence[BenchRecord]) -> list[list]:
    """Solved counts per (problem, rate triple, K) for the fixed-step records."""
    groups: dict[tuple, list[int]] = {}
    for r in records:
        if r.variant == Variant.PROBLEM1_VARIABLE.value:
            continue
        key = (_PROBLEM_LABEL[Variant(r.variant)], r.b_no_lockdown, r.b_lockdown, r.c, r.K)
        counts = groups.setdefault(key, [0, 0])
        counts[0] += r.solved
        counts[1] += 1
    rows = [["problem", "b_no_lockdown", "b_lockdown", "c", "K", "solved", "total", "coverage"]]
    solved_all = total_all = 0
    for key in sorted(groups):
        solved, total = groups[key]
        problem, b_no, b_lock, c, cap = key
        rows.append([problem, _fmt(b_no), _fmt(b_lock), _fmt(c), _fmt(cap), solved, total, f"{solved}/{total}"])
        solved_all += solved
        total_all += total
    rows.append(["Total", "", "", "", "", solved_all, total_all, f"{solved_all}/{total_all}"])
    return rows


def _matrix_rows(records: Sequence[BenchRecord], value_name: str, value) -> list[list]:
    rows = [["problem", "b_no_lockdown", "b_lockdown", "c", "K", "delta", "I", value_name]]
    keyed = []
    for r in records:
        key = (_PROBLEM_LABEL[Variant(r.variant)], r.b_no_lockdown, r.b_lockdown, r.c, r.K, r.delta, r.I)
        keyed.append((key, value(r) if r.solved else None))
    for key, v in sorted(keyed, key=lambda kv: kv[0]):
        problem, b_no, b_lock, c, cap, delta, infected = key
        rows.append([problem, _fmt(b_no), _fmt(b_lock), _fmt(c), _fmt(cap), _fmt(delta),
                     _fmt(infected), _num(v)])
    return rows


def runtime_rows(records: Sequence[BenchRecord]) -> list[list]:
    return _matrix_rows(records, "wall_time_s", lambda r: r.wall_time_s)


def quality_rows(records: Sequence[BenchRecord]) -> list[list]:
    return _matrix_rows(records, "total_action_duration_days", lambda r: r.total_action_duration_days)


def emit_reports(records: Sequence[BenchRecord], out_dir: str | Path, resolution: float = 0.5) -> Path:
    """Write coverage, runtime, quality, per-instance trajectories and raw records.

    Everything except ``runtime.csv`` and the ``wall_time_s`` field of
    ``records.jsonl`` is a deterministic function of the solver results.
    """
    out = Path(out_dir)
    (out / "traj").mkdir(parents=True, exist_ok=True)
    (out / "coverage.csv").write_text(_csv(coverage_rows(records)), encoding="utf-8")
    (out / "runtime.csv").write_text(_csv(runtime_rows(records)), encoding="utf-8")
    (out / "quality.csv").write_text(_csv(quality_rows(records)), encoding="utf-8")
    with open(out / "records.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), sort_keys=False) + "\n")
    for r in records:
        plan = r.to_plan()
        if plan is None:
            continue
        rows = sample_trajectory(plan, r.to_instance(), resolution)
        (out / "traj" / f"{r.instance_id}.csv").write_text(trajectory_csv(rows), encoding="utf-8")
    return out


def paired_comparison(records: Sequence[BenchRecord]) -> list[tuple[str, float, float]]:
    """``(fixed instance id, fixed days, variable days)`` for pairs solved under both policies."""
    fixed = {}
    for r in records:
        if r.variant == Variant.PROBLEM1.value and r.solved:
            fixed[(r.b_no_lockdown, r.b_lockdown, r.c, r.K, r.I, r.delta)] = r
    pairs = []
    for r in records:
        if r.variant != Variant.PROBLEM1_VARIABLE.value or not r.solved:
            continue
        f = fixed.get((r.b_no_lockdown, r.b_lockdown, r.c, r.K, r.I, r.delta))
        if f is not None:
            pairs.append((f.instance_id, f.total_action_duration_days, r.total_action_duration_days))
    return pairs
