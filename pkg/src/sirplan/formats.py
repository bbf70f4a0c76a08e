"""Instance, plan and trajectory file formats.

Instance files are flat ``key = value`` text, one pair per line, with ``#``
comments::

    variant = Problem1
    N = 5000
    b_no_lockdown = 0.2
    b_lockdown = 0.1
    c = 0.15
    K = 250
    I = 50
    p = 0.2
    delta = 14

Plans are JSON documents; trajectories are CSV with columns
``t_days,s1,s2,s3,action``.
"""

from __future__ import annotations

import bisect
import csv
import io
import itertools
import json
import math
from pathlib import Path
from typing import Any, Iterable

from .errors import InvalidInstance, InvalidParams, NearSingularRates, ParseError
from .planning import (
    FixedStep,
    Plan,
    PlanningInstance,
    Variant,
    VariableStep,
)
from .sir import EpidemicParams, PandemicState, within_step_state

INSTANCE_KEYS = (
    "variant", "N", "b_no_lockdown", "b_lockdown", "c", "K", "I", "p", "q",
    "delta", "delta_lb", "delta_ub", "F", "horizon", "horizon_max_weeks",
)
_INT_KEYS = {"horizon"}
_REQUIRED = ("variant", "N", "b_no_lockdown", "b_lockdown", "c", "K", "I")

TRAJECTORY_COLUMNS = ("t_days", "s1", "s2", "s3", "action")


def parse_instance(text: str) -> PlanningInstance:
    """Parse an instance document.

    Raises:
        ParseError: on syntax errors, unknown or duplicate keys, bad values, or
            an inconsistent combination of keys.
    """
    values: dict[str, Any] = {}
    where: dict[str, tuple[int, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ParseError("expected 'key = value'", lineno, col)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        value_col = len(key_part) + 2 + len(value_part) - len(value_part.lstrip())
        if key not in INSTANCE_KEYS:
            raise ParseError(f"unknown key {key!r}", lineno, key_col)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno, key_col)
        value = value_part.strip()
        if not value:
            raise ParseError(f"missing value for {key!r}", lineno, value_col)
        if key == "variant":
            try:
                values[key] = Variant(value)
            except ValueError:
                choices = ", ".join(v.value for v in Variant)
                raise ParseError(f"variant must be one of {choices}", lineno, value_col) from None
        elif key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ParseError(f"{key} must be an integer, got {value!r}", lineno, value_col) from None
        else:
            try:
                number = float(value)
            except ValueError:
                raise ParseError(f"{key} must be a number, got {value!r}", lineno, value_col) from None
            if not math.isfinite(number):
                raise ParseError(f"{key} must be finite", lineno, value_col)
            values[key] = number
        where[key] = (lineno, key_col)
    return _build_instance(values, where)


def _build_instance(values: dict[str, Any], where: dict[str, tuple[int, int]]) -> PlanningInstance:
    for key in _REQUIRED:
        if key not in values:
            raise ParseError(f"missing required key {key!r}")

    def reject(key: str, why: str):
        raise ParseError(f"key {key!r} {why}", *where[key])

    variant = values["variant"]
    variable = [k for k in ("delta_lb", "delta_ub", "F") if k in values]
    if variant is Variant.PROBLEM1_VARIABLE:
        if "delta" in values:
            reject("delta", "is not allowed for a variable-step instance")
        if len(variable) != 3:
            raise ParseError("a variable-step instance needs delta_lb, delta_ub and F")
        if "horizon" not in values:
            raise ParseError("a variable-step instance needs horizon")
    else:
        if variable:
            reject(variable[0], f"is only allowed for {Variant.PROBLEM1_VARIABLE.value}")
        if "delta" not in values:
            raise ParseError("a fixed-step instance needs delta")
    if variant is Variant.PROBLEM2:
        if "horizon" in values:
            reject("horizon", "is not allowed for Problem2 (use horizon_max_weeks)")
        if "q" not in values:
            raise ParseError("Problem2 needs q")
    else:
        if "horizon_max_weeks" in values:
            reject("horizon_max_weeks", "is only allowed for Problem2")
        if "p" not in values:
            raise ParseError(f"{variant.value} needs p")

    try:
        params = EpidemicParams(values["N"], values["b_no_lockdown"], values["b_lockdown"], values["c"])
        if variant is Variant.PROBLEM1_VARIABLE:
            policy = VariableStep(values["delta_lb"], values["delta_ub"], values["F"])
        else:
            policy = FixedStep(values["delta"])
        extra = {}
        if "horizon_max_weeks" in values:
            extra["horizon_max_weeks"] = values["horizon_max_weeks"]
        return PlanningInstance(
            params=params,
            infection_cap=values["K"],
            initial_infected=values["I"],
            variant=variant,
            step_policy=policy,
            horizon=values.get("horizon"),
            removed_cap_fraction=values.get("p"),
            removed_floor_fraction=values.get("q"),
            **extra,
        )
    except (InvalidParams, NearSingularRates, InvalidInstance) as exc:
        raise ParseError(str(exc)) from exc


def read_instance(path: str | Path) -> PlanningInstance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def format_instance(instance: PlanningInstance) -> str:
    p = instance.params
    lines = [
        f"variant = {instance.variant.value}",
        f"N = {p.population!r}",
        f"b_no_lockdown = {p.rate_no_lockdown!r}",
        f"b_lockdown = {p.rate_lockdown!r}",
        f"c = {p.removal_rate!r}",
        f"K = {instance.infection_cap!r}",
        f"I = {instance.initial_infected!r}",
    ]
    if instance.removed_cap_fraction is not None:
        lines.append(f"p = {instance.removed_cap_fraction!r}")
    if instance.removed_floor_fraction is not None:
        lines.append(f"q = {instance.removed_floor_fraction!r}")
    policy = instance.step_policy
    if isinstance(policy, FixedStep):
        lines.append(f"delta = {policy.delta!r}")
    else:
        lines += [f"delta_lb = {policy.lower!r}", f"delta_ub = {policy.upper!r}", f"F = {policy.total!r}"]
    if instance.variant is Variant.PROBLEM2:
        lines.append(f"horizon_max_weeks = {instance.horizon_max_weeks!r}")
    else:
        lines.append(f"horizon = {instance.horizon}")
    return "\n".join(lines) + "\n"


def parse_schedule(literal: str, expected_length: int | None = None) -> tuple[int, ...]:
    """Parse an action schedule such as ``"001100"``."""
    literal = literal.strip()
    for col, ch in enumerate(literal, start=1):
        if ch not in "01":
            raise ParseError(f"schedule characters must be 0 or 1, got {ch!r}", 1, col)
    if expected_length is not None and len(literal) != expected_length:
        raise ParseError(f"schedule has {len(literal)} steps, horizon is {expected_length}")
    return tuple(int(ch) for ch in literal)


# --- plans ------------------------------------------------------------------

def plan_document(plan: Plan | None, report: dict[str, Any] | None = None) -> dict[str, Any]:
    """JSON-ready plan: report metadata plus one entry per step.

    Each step lists the state at the *end* of the step; the starting state is
    stored under ``initial``.
    """
    doc: dict[str, Any] = dict(report or {})
    if plan is None:
        doc["steps"] = None
        return doc
    doc["horizon"] = plan.horizon
    doc["initial"] = dict(zip(("s1", "s2", "s3"), plan.trajectory[0]))
    doc["steps"] = [
        {"index": t, "action": a, "duration_days": d, "s1": s.s1, "s2": s.s2, "s3": s.s3}
        for t, (a, d, s) in enumerate(zip(plan.actions, plan.durations, plan.trajectory[1:]))
    ]
    return doc


def dump_plan(plan: Plan | None, report: dict[str, Any] | None = None) -> str:
    return json.dumps(plan_document(plan, report), indent=2) + "\n"


def parse_plan(text: str) -> Plan:
    """Rebuild a :class:`Plan` exactly as stored (it is re-checked on verification)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("plan document must be a JSON object")
    steps = doc.get("steps")
    if steps is None:
        raise ParseError("plan document has no steps (the solve found no plan)")
    try:
        initial = PandemicState(*(float(doc["initial"][k]) for k in ("s1", "s2", "s3")))
        actions, durations, states = [], [], [initial]
        for i, step in enumerate(steps):
            if step["index"] != i:
                raise ParseError(f"step {i} has index {step['index']}")
            actions.append(int(step["action"]))
            durations.append(float(step["duration_days"]))
            states.append(PandemicState(float(step["s1"]), float(step["s2"]), float(step["s3"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed plan document: {exc!r}") from None
    return Plan(tuple(actions), tuple(durations), tuple(states))


def read_plan(path: str | Path) -> Plan:
    return parse_plan(Path(path).read_text(encoding="utf-8"))


# --- trajectories -----------------------------------------------------------

def sample_trajectory(plan: Plan, instance: PlanningInstance,
                      resolution: float = 0.5) -> list[tuple[float, float, float, float, int]]:
    """``(t, s1, s2, s3, action)`` rows at every multiple of ``resolution`` and at the end.

    ``action`` is the one in force from ``t`` onward (the last step's action at
    the final instant; 0 when the plan has no steps).
    """
    if not plan.actions:
        s = plan.trajectory[0]
        return [(0.0, s.s1, s.s2, s.s3, 0)]
    starts = list(itertools.accumulate(plan.durations, initial=0.0))
    total = starts[-1]
    times = [k * resolution for k in range(int(math.floor(total / resolution + 1e-9)) + 1)]
    if total - times[-1] > 1e-9:
        times.append(total)
    rows = []
    last = plan.horizon - 1
    for t in times:
        i = min(bisect.bisect_right(starts, t) - 1, last)
        d = plan.durations[i]
        tau = min(max(t - starts[i], 0.0), d)
        s = within_step_state(plan.trajectory[i], instance.params, plan.actions[i], d, tau)
        rows.append((t, s.s1, s.s2, s.s3, plan.actions[i]))
    return rows


def trajectory_csv(rows: Iterable[tuple[float, float, float, float, int]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for t, s1, s2, s3, a in rows:
        writer.writerow((f"{t:.6f}", f"{s1:.9f}", f"{s2:.9f}", f"{s3:.9f}", a))
    return buf.getvalue()
