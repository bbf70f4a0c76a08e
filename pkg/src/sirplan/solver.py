"""Search engines for minimal-lockdown plans.

All fixed-step problems are solved by best-first branch-and-bound over the
binary action tree: nodes are popped by fewest lockdowns, deepest first, and a
child is pruned when its step breaks the infection cap, when the goal can no
longer be met, or when it cannot beat the incumbent.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import math
import random
import time
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import InvalidInstance, OracleTooLarge
from .planning import (
    YEAR_DAYS,
    FeasibilityVerdict,
    Plan,
    PlanningInstance,
    TemporalCheckConfig,
    Variant,
    VariableStep,
    guaranteed_gamma,
    verify_goal,
    verify_remainder_of_year,
    verify_temporal,
)
from .sir import advance, step_peak

#: Node expansions between wall-clock checks.
CLOCK_CHECK_EVERY = 1024


class Status(str, Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    TIMEOUT = "Timeout"


@dataclass
class SolveReport:
    status: Status
    plan: Plan | None
    objective: float | None
    nodes_expanded: int
    wall_time: float
    verification: FeasibilityVerdict
    horizon: int | None = None

    @property
    def solved(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.FEASIBLE)


class _Clock:
    def __init__(self, budget: float | None):
        self.start = time.perf_counter()
        self.deadline = None if budget is None else self.start + budget

    def expired(self) -> bool:
        return self.deadline is not None and time.perf_counter() >= self.deadline

    def remaining(self) -> float | None:
        if self.deadline is None:
            return None
        return max(0.0, self.deadline - time.perf_counter())

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


class _Model:
    """Raw-float view of an instance shared by the fixed-step searches."""

    def __init__(self, instance: PlanningInstance):
        p = instance.params
        self.n = p.population
        self.c = p.removal_rate
        self.rates = (p.rate_no_lockdown, p.rate_lockdown)
        self.cap = instance.infection_cap
        self.threshold = instance.goal_threshold
        self.floor_goal = instance.variant is Variant.PROBLEM2

    def step(self, s1: float, s2: float, action: int, duration: float, s3: float | None = None):
        """Next state, or ``None`` when the infected peak within the step exceeds the cap."""
        b = self.rates[action]
        if step_peak(s1, s2, self.n, b, self.c, duration)[1] > self.cap:
            return None
        return advance(s1, s2, self.n, b, self.c, duration, s3)

    def goal_reachable(self, s2: float, s3: float, time_left: float) -> bool:
        """Necessary condition for meeting the goal after ``time_left`` more days.

        Removals happen at rate ``c * s2``. With the cap enforced ``s2 <= K``,
        and since ``s2' >= -c s2`` always, ``s2(t) >= s2 exp(-c t)``; these bound
        the final removed count from above and below.
        """
        if self.floor_goal:
            return s3 + self.c * self.cap * time_left >= self.threshold
        if s3 > self.threshold:
            return False
        return s3 - s2 * math.expm1(-self.c * time_left) <= self.threshold

    def goal_met(self, s3: float) -> bool:
        return s3 >= self.threshold if self.floor_goal else s3 <= self.threshold


def _greedy(model: _Model, initial, horizon: int, delta: float, prefer: int, leaf_ok=None):
    """Take ``prefer`` unless it breaks the cap or goal bound, else the other action."""
    s1, s2, s3 = initial
    actions = []
    for t in range(horizon):
        left = (horizon - t - 1) * delta
        for a in (prefer, 1 - prefer):
            nxt = model.step(s1, s2, a, delta, s3)
            if nxt is not None and model.goal_reachable(nxt[1], nxt[2], left):
                break
        else:
            return None
        actions.append(a)
        s1, s2, s3 = nxt
    if not model.goal_met(s3) or (leaf_ok is not None and not leaf_ok(s1, s2)):
        return None
    return tuple(actions)


def _branch_and_bound(model: _Model, initial, horizon: int, delta: float, clock: _Clock,
                      incumbent: tuple[int, ...] | None = None, dominance: bool = False,
                      leaf_ok=None):
    """Best-first search for the fewest lockdowns over ``horizon`` steps.

    ``leaf_ok(s1, s2)``, when given, is an extra acceptance test on final states.

    Returns:
        ``(best actions or None, nodes expanded, proven)`` where ``proven`` is
        False when the clock ran out.
    """
    s1, s2, s3 = initial
    if s2 > model.cap or not model.goal_reachable(s2, s3, horizon * delta):
        return incumbent, 0, True
    if horizon == 0:
        ok = model.goal_met(s3) and (leaf_ok is None or leaf_ok(s1, s2))
        return (() if ok else incumbent), 0, True
    bound = math.inf if incumbent is None else sum(incumbent)
    best = incumbent
    counter = itertools.count()
    # (lockdowns, -depth, tie, depth, s1, s2, s3, prefix)
    heap = [(0, 0, next(counter), 0, s1, s2, s3, ())]
    seen: dict[tuple[int, int, int], int] = {}
    grid = 0.01 * model.n
    expanded = 0
    while heap:
        used, _, _, depth, s1, s2, s3, prefix = heapq.heappop(heap)
        if used >= bound:
            break
        if depth == horizon:
            return prefix, expanded, True
        expanded += 1
        if expanded % CLOCK_CHECK_EVERY == 0 and clock.expired():
            return best, expanded, False
        left = (horizon - depth - 1) * delta
        for a in (0, 1):
            child_used = used + a
            if child_used >= bound:
                continue
            nxt = model.step(s1, s2, a, delta, s3)
            if nxt is None:
                continue
            n1, n2, n3 = nxt
            if not model.goal_reachable(n2, n3, left):
                continue
            if depth + 1 == horizon and not (
                    model.goal_met(n3) and (leaf_ok is None or leaf_ok(n1, n2))):
                continue
            if dominance:
                key = (depth + 1, round(n1 / grid), round(n2 / grid))
                if seen.get(key, math.inf) <= child_used:
                    continue
                seen[key] = child_used
            heapq.heappush(heap, (child_used, -(depth + 1), next(counter), depth + 1,
                                  n1, n2, n3, prefix + (a,)))
    return best, expanded, True


def _empty_verdict(instance: PlanningInstance, cfg: TemporalCheckConfig) -> FeasibilityVerdict:
    return FeasibilityVerdict(False, None, guaranteed_gamma(instance.infection_cap, instance.params,
                                                            cfg.increment))


def _report(instance, plan, status, nodes, clock, cfg, objective=None) -> SolveReport:
    if plan is None:
        return SolveReport(status, None, None, nodes, clock.elapsed(), _empty_verdict(instance, cfg))
    verdict = verify_temporal(plan, instance, cfg)
    if status in (Status.OPTIMAL, Status.FEASIBLE) and not (verdict.feasible and verify_goal(plan, instance)):
        raise AssertionError(f"solver produced a plan failing verification: {verdict}")
    if objective is None:
        objective = float(plan.lockdowns)
    return SolveReport(status, plan, objective, nodes, clock.elapsed(), verdict, plan.horizon)


def solve_problem1(instance: PlanningInstance, budget: float | None = None,
                   cfg: TemporalCheckConfig = TemporalCheckConfig(),
                   dominance: bool = False) -> SolveReport:
    """Fewest lockdowns keeping ``s2 <= K`` throughout and ending with ``s3 <= p N``.

    Args:
        budget: Wall-clock limit in seconds, or ``None`` for no limit.
        dominance: Skip nodes whose state rounds (to 1% of N) onto one already
            reached with no more lockdowns. Faster, but loses the optimality proof.
    """
    if instance.variant is not Variant.PROBLEM1:
        raise InvalidInstance(f"solve_problem1 got a {instance.variant.value} instance")
    clock = _Clock(budget)
    model = _Model(instance)
    delta = instance.step_policy.delta
    h = instance.horizon
    init = tuple(instance.initial_state)
    incumbent = None
    for prefer in (0, 1):
        found = _greedy(model, init, h, delta, prefer)
        if found is not None and (incumbent is None or sum(found) < sum(incumbent)):
            incumbent = found
    best, nodes, proven = _branch_and_bound(model, init, h, delta, clock, incumbent, dominance)
    plan = None if best is None else Plan.from_actions(instance, best)
    if not proven:
        status = Status.TIMEOUT
    elif plan is None:
        status = Status.INFEASIBLE
    else:
        status = Status.FEASIBLE if dominance else Status.OPTIMAL
    return _report(instance, plan, status, nodes, clock, cfg)


def solve_problem2(instance: PlanningInstance, budget: float | None = None,
                   cfg: TemporalCheckConfig = TemporalCheckConfig(),
                   dominance: bool = False, total_span: float = YEAR_DAYS,
                   remainder_in_search: bool = True) -> SolveReport:
    """Smallest horizon, then fewest lockdowns, reaching ``s3 >= q N``.

    Horizons are tried from 1 upward while ``H * delta`` stays within the cap.
    Plans must also keep the cap, lockdown-free, for the rest of ``total_span``.
    By default that is part of the search's acceptance test, so the answer is
    the best plan meeting every condition. With ``remainder_in_search=False``
    it is only applied to the optimal plan found at each horizon, and a failure
    moves on to the next horizon.
    """
    if instance.variant is not Variant.PROBLEM2:
        raise InvalidInstance(f"solve_problem2 got a {instance.variant.value} instance")
    clock = _Clock(budget)
    model = _Model(instance)
    delta = instance.step_policy.delta
    init = tuple(instance.initial_state)
    nodes = 0
    for h in range(1, instance.max_horizon + 1):
        leaf_ok = None
        if remainder_in_search:
            rest = total_span - h * delta
            if rest > 1e-9:
                leaf_ok = lambda s1, s2, rest=rest: model.step(s1, s2, 0, rest) is not None  # noqa: E731
        incumbent = None
        for prefer in (0, 1):
            found = _greedy(model, init, h, delta, prefer, leaf_ok)
            if found is not None and (incumbent is None or sum(found) < sum(incumbent)):
                incumbent = found
        best, expanded, proven = _branch_and_bound(model, init, h, delta, clock, incumbent,
                                                   dominance, leaf_ok)
        nodes += expanded
        plan = None
        if best is not None:
            candidate = Plan.from_actions(instance, best)
            if verify_remainder_of_year(candidate, instance, total_span, cfg).feasible:
                plan = candidate
        if not proven:
            return _report(instance, plan, Status.TIMEOUT, nodes, clock, cfg)
        if plan is not None:
            status = Status.FEASIBLE if dominance else Status.OPTIMAL
            return _report(instance, plan, status, nodes, clock, cfg)
        if clock.expired():
            return _report(instance, None, Status.TIMEOUT, nodes, clock, cfg)
    return _report(instance, None, Status.INFEASIBLE, nodes, clock, cfg)


def exhaustive_oracle(instance: PlanningInstance, h_max: int = 14,
                      cfg: TemporalCheckConfig = TemporalCheckConfig(),
                      total_span: float = YEAR_DAYS) -> SolveReport:
    """Enumerate every action sequence and keep the best one that verifies.

    Independent of the branch-and-bound: each candidate goes through the public
    verifiers. Ties on lockdown count go to the lexicographically smallest
    sequence. Problem 2 is handled by enumerating horizons upward, and a
    candidate there must also pass the remainder-of-year check.

    Raises:
        OracleTooLarge: a horizon above ``h_max`` would have to be enumerated.
    """
    if instance.variant is Variant.PROBLEM1_VARIABLE:
        raise InvalidInstance("the oracle enumerates fixed-step instances only")
    clock = _Clock(None)
    if instance.variant is Variant.PROBLEM1:
        horizons = [instance.horizon]
    else:
        horizons = list(range(1, instance.max_horizon + 1))
    evaluated = 0
    for h in horizons:
        if h > h_max:
            raise OracleTooLarge(f"horizon {h} exceeds the oracle cap {h_max}")
        best = None
        for actions in itertools.product((0, 1), repeat=h):
            evaluated += 1
            if best is not None and sum(actions) >= best.lockdowns:
                continue
            plan = Plan.from_actions(instance, actions)
            if not verify_goal(plan, instance) or not verify_temporal(plan, instance, cfg).feasible:
                continue
            if instance.variant is Variant.PROBLEM2 and not verify_remainder_of_year(
                    plan, instance, total_span, cfg).feasible:
                continue
            best = plan
        if best is not None:
            return _report(instance, best, Status.OPTIMAL, evaluated, clock, cfg)
    return _report(instance, None, Status.INFEASIBLE, evaluated, clock, cfg)


# --- variable step duration -------------------------------------------------

#: Bisection resolution, in days, on duration feasibility boundaries.
DURATION_TOL = 1e-3


def project_durations(values: Sequence[float], lower: float, upper: float, total: float) -> list[float]:
    """Euclidean projection onto ``{d : sum(d) = total, lower <= d_i <= upper}``."""
    lo = min(values) - upper
    hi = max(values) - lower
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        s = sum(min(upper, max(lower, v - mid)) for v in values)
        if s > total:
            lo = mid
        else:
            hi = mid
    shift = 0.5 * (lo + hi)
    out = [min(upper, max(lower, v - shift)) for v in values]
    # put the residual rounding error on a step with slack
    err = total - sum(out)
    for i in range(len(out)):
        if lower <= out[i] + err <= upper:
            out[i] += err
            break
    return out


class _DurationProblem:
    """Feasibility of one action sequence as a function of its step durations."""

    def __init__(self, model: _Model, initial, actions: tuple[int, ...]):
        self.model = model
        self.initial = initial
        self.actions = actions
        self.evaluations = 0

    def feasible(self, durations: Sequence[float]) -> bool:
        self.evaluations += 1
        m = self.model
        s1, s2, s3 = self.initial
        if s2 > m.cap:
            return False
        for a, d in zip(self.actions, durations):
            nxt = m.step(s1, s2, a, d, s3)
            if nxt is None:
                return False
            s1, s2, s3 = nxt
            if not m.floor_goal and s3 > m.threshold:
                return False
        return m.goal_met(s3)

    def objective(self, durations: Sequence[float]) -> float:
        return math.fsum(d for a, d in zip(self.actions, durations) if a)


def _transfer(problem: _DurationProblem, durations: list[float], src: int, dst: int,
              amount: float) -> float:
    """Largest feasible shift (to ``DURATION_TOL``) of up to ``amount`` days from src to dst."""
    def shifted(x):
        out = list(durations)
        out[src] -= x
        out[dst] += x
        return out

    if problem.feasible(shifted(amount)):
        return amount
    lo, hi = 0.0, amount
    while hi - lo > DURATION_TOL:
        mid = 0.5 * (lo + hi)
        if problem.feasible(shifted(mid)):
            lo = mid
        else:
            hi = mid
    return lo


def _descend(problem: _DurationProblem, durations: list[float], policy: VariableStep,
             clock: _Clock) -> list[float]:
    """Shrink lockdown steps into no-lockdown steps while feasibility holds."""
    lock = [i for i, a in enumerate(problem.actions) if a]
    free = [i for i, a in enumerate(problem.actions) if not a]
    improved = True
    while improved and not clock.expired():
        improved = False
        for i in lock:
            for j in free:
                room = min(durations[i] - policy.lower, policy.upper - durations[j])
                if room <= DURATION_TOL:
                    continue
                moved = _transfer(problem, durations, i, j, room)
                if moved > DURATION_TOL:
                    durations[i] -= moved
                    durations[j] += moved
                    improved = True
    return durations


def _starts(actions: tuple[int, ...], policy: VariableStep, rng: random.Random) -> list[list[float]]:
    h = len(actions)
    lo, hi, total = policy.lower, policy.upper, policy.total
    starts = [[total / h] * h]
    for lock_value in (lo, hi):
        raw = [lock_value if a else (total / h) for a in actions]
        n_lock = sum(actions)
        if 0 < n_lock < h:
            rest = (total - n_lock * lock_value) / (h - n_lock)
            raw = [lock_value if a else rest for a in actions]
        starts.append(project_durations(raw, lo, hi, total))
    for _ in range(2):
        weights = [rng.expovariate(1.0) for _ in range(h)]
        scale = total / sum(weights)
        starts.append(project_durations([w * scale for w in weights], lo, hi, total))
    return starts


def _instance_seed(instance: PlanningInstance) -> int:
    digest = hashlib.sha256(repr(instance).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def optimize_durations(instance: PlanningInstance, actions: tuple[int, ...],
                       clock: _Clock | None = None,
                       extra_starts: Sequence[Sequence[float]] = ()):
    """Minimize the lockdown days of a fixed action sequence over its durations.

    Multi-start projected coordinate descent: each feasible start is improved by
    moving time from lockdown steps to no-lockdown steps, bisecting on the
    feasibility boundary.

    Returns:
        ``(best durations or None, objective, evaluations)``.
    """
    if clock is None:
        clock = _Clock(None)
    policy = instance.step_policy
    model = _Model(instance)
    problem = _DurationProblem(model, tuple(instance.initial_state), actions)
    rng = random.Random(_instance_seed(instance) ^ int("".join(map(str, actions)) or "0", 2))
    best, best_obj = None, math.inf
    for start in list(_starts(actions, policy, rng)) + [list(s) for s in extra_starts]:
        if clock.expired():
            break
        if not problem.feasible(start):
            continue
        found = _descend(problem, list(start), policy, clock)
        obj = problem.objective(found)
        if obj < best_obj - 1e-12:
            best, best_obj = found, obj
    return best, best_obj, problem.evaluations


def _sequence_order(h: int) -> list[tuple[int, ...]]:
    seqs = list(itertools.product((0, 1), repeat=h))
    seqs.sort(key=lambda s: (sum(s), s))
    return seqs


def solve_problem1_variable_step(instance: PlanningInstance, budget: float | None = None,
                                 cfg: TemporalCheckConfig = TemporalCheckConfig(),
                                 warm_starts: Sequence[tuple[Sequence[int], Sequence[float]]] = (),
                                 ) -> SolveReport:
    """Fewest lockdown days when each step's duration is also a decision.

    Action sequences are visited by lockdown count; a sequence is skipped once
    ``count * delta_lb`` cannot beat the incumbent. ``warm_starts`` are extra
    ``(actions, durations)`` pairs, used as additional starts for their sequence.
    """
    if instance.variant is not Variant.PROBLEM1_VARIABLE:
        raise InvalidInstance(f"solve_problem1_variable_step got a {instance.variant.value} instance")
    clock = _Clock(budget)
    policy = instance.step_policy
    h = instance.horizon
    extra: dict[tuple[int, ...], list[Sequence[float]]] = {}
    for acts, durs in warm_starts:
        extra.setdefault(tuple(int(a) for a in acts), []).append(list(durs))
    best_actions, best_durations, best_obj = None, None, math.inf
    evaluations = 0
    timed_out = False
    for actions in _sequence_order(h):
        if sum(actions) * policy.lower >= best_obj - 1e-9:
            break
        if clock.expired():
            timed_out = True
            break
        durs, obj, evals = optimize_durations(instance, actions, clock, extra.get(actions, ()))
        evaluations += evals
        if durs is not None and obj < best_obj - 1e-9:
            best_actions, best_durations, best_obj = actions, durs, obj
            if obj == 0:
                break
    plan = None if best_actions is None else Plan.from_actions(instance, best_actions, best_durations)
    if timed_out:
        status = Status.TIMEOUT
    elif plan is None:
        status = Status.INFEASIBLE
    elif best_obj == 0:
        status = Status.OPTIMAL
    else:
        status = Status.FEASIBLE
    return _report(instance, plan, status, evaluations, clock, cfg,
                   objective=None if plan is None else plan.total_action_duration)


def solve(instance: PlanningInstance, budget: float | None = None,
          cfg: TemporalCheckConfig = TemporalCheckConfig()) -> SolveReport:
    """Dispatch on the instance variant."""
    if instance.variant is Variant.PROBLEM1:
        return solve_problem1(instance, budget, cfg)
    if instance.variant is Variant.PROBLEM2:
        return solve_problem2(instance, budget, cfg)
    return solve_problem1_variable_step(instance, budget, cfg)


def as_variable_step(actions: Sequence[int], durations: Sequence[float], policy: VariableStep,
                     horizon: int) -> tuple[tuple[int, ...], list[float]] | None:
    """Re-express a plan with ``horizon`` steps whose durations fit ``policy``.

    Consecutive steps with the same action are merged into blocks, and each
    block is split evenly into enough steps to respect the duration bounds.
    The trajectory is unchanged. Returns ``None`` when no such split exists
    (or when the plan does not span ``policy.total``).
    """
    if abs(math.fsum(durations) - policy.total) > 1e-6:
        return None
    blocks: list[list] = []
    for a, d in zip(actions, durations):
        if blocks and blocks[-1][0] == a:
            blocks[-1][1] += d
        else:
            blocks.append([a, d])
    tol = 1e-9
    mins = [max(1, math.ceil(length / policy.upper - tol)) for _, length in blocks]
    maxs = [math.floor(length / policy.lower + tol) for _, length in blocks]
    if any(lo > hi for lo, hi in zip(mins, maxs)) or not sum(mins) <= horizon <= sum(maxs):
        return None
    counts = list(mins)
    spare = horizon - sum(counts)
    for i in range(len(counts)):
        take = min(spare, maxs[i] - counts[i])
        counts[i] += take
        spare -= take
    out_actions: list[int] = []
    out_durations: list[float] = []
    for (a, length), k in zip(blocks, counts):
        out_actions += [a] * k
        out_durations += [length / k] * k
    return tuple(out_actions), out_durations
