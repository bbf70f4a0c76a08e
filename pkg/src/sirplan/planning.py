"""Planning instances, plans, and the feasibility checks run on them.

A plan is feasible when the infected count stays at or below the cap ``K`` at
every instant of every step (not only at step boundaries) and the final
removed count meets the goal of the instance's variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

from .errors import InvalidInstance, InvalidPlan
from .sir import (
    POP_REL_TOL,
    EpidemicParams,
    PandemicState,
    advance,
    effective_infection_rate,
    ode_oracle_with_peak,
    step_peak,
)

#: Planning span of Problem 1 in days (24 weeks).
PROBLEM1_SPAN_DAYS = 168.0

#: One year, the horizon cap and remainder-check span of Problem 2.
YEAR_DAYS = 364.0

#: Relative slack on the infection cap when comparing evaluated values.
CAP_REL_TOL = 1e-9


class Variant(str, Enum):
    PROBLEM1 = "Problem1"
    PROBLEM2 = "Problem2"
    PROBLEM1_VARIABLE = "Problem1VariableStep"


@dataclass(frozen=True)
class FixedStep:
    delta: float

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise InvalidInstance(f"step duration must be positive, got {self.delta}")


@dataclass(frozen=True)
class VariableStep:
    """Per-step durations within ``[lower, upper]`` that sum to ``total``."""

    lower: float
    upper: float
    total: float

    def __post_init__(self) -> None:
        if not 0 < self.lower <= self.upper:
            raise InvalidInstance(f"need 0 < delta_lb <= delta_ub, got {self.lower}, {self.upper}")
        if not self.total > 0:
            raise InvalidInstance(f"total duration must be positive, got {self.total}")


StepPolicy = Union[FixedStep, VariableStep]


@dataclass(frozen=True)
class PlanningInstance:
    """One lockdown planning problem.

    ``horizon`` is the number of steps for Problem 1 (fixed or variable step).
    For a fixed step it defaults to ``168 / delta``. Problem 2 searches over
    horizons and uses ``horizon_max_weeks`` as the cap instead.

    The initial infected count may exceed the cap; such instances are valid
    input and simply infeasible.
    """

    params: EpidemicParams
    infection_cap: float
    initial_infected: float
    variant: Variant
    step_policy: StepPolicy
    horizon: int | None = None
    removed_cap_fraction: float | None = None
    removed_floor_fraction: float | None = None
    horizon_max_weeks: float = 52.0

    def __post_init__(self) -> None:
        n = self.params.population
        if not 0 < self.infection_cap <= n:
            raise InvalidInstance(f"K must lie in (0, N], got {self.infection_cap}")
        if not 0 < self.initial_infected < n:
            raise InvalidInstance(f"I must lie in (0, N), got {self.initial_infected}")
        variant = Variant(self.variant)
        object.__setattr__(self, "variant", variant)
        fraction = self.removed_floor_fraction if variant is Variant.PROBLEM2 else self.removed_cap_fraction
        if fraction is None:
            name = "q" if variant is Variant.PROBLEM2 else "p"
            raise InvalidInstance(f"{variant.value} requires the goal fraction {name}")
        if not 0.0 <= fraction <= 1.0:
            raise InvalidInstance(f"goal fraction must lie in [0, 1], got {fraction}")

        policy = self.step_policy
        if variant is Variant.PROBLEM1_VARIABLE:
            if not isinstance(policy, VariableStep):
                raise InvalidInstance("the variable-step variant needs a VariableStep policy")
            if self.horizon is None or self.horizon < 1:
                raise InvalidInstance("the variable-step variant needs a positive horizon")
            h = self.horizon
            if not h * policy.lower - 1e-9 <= policy.total <= h * policy.upper + 1e-9:
                raise InvalidInstance("H * delta_lb <= F <= H * delta_ub does not hold")
            return
        if not isinstance(policy, FixedStep):
            raise InvalidInstance(f"{variant.value} needs a FixedStep policy")
        if variant is Variant.PROBLEM1:
            if self.horizon is None:
                steps = PROBLEM1_SPAN_DAYS / policy.delta
                if abs(steps - round(steps)) > 1e-9:
                    raise InvalidInstance(f"168 days is not a whole number of {policy.delta}-day steps")
                object.__setattr__(self, "horizon", int(round(steps)))
            elif self.horizon < 0:
                raise InvalidInstance("horizon must be non-negative")
        elif not self.horizon_max_weeks > 0:
            raise InvalidInstance("horizon_max_weeks must be positive")

    @property
    def population(self) -> float:
        return self.params.population

    @property
    def goal_threshold(self) -> float:
        """``p * N`` (a ceiling) or ``q * N`` (a floor) on the final removed count."""
        if self.variant is Variant.PROBLEM2:
            return self.removed_floor_fraction * self.population
        return self.removed_cap_fraction * self.population

    @property
    def initial_state(self) -> PandemicState:
        return PandemicState.initial(self.population, self.initial_infected)

    @property
    def max_horizon(self) -> int:
        """Largest number of fixed steps fitting in the Problem 2 cap."""
        return int(math.floor(7.0 * self.horizon_max_weeks / self.step_policy.delta + 1e-9))

    def goal_met(self, removed: float) -> bool:
        if self.variant is Variant.PROBLEM2:
            return removed >= self.goal_threshold
        return removed <= self.goal_threshold


def rollout(initial: PandemicState, params: EpidemicParams, actions: Sequence[int],
            durations: Sequence[float]) -> list[PandemicState]:
    """Trajectory of ``len(actions) + 1`` states from ``initial``."""
    states = [PandemicState(*initial)]
    s1, s2, s3 = initial
    n = params.population
    c = params.removal_rate
    for a, d in zip(actions, durations):
        s1, s2, s3 = advance(s1, s2, n, effective_infection_rate(params, a), c, d, s3)
        states.append(PandemicState(s1, s2, s3))
    return states


@dataclass(frozen=True)
class Plan:
    """Lockdown decisions, step durations and the induced trajectory."""

    actions: tuple[int, ...]
    durations: tuple[float, ...]
    trajectory: tuple[PandemicState, ...]

    @classmethod
    def from_actions(cls, instance: PlanningInstance, actions: Iterable[int],
                     durations: Iterable[float] | None = None) -> "Plan":
        actions = tuple(int(a) for a in actions)
        if durations is None:
            if not isinstance(instance.step_policy, FixedStep):
                raise InvalidPlan("durations are required for a variable-step instance")
            durations = (instance.step_policy.delta,) * len(actions)
        durations = tuple(float(d) for d in durations)
        states = rollout(instance.initial_state, instance.params, actions, durations)
        return cls(actions, durations, tuple(states))

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def lockdowns(self) -> int:
        return sum(self.actions)

    @property
    def total_duration(self) -> float:
        return math.fsum(self.durations)

    @property
    def total_action_duration(self) -> float:
        """Days spent under lockdown."""
        return math.fsum(d for a, d in zip(self.actions, self.durations) if a)

    @property
    def final_state(self) -> PandemicState:
        return self.trajectory[-1]


@dataclass(frozen=True)
class TemporalCheckConfig:
    """How the continuous-time infection cap is checked.

    Attributes:
        increment: Spacing in days of the samples taken within every step.
        refine: Also locate each step's exact infected peak.
    """

    increment: float = 0.1
    refine: bool = True

    def __post_init__(self) -> None:
        if not self.increment > 0:
            raise ValueError("sample increment must be positive")


@dataclass(frozen=True)
class Violation:
    step: int
    tau: float
    quantity: float
    bound: float


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    first_violation: Violation | None = None
    guaranteed_gamma: float = 0.0
    max_infected: float = 0.0


def guaranteed_gamma(infection_cap: float, params: EpidemicParams, increment: float) -> float:
    """Largest possible undetected cap violation between samples ``increment`` apart.

    Any sample at or below ``K`` can grow by at most a factor
    ``exp((b_max - c) * increment)`` before the next sample.
    """
    return max(0.0, infection_cap * math.expm1(params.max_growth_rate * increment))


def check_plan_consistency(plan: Plan, instance: PlanningInstance, rel_tol: float = 1e-6) -> None:
    """Reject plans whose shape, durations or stored trajectory do not match the instance.

    Raises:
        InvalidPlan: on the first mismatch found.
    """
    h = len(plan.actions)
    if len(plan.durations) != h:
        raise InvalidPlan(f"{h} actions but {len(plan.durations)} durations")
    if len(plan.trajectory) != h + 1:
        raise InvalidPlan(f"trajectory has {len(plan.trajectory)} states, expected {h + 1}")
    if any(a not in (0, 1) for a in plan.actions):
        raise InvalidPlan("actions must be 0 or 1")
    policy = instance.step_policy
    if isinstance(policy, FixedStep):
        if any(abs(d - policy.delta) > 1e-9 for d in plan.durations):
            raise InvalidPlan(f"every duration must equal delta={policy.delta}")
        if instance.variant is Variant.PROBLEM1 and h != instance.horizon:
            raise InvalidPlan(f"plan has {h} steps, instance horizon is {instance.horizon}")
        if instance.variant is Variant.PROBLEM2 and h > instance.max_horizon:
            raise InvalidPlan(f"plan has {h} steps, more than the cap {instance.max_horizon}")
    else:
        if h != instance.horizon:
            raise InvalidPlan(f"plan has {h} steps, instance horizon is {instance.horizon}")
        tol = 1e-9
        if any(not policy.lower - tol <= d <= policy.upper + tol for d in plan.durations):
            raise InvalidPlan(f"durations must lie in [{policy.lower}, {policy.upper}]")
        if abs(math.fsum(plan.durations) - policy.total) > 1e-6:
            raise InvalidPlan(f"durations sum to {math.fsum(plan.durations)}, expected {policy.total}")
    expected = rollout(instance.initial_state, instance.params, plan.actions, plan.durations)
    n = instance.population
    for t, (got, want) in enumerate(zip(plan.trajectory, expected)):
        for g, w in zip(got, want):
            if abs(g - w) > rel_tol * max(abs(w), 1e-12 * n) and abs(g - w) > 1e-12 * n:
                raise InvalidPlan(f"stored state {t} disagrees with recomputation: {got} vs {want}")


def _sample_times(duration: float, increment: float) -> list[float]:
    count = int(math.floor(duration / increment + 1e-9))
    taus = [k * increment for k in range(count + 1)]
    if duration - taus[-1] > 1e-12:
        taus.append(duration)
    return taus


def check_infection_cap(initial: PandemicState, params: EpidemicParams, actions: Sequence[int],
                        durations: Sequence[float], cap: float,
                        cfg: TemporalCheckConfig, first_step: int = 0) -> tuple[Violation | None, float]:
    """Scan steps in time order for the first instant with ``s2 > cap``.

    Returns:
        ``(first violation or None, largest infected value seen)``.
    """
    limit = cap * (1.0 + CAP_REL_TOL)
    n = params.population
    c = params.removal_rate
    s1, s2, _ = initial
    seen = s2
    if s2 > limit:
        return Violation(first_step, 0.0, s2, cap), seen
    for offset, (a, d) in enumerate(zip(actions, durations)):
        step = first_step + offset
        b = effective_infection_rate(params, a)
        for tau in _sample_times(d, cfg.increment):
            y = advance(s1, s2, n, b, c, tau)[1] if tau > 0 else s2
            seen = max(seen, y)
            if y > limit:
                return Violation(step, tau, y, cap), seen
        if cfg.refine:
            tau, peak = step_peak(s1, s2, n, b, c, d)
            seen = max(seen, peak)
            if peak > limit:
                return Violation(step, tau, peak, cap), seen
        s1, s2, _ = advance(s1, s2, n, b, c, d)
    return None, seen


def verify_temporal(plan: Plan, instance: PlanningInstance,
                    cfg: TemporalCheckConfig = TemporalCheckConfig()) -> FeasibilityVerdict:
    """Check the infection cap at every sample (and exact peak) of every step.

    The stored trajectory is recomputed first and the plan rejected on mismatch.
    """
    check_plan_consistency(plan, instance)
    violation, seen = check_infection_cap(instance.initial_state, instance.params, plan.actions,
                                          plan.durations, instance.infection_cap, cfg)
    return FeasibilityVerdict(
        feasible=violation is None,
        first_violation=violation,
        guaranteed_gamma=guaranteed_gamma(instance.infection_cap, instance.params, cfg.increment),
        max_infected=seen,
    )


def verify_goal(plan: Plan, instance: PlanningInstance) -> bool:
    """Final removed count against ``p * N`` (Problem 1) or ``q * N`` (Problem 2)."""
    return instance.goal_met(plan.final_state.s3)


def check_remainder(final: PandemicState, elapsed: float, instance: PlanningInstance,
                    total_span: float = YEAR_DAYS, cfg: TemporalCheckConfig = TemporalCheckConfig(),
                    first_step: int = 0) -> FeasibilityVerdict:
    """Cap check for a lockdown-free extension from ``final`` (at day ``elapsed``) to ``total_span``."""
    gamma = guaranteed_gamma(instance.infection_cap, instance.params, cfg.increment)
    remaining = total_span - elapsed
    if remaining <= 1e-9:
        return FeasibilityVerdict(final.s2 <= instance.infection_cap * (1.0 + CAP_REL_TOL),
                                  None, gamma, final.s2)
    violation, seen = check_infection_cap(final, instance.params, (0,), (remaining,),
                                          instance.infection_cap, cfg, first_step=first_step)
    return FeasibilityVerdict(violation is None, violation, gamma, seen)


def verify_remainder_of_year(plan: Plan, instance: PlanningInstance,
                             total_span: float = YEAR_DAYS,
                             cfg: TemporalCheckConfig = TemporalCheckConfig()) -> FeasibilityVerdict:
    """Check that the cap keeps holding, with no further lockdowns, until ``total_span``.

    The extension is one no-lockdown step starting from the plan's final state;
    a violation in it is reported with step index ``plan.horizon``.
    """
    check_plan_consistency(plan, instance)
    return check_remainder(plan.final_state, plan.total_duration, instance, total_span, cfg,
                           first_step=plan.horizon)


def max_infected(plan: Plan, instance: PlanningInstance) -> tuple[float, float]:
    """``(t, s2)`` of the exact infected maximum over the whole plan."""
    best_t, best = 0.0, plan.trajectory[0].s2
    start = 0.0
    p = instance.params
    for state, a, d in zip(plan.trajectory, plan.actions, plan.durations):
        tau, peak = step_peak(state.s1, state.s2, p.population, effective_infection_rate(p, a),
                              p.removal_rate, d)
        if peak > best:
            best_t, best = start + tau, peak
        start += d
    return best_t, best


@dataclass(frozen=True)
class InequalityViolation:
    step: int
    inequality: str
    residual: float


def check_valid_inequalities(plan: Plan, instance: PlanningInstance,
                             tol: float | None = None) -> list[InequalityViolation]:
    """Conservation, monotonicity and domain checks on the stored trajectory.

    Inequality ids: ``conservation`` (``s1 + s2 + s3 = N``), ``s1_nonincreasing``,
    ``s3_nondecreasing`` and ``domain`` (every count within ``[0, N]``).
    """
    n = instance.population
    if tol is None:
        tol = POP_REL_TOL * n
    found: list[InequalityViolation] = []
    prev = None
    for t, state in enumerate(plan.trajectory):
        residual = state.total() - n
        if abs(residual) > tol:
            found.append(InequalityViolation(t, "conservation", residual))
        worst = max(max(-v, v - n) for v in state)
        if worst > tol:
            found.append(InequalityViolation(t, "domain", worst))
        if prev is not None:
            if state.s1 - prev.s1 > tol:
                found.append(InequalityViolation(t, "s1_nonincreasing", state.s1 - prev.s1))
            if prev.s3 - state.s3 > tol:
                found.append(InequalityViolation(t, "s3_nondecreasing", prev.s3 - state.s3))
        prev = state
    return found


@dataclass(frozen=True)
class OracleCheck:
    """Outcome of re-simulating a plan with the RK4 oracle."""

    passed: bool
    max_infected: float
    final_removed: float
    max_state_error: float
    reason: str = ""


def reverify_with_oracle(plan: Plan, instance: PlanningInstance, step_size: float = 1e-3,
                         increment: float = 0.1, total_span: float | None = None) -> OracleCheck:
    """Re-simulate ``plan`` numerically, independent of the closed form.

    Passes when every RK4 grid point keeps ``s2 <= K + gamma`` (``gamma`` from
    :func:`guaranteed_gamma` at ``increment``), the RK4 final state meets the
    goal within ``1e-6 N``, and, when ``total_span`` is given, the lockdown-free
    extension up to ``total_span`` also keeps the cap.
    """
    n = instance.population
    cap = instance.infection_cap + guaranteed_gamma(instance.infection_cap, instance.params, increment)
    steps = list(zip(plan.actions, plan.durations))
    if total_span is not None and total_span - plan.total_duration > 1e-9:
        steps.append((0, total_span - plan.total_duration))
    state = instance.initial_state
    worst = state.s2
    error = 0.0
    final_removed = state.s3
    for t, (a, d) in enumerate(steps):
        state, peak = ode_oracle_with_peak(state, instance.params, a, d, step_size)
        worst = max(worst, peak)
        if t < plan.horizon:
            final_removed = state.s3
            error = max(error, max(abs(u - v) for u, v in zip(state, plan.trajectory[t + 1])))
    reasons = []
    if worst > cap:
        reasons.append(f"infected reaches {worst:.6g} > K + gamma = {cap:.6g}")
    tol = POP_REL_TOL * n
    threshold = instance.goal_threshold
    if instance.variant is Variant.PROBLEM2:
        goal_ok = final_removed >= threshold - tol
    else:
        goal_ok = final_removed <= threshold + tol
    if not goal_ok:
        reasons.append(f"final removed {final_removed:.6g} misses the goal {threshold:.6g}")
    return OracleCheck(not reasons, worst, final_removed, error, "; ".join(reasons))
