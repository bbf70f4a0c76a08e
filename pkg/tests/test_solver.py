import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirplan import (
    EpidemicParams,
    FixedStep,
    InvalidInstance,
    OracleTooLarge,
    Plan,
    PlanningInstance,
    Status,
    Variant,
    VariableStep,
    exhaustive_oracle,
    reverify_with_oracle,
    solve,
    solve_problem1,
    solve_problem1_variable_step,
    solve_problem2,
    verify_goal,
    verify_remainder_of_year,
    verify_temporal,
)
from sirplan.bench import VARIABLE_HORIZON, VARIABLE_POLICY
from sirplan.solver import as_variable_step, optimize_durations, project_durations

N = 5000.0
TRIPLES = ((0.2, 0.1, 0.15), (0.25, 0.15, 0.2))


def p1(rates=TRIPLES[0], cap=250.0, infected=50.0, delta=14.0, p=0.2, **kw):
    return PlanningInstance(EpidemicParams(N, *rates), cap, infected, Variant.PROBLEM1,
                            FixedStep(delta), removed_cap_fraction=p, **kw)


def p2(rates=TRIPLES[0], cap=250.0, infected=50.0, delta=14.0, q=0.8, **kw):
    return PlanningInstance(EpidemicParams(N, *rates), cap, infected, Variant.PROBLEM2,
                            FixedStep(delta), removed_floor_fraction=q, **kw)


def pv(rates=TRIPLES[0], cap=250.0, infected=50.0, policy=VARIABLE_POLICY,
       horizon=VARIABLE_HORIZON, p=0.2):
    return PlanningInstance(EpidemicParams(N, *rates), cap, infected, Variant.PROBLEM1_VARIABLE,
                            policy, horizon=horizon, removed_cap_fraction=p)


def assert_verified(report, instance):
    plan = report.plan
    assert verify_temporal(plan, instance).feasible
    assert verify_goal(plan, instance)
    span = 364.0 if instance.variant is Variant.PROBLEM2 else None
    check = reverify_with_oracle(plan, instance, step_size=1e-2, total_span=span)
    assert check.passed, check.reason


# --- Problem 1 --------------------------------------------------------------

def test_safe_instance_needs_no_lockdown(safe_instance):
    report = solve_problem1(safe_instance)
    assert report.status is Status.OPTIMAL
    assert report.objective == 0
    assert report.plan.actions == (0,) * 6


def test_figure1_instance_needs_lockdowns(fig1_instance):
    report = solve_problem1(fig1_instance)
    assert report.status is Status.OPTIMAL and report.solved
    assert report.objective >= 1
    assert report.objective == report.plan.lockdowns
    assert_verified(report, fig1_instance)


def test_cap_below_initial_infected_is_infeasible():
    inst = p1(cap=20.0, infected=30.0, delta=28.0)
    assert solve_problem1(inst).status is Status.INFEASIBLE
    assert exhaustive_oracle(inst).status is Status.INFEASIBLE


def test_unreachable_goal_is_infeasible():
    # even all-lockdown removes more than 1% of the population in 168 days
    inst = p1(cap=250.0, infected=50.0, delta=28.0, p=0.01)
    assert solve_problem1(inst).status is Status.INFEASIBLE
    assert exhaustive_oracle(inst).status is Status.INFEASIBLE


def test_goal_pruning_matches_oracle_on_tight_goal():
    for p in (0.1, 0.12, 0.15, 0.2):
        inst = p1(TRIPLES[1], cap=250.0, infected=40.0, delta=28.0, p=p)
        fast, slow = solve_problem1(inst), exhaustive_oracle(inst)
        assert fast.status == slow.status
        assert fast.objective == slow.objective


def test_horizon_one_oracle():
    inst = p1(delta=14.0, horizon=1)
    report = exhaustive_oracle(inst)
    assert report.nodes_expanded <= 2
    assert report.status is Status.OPTIMAL and report.objective == 0


def test_oracle_refuses_large_horizons(fig1_instance):
    with pytest.raises(OracleTooLarge):
        exhaustive_oracle(fig1_instance, h_max=10)


def test_variant_mismatch_rejected(fig1_instance):
    with pytest.raises(InvalidInstance):
        solve_problem2(fig1_instance)
    with pytest.raises(InvalidInstance):
        solve_problem1_variable_step(fig1_instance)
    with pytest.raises(InvalidInstance):
        solve_problem1(p2())
    with pytest.raises(InvalidInstance):
        exhaustive_oracle(pv())


def test_dominance_filter_is_sound(fig1_instance):
    report = solve_problem1(fig1_instance, dominance=True)
    assert report.status is Status.FEASIBLE
    assert report.objective >= solve_problem1(fig1_instance).objective
    assert_verified(report, fig1_instance)


def test_timeout_status():
    inst = pv()
    report = solve_problem1_variable_step(inst, budget=1e-9)
    assert report.status is Status.TIMEOUT
    assert not report.solved


def test_solve_is_deterministic(fig1_instance):
    a, b = solve(fig1_instance), solve(fig1_instance)
    assert a.plan == b.plan and a.objective == b.objective and a.nodes_expanded == b.nodes_expanded


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(TRIPLES), st.floats(60.0, 300.0), st.floats(10.0, 80.0),
       st.floats(0.05, 0.4), st.sampled_from((21.0, 28.0)))
def test_branch_and_bound_matches_enumeration(rates, cap, infected, p, delta):
    inst = p1(rates, cap=cap, infected=infected, delta=delta, p=p)
    fast, slow = solve_problem1(inst), exhaustive_oracle(inst)
    assert fast.status == slow.status
    assert fast.objective == slow.objective
    if fast.plan is not None:
        assert verify_temporal(fast.plan, inst).feasible and verify_goal(fast.plan, inst)


# --- Problem 2 --------------------------------------------------------------

def test_vacuous_goal_stops_at_one_step():
    inst = p2(cap=N, q=0.0)
    report = solve_problem2(inst)
    assert report.status is Status.OPTIMAL
    assert report.horizon == 1 and report.objective == 0


def test_vacuous_goal_with_binding_cap():
    # a single free step breaks no cap, but the rest of the year would
    inst = p2(cap=250.0, q=0.0, delta=28.0)
    report = solve_problem2(inst)
    oracle = exhaustive_oracle(inst)
    assert report.status is oracle.status is Status.OPTIMAL
    assert (report.horizon, report.objective) == (oracle.horizon, oracle.objective)
    assert report.horizon > 1
    assert verify_remainder_of_year(report.plan, inst).feasible


def test_unreachable_floor_is_infeasible():
    inst = p2(delta=28.0, horizon_max_weeks=8)
    assert Plan.from_actions(inst, (0, 0)).final_state.s3 < inst.goal_threshold
    assert solve_problem2(inst).status is Status.INFEASIBLE


@pytest.mark.parametrize("infected,cap,expected", [(60.0, 250.0, (7, 2)), (50.0, 250.0, (8, 3))])
def test_problem2_matches_enumeration(infected, cap, expected):
    inst = p2(TRIPLES[1], cap=cap, infected=infected, delta=28.0)
    report, oracle = solve_problem2(inst), exhaustive_oracle(inst)
    assert report.status is oracle.status is Status.OPTIMAL
    assert (report.horizon, report.objective) == (oracle.horizon, oracle.objective) == expected
    assert_verified(report, inst)


def test_literal_remainder_protocol_agrees_on_grid_instance():
    inst = p2(TRIPLES[0], cap=250.0, infected=60.0, delta=28.0)
    a = solve_problem2(inst)
    b = solve_problem2(inst, remainder_in_search=False)
    assert (a.horizon, a.objective) == (b.horizon, b.objective)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(TRIPLES), st.floats(100.0, 400.0), st.floats(10.0, 80.0),
       st.floats(0.0, 0.5))
def test_problem2_short_year_matches_enumeration(rates, cap, infected, q):
    inst = p2(rates, cap=cap, infected=infected, delta=28.0, q=q, horizon_max_weeks=24)
    report = solve_problem2(inst, total_span=168.0)
    oracle = exhaustive_oracle(inst, total_span=168.0)
    assert report.status == oracle.status
    assert (report.horizon, report.objective) == (oracle.horizon, oracle.objective)


# --- variable step ----------------------------------------------------------

def test_project_durations_examples():
    assert project_durations([21.0] * 8, 7.0, 28.0, 168.0) == pytest.approx([21.0] * 8)
    out = project_durations([40.0, 0.0, 0.0], 7.0, 28.0, 42.0)
    assert out == pytest.approx([28.0, 7.0, 7.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50.0, 80.0), min_size=2, max_size=10))
def test_projection_is_feasible(values):
    h = len(values)
    total = 0.5 * (7.0 + 28.0) * h
    out = project_durations(values, 7.0, 28.0, total)
    assert math.fsum(out) == pytest.approx(total, abs=1e-6)
    assert all(7.0 - 1e-9 <= d <= 28.0 + 1e-9 for d in out)


def test_variable_step_zero_when_no_lockdown_needed():
    inst = pv(cap=N, p=1.0)
    report = solve_problem1_variable_step(inst)
    assert report.status is Status.OPTIMAL
    assert report.objective == 0.0
    assert report.plan.lockdowns == 0


def two_step(cap):
    return pv(cap=cap, p=1.0, policy=VariableStep(7.0, 28.0, 35.0), horizon=2)


def test_shortest_lockdown_when_seven_days_suffice():
    durations, objective, _ = optimize_durations(two_step(140.0), (1, 0))
    assert objective == pytest.approx(7.0, abs=1e-3)
    assert durations == pytest.approx([7.0, 28.0], abs=1e-3)


@pytest.mark.parametrize("cap", [80.0, 100.0, 120.0])
def test_lockdown_length_matches_scan(cap):
    inst = two_step(cap)
    grid = np.round(np.arange(7.0, 28.0 + 1e-9, 0.01), 2)
    feasible = [d for d in grid
                if verify_temporal(Plan.from_actions(inst, (1, 0), (d, 35.0 - d)), inst).feasible]
    first = feasible[0]
    assert first > 7.0
    _, objective, _ = optimize_durations(inst, (1, 0))
    assert first - 0.01 - 1e-9 <= objective <= first + 1e-3


def test_variable_step_never_worse_than_fixed():
    rates, cap, infected = TRIPLES[0], 250.0, 50.0
    fixed = solve_problem1(p1(rates, cap=cap, infected=infected, delta=21.0))
    inst = pv(rates, cap=cap, infected=infected)
    warm = as_variable_step(fixed.plan.actions, fixed.plan.durations, inst.step_policy, inst.horizon)
    report = solve_problem1_variable_step(inst, warm_starts=[warm])
    assert report.solved
    assert report.objective <= fixed.plan.total_action_duration + 1e-9
    assert_verified(report, inst)


def test_as_variable_step_preserves_trajectory():
    fixed = solve_problem1(p1(delta=28.0))
    inst = pv()
    actions, durations = as_variable_step(fixed.plan.actions, fixed.plan.durations,
                                          VARIABLE_POLICY, VARIABLE_HORIZON)
    assert len(actions) == VARIABLE_HORIZON
    assert all(7.0 <= d <= 28.0 for d in durations)
    converted = Plan.from_actions(inst, actions, durations)
    assert converted.total_action_duration == pytest.approx(fixed.plan.total_action_duration)
    end = converted.final_state
    assert end == pytest.approx(fixed.plan.final_state, rel=1e-9)


def test_as_variable_step_rejects_impossible_split():
    assert as_variable_step((1, 0), (84.0, 84.0), VARIABLE_POLICY, 2) is None
    assert as_variable_step((1,), (100.0,), VARIABLE_POLICY, 8) is None


def test_duration_optimizer_is_reproducible():
    inst = pv(cap=200.0)
    seq = (1, 1, 0, 1, 0, 0, 1, 0)
    assert optimize_durations(inst, seq) == optimize_durations(inst, seq)
    random.seed(12345)  # global state must not matter
    assert optimize_durations(inst, seq)[0] == optimize_durations(inst, seq)[0]
