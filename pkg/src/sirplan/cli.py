"""Command-line entry point: ``sirplan {simulate,solve,verify,bench}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import emit_reports, generate_grid, paired_comparison, run_benchmark
from .errors import InvalidPlan, ParseError, SirPlanError
from .formats import (
    dump_plan,
    parse_schedule,
    read_instance,
    read_plan,
    sample_trajectory,
    trajectory_csv,
)
from .planning import (
    YEAR_DAYS,
    Plan,
    PlanningInstance,
    TemporalCheckConfig,
    Variant,
    VariableStep,
    check_infection_cap,
    check_plan_consistency,
    check_valid_inequalities,
    guaranteed_gamma,
    max_infected,
    verify_goal,
    verify_remainder_of_year,
    verify_temporal,
)
from .solver import SolveReport, Status, solve

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_TIMEOUT = 3
EXIT_BAD_INPUT = 4

STATUS_EXIT = {
    Status.OPTIMAL: EXIT_OK,
    Status.FEASIBLE: EXIT_OK,
    Status.INFEASIBLE: EXIT_INFEASIBLE,
    Status.TIMEOUT: EXIT_TIMEOUT,
}


def exit_code(status: Status) -> int:
    return STATUS_EXIT[Status(status)]


def _cfg(args) -> TemporalCheckConfig:
    return TemporalCheckConfig(increment=args.increment, refine=not args.no_refine)


def _goal_text(instance: PlanningInstance, removed: float) -> str:
    op = ">=" if instance.variant is Variant.PROBLEM2 else "<="
    return f"s3={removed:.4f} {op} {instance.goal_threshold:g}"


def _report_meta(report: SolveReport) -> dict:
    return {
        "status": report.status.value,
        "objective": report.objective,
        "nodes": report.nodes_expanded,
        "wall_time_s": report.wall_time,
        "gamma": report.verification.guaranteed_gamma,
    }


def cmd_simulate(args) -> int:
    instance = read_instance(args.instance)
    cfg = _cfg(args)
    if instance.variant is Variant.PROBLEM2:
        actions = parse_schedule(args.schedule)
        if len(actions) > instance.max_horizon:
            raise ParseError(f"schedule has {len(actions)} steps, the cap is {instance.max_horizon}")
    else:
        actions = parse_schedule(args.schedule, instance.horizon)
    durations = None
    if args.durations is not None:
        try:
            durations = [float(x) for x in args.durations.split(",") if x.strip()]
        except ValueError as exc:
            raise ParseError(f"bad --durations: {exc}") from None
        if len(durations) != len(actions):
            raise ParseError(f"{len(durations)} durations for {len(actions)} steps")
    elif isinstance(instance.step_policy, VariableStep):
        durations = [instance.step_policy.total / len(actions)] * len(actions) if actions else []
    plan = Plan.from_actions(instance, actions, durations)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = sample_trajectory(plan, instance, args.resolution)
    (out / "trajectory.csv").write_text(trajectory_csv(rows), encoding="utf-8")

    issues = check_valid_inequalities(plan, instance)
    violation, _ = check_infection_cap(instance.initial_state, instance.params, plan.actions,
                                       plan.durations, instance.infection_cap, cfg)
    peak_t, peak = max_infected(plan, instance)
    print(f"steps: {plan.horizon}  total_days: {plan.total_duration:g}")
    print(f"valid_inequalities: {'PASS' if not issues else 'FAIL'} ({len(issues)} violations)")
    for v in issues:
        print(f"  step {v.step}: {v.inequality} residual {v.residual:.3g}")
    print(f"max_infected: {peak:.4f} at t={peak_t:.4f} days (K={instance.infection_cap:g})")
    if violation is None:
        print("infection_cap: PASS")
    else:
        start = sum(plan.durations[:violation.step])
        print(f"infection_cap: FAIL first exceeded at t={start + violation.tau:.4f} days "
              f"(step {violation.step}, s2={violation.quantity:.4f})")
    print(f"goal: {'PASS' if verify_goal(plan, instance) else 'FAIL'} "
          f"{_goal_text(instance, plan.final_state.s3)}")
    print(f"trajectory: {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_solve(args) -> int:
    instance = read_instance(args.instance)
    report = solve(instance, args.budget_s, _cfg(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(dump_plan(report.plan, _report_meta(report)), encoding="utf-8")
    if report.plan is not None:
        rows = sample_trajectory(report.plan, instance, args.resolution)
        (out / "trajectory.csv").write_text(trajectory_csv(rows), encoding="utf-8")
    objective = "-" if report.objective is None else f"{report.objective:g}"
    print(f"status: {report.status.value}")
    print(f"objective: {objective}")
    if report.plan is not None:
        print(f"schedule: {''.join(map(str, report.plan.actions))}")
        print(f"lockdown_days: {report.plan.total_action_duration:g}")
    print(f"nodes: {report.nodes_expanded}  wall_time_s: {report.wall_time:.3f}")
    print(f"gamma: {report.verification.guaranteed_gamma:.4f}")
    print(f"plan: {out / 'plan.json'}")
    return exit_code(report.status)


def cmd_verify(args) -> int:
    instance = read_instance(args.instance)
    plan = read_plan(args.plan)
    cfg = _cfg(args)
    try:
        check_plan_consistency(plan, instance)
    except InvalidPlan as exc:
        print(f"rejected: {exc}")
        return EXIT_BAD_INPUT
    ok = True

    def line(name: str, passed: bool, detail: str = "") -> None:
        nonlocal ok
        ok &= passed
        print(f"{name}: {'PASS' if passed else 'FAIL'}{'  ' + detail if detail else ''}")

    line("initial_state", True, f"{tuple(round(v, 6) for v in plan.trajectory[0])}")
    line("transition", True, "stored trajectory matches recomputation")
    line("instantaneous", True, "no instantaneous constraint beyond the transition")
    verdict = verify_temporal(plan, instance, cfg)
    if verdict.feasible:
        line("temporal", True, f"max s2={verdict.max_infected:.4f} <= K={instance.infection_cap:g}")
    else:
        v = verdict.first_violation
        line("temporal", False, f"step {v.step} tau={v.tau:.4f} s2={v.quantity:.4f} > K={v.bound:g}")
    line("goal", verify_goal(plan, instance), _goal_text(instance, plan.final_state.s3))
    issues = check_valid_inequalities(plan, instance)
    line("valid_inequalities", not issues, f"{len(issues)} violations")
    if instance.variant is Variant.PROBLEM2:
        rest = verify_remainder_of_year(plan, instance, YEAR_DAYS, cfg)
        if rest.feasible:
            line("remainder_of_year", True, f"no lockdowns until day {YEAR_DAYS:g}")
        else:
            v = rest.first_violation
            line("remainder_of_year", False, f"tau={v.tau:.4f} after plan end, s2={v.quantity:.4f}")
    mode = "exact peak search" if cfg.refine else f"sampling every {cfg.increment:g} days"
    gamma = guaranteed_gamma(instance.infection_cap, instance.params, cfg.increment)
    print(f"gamma: {gamma:.4f} ({mode})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_bench(args) -> int:
    wanted = {p.strip() for p in args.problems.split(",")}
    labels = {Variant.PROBLEM1: "1", Variant.PROBLEM2: "2", Variant.PROBLEM1_VARIABLE: "1v"}
    grid = [e for e in generate_grid() if labels[e.instance.variant] in wanted]
    records = run_benchmark(grid, args.budget_s, args.workers, _cfg(args))
    resolution = 0.1 if args.full_resolution else 0.5
    out = emit_reports(records, args.out, resolution)
    solved = sum(r.solved for r in records)
    failed = [r.instance_id for r in records if r.solved and not r.reverified]
    print(f"instances: {len(records)}  solved: {solved}  oracle failures: {len(failed)}")
    for fixed_id, fixed_days, var_days in paired_comparison(records):
        print(f"  {fixed_id}: fixed {fixed_days:g} d, variable {var_days:.3f} d")
    print(f"reports: {out}")
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sirplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def checks(p):
        p.add_argument("--increment", type=float, default=0.1,
                       help="sample spacing in days for the infection-cap check")
        p.add_argument("--no-refine", action="store_true",
                       help="sample only, without locating each step's exact peak")

    p = sub.add_parser("simulate", help="roll out an action schedule")
    p.add_argument("instance")
    p.add_argument("schedule", help="one 0/1 character per step, e.g. 001100")
    p.add_argument("--durations", help="comma-separated step durations (variable step)")
    p.add_argument("--out", default=".")
    p.add_argument("--resolution", type=float, default=0.5)
    checks(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="compute a minimal-lockdown plan")
    p.add_argument("instance")
    p.add_argument("--out", default=".")
    p.add_argument("--budget-s", type=float, default=60.0)
    p.add_argument("--resolution", type=float, default=0.5)
    checks(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check a plan against its instance")
    p.add_argument("instance")
    p.add_argument("plan")
    checks(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run the experiment grid")
    p.add_argument("--out", default="bench-out")
    p.add_argument("--budget-s", type=float, default=60.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--problems", default="1,2,1v", help="subset of 1, 2, 1v")
    p.add_argument("--full-resolution", action="store_true",
                   help="trajectory samples every 0.1 days instead of 0.5")
    checks(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if getattr(args, "budget_s", 1.0) <= 0:
        print("error: --budget-s must be positive", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        return args.func(args)
    except (ParseError, SirPlanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


def run() -> None:
    sys.exit(main())
