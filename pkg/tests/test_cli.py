import csv
import json
import re

import pytest

from sirplan import Plan, Status, verify_temporal
from sirplan.cli import exit_code, main
from sirplan.formats import dump_plan, read_instance, read_plan

# First RK4 grid time (step 1e-3) with s2 > 250 in the lockdown-free Figure-1 rollout.
FIG1_CROSSING_DAYS = 36.169

FIG1 = """variant = Problem1
N = 5000
b_no_lockdown = 0.2
b_lockdown = 0.1
c = 0.15
K = 250
I = 50
p = 0.2
delta = 14
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def fig1_file(tmp_path):
    return write(tmp_path, "fig1.txt", FIG1)


def test_simulate_no_lockdown_exceeds_cap(fig1_file, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", fig1_file, "0" * 12, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "valid_inequalities: PASS" in text
    t = float(re.search(r"infection_cap: FAIL first exceeded at t=([\d.]+)", text).group(1))
    assert FIG1_CROSSING_DAYS - 1e-3 <= t <= FIG1_CROSSING_DAYS + 0.1
    rows = read_rows(out / "trajectory.csv")
    assert list(rows[0]) == ["t_days", "s1", "s2", "s3", "action"]
    over = [float(r["t_days"]) for r in rows if float(r["s2"]) > 250.0]
    assert over and over[0] == pytest.approx(36.5)
    assert "goal: FAIL" in text


def test_simulate_zero_horizon(tmp_path, capsys):
    inst = write(tmp_path, "zero.txt", FIG1 + "horizon = 0\n")
    out = tmp_path / "sim"
    assert main(["simulate", inst, "", "--out", str(out)]) == 0
    rows = read_rows(out / "trajectory.csv")
    assert len(rows) == 1
    assert float(rows[0]["t_days"]) == 0.0 and float(rows[0]["s2"]) == 50.0


def test_simulate_wrong_length_writes_nothing(fig1_file, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", fig1_file, "0101", "--out", str(out)]) == 4
    assert "horizon is 12" in capsys.readouterr().err
    assert not out.exists()


def test_simulate_variable_step_durations(tmp_path, capsys):
    text = FIG1.replace("variant = Problem1", "variant = Problem1VariableStep").replace(
        "delta = 14\n", "delta_lb = 7\ndelta_ub = 28\nF = 35\nhorizon = 2\n")
    inst = write(tmp_path, "var.txt", text)
    out = tmp_path / "sim"
    assert main(["simulate", inst, "10", "--durations", "7,28", "--out", str(out)]) == 0
    rows = read_rows(out / "trajectory.csv")
    assert float(rows[-1]["t_days"]) == 35.0
    assert main(["simulate", inst, "10", "--durations", "7", "--out", str(out)]) == 4


def test_solve_safe_instance(tmp_path, capsys):
    inst = write(tmp_path, "safe.txt", FIG1.replace("K = 250", "K = 5000").replace("p = 0.2", "p = 1"))
    assert main(["solve", inst, "--out", str(tmp_path / "s")]) == 0
    text = capsys.readouterr().out
    assert "status: Optimal" in text and "objective: 0" in text
    doc = json.loads((tmp_path / "s" / "plan.json").read_text(encoding="utf-8"))
    assert doc["objective"] == 0


def test_solve_cap_below_initial(tmp_path, capsys):
    inst = write(tmp_path, "bad.txt", FIG1.replace("K = 250", "K = 40"))
    assert main(["solve", inst, "--out", str(tmp_path / "s")]) == 2
    assert "status: Infeasible" in capsys.readouterr().out
    doc = json.loads((tmp_path / "s" / "plan.json").read_text(encoding="utf-8"))
    assert doc["steps"] is None


def test_solve_then_verify(fig1_file, tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["solve", fig1_file, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert int(re.search(r"objective: (\d+)", text).group(1)) >= 1
    assert (out / "trajectory.csv").is_file()
    assert main(["verify", fig1_file, str(out / "plan.json")]) == 0
    text = capsys.readouterr().out
    for name in ("initial_state", "transition", "temporal", "goal", "valid_inequalities"):
        assert f"{name}: PASS" in text
    assert "FAIL" not in text
    assert "gamma: 1.2531" in text


def test_flipped_binding_lockdown_is_caught(fig1_file, tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["solve", fig1_file, "--out", str(out)]) == 0
    instance = read_instance(fig1_file)
    solved = read_plan(out / "plan.json")
    last = max(i for i, a in enumerate(solved.actions) if a)
    actions = list(solved.actions)
    actions[last] = 0
    flipped = Plan.from_actions(instance, actions)
    expected = verify_temporal(flipped, instance).first_violation
    assert expected is not None
    path = write(tmp_path, "flipped.json", dump_plan(flipped))
    capsys.readouterr()
    assert main(["verify", fig1_file, path]) == 1
    text = capsys.readouterr().out
    assert f"temporal: FAIL  step {expected.step} tau={expected.tau:.4f}" in text


def test_verify_rejects_tampered_trajectory(fig1_file, tmp_path, capsys):
    out = tmp_path / "s"
    main(["solve", fig1_file, "--out", str(out)])
    doc = json.loads((out / "plan.json").read_text(encoding="utf-8"))
    doc["steps"][3]["s2"] *= 0.5
    path = write(tmp_path, "tampered.json", json.dumps(doc))
    capsys.readouterr()
    assert main(["verify", fig1_file, path]) == 4
    assert "rejected" in capsys.readouterr().out


def test_verify_rejects_durations_off_total(tmp_path, capsys):
    text = FIG1.replace("variant = Problem1", "variant = Problem1VariableStep").replace(
        "delta = 14\n", "delta_lb = 7\ndelta_ub = 28\nF = 168\nhorizon = 8\n")
    path = write(tmp_path, "var.txt", text)
    plan = Plan.from_actions(read_instance(path), (1,) * 8, (20.0,) * 8)
    plan_path = write(tmp_path, "plan.json", dump_plan(plan))
    assert main(["verify", path, plan_path]) == 4
    text = capsys.readouterr().out
    assert "rejected" in text and "sum" in text
    assert "temporal" not in text


def test_verify_problem2_reports_remainder(tmp_path, capsys):
    text = (FIG1.replace("Problem1", "Problem2").replace("p = 0.2", "q = 0.8")
            .replace("I = 50", "I = 60").replace("delta = 14", "delta = 28"))
    inst = write(tmp_path, "p2.txt", text)
    out = tmp_path / "s"
    assert main(["solve", inst, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["verify", inst, str(out / "plan.json")]) == 0
    assert "remainder_of_year: PASS" in capsys.readouterr().out


def test_timeout_exit_code(tmp_path, capsys):
    text = FIG1.replace("variant = Problem1", "variant = Problem1VariableStep").replace(
        "delta = 14\n", "delta_lb = 7\ndelta_ub = 28\nF = 168\nhorizon = 8\n")
    inst = write(tmp_path, "var.txt", text)
    assert main(["solve", inst, "--budget-s", "1e-9", "--out", str(tmp_path / "s")]) == 3
    assert "status: Timeout" in capsys.readouterr().out


def test_bad_inputs(tmp_path, capsys):
    broken = write(tmp_path, "broken.txt", FIG1.replace("K = 250", "K = two hundred"))
    assert main(["solve", broken]) == 4
    assert "line 6, column 5" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "missing.txt")]) == 4
    good = write(tmp_path, "fig1.txt", FIG1)
    assert main(["solve", good, "--budget-s", "0"]) == 4
    assert main(["verify", good, write(tmp_path, "junk.json", "{oops")]) == 4
    assert "line 1, column 2" in capsys.readouterr().err


def test_exit_codes_cover_every_status():
    assert {s: exit_code(s) for s in Status} == {
        Status.OPTIMAL: 0, Status.FEASIBLE: 0, Status.INFEASIBLE: 2, Status.TIMEOUT: 3}


def test_bench_subcommand(tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "--problems", "1", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "instances: 48" in text and "oracle failures: 0" in text
    assert (out / "coverage.csv").is_file()
    assert len(list((out / "traj").glob("p1-*.csv"))) == 48
