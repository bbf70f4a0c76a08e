import pytest

from sirplan import EpidemicParams, FixedStep, PlanningInstance, Variant

#: (criterion, passed, detail) lines collected by the acceptance module.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")


@pytest.fixture
def fig1_params():
    return EpidemicParams(5000.0, 0.2, 0.1, 0.15)


@pytest.fixture
def fig1_instance(fig1_params):
    return PlanningInstance(fig1_params, 250.0, 50.0, Variant.PROBLEM1, FixedStep(14.0),
                            removed_cap_fraction=0.2)


@pytest.fixture
def safe_instance():
    """All-zeros rollout is feasible: cap equals the population and p = 1."""
    params = EpidemicParams(5000.0, 0.2, 0.1, 0.15)
    return PlanningInstance(params, 5000.0, 50.0, Variant.PROBLEM1, FixedStep(28.0),
                            removed_cap_fraction=1.0)
