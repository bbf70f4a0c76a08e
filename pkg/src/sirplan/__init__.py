"""Minimal-lockdown planning for an SIR epidemic using its exact solution equations."""

from .errors import (
    DegenerateState,
    InvalidInstance,
    InvalidParams,
    InvalidPlan,
    NearSingularRates,
    OracleTooLarge,
    ParseError,
)
from .planning import (
    FeasibilityVerdict,
    FixedStep,
    Plan,
    PlanningInstance,
    TemporalCheckConfig,
    Variant,
    VariableStep,
    check_valid_inequalities,
    guaranteed_gamma,
    reverify_with_oracle,
    verify_goal,
    verify_remainder_of_year,
    verify_temporal,
)
from .sir import (
    EpidemicParams,
    PandemicState,
    closed_form_step,
    effective_infection_rate,
    infected_peak_within_step,
    ode_oracle_integrate,
    within_step_state,
)
from .solver import (
    SolveReport,
    Status,
    exhaustive_oracle,
    solve,
    solve_problem1,
    solve_problem1_variable_step,
    solve_problem2,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateState",
    "InvalidInstance",
    "InvalidParams",
    "InvalidPlan",
    "NearSingularRates",
    "OracleTooLarge",
    "ParseError",
    "FeasibilityVerdict",
    "FixedStep",
    "Plan",
    "PlanningInstance",
    "TemporalCheckConfig",
    "Variant",
    "VariableStep",
    "check_valid_inequalities",
    "guaranteed_gamma",
    "reverify_with_oracle",
    "verify_goal",
    "verify_remainder_of_year",
    "verify_temporal",
    "EpidemicParams",
    "PandemicState",
    "closed_form_step",
    "effective_infection_rate",
    "infected_peak_within_step",
    "ode_oracle_integrate",
    "within_step_state",
    "SolveReport",
    "Status",
    "exhaustive_oracle",
    "solve",
    "solve_problem1",
    "solve_problem1_variable_step",
    "solve_problem2",
]
