"""Exact SIR dynamics with a binary lockdown switch.

The model is the frequency-dependent SIR system in which removed individuals
no longer mix::

    x' = -b x y / (x + y)
    y' =  b x y / (x + y) - c y
    z' =  c y

For ``b != c`` the ratio ``u = y / x`` grows as ``u0 * exp((b - c) t)``, which
gives closed-form solution equations for all three compartments at any elapsed
time. Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateState, InvalidParams, NearSingularRates

#: Minimum allowed gap ``|b - c|`` (per day) for the solution equations.
RATE_GAP_EPS = 1e-6

#: Relative population tolerance used by conservation checks (times N).
POP_REL_TOL = 1e-6


@dataclass(frozen=True)
class EpidemicParams:
    """Population size and the per-day rates of the model.

    Attributes:
        population: Total population ``N``.
        rate_no_lockdown: Infection rate when no lockdown is in force.
        rate_lockdown: Infection rate during a lockdown (strictly smaller).
        removal_rate: Removal rate ``c``.
    """

    population: float
    rate_no_lockdown: float
    rate_lockdown: float
    removal_rate: float

    def __post_init__(self) -> None:
        if not self.population > 0:
            raise InvalidParams(f"population must be positive, got {self.population}")
        for name in ("rate_no_lockdown", "rate_lockdown", "removal_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParams(f"{name} must lie in [0, 1], got {value}")
        if not self.rate_no_lockdown > self.rate_lockdown:
            raise InvalidParams("a lockdown must strictly reduce the infection rate")
        for name in ("rate_no_lockdown", "rate_lockdown"):
            if abs(getattr(self, name) - self.removal_rate) < RATE_GAP_EPS:
                raise NearSingularRates(f"{name} is within {RATE_GAP_EPS} of the removal rate")

    def infection_rate(self, action: int) -> float:
        return effective_infection_rate(self, action)

    @property
    def max_growth_rate(self) -> float:
        """Largest exponential growth rate of the infected, ``b_no - c``."""
        return self.rate_no_lockdown - self.removal_rate


class PandemicState(NamedTuple):
    """Susceptible, infected and removed counts at one instant."""

    s1: float
    s2: float
    s3: float

    @classmethod
    def initial(cls, population: float, infected: float) -> "PandemicState":
        return cls(population - infected, infected, 0.0)

    def total(self) -> float:
        return self.s1 + self.s2 + self.s3

    def is_valid(self, population: float, tol: float | None = None) -> bool:
        if tol is None:
            tol = POP_REL_TOL * population
        if abs(self.total() - population) > tol:
            return False
        return all(-tol <= v <= population + tol for v in self)


def _check_action(action: int) -> int:
    if action not in (0, 1):
        raise ValueError(f"lockdown action must be 0 or 1, got {action!r}")
    return int(action)


def effective_infection_rate(params: EpidemicParams, action: int) -> float:
    """Infection rate in force for one step.

    A lockdown (``action == 1``) selects the smaller of the two rates.
    """
    if _check_action(action):
        return params.rate_lockdown
    return params.rate_no_lockdown


def advance(s1: float, s2: float, population: float, b: float, c: float,
            duration: float, s3: float | None = None) -> tuple[float, float, float]:
    """Closed-form transition on raw floats; the hot path of every search.

    ``s3`` defaults to ``population - s1 - s2``; passing the known value keeps
    full relative precision when only a handful have been removed.
    """
    if s2 == 0.0:
        return s1, 0.0, population - s1
    if s1 <= 0.0:
        raise DegenerateState(f"s1={s1} with s2={s2} > 0")
    k = b - c
    if abs(k) < RATE_GAP_EPS:
        raise NearSingularRates(f"|b - c| = {abs(k)} < {RATE_GAP_EPS}")
    alive = s1 + s2
    base = population - alive if s3 is None else s3
    if duration == 0.0:
        return s1, s2, base
    e1 = b / k
    e3 = c / k
    kd = k * duration
    g = math.exp(kd)
    u0 = s2 / s1
    # (1 + u0)^e1 (1 + u0 g)^-e1, evaluated in log space
    factor = math.exp(e1 * (math.log1p(u0) - math.log1p(u0 * g)))
    n1 = s1 * factor
    n2 = s2 * factor * g
    # N - A^e1 (s1 + s2 g)^-e3 with A = s1 + s2, rewritten via e1 = 1 + e3 as
    # (N - A) + A (1 - (A / (s1 + s2 g))^e3) so small removals keep full precision
    removed = -alive * math.expm1(-e3 * math.log1p(s2 * math.expm1(kd) / alive))
    n3 = base + removed
    return n1, n2, n3


def closed_form_step(state: PandemicState, params: EpidemicParams, action: int,
                     duration: float) -> PandemicState:
    """Advance ``state`` by ``duration`` days under the given lockdown action.

    Raises:
        DegenerateState: ``s1 <= 0`` while ``s2 > 0``.
        NearSingularRates: the selected infection rate equals ``c``.
    """
    if duration < 0:
        raise ValueError(f"duration must be non-negative, got {duration}")
    if duration == 0:
        return PandemicState(*state)
    b = effective_infection_rate(params, action)
    return PandemicState(*advance(state.s1, state.s2, params.population, b,
                                  params.removal_rate, duration, state.s3))


def within_step_state(state: PandemicState, params: EpidemicParams, action: int,
                      duration: float, tau: float) -> PandemicState:
    """Exact state ``tau`` days into a step of length ``duration``."""
    if not 0.0 <= tau <= duration:
        raise ValueError(f"tau={tau} outside [0, {duration}]")
    return closed_form_step(state, params, action, tau)


def peak_time(s1: float, s2: float, b: float, c: float, duration: float) -> float:
    """Time in ``[0, duration]`` at which the infected count is largest.

    The infected curve is unimodal: ``y' > 0`` exactly while ``b/(1 + u) > c``,
    and ``u`` is monotone, so the stationary point solves ``u = b/c - 1``.
    """
    if s2 <= 0.0 or b <= c:
        return 0.0
    if s1 <= 0.0:
        raise DegenerateState(f"s1={s1} with s2={s2} > 0")
    if c <= 0.0:
        return duration
    u0 = s2 / s1
    u_star = b / c - 1.0
    if u0 >= u_star:
        return 0.0
    return min(duration, math.log(u_star / u0) / (b - c))


def step_peak(s1: float, s2: float, population: float, b: float, c: float,
              duration: float) -> tuple[float, float]:
    """``(tau, s2(tau))`` maximizing the infected count within one step."""
    tau = peak_time(s1, s2, b, c, duration)
    if tau == 0.0:
        return 0.0, s2
    return tau, advance(s1, s2, population, b, c, tau)[1]


def infected_peak_within_step(state: PandemicState, params: EpidemicParams, action: int,
                              duration: float) -> tuple[float, float]:
    """Maximizer and maximum of ``s2`` over ``[0, duration]``."""
    b = effective_infection_rate(params, action)
    return step_peak(state.s1, state.s2, params.population, b, params.removal_rate, duration)


def _rk4_steps(x, y, z, b, c, h, n):
    # Plain arithmetic so the same loop serves floats and numpy arrays.
    h2 = 0.5 * h
    h6 = h / 6.0
    for _ in range(n):
        f1 = b * x * y / (x + y)
        dx1, dy1 = -f1, f1 - c * y
        xa, ya = x + h2 * dx1, y + h2 * dy1
        f2 = b * xa * ya / (xa + ya)
        dx2, dy2 = -f2, f2 - c * ya
        xb, yb = x + h2 * dx2, y + h2 * dy2
        f3 = b * xb * yb / (xb + yb)
        dx3, dy3 = -f3, f3 - c * yb
        xc, yc = x + h * dx3, y + h * dy3
        f4 = b * xc * yc / (xc + yc)
        dx4, dy4 = -f4, f4 - c * yc
        z = z + h6 * c * (y + 2.0 * ya + 2.0 * yb + yc)
        x = x + h6 * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        y = y + h6 * (dy1 + 2.0 * dy2 + 2.0 * dy3 + dy4)
    return x, y, z


def _n_steps(duration: float, step_size: float) -> int:
    return max(1, math.ceil(duration / step_size - 1e-9))


def ode_oracle_integrate(state: PandemicState, params: EpidemicParams, action: int,
                         duration: float, step_size: float = 1e-3) -> PandemicState:
    """Classical fixed-step RK4 integration of the SIR system.

    This exists only as an independent check on :func:`closed_form_step`. The
    step actually taken is ``duration / ceil(duration / step_size)``.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    b = effective_infection_rate(params, action)
    x, y, z = (float(v) for v in state)
    if duration == 0 or y == 0.0:
        return PandemicState(x, y, z)
    n = _n_steps(duration, step_size)
    try:
        x, y, z = _rk4_steps(x, y, z, b, params.removal_rate, duration / n, n)
    except ZeroDivisionError as exc:
        raise DegenerateState("x + y reached zero during integration") from exc
    return PandemicState(x, y, z)


def ode_oracle_integrate_batch(s1, s2, s3, b, c, duration, step_size: float = 1e-3):
    """Vectorized RK4 over many independent states at once.

    All arguments broadcast against each other. Every element takes the same
    number of steps, ``ceil(max(duration) / step_size)``, so each element's
    step is at most ``step_size``.

    Returns:
        Tuple of arrays ``(s1, s2, s3)`` after ``duration`` days.
    """
    s1, s2, s3, b, c, duration = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (s1, s2, s3, b, c, duration)))
    n = _n_steps(float(np.max(duration)), step_size)
    with np.errstate(divide="ignore", invalid="ignore"):
        x, y, z = _rk4_steps(s1.copy(), s2.copy(), s3.copy(), b, c, duration / n, n)
    bad = ~np.isfinite(x) | ~np.isfinite(y)
    if np.any(bad & (s2 > 0)):
        raise DegenerateState("x + y reached zero during integration")
    # zero-infected elements produce 0/0 above; they are fixed points
    still = s2 == 0
    x = np.where(still, s1, x)
    y = np.where(still, 0.0, y)
    z = np.where(still, s3, z)
    return x, y, z


def ode_oracle_with_peak(state: PandemicState, params: EpidemicParams, action: int,
                         duration: float, step_size: float = 1e-3) -> tuple[PandemicState, float]:
    """RK4 integration that also reports the largest infected value at any grid point."""
    b = effective_infection_rate(params, action)
    c = params.removal_rate
    x, y, z = (float(v) for v in state)
    peak = y
    if duration == 0 or y == 0.0:
        return PandemicState(x, y, z), peak
    n = _n_steps(duration, step_size)
    h = duration / n
    try:
        for _ in range(n):
            x, y, z = _rk4_steps(x, y, z, b, c, h, 1)
            if y > peak:
                peak = y
    except ZeroDivisionError as exc:
        raise DegenerateState("x + y reached zero during integration") from exc
    return PandemicState(x, y, z), peak
