"""Market evolution: annual fixed point, calibration, and coupled stepping.

The reduced form collapses the two estimated equations into one implicit
annual relation ``s = exp(c + k*log(s + delta*prev_stock))`` with
``k`` the product of the two cross-elasticities. The coupled stepper keeps
the equations separate: stations respond to the lagged install base, sales
respond to the new station level, and the install base accumulates with
survival fraction ``delta``. Station stock is floored at its previous level
(built infrastructure does not disappear when predicted levels dip).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from . import _kernels
from .errors import (
    AlignmentError,
    DomainError,
    EvMarketError,
    NonConvergenceError,
    SpecificationMismatchError,
)
from .estimator import INTERCEPT_NAME
from .modelspec import (
    COL_ASIAN,
    COL_BURDEN,
    COL_BURDEN_LOG,
    COL_EV_STOCK,
    COL_OIL,
    COL_PARKING,
    COL_REBATE,
    COL_SATURATION,
    COL_STATIONS,
    COL_WHITE,
)
from .panel import DEFAULT_DELTA, DEFAULT_EPSILON, SaturationNormalizer


@dataclass(frozen=True)
class DynamicsParams:
    """Reduced-form constants for the annual recursion."""

    c: float
    k: float
    delta: float = DEFAULT_DELTA
    tol: float = 1e-10
    max_iter: int = 2000

    def __post_init__(self):
        if not 0.0 <= self.k < 1.0:
            raise DomainError(
                f"k must be in [0, 1) for a contracting recursion, got {self.k}",
                k=self.k)
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError(f"delta must be in [0, 1], got {self.delta}")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")


@dataclass(frozen=True)
class MarketState:
    """County-level market state at the end of a calendar year."""

    year: int
    sales: float
    ev_stock: float
    station_stock: float

    def __post_init__(self):
        for name in ("sales", "ev_stock", "station_stock"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0",
                                  field=name, value=getattr(self, name))


@dataclass(frozen=True)
class ExogenousYear:
    """Exogenous inputs to one simulated year.

    ``saturation`` overrides the recomputed value when set; otherwise the
    stepper derives saturation from the lagged stocks and frozen bounds.
    """

    oil_price: float
    white_pop: float
    asian_pop: float
    avg_ev_price: float
    median_income: float
    parking_lots: float
    rebate_pct: float
    saturation: float | None = None


def solve_annual_fixed_point(params: DynamicsParams, prev_stock: float) -> float:
    """Annual sales solving ``s = exp(c + k*log(s + delta*prev_stock))``.

    Damped iteration with a bisection fallback; convergence means the
    residual is below ``tol * max(1, s)``.
    """
    if prev_stock < 0:
        raise DomainError("prev_stock must be >= 0", prev_stock=prev_stock)
    s, status, iters, resid = _kernels.fixed_point_sales(
        params.c, params.k, params.delta, float(prev_stock),
        params.tol, params.max_iter)
    if status == _kernels.FP_FAILED:
        raise NonConvergenceError(
            f"fixed point did not converge (residual {resid:.3e})",
            residual=float(resid), iterations=int(iters))
    return float(s)


def calibrate_constant(observed_sales: float, prev_stock: float, k: float,
                       delta: float = DEFAULT_DELTA) -> float:
    """Constant making ``observed_sales`` the annual fixed point.

    ``c = log(s) - k*log(s + delta*prev_stock)``; solving with this c
    reproduces the observation within the solver tolerance.
    """
    if observed_sales <= 0:
        raise DomainError("observed_sales must be positive to calibrate",
                          observed_sales=observed_sales)
    if prev_stock < 0:
        raise DomainError("prev_stock must be >= 0")
    if not 0.0 <= k < 1.0:
        raise DomainError("k must be in [0, 1)")
    if not 0.0 <= delta <= 1.0:
        raise DomainError("delta must be in [0, 1]")
    return math.log(observed_sales) - k * math.log(
        observed_sales + delta * prev_stock)


def _coeffs(model) -> Mapping[str, float]:
    return getattr(model, "coefficients", model)


def _require(coeffs: Mapping[str, float], names: list[str], side: str) -> None:
    missing = [n for n in names if n not in coeffs]
    if missing:
        raise SpecificationMismatchError(
            f"{side} coefficients missing {missing}", side=side,
            missing=missing)


def step_coupled_year(state: MarketState, demand, supply, exog: ExogenousYear,
                      delta: float = DEFAULT_DELTA,
                      saturation_bounds: tuple[float, float] | None = None,
                      epsilon: float = DEFAULT_EPSILON) -> MarketState:
    """Advance one year through the structural alternation.

    Stations first respond to the lagged install base, then sales respond to
    the new station level, then the install base accumulates. ``demand`` and
    ``supply`` are EstimationResults or plain ``{name: value}`` mappings.
    """
    d = _coeffs(demand)
    s = _coeffs(supply)
    _require(s, [INTERCEPT_NAME, COL_EV_STOCK, COL_PARKING, COL_SATURATION,
                 COL_REBATE], "supply")
    _require(d, [INTERCEPT_NAME, COL_STATIONS, COL_OIL, COL_WHITE, COL_ASIAN],
             "demand")
    if COL_BURDEN not in d and COL_BURDEN_LOG not in d:
        raise SpecificationMismatchError(
            f"demand coefficients missing {COL_BURDEN!r} (or its log form)",
            side="demand", missing=[COL_BURDEN])
    if exog.oil_price <= 0 or exog.avg_ev_price <= 0 or exog.median_income <= 0:
        raise DomainError("oil_price, avg_ev_price and median_income must be "
                          "positive", year=state.year + 1)
    if min(exog.white_pop, exog.asian_pop, exog.parking_lots) < 0:
        raise DomainError("populations and parking_lots must be >= 0",
                          year=state.year + 1)

    q_prev = state.ev_stock
    e_prev = state.station_stock

    sat = exog.saturation
    if sat is None:
        if saturation_bounds is None:
            sat = 0.0
        else:
            sat = SaturationNormalizer(*saturation_bounds, epsilon=epsilon
                                       ).saturation(q_prev, e_prev)

    log_e = (s[INTERCEPT_NAME]
             + s[COL_EV_STOCK] * math.log1p(q_prev)
             + s[COL_PARKING] * math.log1p(exog.parking_lots)
             + s[COL_SATURATION] * sat
             + s[COL_REBATE] * exog.rebate_pct)
    stations = max(math.expm1(log_e), e_prev)

    burden = exog.avg_ev_price / exog.median_income
    if COL_BURDEN in d:
        burden_term = d[COL_BURDEN] * burden
    else:
        burden_term = d[COL_BURDEN_LOG] * math.log(burden)
    log_s = (d[INTERCEPT_NAME]
             + d[COL_STATIONS] * math.log1p(stations)
             + d[COL_OIL] * math.log(exog.oil_price)
             + d[COL_WHITE] * math.log1p(exog.white_pop)
             + d[COL_ASIAN] * math.log1p(exog.asian_pop)
             + burden_term)
    sales = max(math.expm1(log_s), 0.0)

    ev_stock = sales + delta * q_prev
    return MarketState(year=state.year + 1, sales=sales, ev_stock=ev_stock,
                       station_stock=stations)


ExogPath = Callable[[int], ExogenousYear] | Sequence[ExogenousYear] | Mapping[int, ExogenousYear]


def _resolve_exog(exog: ExogPath, step_index: int, year: int) -> ExogenousYear:
    if callable(exog):
        return exog(year)
    if isinstance(exog, Mapping):
        if year not in exog:
            raise AlignmentError(f"exogenous path does not cover year {year}",
                                 year=year)
        return exog[year]
    if step_index >= len(exog):
        raise AlignmentError(f"exogenous path does not cover year {year}",
                             year=year)
    return exog[step_index]


def simulate_horizon(initial: MarketState, years: int, demand, supply,
                     exog: ExogPath, delta: float = DEFAULT_DELTA,
                     saturation_bounds: tuple[float, float] | None = None,
                     epsilon: float = DEFAULT_EPSILON) -> list[MarketState]:
    """Simulate ``years`` coupled steps; index 0 is the initial state.

    Step errors are re-raised with the failing year attached to their
    context.
    """
    if years < 0:
        raise DomainError("years must be >= 0", years=years)
    states = [initial]
    for i in range(years):
        year = initial.year + i + 1
        ex = _resolve_exog(exog, i, year)
        try:
            states.append(step_coupled_year(
                states[-1], demand, supply, ex, delta=delta,
                saturation_bounds=saturation_bounds, epsilon=epsilon))
        except EvMarketError as err:
            err.context.setdefault("year", year)
            raise
    return states


def reduced_form_trajectory(params: DynamicsParams, initial: MarketState,
                            years: int) -> list[MarketState]:
    """Iterate the reduced-form annual fixed point forward.

    The reduced form carries no station state; the initial station stock is
    copied through unchanged.
    """
    if years < 0:
        raise DomainError("years must be >= 0", years=years)
    sales, stocks, status, failed = _kernels.reduced_form_path(
        params.c, params.k, params.delta, float(initial.ev_stock),
        int(years), params.tol, params.max_iter)
    if status == _kernels.FP_FAILED:
        raise NonConvergenceError(
            "reduced-form recursion failed to converge",
            year=initial.year + int(failed) + 1)
    states = [initial]
    for i in range(years):
        states.append(MarketState(
            year=initial.year + i + 1,
            sales=float(sales[i]),
            ev_stock=float(stocks[i]),
            station_stock=initial.station_stock,
        ))
    return states
