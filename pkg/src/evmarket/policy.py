"""Incentive scenarios, fleet projection, and share-target evaluation.

A scenario scales two channels inside a bounded policy window: the purchase
rebate (which lowers the effective average EV price and with it the burden
regressor) and the station rebate percentage (clamped to [0, 1]). Outside
the window the baseline values pass through unchanged, so multipliers of 1.0
reproduce the baseline trajectory bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import ExogenousYear, MarketState, simulate_horizon
from .errors import (
    AlignmentError,
    DomainError,
    ScenarioInfeasibleError,
    SingularDesignError,
)
from .panel import DEFAULT_DELTA, DEFAULT_EPSILON, Panel

#: annual sales over fleet, from the 437k-of-6.22M projection default
DEFAULT_TURNOVER = 437_000.0 / 6_220_000.0

DEFAULT_BASELINE_REBATE = 7_500.0


@dataclass(frozen=True)
class Scenario:
    """Incentive multipliers applied inside a policy window."""

    name: str
    demand_rebate_multiplier: float = 1.0
    supply_rebate_multiplier: float = 1.0
    window_start: int = 2024
    window_end: int = 2035
    baseline_purchase_rebate: float = DEFAULT_BASELINE_REBATE

    def __post_init__(self):
        if self.demand_rebate_multiplier < 0 or self.supply_rebate_multiplier < 0:
            raise DomainError("scenario multipliers must be >= 0",
                              scenario=self.name)
        if self.window_start > self.window_end:
            raise DomainError("window_start must be <= window_end",
                              scenario=self.name)
        if self.baseline_purchase_rebate < 0:
            raise DomainError("baseline_purchase_rebate must be >= 0",
                              scenario=self.name)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "demand_rebate_multiplier": self.demand_rebate_multiplier,
            "supply_rebate_multiplier": self.supply_rebate_multiplier,
            "window": [self.window_start, self.window_end],
            "baseline_purchase_rebate": self.baseline_purchase_rebate,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Scenario":
        try:
            window = data.get("window", [2024, 2035])
            return cls(
                name=str(data["name"]),
                demand_rebate_multiplier=float(
                    data.get("demand_rebate_multiplier", 1.0)),
                supply_rebate_multiplier=float(
                    data.get("supply_rebate_multiplier", 1.0)),
                window_start=int(window[0]),
                window_end=int(window[1]),
                baseline_purchase_rebate=float(
                    data.get("baseline_purchase_rebate",
                             DEFAULT_BASELINE_REBATE)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as err:
            raise DomainError(f"malformed scenario JSON: {err}") from err

    @classmethod
    def from_json_file(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def charger_cost(year: int, start_year: int = 2018, start_cost: float = 7500.0,
                 end_year: int = 2020, end_cost: float = 6000.0,
                 floor: float = 3000.0) -> float:
    """Per-unit charger cost: linear decline through two anchors, floored."""
    slope = (end_cost - start_cost) / (end_year - start_year)
    return max(start_cost + slope * (year - start_year), floor)


@dataclass(frozen=True)
class FleetProjection:
    """Linear vehicles-vs-population fit plus a projected population path."""

    slope: float
    intercept: float
    population_path: dict[int, float]
    turnover_fraction: float = DEFAULT_TURNOVER

    def __post_init__(self):
        if not 0.0 < self.turnover_fraction < 1.0:
            raise DomainError("turnover_fraction must be in (0, 1)",
                              turnover=self.turnover_fraction)

    def vehicles(self, year: int) -> float:
        if year not in self.population_path:
            raise AlignmentError(
                f"population path does not cover year {year}", year=year)
        v = self.slope * self.population_path[year] + self.intercept
        if v <= 0:
            raise DomainError(f"projected fleet is non-positive in {year}",
                              year=year, vehicles=v)
        return v

    def annual_sales(self, year: int) -> float:
        return self.turnover_fraction * self.vehicles(year)


def project_fleet(history, future_population: dict[int, float],
                  sales_history=None,
                  turnover_fraction: float | None = None) -> FleetProjection:
    """Least-squares vehicles-on-population line plus a turnover fraction.

    Parameters
    ----------
    history : sequence of (population, vehicles) pairs
        Needs at least two distinct population values.
    future_population : dict year -> population
    sales_history : sequence of (sales, fleet) pairs, optional
        When given, turnover is the mean sales/fleet ratio; otherwise the
        documented default applies.
    """
    pops = np.array([p for p, _ in history], dtype=float)
    vehs = np.array([v for _, v in history], dtype=float)
    if len(pops) < 2 or pops.max() == pops.min():
        raise SingularDesignError(
            "fleet history needs >= 2 points with distinct populations",
            n_points=len(pops))
    x = pops - pops.mean()
    slope = float((x @ (vehs - vehs.mean())) / (x @ x))
    intercept = float(vehs.mean() - slope * pops.mean())
    if turnover_fraction is None:
        if sales_history:
            ratios = [s / f for s, f in sales_history]
            turnover_fraction = float(np.mean(ratios))
        else:
            turnover_fraction = DEFAULT_TURNOVER
    return FleetProjection(slope=slope, intercept=intercept,
                           population_path=dict(future_population),
                           turnover_fraction=turnover_fraction)


def apply_scenario(scenario: Scenario, year: int, exog: ExogenousYear
                   ) -> tuple[ExogenousYear, bool]:
    """Adjusted exogenous values for one year plus a rebate-clamped flag.

    Inside the window the purchase-rebate increment beyond baseline lowers
    the effective average EV price (the burden channel) and the station
    rebate percentage scales by its multiplier, clamped to [0, 1]. Outside
    the window the input is returned untouched.
    """
    if not scenario.window_start <= year <= scenario.window_end:
        return exog, False
    extra = scenario.baseline_purchase_rebate * (
        scenario.demand_rebate_multiplier - 1.0)
    price = exog.avg_ev_price - extra
    if price <= 0:
        raise ScenarioInfeasibleError(
            f"scenario {scenario.name!r} drives the effective EV price to "
            f"{price:.2f} in {year}", scenario=scenario.name, year=year,
            price=price)
    raw = exog.rebate_pct * scenario.supply_rebate_multiplier
    clamped = raw < 0.0 or raw > 1.0
    rebate = min(max(raw, 0.0), 1.0)
    return replace(exog, avg_ev_price=price, rebate_pct=rebate), clamped


def baseline_exog_path(seed_exog: ExogenousYear, seed_year: int,
                       extend_rebate_with_cost_path: bool = True,
                       oil_path: dict[int, float] | None = None):
    """Baseline exogenous path holding the seed year's values.

    Oil price follows ``oil_path`` where provided. With the cost-path
    extension the seed rebate percentage is converted to an implied dollar
    rebate against the seed year's charger cost and re-expressed against the
    (declining, floored) cost in later years.
    """
    implied_dollars = seed_exog.rebate_pct * charger_cost(seed_year)

    def path(year: int) -> ExogenousYear:
        ex = seed_exog
        if oil_path is not None and year in oil_path:
            ex = replace(ex, oil_price=oil_path[year])
        if extend_rebate_with_cost_path:
            pct = min(max(implied_dollars / charger_cost(year), 0.0), 1.0)
            ex = replace(ex, rebate_pct=pct)
        return ex

    return path


def aggregate_county(panel: Panel, year: int | None = None
                     ) -> tuple[MarketState, ExogenousYear]:
    """Collapse one panel year to a county state and exogenous snapshot.

    Counts (sales, stocks, stations, populations, parking) sum across zips;
    the burden inputs (average price, median income) use income-weighted
    means; oil price and rebate percentage average.
    """
    if year is None:
        year = max(panel.years)
    recs = panel.records_for_year(year)
    if not recs:
        raise DomainError(f"panel has no records for year {year}", year=year)
    w = np.array([r.median_income for r in recs])
    price = float(np.average([r.avg_ev_price for r in recs], weights=w))
    income = float(np.average(w, weights=w))
    state = MarketState(
        year=year,
        sales=sum(r.ev_sales for r in recs),
        ev_stock=sum(r.ev_stock for r in recs),
        station_stock=sum(r.station_stock for r in recs),
    )
    exog = ExogenousYear(
        oil_price=float(np.mean([r.oil_price for r in recs])),
        white_pop=sum(r.white_pop for r in recs),
        asian_pop=sum(r.asian_pop for r in recs),
        avg_ev_price=price,
        median_income=income,
        parking_lots=sum(r.parking_lots for r in recs),
        rebate_pct=float(np.mean([r.rebate_pct for r in recs])),
    )
    return state, exog


@dataclass
class Trajectory:
    """Simulated states plus the EV share of the projected fleet."""

    scenario: Scenario
    states: list[MarketState]
    ev_share: list[float]
    warnings: list[str] = field(default_factory=list)

    @property
    def years(self) -> list[int]:
        return [s.year for s in self.states]

    def state_in(self, year: int) -> MarketState:
        for s in self.states:
            if s.year == year:
                return s
        raise AlignmentError(f"trajectory does not cover year {year}",
                             year=year, scenario=self.scenario.name)

    def share_in(self, year: int) -> float:
        for s, share in zip(self.states, self.ev_share):
            if s.year == year:
                return share
        raise AlignmentError(f"trajectory does not cover year {year}",
                             year=year, scenario=self.scenario.name)

    def to_csv(self, float_fmt=repr) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["year", "sales", "ev_stock", "station_stock",
                         "ev_share"])
        for s, share in zip(self.states, self.ev_share):
            writer.writerow([s.year, float_fmt(s.sales), float_fmt(s.ev_stock),
                             float_fmt(s.station_stock), float_fmt(share)])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_json_dict(),
            "states": [
                {"year": s.year, "sales": s.sales, "ev_stock": s.ev_stock,
                 "station_stock": s.station_stock, "ev_share": share}
                for s, share in zip(self.states, self.ev_share)
            ],
            "warnings": list(self.warnings),
        }


def forecast_scenario(scenario: Scenario, demand, supply,
                      projection: FleetProjection, initial_state: MarketState,
                      base_exog, horizon: int,
                      delta: float = DEFAULT_DELTA,
                      saturation_bounds: tuple[float, float] | None = None,
                      epsilon: float = DEFAULT_EPSILON) -> Trajectory:
    """Run one scenario over ``horizon`` years from ``initial_state``.

    ``base_exog`` is a single ExogenousYear (held constant) or a callable
    year -> ExogenousYear; scenario adjustments are applied on top per year.
    """
    base = base_exog if callable(base_exog) else (lambda _y: base_exog)
    warnings: list[str] = []

    def exog_for(year: int) -> ExogenousYear:
        adjusted, clamped = apply_scenario(scenario, year, base(year))
        if clamped:
            warnings.append(f"rebate_pct clamped to [0, 1] in {year}")
        return adjusted

    states = simulate_horizon(initial_state, horizon, demand, supply,
                              exog_for, delta=delta,
                              saturation_bounds=saturation_bounds,
                              epsilon=epsilon)
    shares = [s.ev_stock / projection.vehicles(s.year) for s in states]
    for s, share in zip(states, shares):
        if share > 1.0:
            warnings.append(
                f"ev_share {share:.3f} exceeds 1 in {s.year} (not clamped)")
    return Trajectory(scenario=scenario, states=states, ev_share=shares,
                      warnings=warnings)


def forecast_from_panel(scenario: Scenario, panel: Panel, demand, supply,
                        projection: FleetProjection, horizon: int,
                        seed_year: int | None = None,
                        delta: float = DEFAULT_DELTA,
                        extend_rebate_with_cost_path: bool = True,
                        oil_path: dict[int, float] | None = None) -> Trajectory:
    """Aggregate the panel's seed year to a county state and forecast."""
    state, exog = aggregate_county(panel, seed_year)
    base = baseline_exog_path(
        exog, state.year,
        extend_rebate_with_cost_path=extend_rebate_with_cost_path,
        oil_path=oil_path)
    return forecast_scenario(scenario, demand, supply, projection, state,
                             base, horizon, delta=delta,
                             saturation_bounds=panel.saturation_bounds,
                             epsilon=panel.epsilon)


@dataclass
class ComparisonReport:
    """Aligned per-year sales and shares plus post-window drop metrics."""

    years: list[int]
    sales: dict[str, list[float]]
    shares: dict[str, list[float]]
    drop_metrics: dict[str, float | None]

    def to_csv(self, float_fmt=repr) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.sales)
        header = ["year"]
        for name in names:
            header += [f"{name}_sales", f"{name}_ev_share"]
        writer.writerow(header)
        for i, year in enumerate(self.years):
            row = [year]
            for name in names:
                row += [float_fmt(self.sales[name][i]),
                        float_fmt(self.shares[name][i])]
            writer.writerow(row)
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "years": list(self.years),
            "sales": {k: list(v) for k, v in self.sales.items()},
            "ev_share": {k: list(v) for k, v in self.shares.items()},
            "post_window_drop": dict(self.drop_metrics),
        }


def compare_scenarios(trajectories: list[Trajectory]) -> ComparisonReport:
    """Tabulate trajectories sharing one horizon; drop metric per scenario.

    The drop metric is the relative sales decline from the last window year
    to the first year after the window; None when the horizon does not cover
    both years.
    """
    if not trajectories:
        raise AlignmentError("no trajectories to compare")
    years = trajectories[0].years
    for t in trajectories[1:]:
        if t.years != years:
            raise AlignmentError(
                "trajectories do not share a horizon",
                expected=(years[0], years[-1]),
                got=(t.years[0], t.years[-1]), scenario=t.scenario.name)
    sales = {}
    shares = {}
    drops: dict[str, float | None] = {}
    for t in trajectories:
        name = t.scenario.name
        sales[name] = [s.sales for s in t.states]
        shares[name] = list(t.ev_share)
        we = t.scenario.window_end
        if we in years and (we + 1) in years:
            s_end = t.state_in(we).sales
            s_next = t.state_in(we + 1).sales
            drops[name] = (s_end - s_next) / s_end if s_end > 0 else None
        else:
            drops[name] = None
    return ComparisonReport(years=years, sales=sales, shares=shares,
                            drop_metrics=drops)
