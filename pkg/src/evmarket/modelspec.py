"""Column bindings for the demand and supply equations.

Demand regresses log EV sales on the (endogenous) log station stock plus oil
price, demographics, and the affordability burden; supply regresses log
station stock on the (endogenous) log EV install base plus parking capacity,
market saturation, and the station rebate percentage. Both are
just-identified through the parking-lots x lagged-external-stations
instrument.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, PipelineOrderError
from .estimator import (
    INTERCEPT_NAME,
    DesignMatrix,
    EstimationResult,
    fit_gmm,
    fit_ols,
    fit_tsls,
)
from .panel import Panel

RESPONSE_DEMAND = "ln(EV Sales)"
COL_STATIONS = "ln(Charging station)"
COL_OIL = "ln(oil_price)"
COL_WHITE = "ln(White Population)"
COL_ASIAN = "ln(Asian Population)"
COL_BURDEN = "EV_Burden"
COL_BURDEN_LOG = "ln(EV_Burden)"

RESPONSE_SUPPLY = "ln(Charging station)"
COL_EV_STOCK = "ln(EV Stock)"
COL_PARKING = "ln(parking lot)"
COL_SATURATION = "Saturation"
COL_REBATE = "Rebate Percentage"

COL_INSTRUMENT = "instrument"

#: demand regressor order mirrors the output table layout
DEMAND_COLUMNS = (COL_STATIONS, COL_OIL, COL_WHITE, COL_ASIAN, COL_BURDEN)
SUPPLY_COLUMNS = (COL_EV_STOCK, COL_PARKING, COL_SATURATION, COL_REBATE)

METHODS = ("ols", "tsls", "gmm")


def _derived_rows(panel: Panel):
    rows = panel.derived_records()
    if not rows:
        raise PipelineOrderError(
            "panel has no derived records; load at least two consecutive "
            "years per zip before building designs")
    return rows


def _scale_column(col: np.ndarray) -> np.ndarray:
    # Instrument levels are count products (~1e6+); unit-variance scaling
    # keeps instrument moment matrices well conditioned without changing any
    # IV estimate.
    sd = col.std()
    return col / sd if sd > 0 else col


def build_demand_design(panel: Panel, burden_log: bool = False) -> DesignMatrix:
    """Design for the EV-sales equation; station stock is endogenous.

    ``burden_log`` switches the affordability regressor from its linear form
    (the default reading of the reported coefficient) to log form.
    """
    rows = _derived_rows(panel)
    burden_name = COL_BURDEN_LOG if burden_log else COL_BURDEN
    y = np.array([math.log1p(rec.ev_sales) for rec, _ in rows])
    burden = np.array([d.burden for _, d in rows])
    if burden_log:
        burden = np.log(burden)
    X = np.column_stack([
        [math.log1p(rec.station_stock) for rec, _ in rows],
        [math.log(rec.oil_price) for rec, _ in rows],
        [math.log1p(rec.white_pop) for rec, _ in rows],
        [math.log1p(rec.asian_pop) for rec, _ in rows],
        burden,
        np.ones(len(rows)),
    ])
    names = [COL_STATIONS, COL_OIL, COL_WHITE, COL_ASIAN, burden_name,
             INTERCEPT_NAME]
    instrument = _scale_column(np.array([d.instrument for _, d in rows]))
    Z = np.column_stack([instrument, X[:, 1:]])
    z_names = [COL_INSTRUMENT] + names[1:]
    return DesignMatrix(response=y, regressors=X, regressor_names=names,
                        instruments=Z, instrument_names=z_names,
                        include_intercept=True, response_name=RESPONSE_DEMAND)


def build_supply_design(panel: Panel) -> DesignMatrix:
    """Design for the station-stock equation; EV stock is endogenous."""
    rows = _derived_rows(panel)
    y = np.array([math.log1p(rec.station_stock) for rec, _ in rows])
    X = np.column_stack([
        [math.log1p(rec.ev_stock) for rec, _ in rows],
        [math.log1p(rec.parking_lots) for rec, _ in rows],
        [d.saturation for _, d in rows],
        [rec.rebate_pct for rec, _ in rows],
        np.ones(len(rows)),
    ])
    names = [COL_EV_STOCK, COL_PARKING, COL_SATURATION, COL_REBATE,
             INTERCEPT_NAME]
    instrument = _scale_column(np.array([d.instrument for _, d in rows]))
    Z = np.column_stack([instrument, X[:, 1:]])
    z_names = [COL_INSTRUMENT] + names[1:]
    return DesignMatrix(response=y, regressors=X, regressor_names=names,
                        instruments=Z, instrument_names=z_names,
                        include_intercept=True, response_name=RESPONSE_SUPPLY)


def _dispatch_fit(design: DesignMatrix, method: str, endogenous: list[str],
                  robust: str) -> EstimationResult:
    method = method.lower()
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}", method=method)
    instr = design.instruments[:, 0]
    degenerate = instr.max() == instr.min()
    if method == "ols" or degenerate:
        result = fit_ols(design, robust=robust)
        if degenerate:
            result.warnings.append(
                "weak first stage: excluded instrument is constant "
                "(external station sums carry no variation)"
                + ("; fell back to OLS" if method != "ols" else ""))
            result.first_stage_f = 0.0
        return result
    if method == "tsls":
        return fit_tsls(design, endogenous, robust=robust)
    return fit_gmm(design, endogenous, steps=2, robust=robust)


def estimate_demand(panel: Panel, method: str = "gmm",
                    burden_log: bool = False,
                    robust: str = "HC0") -> EstimationResult:
    """Fit the demand equation; the station coefficient is the elasticity
    of EV sales with respect to public charging stock."""
    design = build_demand_design(panel, burden_log=burden_log)
    return _dispatch_fit(design, method, [COL_STATIONS], robust)


def estimate_supply(panel: Panel, method: str = "gmm",
                    robust: str = "HC0") -> EstimationResult:
    """Fit the supply equation; the EV-stock coefficient is the elasticity
    of station stock with respect to the install base."""
    design = build_supply_design(panel)
    return _dispatch_fit(design, method, [COL_EV_STOCK], robust)


def describe_bindings(burden_log: bool = False) -> dict:
    """Audit map of every bound column, for the ``describe`` CLI command."""
    burden_name = COL_BURDEN_LOG if burden_log else COL_BURDEN
    burden_src = "log(avg_ev_price / median_income)" if burden_log else \
        "avg_ev_price / median_income"
    return {
        "demand": {
            "response": {RESPONSE_DEMAND: "log1p(ev_sales)"},
            "regressors": {
                COL_STATIONS: "log1p(station_stock)",
                COL_OIL: "log(oil_price)",
                COL_WHITE: "log1p(white_pop)",
                COL_ASIAN: "log1p(asian_pop)",
                burden_name: burden_src,
                INTERCEPT_NAME: "1",
            },
            "endogenous": [COL_STATIONS],
            "instruments": {
                COL_INSTRUMENT:
                    "parking_lots * lagged out-of-zip station total "
                    "(scaled to unit variance)",
                "...": "all exogenous regressors",
            },
        },
        "supply": {
            "response": {RESPONSE_SUPPLY: "log1p(station_stock)"},
            "regressors": {
                COL_EV_STOCK: "log1p(ev_stock)",
                COL_PARKING: "log1p(parking_lots)",
                COL_SATURATION:
                    "minmax(log1p(lag_ev_stock) / "
                    "max(log1p(lag_station_stock), epsilon))",
                COL_REBATE: "rebate_pct",
                INTERCEPT_NAME: "1",
            },
            "endogenous": [COL_EV_STOCK],
            "instruments": {
                COL_INSTRUMENT:
                    "parking_lots * lagged out-of-zip station total "
                    "(scaled to unit variance)",
                "...": "all exogenous regressors",
            },
        },
        "notes": {
            "log_convention":
                "count variables use log(x + 1); prices and incomes use "
                "log(x)",
            "rows": "records whose (zip, year-1) exists in the panel",
        },
    }
