"""Synthetic panels with known coefficients and controllable endogeneity.

The generator simulates the two-equation system forward year by year,
solving the within-year simultaneity between sales and stations exactly, so
the estimating equations hold with the drawn errors by construction. A
latent zip-year shock enters the demand error with weight one and the
station equation with weight ``endogeneity_rho``; the simultaneity of the
install base makes the OLS station elasticity sit above the IV estimate for
moderate negative rho.

One wrinkle: the generator's supply equation uses the raw lagged log-stock
ratio, while estimation min-max normalizes that ratio over the realized
panel. The normalization is affine, so the implied truth for the estimated
saturation coefficient is ``raw_coef * (max - min)`` with a matching
intercept shift; :func:`implied_supply_truth` computes it per panel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, ValidationError
from .estimator import INTERCEPT_NAME
from .modelspec import (
    COL_ASIAN,
    COL_BURDEN,
    COL_EV_STOCK,
    COL_OIL,
    COL_PARKING,
    COL_REBATE,
    COL_SATURATION,
    COL_STATIONS,
    COL_WHITE,
)
from .panel import (
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    Panel,
    PanelRecord,
    saturation_ratio,
)

#: key for the raw-ratio saturation coefficient in the true supply vector
RAW_SATURATION = "saturation_ratio"

DEFAULT_DEMAND_TRUTH = {
    INTERCEPT_NAME: 1.6,
    COL_STATIONS: 0.36,
    COL_OIL: 0.85,
    COL_WHITE: 0.13,
    COL_ASIAN: 0.26,
    COL_BURDEN: -3.2,
}

# Parking enters at 0.25 (not the tiny published-scale value) so the
# parking-based instrument has a strong first stage on small panels.
DEFAULT_SUPPLY_TRUTH = {
    INTERCEPT_NAME: -2.5,
    COL_EV_STOCK: 0.5,
    COL_PARKING: 0.25,
    RAW_SATURATION: 0.8,
    COL_REBATE: 1.77,
}


@dataclass
class SynthConfig:
    """Ground truth and noise structure for one synthetic panel."""

    n_zips: int = 50
    n_years: int = 6
    true_demand_coeffs: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_DEMAND_TRUTH))
    true_supply_coeffs: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_SUPPLY_TRUTH))
    endogeneity_rho: float = 0.0
    noise_sd: float = 0.25
    seed: int = 0
    delta: float = DEFAULT_DELTA
    first_year: int = 2015

    def validate(self) -> None:
        if self.n_zips * (self.n_years - 1) < 50:
            raise ValidationError(
                "need n_zips * (n_years - 1) >= 50 lagged observations",
                n_zips=self.n_zips, n_years=self.n_years)
        if not -1.0 <= self.endogeneity_rho <= 1.0:
            raise ValidationError("endogeneity_rho must be in [-1, 1]",
                                  rho=self.endogeneity_rho)
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ValidationError("delta must be in [0, 1]")
        required_d = set(DEFAULT_DEMAND_TRUTH)
        required_s = set(DEFAULT_SUPPLY_TRUTH)
        if set(self.true_demand_coeffs) != required_d:
            raise ValidationError(
                f"true_demand_coeffs must have keys {sorted(required_d)}")
        if set(self.true_supply_coeffs) != required_s:
            raise ValidationError(
                f"true_supply_coeffs must have keys {sorted(required_s)}")
        k = (self.true_demand_coeffs[COL_STATIONS]
             * self.true_supply_coeffs[COL_EV_STOCK])
        if not 0.0 <= k < 1.0:
            raise DomainError(
                f"cross-elasticity product k = {k:.4f} must be in [0, 1) "
                "for a contracting system", k=k)


def generate_panel(config: SynthConfig) -> Panel:
    """Simulate the structural system forward; deterministic per seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    nz, nt = config.n_zips, config.n_years
    d = config.true_demand_coeffs
    s = config.true_supply_coeffs
    k = d[COL_STATIONS] * s[COL_EV_STOCK]

    # Time-invariant zip attributes; parking is drawn once per zip.
    parking = np.exp(rng.normal(math.log(800.0), 0.5, nz))
    white = np.exp(rng.normal(math.log(20_000.0), 0.6, nz))
    asian = np.exp(rng.normal(math.log(8_000.0), 0.7, nz))
    income = np.exp(rng.normal(math.log(70_000.0), 0.35, nz))

    oil = 3.5 * 1.04 ** np.arange(nt) * np.exp(rng.normal(0.0, 0.05, nt))
    rebate = np.minimum(0.12 + 0.03 * np.arange(nt), 0.95)
    price = (52_000.0 * 0.985 ** np.arange(nt)[None, :]
             * np.exp(rng.normal(0.0, 0.03, (nz, nt))))

    sales = np.zeros((nz, nt))
    stock = np.zeros((nz, nt))
    stations = np.zeros((nz, nt))
    sales[:, 0] = np.exp(rng.normal(math.log(150.0), 0.5, nz))
    stock[:, 0] = 3.0 * sales[:, 0]
    stations[:, 0] = np.exp(rng.normal(math.log(40.0), 0.6, nz))

    log1p_parking = np.log1p(parking)
    demand_exog = (d[INTERCEPT_NAME]
                   + d[COL_WHITE] * np.log1p(white)
                   + d[COL_ASIAN] * np.log1p(asian))

    for t in range(1, nt):
        eta = rng.normal(0.0, 0.5 * config.noise_sd, nz)
        eps = rng.normal(0.0, config.noise_sd, nz)
        nu = rng.normal(0.0, 0.5 * config.noise_sd, nz)
        u = eps + eta
        w = nu + config.endogeneity_rho * eta

        ratio = np.array([
            saturation_ratio(stock[z, t - 1], stations[z, t - 1],
                             DEFAULT_EPSILON)
            for z in range(nz)
        ])
        supply_part = (s[INTERCEPT_NAME]
                       + s[COL_PARKING] * log1p_parking
                       + s[RAW_SATURATION] * ratio
                       + s[COL_REBATE] * rebate[t]
                       + w)
        burden = price[:, t] / income
        demand_part = (demand_exog
                       + d[COL_OIL] * math.log(oil[t])
                       + d[COL_BURDEN] * burden
                       + u)
        c_arr = demand_part + d[COL_STATIONS] * supply_part

        # y = sales + 1 solves y = exp(c + k*log(y + delta*Q_prev))
        y, n_failed = _kernels.coupled_sales_batch(
            c_arr, k, config.delta, stock[:, t - 1], 1e-12, 5000)
        if n_failed:
            raise DomainError(
                "synthetic simultaneity solve failed; coefficients push the "
                "system outside its stable range", year_index=t)
        sales[:, t] = np.maximum(y - 1.0, 0.0)
        stock[:, t] = sales[:, t] + config.delta * stock[:, t - 1]
        stations[:, t] = np.maximum(
            np.expm1(supply_part + s[COL_EV_STOCK] * np.log1p(stock[:, t])),
            0.0)

    records = []
    for z in range(nz):
        zip_code = f"z{z:04d}"
        for t in range(nt):
            records.append(PanelRecord(
                zip=zip_code,
                year=config.first_year + t,
                ev_sales=float(sales[z, t]),
                ev_stock=float(stock[z, t]),
                station_stock=float(stations[z, t]),
                avg_ev_price=float(price[z, t]),
                median_income=float(income[z]),
                white_pop=float(white[z]),
                asian_pop=float(asian[z]),
                oil_price=float(oil[t]),
                parking_lots=float(parking[z]),
                rebate_pct=float(rebate[t]),
            ))
    return Panel.from_records(records, epsilon=DEFAULT_EPSILON)


def implied_supply_truth(config: SynthConfig, panel: Panel) -> dict[str, float]:
    """True supply coefficients in estimation (normalized) terms.

    With bounds (lo, hi) of the raw ratio over the panel's lagged records,
    ``raw_coef * ratio == raw_coef*(hi-lo) * saturation + raw_coef*lo``.
    """
    s = config.true_supply_coeffs
    if panel.saturation_bounds is None:
        raise DomainError("panel has no derived records")
    lo, hi = panel.saturation_bounds
    out = {
        INTERCEPT_NAME: s[INTERCEPT_NAME] + s[RAW_SATURATION] * lo,
        COL_EV_STOCK: s[COL_EV_STOCK],
        COL_PARKING: s[COL_PARKING],
        COL_SATURATION: s[RAW_SATURATION] * (hi - lo),
        COL_REBATE: s[COL_REBATE],
    }
    return out


def demand_truth(config: SynthConfig) -> dict[str, float]:
    """True demand coefficients keyed by estimation column names."""
    return dict(config.true_demand_coeffs)
