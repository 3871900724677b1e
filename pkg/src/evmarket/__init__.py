"""Two-sided EV market toolkit.

Estimates the coupled demand (EV sales) and supply (charging stations)
equations from zip-code-year panels via OLS/TSLS/GMM, simulates the
indirect-network-effect dynamics forward, and evaluates incentive scenarios
against fleet-share targets.
"""

__version__ = "0.1.0"

from .dynamics import (
    DynamicsParams,
    ExogenousYear,
    MarketState,
    calibrate_constant,
    reduced_form_trajectory,
    simulate_horizon,
    solve_annual_fixed_point,
    step_coupled_year,
)
from .errors import EvMarketError
from .estimator import (
    DesignMatrix,
    EstimationResult,
    fit_gmm,
    fit_ols,
    fit_tsls,
)
from .modelspec import (
    build_demand_design,
    build_supply_design,
    describe_bindings,
    estimate_demand,
    estimate_supply,
)
from .panel import (
    Panel,
    PanelRecord,
    compute_burden,
    compute_install_base,
    compute_instrument,
    compute_saturation,
    load_panel,
    panel_to_csv,
)
from .policy import (
    ComparisonReport,
    FleetProjection,
    Scenario,
    Trajectory,
    apply_scenario,
    compare_scenarios,
    forecast_from_panel,
    forecast_scenario,
    project_fleet,
)
from .synth import SynthConfig, generate_panel

__all__ = [
    "__version__",
    "ComparisonReport",
    "DesignMatrix",
    "DynamicsParams",
    "EstimationResult",
    "EvMarketError",
    "ExogenousYear",
    "FleetProjection",
    "MarketState",
    "Panel",
    "PanelRecord",
    "Scenario",
    "SynthConfig",
    "Trajectory",
    "apply_scenario",
    "build_demand_design",
    "build_supply_design",
    "calibrate_constant",
    "compare_scenarios",
    "compute_burden",
    "compute_install_base",
    "compute_instrument",
    "compute_saturation",
    "describe_bindings",
    "estimate_demand",
    "estimate_supply",
    "fit_gmm",
    "fit_ols",
    "fit_tsls",
    "forecast_from_panel",
    "forecast_scenario",
    "generate_panel",
    "load_panel",
    "panel_to_csv",
    "project_fleet",
    "reduced_form_trajectory",
    "simulate_horizon",
    "solve_annual_fixed_point",
    "step_coupled_year",
]
