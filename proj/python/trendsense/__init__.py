"""ATT estimation and parallel-trends sensitivity analysis for panel data."""

from trendsense._core import (
    NEVER,
    AttEstimate,
    CalibrationResult,
    DgpConfig,
    GtBatch,
    GtResult,
    OracleScenario,
    PanelDataset,
    Scenario,
    SensitivityElements,
    SensitivityReport,
    SimTables,
    TwoByTwoView,
    adjusted_bounds,
    att_2x2,
    att_gt_all,
    benchmark_2x2,
    calibrate_confounding,
    canonical_2x2,
    confidence_interval,
    contour_grid,
    draw_sample,
    elements,
    evaluate_oracle,
    load_csv,
    robustness_value,
    robustness_value_a,
    run_monte_carlo,
    save_csv,
)

__all__ = [
    "NEVER",
    "AttEstimate",
    "CalibrationResult",
    "DgpConfig",
    "GtBatch",
    "GtResult",
    "OracleScenario",
    "PanelDataset",
    "Scenario",
    "SensitivityElements",
    "SensitivityReport",
    "SimTables",
    "TwoByTwoView",
    "adjusted_bounds",
    "att_2x2",
    "att_gt_all",
    "benchmark_2x2",
    "calibrate_confounding",
    "canonical_2x2",
    "confidence_interval",
    "contour_grid",
    "draw_sample",
    "elements",
    "evaluate_oracle",
    "load_csv",
    "robustness_value",
    "robustness_value_a",
    "run_monte_carlo",
    "save_csv",
]
