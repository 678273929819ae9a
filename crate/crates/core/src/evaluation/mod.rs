//! Seeded trial campaigns: grid MSE against the do-response, γ-sweeps,
//! prediction error under anchor shift, and their aggregate reports.

mod campaign;
mod grid;
mod methods;
mod report;
mod shift;

pub use crate::split::random_split;
pub use campaign::{
    gamma_sweep, run_benchmark, sweep_label, SweepOptions, TrialConfig, ALPHA_CONST_GRID,
};
pub use grid::{grid_mse, predict_grid, GridSpec};
pub use methods::{fit_method, parse_methods, FitParams, Method};
pub use report::{median, quantile_sorted, Curves, Failure, Record, Summary, TrialReport, FAILURE_LIMIT_PCT};
pub use shift::{
    group_shift_eval, shift_eval, GroupShiftConfig, Orientation, ReferenceFit, ShiftOptions, REFERENCE_RIDGE,
    REFERENCE_SIZE,
};
