//! Windowed operator norms, power-law fits and the convergence studies built
//! on them.

mod fit;
mod norm;
mod study;
mod window;

pub use fit::{fit_power_law, PowerLawFit, NOISE_FLOOR};
pub use norm::{compressed_norm, operator_norm, NormMethod, OperatorNormEstimate, POWER_MAX_ITERS, POWER_TOL};
pub use study::{
    amplitude_sweep, convergence_study, hbar_scaling, residual_check, single_step_study, strong_limit_check,
    subdivision_error, AmplitudeRow, AmplitudeSweep, ConvergenceStudy, DroppedRow, HbarScaling, IdentityDefect,
    ResidualReport, ResidualRow, StrongLimitReport, StudyContext, StudyRow, StudySummary, DELTA_MAX, FLOOR_FACTOR,
    MONOTONE_SLACK, RESIDUAL_FD_STEP, STRONG_LIMIT_FINAL,
};
pub use window::{Window, WindowSpec};
