//! Sweeps, transition detection, fits and convergence studies.

pub mod convergence;
pub mod fit;
pub mod ratio;
pub mod sweep;
pub mod transition;

pub use convergence::{convergence_study, pad_state, ConvergenceAxis, ConvergenceRow,
    ConvergenceStudy};
pub use fit::{fit_exponential, fit_log_form, fit_power_law, FitModel, FitResult, FitWindow};
pub use ratio::{correlation_peak, ratio_from_parts, ratio_functions, variation_factor, RatioTable};
pub use sweep::{record_from_solution, solve_point, sweep_alpha, ModeProfile, SweepConfig,
    SweepRecord};
pub use transition::{classify_zeta, detect_transition, detect_transition_from,
    detect_transition_seeds, TransitionEstimate, ZetaBand};
