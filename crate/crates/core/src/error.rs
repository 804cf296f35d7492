//! Error taxonomy shared by every module.
//!
//! Two broad classes matter to callers: *input* errors (bad grids, malformed
//! rate tables, violated structural assumptions — fixable by editing the
//! scenario) and *numerical* errors (brackets that never close, power
//! iterations that stall — fixable by changing tolerances or resolution).
//! The CLI maps the former to exit code 2 and the latter to exit code 3.

use alloc::string::String;
use alloc::vec::Vec;

/// Everything that can go wrong while assembling or solving a scenario.
#[derive(Debug, Clone, thiserror::Error)]
pub enum SpectraError {
    /// Structural problem with user input: grids, kernels, rate tables.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A rate expression failed to parse.
    #[error("expression error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    /// A modelling assumption failed during validation.
    #[error("assumption `{assumption}` violated: {detail}")]
    AssumptionViolated { assumption: String, detail: String },

    /// An argument fell outside the admissible interval of the operator.
    #[error("domain error: {0}")]
    Domain(String),

    /// A monotone root-finder could not bracket its root.
    #[error("bracket failure in {context}: {detail}")]
    Bracket { context: String, detail: String },

    /// An iterative solver hit its iteration cap.
    #[error("{context} did not converge after {iterations} iterations (last estimate {last_estimate:.6e}{})",
            if *.oscillating { ", estimates oscillating" } else { "" })]
    NonConvergence {
        context: String,
        iterations: usize,
        last_estimate: f64,
        oscillating: bool,
        /// Last iterate, kept so callers can inspect where mass accumulated.
        last_iterate: Vec<f64>,
    },

    /// The age integrator blew past its a-priori bound.
    #[error("integrator instability detected at age {age:.6}: {detail}")]
    IntegratorInstability { age: f64, detail: String },

    /// An operation's precondition is not met by this scenario (not a bug).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Internal numerical inconsistency (singular solve, negative survival...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl SpectraError {
    /// `true` for errors a user can fix by editing the scenario file.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            SpectraError::InvalidInput(_)
                | SpectraError::Parse { .. }
                | SpectraError::AssumptionViolated { .. }
                | SpectraError::NotApplicable(_)
        )
    }
}
