//! Scenario descriptions and assumption-validation reporting.
//!
//! A `ScenarioConfig` is the declarative input — domain, grids, kernel, rates,
//! diffusion, tolerances, seed — before any derived table is built. Assembly
//! into a solvable `Problem` (grids sampled, kernel discretized) lives in the
//! `problem` module; this one owns the plain data and the validation report
//! types shared with it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::model::kernel::KernelSpec;
use crate::model::rates::RateFn;

/// Solver tolerances.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Tolerances {
    /// Bisection stopping width for all characteristic roots.
    pub root_tol: f64,
    /// Power-iteration convergence threshold (Rayleigh-quotient increments
    /// and eigenpair residuals).
    pub power_iter_tol: f64,
    /// Iteration cap shared by bisections and power iterations.
    pub max_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root_tol: 1e-6,
            power_iter_tol: 1e-10,
            max_iters: 20_000,
        }
    }
}

/// Spatial domain description.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DomainConfig {
    pub lower: f64,
    pub upper: f64,
    pub n_x: usize,
}

/// Age discretization description. `horizon` forces an explicit a_max; when
/// absent, the horizon is the birth cutoff age if one exists, otherwise the
/// automatic truncation of the infinite horizon.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct AgeConfig {
    pub n_a: usize,
    pub horizon: Option<f64>,
}

/// Full declarative scenario.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub domain: DomainConfig,
    pub age: AgeConfig,
    pub kernel: KernelSpec,
    pub beta: RateFn,
    pub mu: RateFn,
    /// Birth cutoff age a₂: β ≡ 0 at and beyond it.
    pub beta_cutoff_age: Option<f64>,
    /// Declared lower bound μ̃ for the death rate (otherwise estimated by
    /// scanning μ; needed only to place the truncated age horizon).
    pub mu_lower_bound: Option<f64>,
    pub diffusion_rate: f64,
    pub tolerances: Tolerances,
    pub seed: u64,
}

/// One named assumption check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Scan of the envelope renewal strength R̂(λ̂) = ∫β̲ e^{−(λ̂+D)a} π̄(a) da
/// used to decide whether the characteristic equation is solvable at all.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RenewalStrengthScan {
    pub lambda_values: Vec<f64>,
    pub r_hat_values: Vec<f64>,
    /// Whether R̂ > 1 is achieved somewhere on the scan.
    pub achievable: bool,
    pub best_lambda: f64,
    pub best_value: f64,
}

/// Outcome of `validate_assumptions`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    /// Present when the scenario models an infinite age horizon.
    pub renewal_strength: Option<RenewalStrengthScan>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}
