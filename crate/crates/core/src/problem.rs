//! Assembled problem instances.
//!
//! A [`Problem`] bundles everything the solvers consume: the spatial grid with
//! its quadrature weights, the age grid (sized from the mortality floor when
//! the maximal age is unbounded), the discretized kernel operator with its
//! Perron radius, the sampled rate fields, and the effective diffusion rate.
//! Assembly is where the config-level invariants are enforced; the cheaper
//! derived views (`with_diffusion`, `with_gamma`, `subproblem`,
//! `with_resolution`) reuse as much of the parent as is sound.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::math;
use crate::model::{
    build_kernel_matrix, AgeGrid, AssumptionCheck, DiscreteKernelOperator, KernelSpec, RateField,
    RenewalStrengthScan, ScenarioConfig, SpatialGrid, Tolerances, ValidationReport,
};
use crate::quadrature;
use crate::spectral::power;
use crate::Result;

/// Age window scanned to get a first estimate of the mortality floor before
/// the grid horizon is known. The sizing loop corrects the estimate if the
/// floor keeps dropping beyond this window.
const MU_PROBE_HORIZON: f64 = 64.0;
const MU_PROBE_POINTS: usize = 257;
/// Number of times the horizon is re-sized when sampling reveals a smaller
/// mortality floor than the probe suggested.
const HORIZON_RETRIES: usize = 3;

/// A fully assembled, solver-ready model instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub space: SpatialGrid,
    pub age: AgeGrid,
    pub kernel: KernelSpec,
    pub operator: DiscreteKernelOperator,
    pub rates: RateField,
    /// Diffusion rate as configured (the `D` of the model).
    pub diffusion_input: f64,
    /// Effective diffusion actually applied: `D / gamma^m`.
    pub diffusion: f64,
    /// Perron radius of the discrete kernel operator (≤ 1).
    pub kernel_radius: f64,
    /// Age-quadrature weights for renewal integrals (Simpson family).
    pub birth_weights: Vec<f64>,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl Problem {
    /// Assemble a problem from a scenario config, enforcing the structural
    /// invariants (positive diffusion, resolvable kernel, positive mortality
    /// floor when the maximal age is unbounded).
    pub fn assemble(config: &ScenarioConfig) -> Result<Problem> {
        let d = config.diffusion_rate;
        if !d.is_finite() || d <= 0.0 {
            return Err(SpectraError::InvalidInput(format!(
                "diffusion_rate must be positive, got {d}"
            )));
        }
        let tol = config.tolerances;
        if !(tol.root_tol > 0.0 && tol.root_tol.is_finite())
            || !(tol.power_iter_tol > 0.0 && tol.power_iter_tol.is_finite())
            || tol.max_iters == 0
        {
            return Err(SpectraError::InvalidInput(
                "tolerances must be positive (root_tol, power_iter_tol) with max_iters >= 1"
                    .into(),
            ));
        }
        let space =
            SpatialGrid::uniform(config.domain.lower, config.domain.upper, config.domain.n_x)?;
        // Rebuild the kernel through the constructor so a hand-edited or
        // deserialized normalization constant is recomputed, not trusted.
        let kernel =
            KernelSpec::new(config.kernel.profile.clone(), config.kernel.gamma, config.kernel.m)?;
        let operator = build_kernel_matrix(&kernel, &space)?;
        let kernel_radius =
            power::spectral_radius(&operator.matrix, &tol, "kernel operator")?.radius;
        let (age, rates) = build_age_and_rates(config, &space, &tol)?;
        let birth_weights = quadrature::birth_weights(age.n_a, age.spacing(), None);
        Ok(Problem {
            name: config.name.clone(),
            space,
            age,
            kernel: kernel.clone(),
            operator,
            rates,
            diffusion_input: d,
            diffusion: kernel.effective_diffusion(d),
            kernel_radius,
            birth_weights,
            tolerances: tol,
            seed: config.seed,
        })
    }

    pub fn n_x(&self) -> usize {
        self.space.n_x
    }

    pub fn n_a(&self) -> usize {
        self.age.n_a
    }

    pub fn h_x(&self) -> f64 {
        self.space.spacing()
    }

    pub fn h_a(&self) -> f64 {
        self.age.spacing()
    }

    /// Sampled mortality floor min over all grid nodes.
    pub fn mu_tilde(&self) -> f64 {
        self.rates.mu_tilde
    }

    /// Grid indices of the smallest sampled μ value.
    fn mu_argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut lo = f64::INFINITY;
        for k in 0..self.n_a() {
            for i in 0..self.n_x() {
                let v = self.rates.mu(k, i);
                if v < lo {
                    lo = v;
                    best = (k, i);
                }
            }
        }
        best
    }

    /// Same problem with a different diffusion rate. `d` must be
    /// nonnegative; zero is allowed here (parameter sweeps approach the
    /// undiffused limit) even though configs require a positive rate.
    pub fn with_diffusion(&self, d: f64) -> Problem {
        debug_assert!(d >= 0.0 && d.is_finite());
        let mut p = self.clone();
        p.diffusion_input = d;
        p.diffusion = self.kernel.effective_diffusion(d);
        p
    }

    /// Same problem with the kernel rescaled to scale `gamma` (and the
    /// diffusion rate re-derived as `D / gamma^m`). Fails when the rescaled
    /// support is no longer resolved by the spatial grid.
    pub fn with_gamma(&self, gamma: f64) -> Result<Problem> {
        let kernel = self.kernel.rescaled(gamma)?;
        let operator = build_kernel_matrix(&kernel, &self.space)?;
        let kernel_radius =
            power::spectral_radius(&operator.matrix, &self.tolerances, "kernel operator")?.radius;
        let mut p = self.clone();
        p.diffusion = kernel.effective_diffusion(self.diffusion_input);
        p.kernel = kernel;
        p.operator = operator;
        p.kernel_radius = kernel_radius;
        Ok(p)
    }

    /// Restriction to the subdomain `[lo, hi]`, reusing the parent's grid
    /// nodes (no resampling drift). Returns the restricted problem together
    /// with the index range the kept nodes occupy in the parent grid.
    pub fn subproblem(&self, lo: f64, hi: f64) -> Result<(Problem, core::ops::Range<usize>)> {
        let (space, range) = self.space.subgrid(lo, hi)?;
        let operator = build_kernel_matrix(&self.kernel, &space)?;
        let kernel_radius =
            power::spectral_radius(&operator.matrix, &self.tolerances, "kernel operator")?.radius;
        let rates = RateField::sample(
            self.rates.beta_source().clone(),
            self.rates.mu_source().clone(),
            self.rates.beta_cutoff_age,
            &self.age,
            &space,
        )?;
        let mut p = self.clone();
        p.name = format!("{}[{lo},{hi}]", self.name);
        p.space = space;
        p.operator = operator;
        p.kernel_radius = kernel_radius;
        p.rates = rates;
        Ok((p, range))
    }

    /// Same scenario on a spatial grid with `n_x` nodes (the age grid and
    /// horizon are kept so refinement studies compare like with like).
    pub fn with_resolution(&self, n_x: usize) -> Result<Problem> {
        let space = SpatialGrid::uniform(self.space.lower, self.space.upper, n_x)?;
        let operator = build_kernel_matrix(&self.kernel, &space)?;
        let kernel_radius =
            power::spectral_radius(&operator.matrix, &self.tolerances, "kernel operator")?.radius;
        let rates = RateField::sample(
            self.rates.beta_source().clone(),
            self.rates.mu_source().clone(),
            self.rates.beta_cutoff_age,
            &self.age,
            &space,
        )?;
        let mut p = self.clone();
        p.space = space;
        p.operator = operator;
        p.kernel_radius = kernel_radius;
        p.rates = rates;
        Ok(p)
    }

    /// Worst-case renewal strength at discount `lambda_hat`:
    /// `∫ β̲(a) e^{−(λ̂+D)a} π̄(a) da` with the survival taken under the
    /// upper mortality envelope. Values above 1 mean the renewal boundary
    /// can sustain growth at that discount rate for every location.
    pub fn renewal_strength(&self, lambda_hat: f64) -> f64 {
        let cum_mu_upper = quadrature::cumulative_trapezoid(&self.rates.mu_upper, self.h_a());
        let mut total = 0.0;
        for (k, &a) in self.age.nodes.iter().enumerate() {
            let discount = math::exp(-(lambda_hat + self.diffusion) * a - cum_mu_upper[k]);
            total += self.birth_weights[k] * self.rates.beta_lower[k] * discount;
        }
        total
    }

    /// Run every assumption check against the assembled problem.
    pub fn validation_report(&self) -> ValidationReport {
        let mut checks = Vec::new();

        // Kernel: normalized, nonnegative, positive at the origin.
        let defect = self.kernel.mass_defect();
        checks.push(AssumptionCheck {
            name: "kernel_normalized".into(),
            passed: defect.abs() <= 1e-10,
            detail: format!("|∫ J_gamma − 1| = {:.3e} (tolerance 1e-10)", defect.abs()),
        });
        let (kernel_min, kernel_origin) = {
            let r = self.kernel.support_radius();
            let mut lo = f64::INFINITY;
            let samples = 2001;
            for i in 0..samples {
                let z = -r + 2.0 * r * (i as f64) / ((samples - 1) as f64);
                lo = math::min(lo, self.kernel.value(z));
            }
            (lo, self.kernel.value(0.0))
        };
        checks.push(AssumptionCheck {
            name: "kernel_nonnegative".into(),
            passed: kernel_min >= 0.0 && kernel_origin > 0.0,
            detail: format!(
                "min sampled J_gamma = {kernel_min:.3e}, J_gamma(0) = {kernel_origin:.3e}"
            ),
        });
        let max_row_sum = self
            .operator
            .matrix
            .row_sums()
            .into_iter()
            .fold(0.0f64, math::max);
        checks.push(AssumptionCheck {
            name: "kernel_row_sums".into(),
            passed: max_row_sum <= 1.0 + 1e-10,
            detail: format!("max row sum = {max_row_sum:.12} (must be <= 1 + 1e-10)"),
        });

        // Mortality floor.
        let mu_tilde = self.rates.mu_tilde;
        let floor_detail = if mu_tilde > 0.0 {
            format!("min sampled mu = {mu_tilde:.6e} > 0")
        } else {
            let (k, i) = self.mu_argmin();
            format!(
                "mu vanishes at age {:.6} (index {k}), x = {:.6} (index {i})",
                self.age.nodes[k], self.space.nodes[i]
            )
        };
        checks.push(AssumptionCheck {
            name: "mortality_floor".into(),
            passed: mu_tilde > 0.0,
            detail: floor_detail,
        });

        // Envelope sanity (bounded rates; sampling already rejects
        // non-finite values, so this is a reported figure, not a gate).
        let beta_sup = self
            .rates
            .beta_upper
            .iter()
            .cloned()
            .fold(0.0f64, math::max);
        checks.push(AssumptionCheck {
            name: "rates_bounded".into(),
            passed: beta_sup.is_finite() && self.rates.mu_max.is_finite(),
            detail: format!("sup beta = {beta_sup:.6}, sup mu = {:.6}", self.rates.mu_max),
        });

        // Birth cutoff consistency: the age grid must end exactly at the
        // cutoff so that no post-cutoff age carries birth weight.
        if let Some(a2) = self.rates.beta_cutoff_age {
            let consistent = (self.age.a_max - a2).abs() <= 1e-9 * math::max(1.0, a2);
            checks.push(AssumptionCheck {
                name: "birth_cutoff".into(),
                passed: consistent,
                detail: format!(
                    "cutoff age {a2}, grid horizon {} (must coincide)",
                    self.age.a_max
                ),
            });
        }

        // Age truncation tail, re-evaluated with the sampled floor.
        let mut renewal_strength = None;
        if self.age.is_truncated {
            let tail = if mu_tilde > 0.0 {
                math::exp(-mu_tilde * self.age.a_max)
            } else {
                1.0
            };
            let target = self.tolerances.root_tol / 10.0;
            checks.push(AssumptionCheck {
                name: "age_truncation".into(),
                passed: tail < target * (1.0 + 1e-6),
                detail: format!(
                    "exp(−mu_tilde·a_max) = {tail:.3e} (target < {target:.1e})"
                ),
            });

            // Renewal strength scan over the discount rate (only meaningful
            // when the unbounded-age model is being truncated).
            let lo = -0.99 * (self.diffusion + math::max(mu_tilde, 0.0));
            let hi = 5.0;
            let count = 141;
            let mut lambda_values = Vec::with_capacity(count);
            let mut r_hat_values = Vec::with_capacity(count);
            let mut best_lambda = lo;
            let mut best_value = f64::NEG_INFINITY;
            for j in 0..count {
                let lam = lo + (hi - lo) * (j as f64) / ((count - 1) as f64);
                let r_hat = self.renewal_strength(lam);
                if r_hat > best_value {
                    best_value = r_hat;
                    best_lambda = lam;
                }
                lambda_values.push(lam);
                r_hat_values.push(r_hat);
            }
            let achievable = best_value > 1.0;
            checks.push(AssumptionCheck {
                name: "renewal_strength".into(),
                passed: achievable,
                detail: format!(
                    "max R_hat = {best_value:.6} at lambda_hat = {best_lambda:.4} \
                     (must exceed 1 for some discount rate)"
                ),
            });
            renewal_strength = Some(RenewalStrengthScan {
                lambda_values,
                r_hat_values,
                achievable,
                best_lambda,
                best_value,
            });
        }

        let passed = checks.iter().all(|c| c.passed);
        ValidationReport {
            checks,
            renewal_strength,
            passed,
        }
    }
}

/// Validate a scenario without handing back assembled state: structural
/// defects (malformed tables, unresolvable kernels) are hard errors, while
/// violated model assumptions come back as failed checks in the report.
pub fn validate_assumptions(config: &ScenarioConfig) -> Result<ValidationReport> {
    match Problem::assemble(config) {
        Ok(problem) => {
            let mut report = problem.validation_report();
            if let Some(declared) = config.mu_lower_bound {
                let sampled = problem.rates.mu_tilde;
                let ok = sampled >= declared - 1e-12;
                report.checks.push(AssumptionCheck {
                    name: "declared_mortality_bound".into(),
                    passed: ok,
                    detail: format!(
                        "declared mu_lower_bound = {declared}, min sampled mu = {sampled:.6e}"
                    ),
                });
                report.passed = report.passed && ok;
            }
            Ok(report)
        }
        Err(SpectraError::AssumptionViolated { assumption, detail }) => Ok(ValidationReport {
            checks: alloc::vec![AssumptionCheck {
                name: assumption,
                passed: false,
                detail,
            }],
            renewal_strength: None,
            passed: false,
        }),
        Err(other) => Err(other),
    }
}

/// Build the age grid and sampled rates together: when the maximal age is
/// unbounded the horizon depends on the mortality floor, which is only known
/// after sampling, so the two are sized in a short fixed-point loop.
fn build_age_and_rates(
    config: &ScenarioConfig,
    space: &SpatialGrid,
    tol: &Tolerances,
) -> Result<(AgeGrid, RateField)> {
    let n_a = config.age.n_a;
    match (config.beta_cutoff_age, config.age.horizon) {
        (Some(a2), maybe_horizon) => {
            if let Some(h) = maybe_horizon {
                if (h - a2).abs() > 1e-9 * math::max(1.0, math::abs(a2)) {
                    return Err(SpectraError::InvalidInput(format!(
                        "age.horizon {h} conflicts with the birth cutoff age {a2}: ages past \
                         the cutoff feed nothing back into the renewal boundary, so the grid \
                         ends exactly at the cutoff — drop the horizon or set it equal"
                    )));
                }
            }
            let age = AgeGrid::exact(a2, n_a)?;
            let rates = RateField::sample(
                config.beta.clone(),
                config.mu.clone(),
                config.beta_cutoff_age,
                &age,
                space,
            )?;
            Ok((age, rates))
        }
        (None, Some(h)) => {
            // User-chosen truncation horizon: honor it, record the tail
            // bound with the sampled floor (validation checks its size).
            let provisional = AgeGrid::with_horizon(h, n_a, true, 0.0)?;
            let rates = RateField::sample(
                config.beta.clone(),
                config.mu.clone(),
                None,
                &provisional,
                space,
            )?;
            let age = AgeGrid::with_horizon(h, n_a, true, rates.mu_tilde)?;
            Ok((age, rates))
        }
        (None, None) => {
            // Unbounded maximal age: size the horizon so the survival tail
            // exp(−mu_tilde·a_max) drops below root_tol/10.
            let mut mu_tilde = probe_mortality_floor(config, space)?;
            if let Some(declared) = config.mu_lower_bound {
                if declared.is_finite() && declared > 0.0 {
                    mu_tilde = math::min(mu_tilde, declared);
                }
            }
            for _ in 0..=HORIZON_RETRIES {
                if mu_tilde <= 0.0 {
                    // The probe already errored in this case; sampling on a
                    // real grid can still reveal a zero, so keep the guard.
                    return Err(mortality_floor_error(mu_tilde));
                }
                let age = AgeGrid::truncated(mu_tilde, tol.root_tol, n_a)?;
                let rates = RateField::sample(
                    config.beta.clone(),
                    config.mu.clone(),
                    None,
                    &age,
                    space,
                )?;
                if rates.mu_tilde >= mu_tilde * (1.0 - 1e-9) {
                    return Ok((age, rates));
                }
                mu_tilde = rates.mu_tilde;
            }
            Err(SpectraError::AssumptionViolated {
                assumption: "positive mortality floor".into(),
                detail: format!(
                    "the sampled minimum of mu keeps shrinking as the age horizon grows \
                     (last estimate {mu_tilde:.6e}); with an unbounded maximal age the model \
                     needs inf mu > 0 — declare rates.mu_lower_bound or adjust mu"
                ),
            })
        }
    }
}

/// First estimate of inf μ over a wide age window, before any grid exists.
fn probe_mortality_floor(config: &ScenarioConfig, space: &SpatialGrid) -> Result<f64> {
    let mut floor = f64::INFINITY;
    let mut at = (0.0, 0.0);
    for k in 0..MU_PROBE_POINTS {
        let a = MU_PROBE_HORIZON * (k as f64) / ((MU_PROBE_POINTS - 1) as f64);
        for &x in &space.nodes {
            let m = config.mu.eval(a, x);
            if !m.is_finite() || m < 0.0 {
                return Err(SpectraError::InvalidInput(format!(
                    "mu evaluates to {m} at age {a}, x {x}"
                )));
            }
            if m < floor {
                floor = m;
                at = (a, x);
            }
        }
    }
    if floor <= 0.0 {
        return Err(SpectraError::AssumptionViolated {
            assumption: "positive mortality floor".into(),
            detail: format!(
                "mu vanishes at age {:.6}, x = {:.6}; with an unbounded maximal age the \
                 horizon is sized by inf mu > 0",
                at.0, at.1
            ),
        });
    }
    Ok(floor)
}

fn mortality_floor_error(floor: f64) -> SpectraError {
    SpectraError::AssumptionViolated {
        assumption: "positive mortality floor".into(),
        detail: format!("sampled minimum of mu is {floor:.6e}, but it must be positive"),
    }
}
