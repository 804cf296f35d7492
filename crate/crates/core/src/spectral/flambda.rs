//! The diffusion-feedback operator `F_λ` and its spectral radius.
//!
//! The transport bound `s_B1C` ignores one mechanism: newborns placed by the
//! renewal boundary are redistributed in space by the diffusion operator and
//! can re-enter the renewal loop elsewhere. `F_λ` is that feedback loop,
//! written around the transport resolvent at discount rate `λ`: its spectral
//! radius crosses `1` exactly when the full spectral bound `s_A` exceeds `λ`,
//! which is what makes it the arbiter of the strict gap `s_A > s_B1C`.
//!
//! The operator acts on a stacked pair `(η, ψ)`: a spatial vector `η` (the
//! inhomogeneity fed into the renewal boundary) and an age×space field `ψ`
//! (the inhomogeneity of the transport equation). One application is
//!
//! ```text
//! (η, ψ) ↦ (0, D·K·[ d(a) ∘ η̃  +  J(a) ])
//! ```
//!
//! where, per spatial node,
//!
//! * `d(a) = e^{−(λ+D)a} π(0,a)` is the discounted survival from birth,
//! * `J(a) = ∫₀^a e^{−(λ+D)(a−s)} π(s,a) ψ(s) ds` is the discounted age
//!   history of `ψ`, and
//! * `η̃ = (1 − G_λ)^{−1} [ ∫₀^â β(s,·) J(s) ds + η ]` resolves the renewal
//!   boundary, well defined because `G_λ < 1` strictly above the transport
//!   bound.
//!
//! Discretization: the birth integral uses the same quadrature weights as the
//! characteristic function (so the pole of `η̃` sits exactly at the computed
//! transport bound), and `J` uses a trapezoid prefix recurrence kept in ratio
//! form, `J_k = ρ_k (J_{k−1} + ½h ψ_{k−1}) + ½h ψ_k` with
//! `ρ_k = e^{−(λ+D)h − Δdeath}`, so no intermediate quantity ever needs the
//! (overflow-prone) reciprocal of a deep-age survival.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::linalg::Matrix;
use crate::math;
use crate::problem::Problem;
use crate::spectral::characteristic::evaluate_characteristic;
use crate::spectral::power::{spectral_radius_of, PowerResult};
use crate::Result;

/// Matrix-free application of the diffusion-feedback operator at a fixed
/// discount rate. Build it with [`assemble_feedback_action`].
pub struct FeedbackAction<'p> {
    problem: &'p Problem,
    lambda: f64,
    /// `1 − G_λ(x_i)`, strictly positive by the pole guard.
    denominators: Vec<f64>,
    /// `d_{k,i} = e^{−(λ+D)a_k} π(0,a_k,x_i)`.
    decay: Matrix,
    /// `ρ_{k,i} = d_{k,i}/d_{k−1,i}` (row 0 unused).
    step_ratio: Matrix,
}

/// Build the `F_λ` action. Requires `λ` strictly above the transport bound:
/// the renewal resolvent `(1 − G_λ)^{−1}` must be positive at every node.
pub fn assemble_feedback_action(problem: &Problem, lambda: f64) -> Result<FeedbackAction<'_>> {
    let profile = evaluate_characteristic(problem, lambda)?;
    let tol = problem.tolerances.root_tol;
    if profile.max_value >= 1.0 - tol {
        return Err(SpectraError::Domain(format!(
            "lambda = {lambda:.9} is at or below the renewal pole: max_x G_lambda = {:.9} \
             >= 1 - root_tol; the feedback operator is only defined for lambda strictly \
             above the transport bound s_B1C",
            profile.max_value
        )));
    }
    let n_x = problem.n_x();
    let n_a = problem.n_a();
    let h_a = problem.h_a();
    let rate = lambda + problem.diffusion;
    let mut decay = Matrix::zeros(n_a, n_x);
    let mut step_ratio = Matrix::zeros(n_a, n_x);
    for i in 0..n_x {
        decay.set(0, i, 1.0);
        step_ratio.set(0, i, 1.0);
    }
    for k in 1..n_a {
        let a = problem.age.nodes[k];
        for i in 0..n_x {
            let death = problem.rates.death_integral(0, k, i);
            decay.set(k, i, math::exp(-rate * a - death));
            let step_death = problem.rates.death_integral(k - 1, k, i);
            step_ratio.set(k, i, math::exp(-rate * h_a - step_death));
        }
    }
    Ok(FeedbackAction {
        problem,
        lambda,
        denominators: profile.values.iter().map(|g| 1.0 - g).collect(),
        decay,
        step_ratio,
    })
}

impl FeedbackAction<'_> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Length of the stacked vector: `n_x` (η block) + `n_a·n_x` (ψ field).
    pub fn dim(&self) -> usize {
        let n_x = self.problem.n_x();
        n_x + self.problem.n_a() * n_x
    }

    /// `out = F_λ · input` on stacked vectors. The η block of the output is
    /// always zero; nonnegative inputs produce nonnegative outputs.
    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        let n_x = self.problem.n_x();
        let n_a = self.problem.n_a();
        debug_assert_eq!(input.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let half_h = 0.5 * self.problem.h_a();
        let eta = &input[..n_x];
        let psi = &input[n_x..];

        // Pass 1 (ages ascending): the discounted history J_k per node, and
        // its birth-weighted aggregate Q feeding the renewal boundary.
        let mut history = vec![0.0; n_a * n_x];
        let mut renewal = vec![0.0; n_x];
        for k in 1..n_a {
            let (done, current) = history.split_at_mut(k * n_x);
            let prev = &done[(k - 1) * n_x..];
            let psi_prev = &psi[(k - 1) * n_x..k * n_x];
            let psi_here = &psi[k * n_x..(k + 1) * n_x];
            for i in 0..n_x {
                let rho = self.step_ratio.get(k, i);
                current[i] = rho * (prev[i] + half_h * psi_prev[i]) + half_h * psi_here[i];
            }
        }
        for k in 0..n_a {
            let w = self.problem.birth_weights[k];
            if w == 0.0 {
                continue;
            }
            let j_k = &history[k * n_x..(k + 1) * n_x];
            for i in 0..n_x {
                let b = self.problem.rates.beta_support(k, i);
                if b != 0.0 {
                    renewal[i] += w * b * j_k[i];
                }
            }
        }

        // Resolve the renewal boundary.
        let mut eta_tilde = vec![0.0; n_x];
        for i in 0..n_x {
            eta_tilde[i] = (renewal[i] + eta[i]) / self.denominators[i];
        }

        // Pass 2: each output age slice is D·K·(d_k ∘ η̃ + J_k).
        let (out_eta, out_psi) = out.split_at_mut(n_x);
        out_eta.fill(0.0);
        let mut combined = vec![0.0; n_x];
        for (k, slice) in out_psi.chunks_mut(n_x).enumerate() {
            for i in 0..n_x {
                combined[i] = self.decay.get(k, i) * eta_tilde[i] + history[k * n_x + i];
            }
            self.problem.operator.matrix.matvec(&combined, slice);
            for v in slice.iter_mut() {
                *v *= self.problem.diffusion;
            }
        }
    }

    /// Power iteration on the stacked space (all-ones start, same tolerances
    /// as the dense spectral radius).
    pub fn spectral_radius(&self) -> Result<PowerResult> {
        spectral_radius_of(
            |v, out| {
                self.apply(v, out);
                true
            },
            self.dim(),
            &self.problem.tolerances,
            "r(F_lambda)",
        )
    }
}

/// Spectral radius of `F_λ` at a single discount rate.
pub fn feedback_spectral_radius(problem: &Problem, lambda: f64) -> Result<PowerResult> {
    assemble_feedback_action(problem, lambda)?.spectral_radius()
}

/// Evaluate `(λ, r(F_λ))` over a sampling grid, in the given order.
pub fn sample_feedback_radius(problem: &Problem, lambdas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut samples = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let r = feedback_spectral_radius(problem, lambda)?.radius;
        samples.push((lambda, r));
    }
    Ok(samples)
}
