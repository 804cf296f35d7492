//! The diffused evolution family U(0, a).
//!
//! `U(0, a)` solves the matrix ODE `∂_a U = [D(K − I) − diag(μ(a,·))] U`,
//! `U(0,0) = I`, on the age grid. Three construction paths share one storage
//! format:
//!
//! * `D = 0`: the family is diagonal — exact pointwise survival exponentials.
//! * age-independent μ: the generator is constant, so one matrix exponential
//!   `W = exp(L·h_a)` (scaling and squaring, series summed to machine
//!   precision) advances the stack a whole age step per multiply.
//! * age-dependent μ: classical fourth-order Runge–Kutta on the matrix ODE,
//!   substepped to satisfy both the real-axis stability bound and an accuracy
//!   budget tied to `root_tol`.
//!
//! Deep age grids decay like `e^{−μ̃·a}` — far below `f64` range once `D` is
//! large (the sweep module pushes `D` to 64, where `U` underflows by hundreds
//! of orders of magnitude). Each stored matrix is therefore kept sup-normalized
//! with a separate log-scale accumulator, and consumers either work in log
//! space or ask for the true (possibly underflowing) values explicitly.
//!
//! Memory: the stack holds `n_a` dense `n_x×n_x` matrices (the solvers
//! re-weight them per root-finder iterate, which is far cheaper than
//! re-integrating); at the default 200×200 grids that is ~64 MB.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::linalg::Matrix;
use crate::math;
use crate::problem::Problem;
use crate::quadrature;
use crate::Result;

/// Which construction path produced a stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorMethod {
    /// `D = 0`: exact diagonal survival exponentials.
    ExactDiagonal,
    /// Constant-in-age generator advanced by one matrix exponential.
    MatrixExponential,
    /// Substepped classical Runge–Kutta on the matrix ODE.
    RungeKutta,
}

/// The family `U(0, a_k)` on the age grid, stored sup-normalized per age with
/// log-scale bookkeeping: `U(0, a_k) = exp(logscale[k]) · scaled[k]`.
#[derive(Debug, Clone)]
pub struct PropagatorStack {
    ages: Vec<f64>,
    scaled: Vec<Matrix>,
    logscale: Vec<f64>,
    pub method: PropagatorMethod,
    /// Integrator substeps per age interval (1 for the exact paths).
    pub step_count: usize,
}

impl PropagatorStack {
    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.scaled[0].rows()
    }

    pub fn age(&self, k: usize) -> f64 {
        self.ages[k]
    }

    /// Sup-normalized matrix at age index `k`.
    pub fn scaled_matrix(&self, k: usize) -> &Matrix {
        &self.scaled[k]
    }

    /// `ln` of the scale factor at age index `k`.
    pub fn logscale(&self, k: usize) -> f64 {
        self.logscale[k]
    }

    /// True matrix `U(0, a_k)`; entries may underflow to zero at deep ages.
    pub fn true_matrix(&self, k: usize) -> Matrix {
        let mut m = self.scaled[k].clone();
        m.scale(math::exp(self.logscale[k]));
        m
    }

    /// `out = U(0, a_k) · v` in true scale (may underflow at deep ages).
    pub fn apply(&self, k: usize, v: &[f64], out: &mut [f64]) {
        self.scaled[k].matvec(v, out);
        let s = math::exp(self.logscale[k]);
        for o in out.iter_mut() {
            *o *= s;
        }
    }

    /// `out = scaled[k] · v` (caller accounts for `logscale(k)`).
    pub fn apply_scaled(&self, k: usize, v: &[f64], out: &mut [f64]) {
        self.scaled[k].matvec(v, out);
    }

    /// `ln ‖U(0, a_k)‖` in the induced row-sum norm.
    pub fn log_row_norm(&self, k: usize) -> f64 {
        let s = self.scaled[k].sup_norm();
        if s == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.logscale[k] + math::ln(s)
        }
    }
}

/// Apply `U(0, a_k)` to a spatial vector, in true scale.
pub fn apply_propagator(stack: &PropagatorStack, a_index: usize, v: &[f64]) -> Result<Vec<f64>> {
    if a_index >= stack.n_ages() {
        return Err(SpectraError::InvalidInput(format!(
            "age index {a_index} out of range (stack holds {} ages)",
            stack.n_ages()
        )));
    }
    if v.len() != stack.n_nodes() {
        return Err(SpectraError::InvalidInput(format!(
            "vector length {} does not match the {}-node grid",
            v.len(),
            stack.n_nodes()
        )));
    }
    let mut out = vec![0.0; v.len()];
    stack.apply(a_index, v, &mut out);
    Ok(out)
}

/// Build the stack for `problem` with automatic path/step selection.
pub fn compute_diffused_propagator(problem: &Problem) -> Result<PropagatorStack> {
    compute_with_substeps(problem, 0)
}

/// Like [`compute_diffused_propagator`], with the Runge–Kutta substep count
/// per age interval forced to `substeps` (0 = automatic). Convergence-order
/// studies use this; the forced count is ignored by the exact paths.
pub fn compute_with_substeps(problem: &Problem, substeps: usize) -> Result<PropagatorStack> {
    if problem.diffusion == 0.0 {
        build_diagonal(problem)
    } else if problem.rates.mu_age_independent {
        build_matrix_exponential(problem)
    } else {
        build_runge_kutta(problem, substeps)
    }
}

/// Two-point propagator `U(a_j, a_k)` (restart from age `a_j`), as a true
/// (unscaled) matrix. Used by restart-consistency checks and the maximum
/// principle's inhomogeneous solves; ages must satisfy `j ≤ k`.
pub fn propagate_between(problem: &Problem, from_index: usize, to_index: usize) -> Result<Matrix> {
    let n_a = problem.n_a();
    if from_index > to_index || to_index >= n_a {
        return Err(SpectraError::InvalidInput(format!(
            "restart range {from_index}..{to_index} invalid for {n_a} age nodes"
        )));
    }
    let n = problem.n_x();
    if problem.diffusion == 0.0 {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            let death = problem.rates.death_integral(from_index, to_index, i);
            m.set(i, i, math::exp(-death));
        }
        return Ok(m);
    }
    if problem.rates.mu_age_independent {
        let w = one_step_exponential(problem)?;
        let mut u = Matrix::identity(n);
        let mut tmp = Matrix::zeros(n, n);
        for _ in from_index..to_index {
            w.mul_into(&u, &mut tmp);
            core::mem::swap(&mut u, &mut tmp);
        }
        return Ok(u);
    }
    // Age-dependent μ: integrate the identity forward from a_j.
    let h = problem.h_a();
    let n_sub = automatic_substeps(problem);
    let mut u = Matrix::identity(n);
    let mut stage = RkStage::new(n);
    for k in from_index..to_index {
        rk4_interval(problem, problem.age.nodes[k], h, n_sub, &mut u, &mut stage);
    }
    Ok(u)
}

fn build_diagonal(problem: &Problem) -> Result<PropagatorStack> {
    let n = problem.n_x();
    let n_a = problem.n_a();
    let mut scaled = Vec::with_capacity(n_a);
    let mut logscale = Vec::with_capacity(n_a);
    for k in 0..n_a {
        // Scale by the slowest decay so the stored sup stays at 1.
        let mut least_death = f64::INFINITY;
        for i in 0..n {
            least_death = math::min(least_death, problem.rates.death_integral(0, k, i));
        }
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            let death = problem.rates.death_integral(0, k, i);
            m.set(i, i, math::exp(-(death - least_death)));
        }
        scaled.push(m);
        logscale.push(-least_death);
    }
    Ok(PropagatorStack {
        ages: problem.age.nodes.clone(),
        scaled,
        logscale,
        method: PropagatorMethod::ExactDiagonal,
        step_count: 1,
    })
}

/// Generator `L = D(K − I) − diag(μ(·))` for age-independent μ.
fn constant_generator(problem: &Problem) -> Matrix {
    let n = problem.n_x();
    let d = problem.diffusion;
    let mut l = problem.operator.matrix.clone();
    l.scale(d);
    let mu = problem.rates.mu_row(0);
    for i in 0..n {
        let v = l.get(i, i) - d - mu[i];
        l.set(i, i, v);
    }
    l
}

/// `exp(L · h_a)` by scaling and squaring with a machine-precision series.
fn one_step_exponential(problem: &Problem) -> Result<Matrix> {
    let h = problem.h_a();
    let mut a = constant_generator(problem);
    a.scale(h);
    let norm = a.sup_norm();
    if !norm.is_finite() {
        return Err(SpectraError::Numerical(
            "generator norm is not finite".into(),
        ));
    }
    // Halve until ‖A‖ ≤ 0.5, series-sum, then square back.
    let mut squarings = 0u32;
    let mut scale_norm = norm;
    while scale_norm > 0.5 {
        scale_norm *= 0.5;
        squarings += 1;
    }
    a.scale(math::powf(0.5, squarings as f64));
    let n = a.rows();
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    let mut tmp = Matrix::zeros(n, n);
    for j in 1..=30 {
        a.mul_into(&term, &mut tmp);
        core::mem::swap(&mut term, &mut tmp);
        term.scale(1.0 / j as f64);
        result.add_scaled(&term, 1.0);
        if term.sup_norm() <= 1e-20 * result.sup_norm() {
            break;
        }
    }
    for _ in 0..squarings {
        result.mul_into(&result.clone(), &mut tmp);
        core::mem::swap(&mut result, &mut tmp);
    }
    Ok(result)
}

fn build_matrix_exponential(problem: &Problem) -> Result<PropagatorStack> {
    let n = problem.n_x();
    let n_a = problem.n_a();
    let w = one_step_exponential(problem)?;
    let mut scaled = Vec::with_capacity(n_a);
    let mut logscale = Vec::with_capacity(n_a);
    scaled.push(Matrix::identity(n));
    logscale.push(0.0);
    let mut tmp = Matrix::zeros(n, n);
    for k in 1..n_a {
        w.mul_into(&scaled[k - 1], &mut tmp);
        let mut next = tmp.clone();
        let mut ls = logscale[k - 1];
        renormalize(&mut next, &mut ls);
        let age = problem.age.nodes[k];
        check_step(&mut next, ls, age, problem.mu_tilde())?;
        scaled.push(next);
        logscale.push(ls);
    }
    Ok(PropagatorStack {
        ages: problem.age.nodes.clone(),
        scaled,
        logscale,
        method: PropagatorMethod::MatrixExponential,
        step_count: 1,
    })
}

/// Scratch matrices for one RK4 stage evaluation.
struct RkStage {
    k1: Matrix,
    k2: Matrix,
    k3: Matrix,
    k4: Matrix,
    arg: Matrix,
    kmul: Matrix,
}

impl RkStage {
    fn new(n: usize) -> Self {
        RkStage {
            k1: Matrix::zeros(n, n),
            k2: Matrix::zeros(n, n),
            k3: Matrix::zeros(n, n),
            k4: Matrix::zeros(n, n),
            arg: Matrix::zeros(n, n),
            kmul: Matrix::zeros(n, n),
        }
    }
}

/// `out = L(a)·x` where `L(a) = D(K−I) − diag(μ(a,·))`.
fn apply_generator(problem: &Problem, age: f64, x: &Matrix, kmul: &mut Matrix, out: &mut Matrix) {
    let d = problem.diffusion;
    problem.operator.matrix.mul_into(x, kmul);
    let n = x.rows();
    for i in 0..n {
        let mu = problem.rates.mu_at(age, problem.space.nodes[i]);
        let factor = d + mu;
        let out_row = out.row_mut(i);
        let k_row = kmul.row(i);
        let x_row = x.row(i);
        for j in 0..n {
            out_row[j] = d * k_row[j] - factor * x_row[j];
        }
    }
}

/// Advance `u` across one age interval `[age, age+h]` with `n_sub` RK4 steps.
fn rk4_interval(
    problem: &Problem,
    age: f64,
    h: f64,
    n_sub: usize,
    u: &mut Matrix,
    s: &mut RkStage,
) {
    let hs = h / n_sub as f64;
    for step in 0..n_sub {
        let a0 = age + hs * step as f64;
        apply_generator(problem, a0, u, &mut s.kmul, &mut s.k1);

        s.arg.clone_from(u);
        s.arg.add_scaled(&s.k1, 0.5 * hs);
        apply_generator(problem, a0 + 0.5 * hs, &s.arg, &mut s.kmul, &mut s.k2);

        s.arg.clone_from(u);
        s.arg.add_scaled(&s.k2, 0.5 * hs);
        apply_generator(problem, a0 + 0.5 * hs, &s.arg, &mut s.kmul, &mut s.k3);

        s.arg.clone_from(u);
        s.arg.add_scaled(&s.k3, hs);
        apply_generator(problem, a0 + hs, &s.arg, &mut s.kmul, &mut s.k4);

        u.add_scaled(&s.k1, hs / 6.0);
        u.add_scaled(&s.k2, hs / 3.0);
        u.add_scaled(&s.k3, hs / 3.0);
        u.add_scaled(&s.k4, hs / 6.0);
    }
}

/// Substeps per age interval: real-axis RK4 stability for the stiffest mode
/// (rate ≈ 2D + sup μ) with a safety factor, plus an accuracy budget keeping
/// the local truncation of the slowest mode below `root_tol` per unit age.
fn automatic_substeps(problem: &Problem) -> usize {
    let h = problem.h_a();
    let d = problem.diffusion;
    let stiff_rate = 2.0 * d + problem.rates.mu_max;
    let h_stab = 0.8 * 2.78 / math::max(stiff_rate, 1e-9);
    let slow_rate = d * (1.0 - problem.kernel_radius) + problem.mu_tilde();
    let h_acc = if slow_rate > 1e-9 {
        math::powf(
            120.0 * problem.tolerances.root_tol / math::powf(slow_rate, 5.0),
            0.25,
        )
    } else {
        h
    };
    let target = math::min(h, math::min(h_stab, h_acc));
    let n_sub = math::ceil(h / target) as usize;
    n_sub.clamp(1, 100_000)
}

fn build_runge_kutta(problem: &Problem, substeps: usize) -> Result<PropagatorStack> {
    let n = problem.n_x();
    let n_a = problem.n_a();
    let h = problem.h_a();
    let n_sub = if substeps > 0 {
        substeps
    } else {
        automatic_substeps(problem)
    };
    let mut stage = RkStage::new(n);
    let mut scaled = Vec::with_capacity(n_a);
    let mut logscale = Vec::with_capacity(n_a);
    scaled.push(Matrix::identity(n));
    logscale.push(0.0);
    for k in 1..n_a {
        let mut next = scaled[k - 1].clone();
        rk4_interval(problem, problem.age.nodes[k - 1], h, n_sub, &mut next, &mut stage);
        let mut ls = logscale[k - 1];
        renormalize(&mut next, &mut ls);
        let age = problem.age.nodes[k];
        check_step(&mut next, ls, age, problem.mu_tilde())?;
        scaled.push(next);
        logscale.push(ls);
    }
    Ok(PropagatorStack {
        ages: problem.age.nodes.clone(),
        scaled,
        logscale,
        method: PropagatorMethod::RungeKutta,
        step_count: n_sub,
    })
}

/// Pull the sup-norm back to 1, folding it into the log scale.
fn renormalize(m: &mut Matrix, logscale: &mut f64) {
    let s = m.sup_norm();
    if s > 0.0 && s.is_finite() {
        m.scale(1.0 / s);
        *logscale += math::ln(s);
    }
}

/// Positivity and exponential-bound guards after each stored age step.
/// Roundoff-scale negatives are clamped to zero (downstream spectral code
/// requires nonnegative matrices); anything larger aborts the integration.
fn check_step(scaled: &mut Matrix, logscale: f64, age: f64, mu_tilde: f64) -> Result<()> {
    let sup = scaled.max_abs_entry();
    if !sup.is_finite() || !logscale.is_finite() {
        return Err(SpectraError::IntegratorInstability {
            age,
            detail: "propagator entries are no longer finite".into(),
        });
    }
    // Entries must stay below 10× the exponential decay bound (log space:
    // the bound can be hundreds of orders below f64 range).
    let log_entry_sup = if sup > 0.0 {
        logscale + math::ln(sup)
    } else {
        f64::NEG_INFINITY
    };
    let log_bound = -mu_tilde * age + math::ln(10.0);
    if log_entry_sup > log_bound {
        return Err(SpectraError::IntegratorInstability {
            age,
            detail: format!(
                "entry magnitude exp({log_entry_sup:.3}) exceeds 10x the decay bound \
                 exp({:.3}); reduce the age step or diffusion rate",
                log_bound - math::ln(10.0)
            ),
        });
    }
    // Negative entries beyond roundoff mean the step size lost positivity;
    // roundoff-scale ones are projected back onto the cone.
    let min = scaled.min_entry();
    if min < -1e-9 * math::max(sup, 1e-300) {
        return Err(SpectraError::IntegratorInstability {
            age,
            detail: format!(
                "negative propagator entry at relative size {:.3e}; the integrator \
                 step is too large for positivity",
                min / sup
            ),
        });
    }
    if min < 0.0 {
        scaled.clamp_negatives_to_zero();
    }
    Ok(())
}

/// Diagonal of the undiffused survival `Π(a_j, a_k)` at node `i` is handled by
/// `RateField::death_integral`; this helper builds the full diagonal for the
/// Duhamel checks and the simulate module.
pub fn survival_diagonal(problem: &Problem, from_index: usize, to_index: usize) -> Vec<f64> {
    (0..problem.n_x())
        .map(|i| math::exp(-problem.rates.death_integral(from_index, to_index, i)))
        .collect()
}

/// Simpson-quadrature Duhamel residual at age index `k`:
/// `U(0,a) − [e^{−Da}Π(0,a) + D·∫₀^a e^{−D(a−l)}Π(l,a)·K·U(0,l) dl]`,
/// returned as a sup-norm relative to `‖U(0,a)‖`. Test and diagnostic hook.
pub fn duhamel_residual(problem: &Problem, stack: &PropagatorStack, k: usize) -> Result<f64> {
    if k >= stack.n_ages() {
        return Err(SpectraError::InvalidInput("age index out of range".into()));
    }
    let n = problem.n_x();
    let d = problem.diffusion;
    let h = problem.h_a();
    let a = stack.age(k);
    // Free part e^{−Da}Π(0,a).
    let mut expect = Matrix::zeros(n, n);
    for i in 0..n {
        let death = problem.rates.death_integral(0, k, i);
        expect.set(i, i, math::exp(-d * a - death));
    }
    // Interaction part by Simpson over the stored ages 0..=k.
    if k >= 1 {
        let w = quadrature::simpson_weights(k + 1, h);
        let mut ku = Matrix::zeros(n, n);
        for l in 0..=k {
            let u_l = stack.true_matrix(l);
            problem.operator.matrix.mul_into(&u_l, &mut ku);
            let gap = stack.age(k) - stack.age(l);
            for i in 0..n {
                let death = problem.rates.death_integral(l, k, i);
                let factor = d * w[l] * math::exp(-d * gap - death);
                let e_row = expect.row_mut(i);
                let k_row = ku.row(i);
                for j in 0..n {
                    e_row[j] += factor * k_row[j];
                }
            }
        }
    }
    let u_k = stack.true_matrix(k);
    expect.add_scaled(&u_k, -1.0);
    let denom = math::max(u_k.sup_norm(), 1e-300);
    Ok(expect.sup_norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        AgeConfig, DomainConfig, KernelProfile, KernelSpec, RateFn, ScenarioConfig, Tolerances,
    };
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(n_x: usize, n_a: usize) -> ScenarioConfig {
        ScenarioConfig {
            name: "evolution-test".into(),
            domain: DomainConfig {
                lower: -1.0,
                upper: 1.0,
                n_x,
            },
            age: AgeConfig { n_a, horizon: None },
            kernel: KernelSpec::new(KernelProfile::Constant { radius: 2.0 }, 1.0, 0.0).unwrap(),
            beta: RateFn::Constant(2.0),
            mu: RateFn::Constant(0.5),
            beta_cutoff_age: None,
            mu_lower_bound: None,
            diffusion_rate: 1.0,
            tolerances: Tolerances::default(),
            seed: 11,
        }
    }

    #[test]
    fn zero_diffusion_is_exact_scalar_decay() {
        let p = Problem::assemble(&config(40, 65)).unwrap().with_diffusion(0.0);
        let stack = compute_diffused_propagator(&p).unwrap();
        assert_eq!(stack.method, PropagatorMethod::ExactDiagonal);
        for k in [0, 10, 32, 64] {
            let a = stack.age(k);
            let m = stack.true_matrix(k);
            for i in 0..p.n_x() {
                for j in 0..p.n_x() {
                    let expect = if i == j { math::exp(-0.5 * a) } else { 0.0 };
                    assert!((m.get(i, j) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rank_one_kernel_decays_constants_at_half_rate() {
        // μ≡0 (finite horizon), D=1, ρ|Ω| = 1/2: constants satisfy
        // U(0,a)·1 = e^{−(1−1/2)a}·1.
        let mut c = config(60, 81);
        c.mu = RateFn::Constant(0.0);
        c.age.horizon = Some(4.0);
        let p = Problem::assemble(&c).unwrap();
        let stack = compute_diffused_propagator(&p).unwrap();
        assert_eq!(stack.method, PropagatorMethod::MatrixExponential);
        let ones = vec![1.0; p.n_x()];
        for k in [1, 20, 40, 80] {
            let out = apply_propagator(&stack, k, &ones).unwrap();
            let expect = math::exp(-0.5 * stack.age(k));
            for v in &out {
                assert!(
                    (v - expect).abs() < 1e-10 * expect.max(1e-10),
                    "age {} value {v} expected {expect}",
                    stack.age(k)
                );
            }
        }
    }

    #[test]
    fn identity_at_age_zero_and_positivity_on_random_vectors() {
        let mut c = config(50, 81);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0).unwrap();
        let p = Problem::assemble(&c).unwrap();
        let stack = compute_diffused_propagator(&p).unwrap();
        let probe: Vec<f64> = (0..p.n_x()).map(|i| 0.1 + (i % 7) as f64).collect();
        let out = apply_propagator(&stack, 0, &probe).unwrap();
        for (a, b) in out.iter().zip(probe.iter()) {
            assert_eq!(a, b);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        for _ in 0..100 {
            let v: Vec<f64> = (0..p.n_x()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let k = rng.gen_range(0..stack.n_ages());
            let out = apply_propagator(&stack, k, &v).unwrap();
            let floor = -1e-12 * crate::linalg::sup_norm(&out).max(1e-300);
            assert!(out.iter().all(|&x| x >= floor));
        }
    }

    #[test]
    fn row_norms_respect_the_exponential_bound() {
        let mut c = config(50, 81);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0).unwrap();
        let p = Problem::assemble(&c).unwrap();
        let stack = compute_diffused_propagator(&p).unwrap();
        for k in 0..stack.n_ages() {
            let log_bound = -p.mu_tilde() * stack.age(k) + (1.0 + 1e-6f64).ln();
            assert!(
                stack.log_row_norm(k) <= log_bound,
                "age {}: log norm {} > {}",
                stack.age(k),
                stack.log_row_norm(k),
                log_bound
            );
        }
        // Spot-check the spec instance: at a = 2, ‖U‖ ≤ e^{−1}(1+1e−6).
        let k2 = (2.0 / p.h_a()).round() as usize;
        assert!(stack.log_row_norm(k2) <= -p.mu_tilde() * stack.age(k2) + 1e-6);
    }

    #[test]
    fn runge_kutta_agrees_with_the_exponential_path() {
        // Near-identical generators, two integrators: the exact exponential
        // on μ = 0.5 against substepped RK4 on μ = 0.5 + 1e-9·a (the slope is
        // large enough to engage the age-dependent path, small enough that
        // the propagators must agree far beyond the RK4 truncation error).
        let mut c = config(40, 33);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0).unwrap();
        c.age.horizon = Some(4.0);
        let p = Problem::assemble(&c).unwrap();
        let exact = compute_diffused_propagator(&p).unwrap();
        assert_eq!(exact.method, PropagatorMethod::MatrixExponential);
        let mut c2 = c.clone();
        c2.mu = RateFn::expression("0.5 + 1e-9*a").unwrap();
        let p2 = Problem::assemble(&c2).unwrap();
        let rk = compute_with_substeps(&p2, 8).unwrap();
        assert_eq!(rk.method, PropagatorMethod::RungeKutta);
        let k = 32;
        let a = exact.true_matrix(k);
        let b = rk.true_matrix(k);
        let mut diff = a.clone();
        diff.add_scaled(&b, -1.0);
        assert!(diff.sup_norm() / a.sup_norm() < 1e-7);
    }

    #[test]
    fn rk4_order_check_under_substep_halving() {
        let mut c = config(30, 17);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0).unwrap();
        c.mu = RateFn::expression("0.5 + 0.3*a/(1+a)").unwrap();
        c.age.horizon = Some(4.0);
        let p = Problem::assemble(&c).unwrap();
        let reference = compute_with_substeps(&p, 16).unwrap();
        let coarse = compute_with_substeps(&p, 1).unwrap();
        let fine = compute_with_substeps(&p, 2).unwrap();
        let k = 16;
        let r = reference.true_matrix(k);
        let mut e1 = coarse.true_matrix(k);
        e1.add_scaled(&r, -1.0);
        let mut e2 = fine.true_matrix(k);
        e2.add_scaled(&r, -1.0);
        let ratio = e1.sup_norm() / e2.sup_norm().max(1e-300);
        // Fourth-order: expect ≈16; demand comfortably better than 2nd order.
        assert!(ratio > 3.5, "halving gave error ratio {ratio}");
    }

    #[test]
    fn duhamel_identity_holds_at_sampled_ages() {
        // The propagator is exact here (constant generator); the residual is
        // pure Simpson quadrature error on the interaction integral, O(h_a⁴).
        let mut c = config(40, 161);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0).unwrap();
        let p = Problem::assemble(&c).unwrap();
        let stack = compute_diffused_propagator(&p).unwrap();
        let n_a = stack.n_ages();
        for k in [n_a / 5, 2 * n_a / 5, 3 * n_a / 5, 4 * n_a / 5, n_a - 1] {
            let res = duhamel_residual(&p, &stack, k).unwrap();
            assert!(res < 1e-4, "age index {k}: Duhamel residual {res}");
        }
    }

    #[test]
    fn restart_composition_matches_direct_integration() {
        let mut c = config(30, 41);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0).unwrap();
        c.mu = RateFn::expression("0.4 + 0.2*a/(1+a) + 0.1*x*x").unwrap();
        c.age.horizon = Some(4.0);
        let p = Problem::assemble(&c).unwrap();
        let stack = compute_diffused_propagator(&p).unwrap();
        for (j, k) in [(10usize, 20usize), (13, 39)] {
            let restart = propagate_between(&p, j, k).unwrap();
            let u_j = stack.true_matrix(j);
            let mut composed = Matrix::zeros(p.n_x(), p.n_x());
            restart.mul_into(&u_j, &mut composed);
            let mut diff = stack.true_matrix(k);
            diff.add_scaled(&composed, -1.0);
            let rel = diff.sup_norm() / stack.true_matrix(k).sup_norm();
            assert!(rel < 1e-8, "restart ({j},{k}) relative gap {rel}");
        }
    }

    #[test]
    fn delta_support_spreads_by_kernel_radius_per_step() {
        // One RK4 step is a degree-4 polynomial in K, so a point mass can
        // travel at most 4 kernel radii per step — and must actually spread
        // one radius (at order D·h_a) through the first-order K term.
        let mut c = config(101, 33);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 0.11, 0.0).unwrap();
        c.mu = RateFn::expression("0.5 + 0.01*a").unwrap();
        c.age.horizon = Some(2.0);
        let p = Problem::assemble(&c).unwrap();
        let stack = compute_with_substeps(&p, 1).unwrap();
        assert_eq!(stack.method, PropagatorMethod::RungeKutta);
        let n = p.n_x();
        let center = n / 2;
        let mut delta = vec![0.0; n];
        delta[center] = 1.0;
        let out = apply_propagator(&stack, 1, &delta).unwrap();
        // Kernel support 0.11 on an h_x = 0.02 grid: the band is 5 nodes wide
        // (the support edge sits between lattice distances, so no entry can
        // straddle it through roundoff).
        let band = 5usize;
        let dh = p.diffusion * p.h_a();
        for (i, &v) in out.iter().enumerate() {
            let dist = i.abs_diff(center);
            if dist <= band {
                assert!(v > 0.0, "node {i} inside one radius should be reached");
            } else if dist <= 4 * band {
                assert!(
                    v.abs() <= dh * dh,
                    "node {i}: multi-hop mass {v} above the (D·h_a)² scale"
                );
            } else {
                assert_eq!(v, 0.0, "node {i} beyond four radii after one step");
            }
        }
    }

    #[test]
    fn instability_is_reported_with_the_age() {
        // One RK4 substep at D=40 is far outside the stability region.
        let mut c = config(30, 33);
        c.kernel = KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0).unwrap();
        c.mu = RateFn::expression("0.5 + 0.01*a").unwrap();
        c.diffusion_rate = 40.0;
        c.age.horizon = Some(8.0);
        let p = Problem::assemble(&c).unwrap();
        match compute_with_substeps(&p, 1) {
            Err(SpectraError::IntegratorInstability { age, .. }) => {
                assert!(age > 0.0 && age <= 8.0);
            }
            other => panic!("expected instability, got {other:?}"),
        }
    }
}
