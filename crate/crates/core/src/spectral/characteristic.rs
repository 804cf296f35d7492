//! The birth characteristic function and its roots.
//!
//! For each spatial node the discounted lifetime birth output
//! `G_α(x) = ∫₀^â β(a,x) e^{−(α+D)a} π(0,a,x) da` is strictly decreasing in
//! `α` and continuous, so each unit crossing is found by plain bisection
//! after growing a bracket geometrically from `α = 0` (monotonicity makes
//! derivative-based root finders unnecessary). Three roots matter:
//!
//! * `α**`: the unique root of `max_x G_α(x) = 1` — the spectral bound of
//!   the transport-plus-death part with the diffusion gain removed;
//! * `α(x)`: the per-node root of `G_α(x) = 1`, defined where local renewal
//!   is strong enough; always `α(x) ≤ α**`;
//! * scalar Lotka roots of `∫ b(a) e^{−sa} e^{−∫m} da = 1` for envelope or
//!   spatially constant rates, which give closed-form predictions and
//!   brackets for the full spectral solves.
//!
//! Age integrals use the problem's birth quadrature weights throughout, so
//! identities between these roots (e.g. `α** = ϖ − D` for x-independent
//! rates) hold at the root-solver tolerance on the discrete grid, not merely
//! in the continuum limit.
//!
//! On truncated-horizon grids (â = ∞) the admissible interval is
//! `α > −D − μ̃`: below it the continuum integral diverges and the truncated
//! sum silently misrepresents it, so evaluation refuses instead.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::math;
use crate::problem::Problem;
use crate::quadrature;
use crate::Result;

/// `G_α(x)` sampled over the spatial grid at one `α`.
#[derive(Debug, Clone)]
pub struct CharacteristicProfile {
    pub alpha: f64,
    /// `G_α(x_i)` per spatial node; nonnegative.
    pub values: Vec<f64>,
    pub max_value: f64,
    pub argmax_index: usize,
}

/// Per-node characteristic root. Where `G_·(x)` never reaches 1 (weak local
/// renewal, e.g. β(·,x) ≡ 0) there is no root in the admissible interval and
/// the node carries the interval's lower edge `−D−μ̃` as a boundary flag.
#[derive(Debug, Clone, Copy)]
pub struct AlphaAtNode {
    pub value: f64,
    pub is_boundary: bool,
}

/// `α(x)` over the whole grid, with the boundary-flag mask.
#[derive(Debug, Clone)]
pub struct AlphaProfile {
    pub nodes: Vec<AlphaAtNode>,
    /// Lower edge of the admissible interval, the value flagged nodes carry.
    pub floor: f64,
}

impl AlphaProfile {
    /// Values as a plain vector (flagged nodes at the floor value).
    pub fn values(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.value).collect()
    }

    /// Largest unflagged root, if any node has one.
    pub fn max_root(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter(|n| !n.is_boundary)
            .map(|n| n.value)
            .fold(None, |acc, v| {
                Some(acc.map_or(v, |a: f64| math::max(a, v)))
            })
    }
}

/// Closed-form spectral predictions available when rates do not vary in x.
#[derive(Debug, Clone, Copy)]
pub struct HomogeneousClosedForm {
    /// Lotka root ϖ of the diffusion-free renewal equation.
    pub varpi: f64,
    /// Principal eigenvalue λ⁰ of I−K (1 minus the kernel spectral radius).
    pub lambda0_kernel: f64,
    /// Predicted transport-part bound: α** = ϖ − D.
    pub predicted_s_b1c: f64,
    /// Predicted full spectral bound: λ₀ = ϖ − Dλ⁰.
    pub predicted_s_a: f64,
    /// Upper-envelope Lotka root λ¹ (equals ϖ when rates are x-independent).
    pub lambda1_envelope: f64,
}

/// Evaluate `G_α` at every spatial node.
pub fn evaluate_characteristic(problem: &Problem, alpha: f64) -> Result<CharacteristicProfile> {
    guard_admissible(problem, alpha)?;
    let n_x = problem.n_x();
    let n_a = problem.n_a();
    let d = problem.diffusion;
    let w = &problem.birth_weights;
    let mut values = Vec::with_capacity(n_x);
    for i in 0..n_x {
        let mut acc = 0.0;
        for k in 0..n_a {
            let wk = w[k];
            if wk == 0.0 {
                continue;
            }
            let a = problem.age.nodes[k];
            let beta = problem.rates.beta_support(k, i);
            if beta == 0.0 {
                continue;
            }
            acc += wk * beta * math::exp(-(alpha + d) * a - problem.rates.death_integral(0, k, i));
        }
        values.push(acc);
    }
    let (argmax_index, max_value) = argmax(&values);
    Ok(CharacteristicProfile {
        alpha,
        values,
        max_value,
        argmax_index,
    })
}

/// Root of `max_x G_α(x) = 1`: the spectral bound of the undiffused part.
pub fn solve_alpha_star(problem: &Problem) -> Result<f64> {
    let floor = admissible_floor(problem);
    let mut g = |alpha: f64| {
        evaluate_characteristic(problem, alpha)
            .map(|p| p.max_value)
            .expect("alpha kept inside the admissible interval by the bracket")
    };
    match bisect_decreasing(
        &mut g,
        floor,
        None,
        problem.tolerances.root_tol,
        problem.tolerances.max_iters,
        "alpha_star",
    )? {
        Some(root) => Ok(root),
        None => Err(SpectraError::Bracket {
            context: "alpha_star".into(),
            detail: format!(
                "max_x G_alpha(x) stays below 1 on the whole admissible interval \
                 (floor {:?}); lifetime birth output is too weak for a characteristic \
                 root — see the renewal-strength check in the validation report",
                floor
            ),
        }),
    }
}

/// Per-node characteristic root (boundary flag where there is none).
pub fn solve_alpha_of_x(problem: &Problem, x_index: usize) -> Result<AlphaAtNode> {
    if x_index >= problem.n_x() {
        return Err(SpectraError::InvalidInput(format!(
            "node index {x_index} out of range for the {}-node grid",
            problem.n_x()
        )));
    }
    let floor = admissible_floor(problem);
    let flag_value = -(problem.diffusion + problem.mu_tilde());
    let mut g = |alpha: f64| characteristic_at_node(problem, alpha, x_index);
    match bisect_decreasing(
        &mut g,
        floor,
        None,
        problem.tolerances.root_tol,
        problem.tolerances.max_iters,
        "alpha_of_x",
    )? {
        Some(root) => Ok(AlphaAtNode {
            value: root,
            is_boundary: false,
        }),
        None => Ok(AlphaAtNode {
            value: flag_value,
            is_boundary: true,
        }),
    }
}

/// `α(x)` at every node.
pub fn solve_alpha_profile(problem: &Problem) -> Result<AlphaProfile> {
    let nodes = (0..problem.n_x())
        .map(|i| solve_alpha_of_x(problem, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlphaProfile {
        nodes,
        floor: -(problem.diffusion + problem.mu_tilde()),
    })
}

/// Closed-form predictions for x-independent rates; refuses otherwise.
pub fn homogeneous_closed_form(problem: &Problem) -> Result<HomogeneousClosedForm> {
    if !problem.rates.x_independent {
        return Err(SpectraError::NotApplicable(
            "rates vary with x; the homogeneous closed form applies only to \
             spatially constant rates"
                .into(),
        ));
    }
    let varpi = match upper_envelope_root(problem)? {
        Some(v) => v,
        None => {
            return Err(SpectraError::Bracket {
                context: "homogeneous_closed_form".into(),
                detail: "the scalar renewal equation has no root (lifetime birth \
                         output below 1 on the admissible interval)"
                    .into(),
            })
        }
    };
    let lambda0_kernel = 1.0 - problem.kernel_radius;
    let d = problem.diffusion;
    Ok(HomogeneousClosedForm {
        varpi,
        lambda0_kernel,
        predicted_s_b1c: varpi - d,
        predicted_s_a: varpi - d * lambda0_kernel,
        lambda1_envelope: varpi,
    })
}

/// Lotka root for the optimistic envelope (largest birth β̄, smallest death
/// μ̲): an upper bound ingredient for diffusion-limit ladders.
pub fn upper_envelope_root(problem: &Problem) -> Result<Option<f64>> {
    scalar_renewal_root(
        problem,
        &problem.rates.beta_upper,
        &problem.rates.mu_lower,
        "upper_envelope_root",
    )
}

/// Lotka root for the pessimistic envelope (smallest birth β̲, largest death
/// μ̄): shifted by −Dλ⁰ it brackets the spectral bound from below.
pub fn lower_envelope_root(problem: &Problem) -> Result<Option<f64>> {
    scalar_renewal_root(
        problem,
        &problem.rates.beta_lower,
        &problem.rates.mu_upper,
        "lower_envelope_root",
    )
}

/// Root of the scalar renewal equation `Σ w_k b_k e^{−s a_k} S_k = 1` where
/// `S` is the survival of the mortality envelope `m`. `Ok(None)` when the
/// left side stays below 1 over the admissible interval.
fn scalar_renewal_root(
    problem: &Problem,
    birth: &[f64],
    mortality: &[f64],
    context: &str,
) -> Result<Option<f64>> {
    let h = problem.h_a();
    let cum = quadrature::cumulative_trapezoid(mortality, h);
    let w = &problem.birth_weights;
    let ages = &problem.age.nodes;
    let floor = if problem.age.is_truncated {
        let m_floor = mortality.iter().copied().fold(f64::INFINITY, math::min);
        Some(-m_floor)
    } else {
        None
    };
    let mut g = |s: f64| -> f64 {
        let mut acc = 0.0;
        for k in 0..ages.len() {
            if w[k] == 0.0 || birth[k] == 0.0 {
                continue;
            }
            acc += w[k] * birth[k] * math::exp(-s * ages[k] - cum[k]);
        }
        acc
    };
    bisect_decreasing(
        &mut g,
        floor,
        None,
        problem.tolerances.root_tol,
        problem.tolerances.max_iters,
        context,
    )
}

/// `G_α` at a single node (bisection inner loop; avoids the full profile).
fn characteristic_at_node(problem: &Problem, alpha: f64, i: usize) -> f64 {
    let d = problem.diffusion;
    let w = &problem.birth_weights;
    let mut acc = 0.0;
    for k in 0..problem.n_a() {
        if w[k] == 0.0 {
            continue;
        }
        let beta = problem.rates.beta_support(k, i);
        if beta == 0.0 {
            continue;
        }
        let a = problem.age.nodes[k];
        acc += w[k] * beta * math::exp(-(alpha + d) * a - problem.rates.death_integral(0, k, i));
    }
    acc
}

fn guard_admissible(problem: &Problem, alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(SpectraError::Domain(format!(
            "characteristic argument must be finite, got {alpha}"
        )));
    }
    if let Some(floor) = admissible_floor(problem) {
        if alpha <= floor {
            return Err(SpectraError::Domain(format!(
                "alpha = {alpha} is outside the admissible interval (must exceed \
                 -D - mu_floor = {floor}) on a truncated infinite age horizon"
            )));
        }
    }
    Ok(())
}

/// Lower edge of the admissible `α` interval (`None` = unbounded below,
/// which holds when the age horizon is genuinely finite).
fn admissible_floor(problem: &Problem) -> Option<f64> {
    if problem.age.is_truncated {
        Some(-(problem.diffusion + problem.mu_tilde()))
    } else {
        None
    }
}

fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    (best, best_v)
}

/// Bisection for `g(s) = 1` on a strictly decreasing continuous `g`, with the
/// bracket grown geometrically from `s = 0`. `floor` bounds the search from
/// below (the solution must stay strictly above it); `Ok(None)` means `g`
/// stays below 1 all the way down — a legitimate "no root" outcome the
/// callers interpret (boundary flag, envelope without a root, ...).
///
/// `lower_hint` is an optional analytically justified lower bracket (a point
/// where the caller expects `g ≥ 1`, e.g. the envelope Lotka bound for the
/// diffused radius): when it checks out it replaces the downward walk, and
/// when it does not it still tightens the upper end.
///
/// The convergence contract is on the residual: the returned `s` satisfies
/// `|g(s) − 1| ≤ tol`. Strict monotonicity makes that root unique.
pub(crate) fn bisect_decreasing(
    g: &mut impl FnMut(f64) -> f64,
    floor: Option<f64>,
    lower_hint: Option<f64>,
    tol: f64,
    max_iters: usize,
    context: &str,
) -> Result<Option<f64>> {
    const GROW_STEPS: usize = 90;
    let g0 = checked(g(0.0), 0.0, context)?;
    if math::abs(g0 - 1.0) <= tol {
        return Ok(Some(0.0));
    }
    let (mut lo, mut hi) = if g0 > 1.0 {
        // Root above 0: push the upper end out until g drops below 1.
        let mut hi = 1.0;
        let mut steps = 0usize;
        loop {
            let ghi = checked(g(hi), hi, context)?;
            if ghi < 1.0 {
                break;
            }
            if math::abs(ghi - 1.0) <= tol {
                return Ok(Some(hi));
            }
            hi *= 2.0;
            steps += 1;
            if steps > GROW_STEPS {
                return Err(SpectraError::Bracket {
                    context: String::from(context),
                    detail: format!(
                        "g stays at or above 1 out to s = {hi:.3e}; the discrete \
                         birth integral has a quadrature floor >= 1 (resolution \
                         too coarse for this scenario)"
                    ),
                });
            }
        }
        (0.0, hi)
    } else {
        // Root below 0: walk the lower end down, geometrically toward the
        // admissible floor when there is one, doubling otherwise. A caller
        // with a proven lower bracket (e.g. the envelope Lotka bound) can
        // pass it as a hint to skip the walk entirely.
        let mut lo_found = None;
        let mut hi_end = 0.0;
        if let Some(h) = lower_hint {
            if h < 0.0 && h.is_finite() && floor.map_or(true, |f| h > f) {
                let gh = checked(g(h), h, context)?;
                if math::abs(gh - 1.0) <= tol {
                    return Ok(Some(h));
                }
                if gh > 1.0 {
                    lo_found = Some(h);
                } else {
                    // The hint undershot; it still tightens the upper end.
                    hi_end = h;
                }
            }
        }
        if lo_found.is_none() {
            match floor {
                Some(f) => {
                    debug_assert!(f < 0.0, "admissible floor sits below the 0 start");
                    let mut j = 1u32;
                    while j <= 120 {
                        let lo = f + (hi_end - f) * math::powf(0.5, j as f64);
                        if lo <= f {
                            // The walk has reached the floor to within an
                            // ulp; a crossing this close is numerically
                            // indistinct from "no root in the admissible
                            // interval".
                            break;
                        }
                        let glo = checked(g(lo), lo, context)?;
                        if glo > 1.0 {
                            lo_found = Some(lo);
                            break;
                        }
                        j += 1;
                    }
                }
                None => {
                    let mut lo = if hi_end < 0.0 { 2.0 * hi_end } else { -1.0 };
                    let mut steps = 0usize;
                    loop {
                        let glo = checked(g(lo), lo, context)?;
                        if glo > 1.0 {
                            lo_found = Some(lo);
                            break;
                        }
                        lo *= 2.0;
                        steps += 1;
                        if steps > GROW_STEPS {
                            break;
                        }
                    }
                }
            }
        }
        match lo_found {
            Some(lo) => (lo, hi_end),
            None => return Ok(None),
        }
    };
    // Invariant: g(lo) > 1 > g(hi). Stop on the residual, not the width.
    for _ in 0..max_iters {
        let mid = 0.5 * (lo + hi);
        let gm = checked(g(mid), mid, context)?;
        if math::abs(gm - 1.0) <= tol {
            return Ok(Some(mid));
        }
        if gm > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * math::max(math::abs(lo), math::abs(hi)) {
            // Interval exhausted at machine precision without meeting the
            // residual: g is effectively discontinuous at the root.
            return Err(SpectraError::Numerical(format!(
                "{context}: bisection interval collapsed at s = {mid:.12e} with \
                 residual {:.3e} still above tolerance {tol:.1e}",
                gm - 1.0
            )));
        }
    }
    Err(SpectraError::Numerical(format!(
        "{context}: bisection did not meet the residual tolerance {tol:.1e} \
         within {max_iters} iterations"
    )))
}

fn checked(value: f64, at: f64, context: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SpectraError::Numerical(format!(
            "{context}: characteristic evaluation returned {value} at s = {at}"
        )))
    }
}
