//! Quadrature rules shared by the spectral solvers.
//!
//! Spatial integrals use composite trapezoid weights (the kernel matrix is
//! renormalized separately so its rows integrate to one exactly). Integrals
//! along the age direction use composite Simpson weights: age integrands are
//! products of decaying exponentials sampled over a truncated horizon, and at
//! the reference resolutions the O(h²) trapezoid bias on those profiles is an
//! order of magnitude larger than the root tolerances the solvers must meet,
//! while Simpson's O(h⁴) error is comfortably below them.
//!
//! Criterion-style integrals with an endpoint singularity (e.g. ∫ dx/(m−β(x))
//! near the maximum of β) get a dedicated dyadic-shell rule that classifies
//! the singularity as integrable or divergent instead of returning garbage.

use alloc::vec;
use alloc::vec::Vec;

/// Composite trapezoid weights for `n` uniformly spaced nodes, spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            w
        }
    }
}

/// Composite Simpson weights for `n` uniformly spaced nodes, spacing `h`.
///
/// An odd interval count is handled by closing with a single 3/8 rule, so the
/// rule stays O(h⁴) for any `n ≥ 3`; `n = 2` falls back to the trapezoid.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    if n == 2 {
        return trapezoid_weights(n, h);
    }
    let intervals = n - 1;
    // Number of leading intervals covered by plain Simpson pairs.
    let paired = if intervals % 2 == 0 {
        intervals
    } else {
        intervals - 3
    };
    let mut i = 0;
    while i < paired {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    if paired < intervals {
        // Closing 3/8 rule over the final three intervals.
        let c = 3.0 * h / 8.0;
        w[i] += c;
        w[i + 1] += 3.0 * c;
        w[i + 2] += 3.0 * c;
        w[i + 3] += c;
    }
    w
}

/// Weights for renewal integrals ∫₀^∞ β(a)·f(a) da on a grid where β vanishes
/// at and beyond the node `cutoff` (exclusive upper index of the support).
///
/// The support `[0, a_cutoff]` gets its own Simpson rule — including the
/// closing node, where the integrand's left limit is used by the caller —
/// and every node past the cutoff gets weight zero. Without the split, any
/// O(h⁴) rule straddling the jump in β degrades to O(h).
pub fn birth_weights(n: usize, h: f64, cutoff: Option<usize>) -> Vec<f64> {
    match cutoff {
        None => simpson_weights(n, h),
        Some(k) => {
            let k = k.min(n - 1);
            let mut w = simpson_weights(k + 1, h);
            w.resize(n, 0.0);
            w
        }
    }
}

/// Cumulative trapezoid integral: returns `c` with `c[i] = ∫_{t₀}^{tᵢ} f`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for pair in values.windows(2) {
        acc += 0.5 * h * (pair[0] + pair[1]);
        out.push(acc);
    }
    out
}

/// Fixed-resolution composite Simpson rule on `[a, b]` with `panels` pairs of
/// intervals. Used for scalar cross-checks against the grid-based rules.
pub fn simpson_scalar<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = 2 * panels.max(1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Outcome of a singular-endpoint integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularIntegral {
    /// Shell sum plus geometric tail extrapolation (meaningful only when
    /// `converged`).
    pub value: f64,
    /// Whether the shell contributions decayed geometrically.
    pub converged: bool,
    /// Observed ratio between late consecutive shell contributions.
    pub tail_ratio: f64,
}

/// Number of dyadic shells used around a singular endpoint. 48 halvings shrink
/// the innermost shell to ~3e−15 of the interval, the practical limit of f64
/// point placement.
const SINGULAR_SHELLS: usize = 48;

/// Contribution-ratio threshold above which the shell sums are declared
/// non-convergent (a ratio of 1 corresponds to a logarithmic divergence,
/// ratios above 2^{p−1} with p ≥ 1 to power-law divergences).
const DIVERGENCE_RATIO: f64 = 0.985;

/// Integrate `f` over `[a, b]` when `f` may blow up at exactly one endpoint.
///
/// The interval is split into dyadic shells accumulating toward the singular
/// endpoint; each shell is regular and gets a fixed Simpson rule. For an
/// algebraic singularity |t−s|^{−p} the shell contributions form a geometric
/// sequence with ratio 2^{p−1}, so the sum converges exactly when the true
/// integral does, and the remaining tail is extrapolated from the observed
/// ratio. Divergent integrands (p ≥ 1) are reported as such rather than
/// silently truncated.
pub fn integrate_singular_endpoint<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    singular_at_left: bool,
) -> SingularIntegral {
    let length = b - a;
    if length <= 0.0 {
        return SingularIntegral {
            value: 0.0,
            converged: true,
            tail_ratio: 0.0,
        };
    }
    let eval = |offset: f64| {
        if singular_at_left {
            f(a + offset)
        } else {
            f(b - offset)
        }
    };
    let mut total = 0.0;
    let mut last_shells = [0.0f64; 4];
    let mut outer = length;
    for shell in 0..SINGULAR_SHELLS {
        let inner = outer * 0.5;
        let contribution = simpson_scalar(&eval, inner, outer, 8);
        total += contribution;
        last_shells.rotate_left(1);
        last_shells[3] = contribution;
        outer = inner;
        if shell >= 3 && last_shells[3].abs() < 1e-300 {
            // Integrand died out before the singular endpoint; nothing left.
            return SingularIntegral {
                value: total,
                converged: true,
                tail_ratio: 0.0,
            };
        }
    }
    // Average ratio over the last shells smooths Simpson noise on each shell.
    let mut ratios = [0.0f64; 3];
    for i in 0..3 {
        ratios[i] = if last_shells[i].abs() > 1e-300 {
            last_shells[i + 1] / last_shells[i]
        } else {
            0.0
        };
    }
    let tail_ratio = (ratios[0] + ratios[1] + ratios[2]) / 3.0;
    if !(tail_ratio < DIVERGENCE_RATIO) {
        return SingularIntegral {
            value: f64::INFINITY,
            converged: false,
            tail_ratio,
        };
    }
    // Geometric tail: remaining shells sum to ≈ last·r/(1−r).
    let tail = last_shells[3] * tail_ratio / (1.0 - tail_ratio);
    SingularIntegral {
        value: total + tail,
        converged: true,
        tail_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn apply(w: &[f64], f: impl Fn(f64) -> f64, h: f64) -> f64 {
        let values: alloc::vec::Vec<f64> = (0..w.len()).map(|i| f(i as f64 * h)).collect();
        dot(w, &values)
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let h = 0.25;
        let w = trapezoid_weights(9, h);
        let got = apply(&w, |t| 3.0 * t + 1.0, h);
        let exact = 3.0 * 2.0f64.powi(2) / 2.0 + 2.0;
        assert!((got - exact).abs() < 1e-14);
    }

    #[test]
    fn simpson_exact_for_cubics_even_and_odd_intervals() {
        let f = |t: f64| t * t * t - 2.0 * t * t + 0.5;
        let exact = |b: f64| b.powi(4) / 4.0 - 2.0 * b.powi(3) / 3.0 + 0.5 * b;
        // 8 intervals: pure Simpson pairs.
        let h = 0.25;
        let got = apply(&simpson_weights(9, h), f, h);
        assert!((got - exact(2.0)).abs() < 1e-13);
        // 7 intervals: Simpson pairs + closing 3/8 rule.
        let got = apply(&simpson_weights(8, h), f, h);
        assert!((got - exact(1.75)).abs() < 1e-13);
        // 3 intervals: pure 3/8 rule.
        let got = apply(&simpson_weights(4, h), f, h);
        assert!((got - exact(0.75)).abs() < 1e-14);
    }

    #[test]
    fn simpson_beats_trapezoid_on_decaying_exponential() {
        // The profile the renewal integrals actually see.
        let h = 0.16;
        let n = 201;
        let f = |t: f64| 2.0 * (-2.0 * t).exp();
        let exact = 1.0 - (-2.0 * (n as f64 - 1.0) * h).exp();
        let trap = apply(&trapezoid_weights(n, h), f, h);
        let simp = apply(&simpson_weights(n, h), f, h);
        assert!((trap - exact).abs() > 1e-3, "trapezoid bias {}", trap - exact);
        assert!((simp - exact).abs() < 1e-4, "simpson bias {}", simp - exact);
    }

    #[test]
    fn birth_weights_vanish_past_cutoff() {
        let w = birth_weights(11, 0.5, Some(4));
        assert!(w[5..].iter().all(|&v| v == 0.0));
        // Support weights integrate a cubic exactly on [0, 2].
        let got = dot(&w, &(0..11).map(|i| (i as f64 * 0.5).powi(3)).collect::<alloc::vec::Vec<_>>());
        assert!((got - 4.0).abs() < 1e-13);
    }

    #[test]
    fn cumulative_trapezoid_matches_closed_form() {
        let h = 0.1;
        let values: alloc::vec::Vec<f64> = (0..21).map(|i| 0.5 + 0.1 * (i as f64 * h)).collect();
        let cums = cumulative_trapezoid(&values, h);
        // ∫₀^t (0.5 + 0.1 s) ds is quadratic, trapezoid on linear data is exact.
        let t = 2.0;
        assert!((cums[20] - (0.5 * t + 0.05 * t * t)).abs() < 1e-14);
        assert_eq!(cums[0], 0.0);
    }

    #[test]
    fn singular_shells_integrable_case() {
        // ∫₀¹ t^{−1/2} dt = 2, singular at the left endpoint.
        let out = integrate_singular_endpoint(|t: f64| t.powf(-0.5), 0.0, 1.0, true);
        assert!(out.converged);
        assert!((out.value - 2.0).abs() < 1e-6, "value {}", out.value);
        // Mirror orientation.
        let out = integrate_singular_endpoint(|t: f64| (1.0 - t).powf(-0.5), 0.0, 1.0, false);
        assert!(out.converged);
        assert!((out.value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn singular_shells_divergent_case() {
        for p in [1.0, 1.5, 2.0] {
            let out = integrate_singular_endpoint(|t: f64| t.powf(-p), 0.0, 1.0, true);
            assert!(!out.converged, "p = {p} should diverge");
            assert!(out.value.is_infinite());
        }
    }

    #[test]
    fn singular_shells_regular_integrand() {
        let out = integrate_singular_endpoint(|t: f64| t * t, 0.0, 3.0, true);
        assert!(out.converged);
        assert!((out.value - 9.0).abs() < 1e-9);
    }
}
