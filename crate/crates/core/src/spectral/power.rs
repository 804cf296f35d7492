//! Spectral radius of nonnegative operators by power iteration.
//!
//! All radii in this crate (kernel operator, next-generation operators,
//! perturbation operators) are Perron roots of (discretizations of) positive
//! operators, so plain power iteration with a deterministic all-ones start is
//! the right tool: no shifts, no factorizations, reproducible to the bit.
//! Convergence is judged on Rayleigh-quotient increments plus the eigenpair
//! residual, and Collatz–Wielandt ratio bounds are reported so callers can
//! turn an eigenpair into entrywise inequalities.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::linalg::{dot, sup_norm, Matrix};
use crate::math;
use crate::model::scenario::Tolerances;
use crate::Result;

/// Entries above this (relative) fraction of the sup norm participate in the
/// Collatz–Wielandt ratio bounds; smaller ones are treated as structural
/// zeros (degenerate rows where the birth rate vanishes).
const CW_SUPPORT_FLOOR: f64 = 1e-12;

/// Converged Perron pair with certification data.
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub radius: f64,
    /// Sup-normalized nonnegative eigenvector.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// ‖Mv − radius·v‖_∞ / ‖v‖_∞ at the returned pair.
    pub residual: f64,
    /// Collatz–Wielandt bounds: min/max of (Mv)_i / v_i over supported i.
    pub cw_lower: f64,
    pub cw_upper: f64,
}

/// Spectral radius of a nonnegative matrix.
///
/// Entries in [−1e−12, 0) are clamped to zero (integrator roundoff);
/// anything more negative is rejected.
pub fn spectral_radius(matrix: &Matrix, tol: &Tolerances, context: &str) -> Result<PowerResult> {
    if matrix.rows() != matrix.cols() {
        return Err(SpectraError::InvalidInput(format!(
            "{context}: spectral radius needs a square matrix, got {}x{}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    let mut clamped;
    let m = if matrix.data().iter().any(|&v| v < 0.0) {
        if let Some(v) = matrix.data().iter().find(|&&v| v < -1e-12) {
            return Err(SpectraError::InvalidInput(format!(
                "{context}: matrix entry {v} is negative beyond roundoff tolerance"
            )));
        }
        clamped = matrix.clone();
        for v in clamped.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        &clamped
    } else {
        matrix
    };
    let n = m.rows();
    let mut image = vec![0.0; n];
    power_iterate(
        |v, out| {
            m.matvec(v, out);
            true
        },
        n,
        tol,
        context,
        &mut image,
    )
}

/// Spectral radius of a positivity-preserving operator given by its action.
/// `apply(v, out)` must write the image of `v` into `out` and return `true`
/// (a `false` aborts with a numerical error, for guarded operators).
pub fn spectral_radius_of<F>(
    mut apply: F,
    dim: usize,
    tol: &Tolerances,
    context: &str,
) -> Result<PowerResult>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    let mut image = vec![0.0; dim];
    power_iterate(
        |v, out| apply(v, out),
        dim,
        tol,
        context,
        &mut image,
    )
}

fn power_iterate<F>(
    mut apply: F,
    n: usize,
    tol: &Tolerances,
    context: &str,
    image: &mut [f64],
) -> Result<PowerResult>
where
    F: FnMut(&[f64], &mut [f64]) -> bool,
{
    let mut v = vec![1.0f64; n];
    // Last three Rayleigh quotients, newest first (for the settle test and
    // the period-2 oscillation diagnosis).
    let mut hist = [f64::NAN; 3];
    for iter in 1..=tol.max_iters {
        if !apply(&v, image) {
            return Err(SpectraError::Numerical(format!(
                "{context}: operator application failed during power iteration"
            )));
        }
        let vv = dot(&v, &v);
        let rayleigh = if vv > 0.0 { dot(&v, image) / vv } else { 0.0 };
        let peak = sup_norm(image);
        if peak == 0.0 {
            // Nilpotent direction: the operator annihilates the cone (e.g.
            // the next-generation operator past the zero-radius knee).
            return Ok(PowerResult {
                radius: 0.0,
                vector: v,
                iterations: iter,
                residual: 0.0,
                cw_lower: 0.0,
                cw_upper: 0.0,
            });
        }
        // Residual and CW ratios at the current pair (v, rayleigh).
        let vmax = sup_norm(&v);
        let floor = CW_SUPPORT_FLOOR * vmax;
        let mut residual = 0.0;
        let mut cw_lower = f64::INFINITY;
        let mut cw_upper: f64 = 0.0;
        for i in 0..n {
            residual = math::max(residual, math::abs(image[i] - rayleigh * v[i]));
            if v[i] > floor {
                let ratio = image[i] / v[i];
                cw_lower = math::min(cw_lower, ratio);
                cw_upper = math::max(cw_upper, ratio);
            }
        }
        residual /= vmax;
        let scale = math::max(1.0, math::abs(rayleigh));
        let settled = (rayleigh - hist[0]).abs() <= tol.power_iter_tol * scale
            && residual <= tol.power_iter_tol * scale;
        hist = [rayleigh, hist[0], hist[1]];
        // Normalize for the next round (and for the returned vector).
        let inv = 1.0 / peak;
        for i in 0..n {
            v[i] = image[i] * inv;
        }
        if settled {
            return Ok(PowerResult {
                radius: rayleigh,
                vector: v,
                iterations: iter,
                residual,
                cw_lower,
                cw_upper,
            });
        }
    }
    let scale = math::max(1.0, math::abs(hist[0]));
    let oscillating = hist[2].is_finite()
        && (hist[0] - hist[2]).abs() < 1e-6 * scale
        && (hist[0] - hist[1]).abs() > 1e-6 * scale;
    Err(SpectraError::NonConvergence {
        context: String::from(context),
        iterations: tol.max_iters,
        last_estimate: hist[0],
        oscillating,
        last_iterate: v,
    })
}

/// Magnitude of the second-largest eigenvalue of a nonnegative matrix, given
/// its converged Perron pair. Diagnostic quality: the dominant pair is
/// deflated with the left Perron vector and the subdominant modulus is read
/// off the geometric growth of the deflated iteration, which also handles
/// complex pairs (whose moduli, not values, converge).
pub fn second_eigenvalue_magnitude(
    matrix: &Matrix,
    dominant: &PowerResult,
    tol: &Tolerances,
) -> Result<f64> {
    let n = matrix.rows();
    // Left Perron vector by iterating the transpose.
    let left = {
        let mut v = vec![1.0f64; n];
        let mut image = vec![0.0; n];
        for _ in 0..2000 {
            matrix.matvec_transpose(&v, &mut image);
            let peak = sup_norm(&image);
            if peak == 0.0 {
                return Ok(0.0);
            }
            let inv = 1.0 / peak;
            for i in 0..n {
                v[i] = image[i] * inv;
            }
        }
        v
    };
    let wv = dot(&left, &dominant.vector);
    if wv.abs() < 1e-300 {
        return Ok(dominant.radius); // deflation impossible; report no gap
    }
    // Deflated action: x ↦ Mx − r·v·(wᵀx)/(wᵀv), started off the cone.
    let mut x: Vec<f64> = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let mut image = vec![0.0; n];
    let mut growth_log = 0.0;
    let mut samples = 0usize;
    let iters = 400.min(tol.max_iters);
    for k in 0..iters {
        matrix.matvec(&x, &mut image);
        let proj = dot(&left, &x) / wv;
        for i in 0..n {
            image[i] -= dominant.radius * dominant.vector[i] * proj;
        }
        let peak = sup_norm(&image);
        if peak < 1e-280 {
            return Ok(0.0);
        }
        if k >= iters - 50 {
            growth_log += math::ln(peak / sup_norm(&x));
            samples += 1;
        }
        // Renormalize so sup |x| = 1: the next growth factor is the next peak.
        let inv = 1.0 / peak;
        for i in 0..n {
            x[i] = image[i] * inv;
        }
    }
    if samples == 0 {
        return Ok(0.0);
    }
    Ok(math::exp(growth_log / samples as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn identity_has_radius_one_uniform_vector() {
        let m = Matrix::identity(5);
        let r = spectral_radius(&m, &tols(), "test").unwrap();
        assert!((r.radius - 1.0).abs() < 1e-12);
        assert!(r.vector.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(r.cw_lower <= 1.0 && r.cw_upper >= 1.0);
    }

    #[test]
    fn rank_one_radius_is_inner_product() {
        // M = w tᵀ has nonzero eigenvalue tᵀw.
        let w = [1.0, 2.0, 0.5];
        let t = [0.3, 0.1, 0.2];
        let mut m = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                m.set(i, j, w[i] * t[j]);
            }
        }
        let expect = dot(&w, &t);
        let r = spectral_radius(&m, &tols(), "rank1").unwrap();
        assert!((r.radius - expect).abs() < 1e-10);
    }

    #[test]
    fn matches_secular_equation_oracle() {
        // A = diag(d) + u vᵀ with u, v > 0: the Perron root is the unique
        // λ > max(d) solving Σ uᵢvᵢ/(λ−dᵢ) = 1, found here by bisection —
        // an independent scalar characterization of the same eigenvalue.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..4 {
            let n = 50;
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let base = if i == j { d[i] } else { 0.0 };
                    m.set(i, j, base + u[i] * v[j]);
                }
            }
            let dmax = d.iter().cloned().fold(f64::MIN, f64::max);
            let secular = |lam: f64| -> f64 {
                d.iter()
                    .zip(u.iter().zip(v.iter()))
                    .map(|(&di, (&ui, &vi))| ui * vi / (lam - di))
                    .sum::<f64>()
            };
            let (mut lo, mut hi) = (dmax + 1e-9, dmax + 100.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if secular(mid) > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = 0.5 * (lo + hi);
            let r = spectral_radius(&m, &tols(), "secular").unwrap();
            assert!(
                (r.radius - oracle).abs() < 1e-8,
                "power {} vs oracle {}",
                r.radius,
                oracle
            );
        }
    }

    #[test]
    fn zero_matrix_reports_zero_radius() {
        let m = Matrix::zeros(4, 4);
        let r = spectral_radius(&m, &tols(), "zero").unwrap();
        assert_eq!(r.radius, 0.0);
    }

    #[test]
    fn periodic_matrix_reports_oscillation() {
        // Eigenvalues ±1: the power sequence cycles with period 2.
        let m = Matrix::from_rows(2, 2, vec![0.0, 2.0, 0.5, 0.0]).unwrap();
        let mut t = tols();
        t.max_iters = 500;
        match spectral_radius(&m, &t, "periodic") {
            Err(SpectraError::NonConvergence {
                oscillating,
                last_estimate,
                ..
            }) => {
                assert!(oscillating);
                assert!(last_estimate.is_finite());
            }
            other => panic!("expected oscillation diagnosis, got {other:?}"),
        }
    }

    #[test]
    fn too_negative_entries_are_rejected() {
        let m = Matrix::from_rows(2, 2, vec![1.0, -1e-6, 0.0, 1.0]).unwrap();
        assert!(spectral_radius(&m, &tols(), "neg").is_err());
        // Roundoff-scale negatives are clamped instead.
        let m = Matrix::from_rows(2, 2, vec![1.0, -1e-14, 0.0, 0.5]).unwrap();
        assert!(spectral_radius(&m, &tols(), "clamp").is_ok());
    }

    #[test]
    fn zero_birth_rows_still_converge() {
        // Row 0 identically zero (a node where β vanishes at all ages).
        let m = Matrix::from_rows(3, 3, vec![0.0, 0.0, 0.0, 0.1, 0.8, 0.1, 0.0, 0.3, 0.6])
            .unwrap();
        let r = spectral_radius(&m, &tols(), "zero-row").unwrap();
        assert!(r.radius > 0.85 && r.radius < 1.0);
        assert_eq!(r.vector[0], 0.0);
    }

    #[test]
    fn deflated_second_eigenvalue_on_diagonal_matrix() {
        let m = Matrix::from_rows(3, 3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.2])
            .unwrap();
        let first = spectral_radius(&m, &tols(), "diag").unwrap();
        assert!((first.radius - 3.0).abs() < 1e-9);
        let second = second_eigenvalue_magnitude(&m, &first, &tols()).unwrap();
        assert!((second - 1.0).abs() < 1e-3, "second = {second}");
    }
}
