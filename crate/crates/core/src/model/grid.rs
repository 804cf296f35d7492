//! Spatial and age discretizations.
//!
//! Space is a uniform grid on a bounded interval carrying composite trapezoid
//! quadrature weights. Age is a uniform grid on `[0, a_max]`; when the birth
//! rate has a cutoff age the grid ends exactly there, otherwise the infinite
//! age horizon is truncated where the guaranteed survival decay
//! `exp(−μ̃·a_max)` drops below a tenth of the root tolerance.

use alloc::format;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::math;
use crate::quadrature;
use crate::Result;

/// Uniform spatial grid over a bounded 1-D domain with quadrature weights.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpatialGrid {
    pub lower: f64,
    pub upper: f64,
    pub n_x: usize,
    pub nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
}

impl SpatialGrid {
    /// Build a uniform grid with `n_x` nodes including both endpoints.
    pub fn uniform(lower: f64, upper: f64, n_x: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(SpectraError::InvalidInput(
                "domain endpoints must be finite".into(),
            ));
        }
        if upper <= lower {
            return Err(SpectraError::InvalidInput(format!(
                "domain upper bound {upper} must exceed lower bound {lower}"
            )));
        }
        if n_x < 2 {
            return Err(SpectraError::InvalidInput(format!(
                "spatial grid needs at least 2 nodes, got {n_x}"
            )));
        }
        let h = (upper - lower) / (n_x - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_x).map(|i| lower + i as f64 * h).collect();
        // Pin the endpoints exactly; accumulated rounding must not leak into
        // the invariant nodes[n_x−1] = upper.
        nodes[0] = lower;
        nodes[n_x - 1] = upper;
        let quad_weights = quadrature::trapezoid_weights(n_x, h);
        Ok(Self {
            lower,
            upper,
            n_x,
            nodes,
            quad_weights,
        })
    }

    /// Node spacing.
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.n_x - 1) as f64
    }

    /// Domain length |Ω|.
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// Same endpoints, `factor`× the node count (refinement studies).
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::uniform(self.lower, self.upper, self.n_x * factor.max(1))
    }

    /// Sub-grid over `[lo, hi]` using this grid's own nodes (no resampling),
    /// so nested-domain comparisons are free of interpolation noise. Returns
    /// the sub-grid and the index range `start..end` into the parent nodes.
    pub fn subgrid(&self, lo: f64, hi: f64) -> Result<(Self, core::ops::Range<usize>)> {
        if lo >= hi {
            return Err(SpectraError::InvalidInput(
                "subdomain must have positive length".into(),
            ));
        }
        let h = self.spacing();
        let eps = 1e-9 * h;
        let start = self
            .nodes
            .iter()
            .position(|&x| x >= lo - eps)
            .ok_or_else(|| SpectraError::InvalidInput("subdomain beyond grid".into()))?;
        let end = self
            .nodes
            .iter()
            .rposition(|&x| x <= hi + eps)
            .ok_or_else(|| SpectraError::InvalidInput("subdomain beyond grid".into()))?
            + 1;
        if end - start < 2 {
            return Err(SpectraError::InvalidInput(
                "subdomain covers fewer than 2 grid nodes".into(),
            ));
        }
        let nodes: Vec<f64> = self.nodes[start..end].to_vec();
        let n = nodes.len();
        let sub = Self {
            lower: nodes[0],
            upper: nodes[n - 1],
            n_x: n,
            quad_weights: quadrature::trapezoid_weights(n, h),
            nodes,
        };
        Ok((sub, start..end))
    }
}

/// Uniform age grid on `[0, a_max]`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AgeGrid {
    pub a_max: f64,
    pub n_a: usize,
    pub nodes: Vec<f64>,
    /// Whether `a_max` truncates an infinite age horizon.
    pub is_truncated: bool,
    /// `exp(−μ̃·a_max)` when truncated; 0 when the horizon is exact.
    pub truncation_tail_bound: f64,
}

impl AgeGrid {
    fn build(a_max: f64, n_a: usize, is_truncated: bool, tail: f64) -> Result<Self> {
        if !(a_max > 0.0) || !a_max.is_finite() {
            return Err(SpectraError::InvalidInput(format!(
                "age horizon must be positive and finite, got {a_max}"
            )));
        }
        if n_a < 3 {
            return Err(SpectraError::InvalidInput(format!(
                "age grid needs at least 3 nodes, got {n_a}"
            )));
        }
        let h = a_max / (n_a - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_a).map(|k| k as f64 * h).collect();
        nodes[n_a - 1] = a_max;
        Ok(Self {
            a_max,
            n_a,
            nodes,
            is_truncated,
            truncation_tail_bound: tail,
        })
    }

    /// Grid ending exactly at the birth-rate cutoff age `a2`.
    pub fn exact(a2: f64, n_a: usize) -> Result<Self> {
        Self::build(a2, n_a, false, 0.0)
    }

    /// Truncation of an infinite horizon: `a_max` is set so the survival
    /// bound `exp(−μ̃·a_max)` falls below `root_tol / 10`.
    pub fn truncated(mu_tilde: f64, root_tol: f64, n_a: usize) -> Result<Self> {
        if !(mu_tilde > 0.0) {
            return Err(SpectraError::AssumptionViolated {
                assumption: "uniform death-rate lower bound μ̃ > 0".into(),
                detail: format!("cannot truncate an infinite age horizon with μ̃ = {mu_tilde}"),
            });
        }
        if !(root_tol > 0.0) {
            return Err(SpectraError::InvalidInput(
                "root tolerance must be positive".into(),
            ));
        }
        let a_max = math::ln(10.0 / root_tol) / mu_tilde;
        let tail = math::exp(-mu_tilde * a_max);
        Self::build(a_max, n_a, true, tail)
    }

    /// Explicit horizon (e.g. configured by hand); `truncated` flags whether
    /// it stands in for an infinite one.
    pub fn with_horizon(a_max: f64, n_a: usize, truncated: bool, mu_tilde: f64) -> Result<Self> {
        let tail = if truncated {
            math::exp(-mu_tilde * a_max)
        } else {
            0.0
        };
        Self::build(a_max, n_a, truncated, tail)
    }

    /// Node spacing h_a.
    pub fn spacing(&self) -> f64 {
        self.a_max / (self.n_a - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spatial_grid_invariants() {
        let g = SpatialGrid::uniform(-1.0, 1.0, 200).unwrap();
        assert_eq!(g.nodes[0], -1.0);
        assert_eq!(g.nodes[199], 1.0);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        let total: f64 = g.quad_weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-12 * 2.0);
    }

    #[test]
    fn spatial_grid_rejects_degenerate_domains() {
        assert!(SpatialGrid::uniform(1.0, 1.0, 10).is_err());
        assert!(SpatialGrid::uniform(0.0, 1.0, 1).is_err());
        assert!(SpatialGrid::uniform(f64::NAN, 1.0, 10).is_err());
    }

    #[test]
    fn subgrid_reuses_parent_nodes() {
        let g = SpatialGrid::uniform(-1.0, 1.0, 201).unwrap();
        let (sub, range) = g.subgrid(-0.8, 0.8).unwrap();
        assert_eq!(&g.nodes[range.clone()], sub.nodes.as_slice());
        assert!((sub.lower + 0.8).abs() < 1e-12);
        assert!((sub.upper - 0.8).abs() < 1e-12);
        let total: f64 = sub.quad_weights.iter().sum();
        assert!((total - 1.6).abs() < 1e-12);
    }

    #[test]
    fn truncated_age_grid_meets_tail_bound() {
        let root_tol = 1e-6;
        let g = AgeGrid::truncated(0.5, root_tol, 200).unwrap();
        assert!(g.is_truncated);
        assert!(g.truncation_tail_bound < root_tol / 10.0 * (1.0 + 1e-12));
        assert!((g.a_max - (10.0f64 / root_tol).ln() / 0.5).abs() < 1e-9);
        assert_eq!(g.nodes.len(), 200);
        assert!((g.spacing() - g.a_max / 199.0).abs() < 1e-15);
    }

    #[test]
    fn exact_age_grid_ends_on_cutoff() {
        let g = AgeGrid::exact(2.0, 201).unwrap();
        assert!(!g.is_truncated);
        assert_eq!(g.nodes[200], 2.0);
        assert_eq!(g.truncation_tail_bound, 0.0);
    }

    #[test]
    fn truncation_requires_positive_mu_tilde() {
        assert!(matches!(
            AgeGrid::truncated(0.0, 1e-6, 100),
            Err(SpectraError::AssumptionViolated { .. })
        ));
    }
}
