//! Birth and death rates sampled onto the grid, with envelopes and survival.
//!
//! Rates enter the solvers only through their grid samples, so `RateField`
//! memoizes β and μ on the age×space grid at construction, together with the
//! age envelopes (min/max over space per age node) and the cumulative death
//! integrals that survival probabilities are built from. The original rate
//! functions are kept alongside the samples: refinement studies re-evaluate
//! them on finer grids.
//!
//! A birth cutoff age a₂ is represented explicitly rather than baked into the
//! rate function: β is treated as zero at and beyond a₂ pointwise, while
//! renewal quadratures use the unmasked values on the support closure — the
//! integral of a left-continuous drop sees the left limit at the jump, and
//! the split quadrature weights already stop there.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::expr::Expr;
use crate::linalg::Matrix;
use crate::math;
use crate::model::grid::{AgeGrid, SpatialGrid};
use crate::quadrature;
use crate::Result;

/// Tolerance for "two sampled values are the same rate".
const SAME_VALUE_TOL: f64 = 1e-12;

/// Tabulated rate over an age×space lattice, bilinearly interpolated and
/// clamped to the edge values outside the table range.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateTable {
    pub a_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
    /// Row-major: one row per age node, one column per space node.
    pub values: Matrix,
}

impl RateTable {
    pub fn new(a_nodes: Vec<f64>, x_nodes: Vec<f64>, values: Matrix) -> Result<Self> {
        if a_nodes.is_empty() || x_nodes.is_empty() {
            return Err(SpectraError::InvalidInput(
                "rate table needs at least one age and one space node".into(),
            ));
        }
        if values.rows() != a_nodes.len() || values.cols() != x_nodes.len() {
            return Err(SpectraError::InvalidInput(format!(
                "rate table shape {}x{} does not match {} age x {} space nodes",
                values.rows(),
                values.cols(),
                a_nodes.len(),
                x_nodes.len()
            )));
        }
        for (name, nodes) in [("age", &a_nodes), ("position", &x_nodes)] {
            for (i, pair) in nodes.windows(2).enumerate() {
                if !(pair[1] > pair[0]) {
                    return Err(SpectraError::InvalidInput(format!(
                        "rate table {name} nodes must increase strictly (index {})",
                        i + 1
                    )));
                }
            }
        }
        for k in 0..values.rows() {
            for i in 0..values.cols() {
                let v = values.get(k, i);
                if !v.is_finite() || v < 0.0 {
                    return Err(SpectraError::InvalidInput(format!(
                        "rate table entry at age index {k}, space index {i} \
                         is not a finite nonnegative number ({v})"
                    )));
                }
            }
        }
        Ok(Self {
            a_nodes,
            x_nodes,
            values,
        })
    }

    fn bracket(nodes: &[f64], t: f64) -> (usize, f64) {
        let n = nodes.len();
        if n == 1 || t <= nodes[0] {
            return (0, 0.0);
        }
        if t >= nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let mut i = 0;
        while i + 2 < n && nodes[i + 1] < t {
            i += 1;
        }
        let frac = (t - nodes[i]) / (nodes[i + 1] - nodes[i]);
        (i, frac)
    }

    pub fn eval(&self, a: f64, x: f64) -> f64 {
        if self.a_nodes.len() == 1 && self.x_nodes.len() == 1 {
            return self.values.get(0, 0);
        }
        if self.a_nodes.len() == 1 {
            let (j, t) = Self::bracket(&self.x_nodes, x);
            let lo = self.values.get(0, j);
            let hi = self.values.get(0, (j + 1).min(self.x_nodes.len() - 1));
            return lo + t * (hi - lo);
        }
        if self.x_nodes.len() == 1 {
            let (k, s) = Self::bracket(&self.a_nodes, a);
            let lo = self.values.get(k, 0);
            let hi = self.values.get((k + 1).min(self.a_nodes.len() - 1), 0);
            return lo + s * (hi - lo);
        }
        let (k, s) = Self::bracket(&self.a_nodes, a);
        let (j, t) = Self::bracket(&self.x_nodes, x);
        let v00 = self.values.get(k, j);
        let v01 = self.values.get(k, j + 1);
        let v10 = self.values.get(k + 1, j);
        let v11 = self.values.get(k + 1, j + 1);
        (1.0 - s) * ((1.0 - t) * v00 + t * v01) + s * ((1.0 - t) * v10 + t * v11)
    }
}

/// A rate as a function of (age, position).
#[derive(Debug, Clone, serde::Serialize)]
pub enum RateFn {
    Constant(f64),
    Expression(Expr),
    Table(RateTable),
}

impl RateFn {
    /// Parse a closed-form rate expression.
    pub fn expression(source: &str) -> Result<Self> {
        Ok(Self::Expression(Expr::parse(source)?))
    }

    pub fn eval(&self, a: f64, x: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Expression(e) => e.eval(a, x),
            Self::Table(t) => t.eval(a, x),
        }
    }

    fn is_age_independent(&self) -> bool {
        match self {
            Self::Constant(_) => true,
            Self::Expression(e) => e.is_age_independent(),
            Self::Table(t) => t.a_nodes.len() == 1,
        }
    }
}

/// Grid-sampled birth/death rates with envelopes and survival machinery.
#[derive(Debug, Clone)]
pub struct RateField {
    beta_src: RateFn,
    mu_src: RateFn,
    /// Birth cutoff age a₂ (β vanishes at and beyond it).
    pub beta_cutoff_age: Option<f64>,
    /// Unmasked β samples, n_a×n_x (support-closure values for quadrature).
    beta_vals: Matrix,
    mu_vals: Matrix,
    /// Cumulative death integral ∫₀^{a_k} μ(s, x_i) ds, n_a×n_x.
    cum_mu: Matrix,
    /// Age envelopes over space: β̲, β̄, μ̲, μ̄ at each age node.
    pub beta_lower: Vec<f64>,
    pub beta_upper: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    /// min over the grid of μ (the sampled μ̃; may be 0 — validation decides).
    pub mu_tilde: f64,
    /// sup over ages of μ̄.
    pub mu_max: f64,
    /// True when β and μ are constant in x at every age node.
    pub x_independent: bool,
    /// True when μ is constant in age at every space node (enables the
    /// matrix-exponential propagator path).
    pub mu_age_independent: bool,
}

impl RateField {
    /// Sample the rate functions on the grids and build all derived tables.
    pub fn sample(
        beta_src: RateFn,
        mu_src: RateFn,
        beta_cutoff_age: Option<f64>,
        age: &AgeGrid,
        space: &SpatialGrid,
    ) -> Result<Self> {
        if let Some(a2) = beta_cutoff_age {
            if !(a2 > 0.0) || !a2.is_finite() {
                return Err(SpectraError::InvalidInput(format!(
                    "birth cutoff age must be positive and finite, got {a2}"
                )));
            }
        }
        let n_a = age.n_a;
        let n_x = space.n_x;
        let mut beta_vals = Matrix::zeros(n_a, n_x);
        let mut mu_vals = Matrix::zeros(n_a, n_x);
        for (k, &a) in age.nodes.iter().enumerate() {
            for (i, &x) in space.nodes.iter().enumerate() {
                let b = beta_src.eval(a, x);
                let m = mu_src.eval(a, x);
                if !b.is_finite() || b < 0.0 {
                    return Err(SpectraError::InvalidInput(format!(
                        "beta evaluates to {b} at age {a}, x {x} (age index {k}, space index {i})"
                    )));
                }
                if !m.is_finite() || m < 0.0 {
                    return Err(SpectraError::InvalidInput(format!(
                        "mu evaluates to {m} at age {a}, x {x} (age index {k}, space index {i})"
                    )));
                }
                beta_vals.set(k, i, b);
                mu_vals.set(k, i, m);
            }
        }
        Self::from_sampled(beta_src, mu_src, beta_cutoff_age, beta_vals, mu_vals, age)
    }

    /// Build from already-sampled matrices (perturbation studies edit the
    /// samples directly, then re-wrap).
    pub fn from_sampled(
        beta_src: RateFn,
        mu_src: RateFn,
        beta_cutoff_age: Option<f64>,
        beta_vals: Matrix,
        mu_vals: Matrix,
        age: &AgeGrid,
    ) -> Result<Self> {
        let n_a = age.n_a;
        let n_x = beta_vals.cols();
        if beta_vals.rows() != n_a || mu_vals.rows() != n_a || mu_vals.cols() != n_x {
            return Err(SpectraError::InvalidInput(
                "sampled rate matrices do not match the grids".into(),
            ));
        }
        // Envelopes over space, per age node.
        let mut beta_lower = Vec::with_capacity(n_a);
        let mut beta_upper = Vec::with_capacity(n_a);
        let mut mu_lower = Vec::with_capacity(n_a);
        let mut mu_upper = Vec::with_capacity(n_a);
        for k in 0..n_a {
            let (mut blo, mut bhi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut mlo, mut mhi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n_x {
                let b = beta_vals.get(k, i);
                let m = mu_vals.get(k, i);
                blo = math::min(blo, b);
                bhi = math::max(bhi, b);
                mlo = math::min(mlo, m);
                mhi = math::max(mhi, m);
            }
            beta_lower.push(blo);
            beta_upper.push(bhi);
            mu_lower.push(mlo);
            mu_upper.push(mhi);
        }
        let mu_tilde = mu_lower.iter().fold(f64::INFINITY, |a, &b| math::min(a, b));
        let mu_max = mu_upper.iter().fold(0.0, |a: f64, &b| math::max(a, b));
        let x_independent = (0..n_a).all(|k| {
            beta_upper[k] - beta_lower[k] <= SAME_VALUE_TOL * (1.0 + beta_upper[k])
                && mu_upper[k] - mu_lower[k] <= SAME_VALUE_TOL * (1.0 + mu_upper[k])
        });
        let mu_age_independent = mu_src.is_age_independent() || {
            (0..n_x).all(|i| {
                let first = mu_vals.get(0, i);
                (1..n_a)
                    .all(|k| math::abs(mu_vals.get(k, i) - first) <= SAME_VALUE_TOL * (1.0 + first))
            })
        };
        // Cumulative death integrals per column.
        let h = age.spacing();
        let mut cum_mu = Matrix::zeros(n_a, n_x);
        for i in 0..n_x {
            let col: Vec<f64> = (0..n_a).map(|k| mu_vals.get(k, i)).collect();
            let cums = quadrature::cumulative_trapezoid(&col, h);
            for k in 0..n_a {
                cum_mu.set(k, i, cums[k]);
            }
        }
        Ok(Self {
            beta_src,
            mu_src,
            beta_cutoff_age,
            beta_vals,
            mu_vals,
            cum_mu,
            beta_lower,
            beta_upper,
            mu_lower,
            mu_upper,
            mu_tilde,
            mu_max,
            x_independent,
            mu_age_independent,
        })
    }

    pub fn n_ages(&self) -> usize {
        self.beta_vals.rows()
    }

    pub fn n_nodes(&self) -> usize {
        self.beta_vals.cols()
    }

    /// β at a grid point, with the cutoff mask applied pointwise.
    pub fn beta(&self, age_index: usize, x_index: usize, age_value: f64) -> f64 {
        if let Some(a2) = self.beta_cutoff_age {
            if age_value >= a2 * (1.0 - SAME_VALUE_TOL) {
                return 0.0;
            }
        }
        self.beta_vals.get(age_index, x_index)
    }

    /// Unmasked β sample (support-closure value for renewal quadrature).
    pub fn beta_support(&self, age_index: usize, x_index: usize) -> f64 {
        self.beta_vals.get(age_index, x_index)
    }

    /// Whole unmasked β row at one age node.
    pub fn beta_row(&self, age_index: usize) -> &[f64] {
        self.beta_vals.row(age_index)
    }

    pub fn mu(&self, age_index: usize, x_index: usize) -> f64 {
        self.mu_vals.get(age_index, x_index)
    }

    pub fn mu_row(&self, age_index: usize) -> &[f64] {
        self.mu_vals.row(age_index)
    }

    /// Evaluate μ off-grid (integrator stages).
    pub fn mu_at(&self, a: f64, x: f64) -> f64 {
        self.mu_src.eval(a, x)
    }

    /// Evaluate β off-grid with the cutoff mask.
    pub fn beta_at(&self, a: f64, x: f64) -> f64 {
        if let Some(a2) = self.beta_cutoff_age {
            if a >= a2 * (1.0 - SAME_VALUE_TOL) {
                return 0.0;
            }
        }
        self.beta_src.eval(a, x)
    }

    pub fn beta_source(&self) -> &RateFn {
        &self.beta_src
    }

    pub fn mu_source(&self) -> &RateFn {
        &self.mu_src
    }

    /// ∫_{a_j}^{a_k} μ(s, x_i) ds from the cumulative table.
    pub fn death_integral(&self, from_index: usize, to_index: usize, x_index: usize) -> f64 {
        self.cum_mu.get(to_index, x_index) - self.cum_mu.get(from_index, x_index)
    }

    /// Survival π(a_j, a_k, x_i) between grid nodes.
    pub fn survival_between_nodes(
        &self,
        from_index: usize,
        to_index: usize,
        x_index: usize,
    ) -> f64 {
        math::exp(-self.death_integral(from_index, to_index, x_index))
    }

    /// Survival π(τ, a, x_i) = exp(−∫_τ^a μ(s, x_i) ds) at arbitrary ages.
    pub fn survival_probability(&self, tau: f64, a: f64, x: f64) -> Result<f64> {
        if tau > a {
            return Err(SpectraError::InvalidInput(format!(
                "survival requires τ ≤ a, got τ = {tau}, a = {a}"
            )));
        }
        if tau == a {
            return Ok(1.0);
        }
        // Resolution chosen so smooth death rates integrate well below the
        // root tolerances (Simpson, panel width ≤ 0.025).
        let panels = math::ceil((a - tau) / 0.05) as usize + 4;
        let integral = quadrature::simpson_scalar(|s| self.mu_src.eval(s, x), tau, a, panels);
        Ok(math::exp(-integral))
    }

    /// True when β samples vanish identically (no renewal).
    pub fn beta_is_zero(&self) -> bool {
        self.beta_upper.iter().all(|&b| b == 0.0)
    }

    /// Age envelope of β with the cutoff mask applied (β̄ used by bounds).
    pub fn beta_upper_masked(&self, age_index: usize, age_value: f64) -> f64 {
        if let Some(a2) = self.beta_cutoff_age {
            if age_value >= a2 * (1.0 - SAME_VALUE_TOL) {
                return 0.0;
            }
        }
        self.beta_upper[age_index]
    }

    pub fn beta_lower_masked(&self, age_index: usize, age_value: f64) -> f64 {
        if let Some(a2) = self.beta_cutoff_age {
            if age_value >= a2 * (1.0 - SAME_VALUE_TOL) {
                return 0.0;
            }
        }
        self.beta_lower[age_index]
    }
}

/// Offending-node detail for validation messages.
pub fn describe_node(age_index: usize, a: f64, x_index: usize, x: f64) -> String {
    format!("age node {age_index} (a = {a:.6}), space node {x_index} (x = {x:.6})")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids() -> (AgeGrid, SpatialGrid) {
        (
            AgeGrid::exact(2.0, 101).unwrap(),
            SpatialGrid::uniform(-1.0, 1.0, 51).unwrap(),
        )
    }

    #[test]
    fn constant_rates_sample_and_flag() {
        let (age, space) = grids();
        let f = RateField::sample(
            RateFn::Constant(2.0),
            RateFn::Constant(0.5),
            None,
            &age,
            &space,
        )
        .unwrap();
        assert!(f.x_independent);
        assert!(f.mu_age_independent);
        assert_eq!(f.mu_tilde, 0.5);
        assert_eq!(f.mu_max, 0.5);
        assert_eq!(f.beta(50, 10, age.nodes[50]), 2.0);
    }

    #[test]
    fn survival_matches_closed_forms() {
        let (age, space) = grids();
        let f = RateField::sample(
            RateFn::Constant(2.0),
            RateFn::Constant(0.5),
            None,
            &age,
            &space,
        )
        .unwrap();
        let p = f.survival_probability(0.0, 2.0, 0.0).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(f.survival_probability(1.3, 1.3, 0.2).unwrap(), 1.0);
        assert!(f.survival_probability(1.0, 0.5, 0.0).is_err());

        // Age-linear death rate: ∫₀² (0.5 + 0.1 s) ds = 1.2.
        let g = RateField::sample(
            RateFn::Constant(2.0),
            RateFn::expression("0.5 + 0.1*a").unwrap(),
            None,
            &age,
            &space,
        )
        .unwrap();
        let p = g.survival_probability(0.0, 2.0, 0.0).unwrap();
        assert!((p - (-1.2f64).exp()).abs() < 1e-10, "got {p}");
        // Node-table route agrees (trapezoid is exact on linear rates).
        let p_nodes = g.survival_between_nodes(0, 100, 7);
        assert!((p_nodes - (-1.2f64).exp()).abs() < 1e-12);
        assert!(!g.mu_age_independent);
    }

    #[test]
    fn envelopes_track_spatial_variation() {
        let (age, space) = grids();
        let f = RateField::sample(
            RateFn::expression("2 - 2*sqrt(abs(x))").unwrap(),
            RateFn::Constant(0.5),
            None,
            &age,
            &space,
        )
        .unwrap();
        assert!(!f.x_independent);
        assert!((f.beta_upper[0] - 2.0).abs() < 1e-12);
        assert!(f.beta_lower[0].abs() < 1e-12); // β(±1) = 0
        for k in 0..age.n_a {
            assert!(f.beta_lower[k] <= f.beta_upper[k]);
        }
    }

    #[test]
    fn cutoff_masks_pointwise_but_not_support_samples() {
        let (age, space) = grids();
        let f = RateField::sample(
            RateFn::Constant(2.0),
            RateFn::Constant(0.5),
            Some(2.0),
            &age,
            &space,
        )
        .unwrap();
        let last = age.n_a - 1;
        assert_eq!(f.beta(last, 0, age.nodes[last]), 0.0);
        assert_eq!(f.beta_support(last, 0), 2.0);
        assert_eq!(f.beta_at(2.0, 0.0), 0.0);
        assert_eq!(f.beta_at(1.99, 0.0), 2.0);
    }

    #[test]
    fn zero_death_rate_is_recorded_not_rejected() {
        let (age, space) = grids();
        let f = RateField::sample(
            RateFn::Constant(2.0),
            RateFn::expression("max(0, x)").unwrap(),
            None,
            &age,
            &space,
        )
        .unwrap();
        assert_eq!(f.mu_tilde, 0.0);
    }

    #[test]
    fn negative_rate_is_rejected_with_location() {
        let (age, space) = grids();
        let err = RateField::sample(
            RateFn::expression("x").unwrap(),
            RateFn::Constant(0.5),
            None,
            &age,
            &space,
        )
        .unwrap_err();
        match err {
            SpectraError::InvalidInput(msg) => {
                assert!(msg.contains("space index 0"), "message was {msg}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bilinear_table_interpolates_and_clamps() {
        let table = RateTable::new(
            alloc::vec![0.0, 1.0],
            alloc::vec![0.0, 2.0],
            Matrix::from_rows(2, 2, alloc::vec![1.0, 3.0, 2.0, 6.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(table.eval(0.0, 0.0), 1.0);
        assert_eq!(table.eval(1.0, 2.0), 6.0);
        assert!((table.eval(0.5, 1.0) - 3.0).abs() < 1e-14);
        // Clamped beyond the table.
        assert_eq!(table.eval(5.0, -1.0), 2.0);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(RateTable::new(
            alloc::vec![0.0, 0.0],
            alloc::vec![0.0],
            Matrix::from_rows(2, 1, alloc::vec![1.0, 1.0]).unwrap(),
        )
        .is_err());
        assert!(RateTable::new(
            alloc::vec![0.0, 1.0],
            alloc::vec![0.0],
            Matrix::from_rows(2, 1, alloc::vec![1.0, f64::NAN]).unwrap(),
        )
        .is_err());
    }
}
