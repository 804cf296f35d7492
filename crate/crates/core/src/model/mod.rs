//! Model layer: grids, kernels, rates, and scenario configuration.

pub mod grid;
pub mod kernel;
pub mod rates;
pub mod scenario;

pub use grid::{AgeGrid, SpatialGrid};
pub use kernel::{build_kernel_matrix, DiscreteKernelOperator, KernelProfile, KernelSpec};
pub use rates::{RateField, RateFn, RateTable};
pub use scenario::{
    AgeConfig, AssumptionCheck, DomainConfig, RenewalStrengthScan, ScenarioConfig, Tolerances,
    ValidationReport,
};
