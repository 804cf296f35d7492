//! Principal spectral theory for age-structured population models with
//! nonlocal (convolution-type) diffusion under Dirichlet exterior conditions.
//!
//! The library discretizes the linearized model on a 1-D spatial domain and an
//! age interval, builds the diffused evolution family, and computes the two
//! spectral quantities the theory revolves around:
//!
//! * `s_B1C` — the spectral bound of the renewal-plus-transport part alone,
//!   obtained from the per-location characteristic equation, and
//! * `s_A` — the spectral bound of the full generator, obtained as the unique
//!   root of `r(M_lambda) = 1` where `M_lambda` is the next-generation
//!   operator.
//!
//! On top of the solvers sit existence criteria (integrability tests), a
//! nonexistence detector, generalized-eigenvalue certification, maximum
//! principle checks, parameter sweeps (diffusion rate, kernel scaling), and a
//! positivity-preserving time stepper used to cross-check growth bounds.
//!
//! The crate is `no_std` (with `alloc`); float math goes through [`math`] so
//! results are identical regardless of the host's libm. Everything that needs
//! files, threads, or a terminal lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod criteria;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod limits;
pub mod linalg;
pub mod math;
pub mod model;
pub mod presets;
pub mod problem;
pub mod quadrature;
pub mod simulate;
pub mod spectral;

pub use error::SpectraError;
pub use model::grid::{AgeGrid, SpatialGrid};
pub use model::kernel::{DiscreteKernelOperator, KernelProfile, KernelSpec};
pub use model::rates::{RateField, RateFn};
pub use model::scenario::{ScenarioConfig, Tolerances, ValidationReport};
pub use problem::{validate_assumptions, Problem};

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = core::result::Result<T, SpectraError>;
