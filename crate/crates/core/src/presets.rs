//! Ready-made scenario configurations.
//!
//! These are the model instances the test suites, the verification command,
//! and the shipped example configs all build on. Each one exists to exercise
//! a specific regime:
//!
//! * closed-form regimes (spatially constant rates) where every spectral
//!   quantity has an independent scalar prediction;
//! * birth profiles whose spatial shape decides whether the principal
//!   eigenvalue exists (plateau / power-law gap / square-root cusp);
//! * parameter bases for the diffusion and kernel-scaling ladders;
//! * seeded random scenarios for the property suites.
//!
//! All presets keep μ age-independent — the propagator then uses the exact
//! matrix-exponential path, so ladder and property suites are fast and free
//! of integrator truncation error. Age-dependent μ is exercised directly by
//! the evolution tests instead.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    AgeConfig, DomainConfig, KernelProfile, KernelSpec, RateFn, ScenarioConfig, Tolerances,
};

/// Reference resolution used by the acceptance checks.
pub const REFERENCE_RESOLUTION: usize = 200;

fn base(name: &str, beta: RateFn, mu: RateFn) -> ScenarioConfig {
    ScenarioConfig {
        name: String::from(name),
        domain: DomainConfig {
            lower: -1.0,
            upper: 1.0,
            n_x: REFERENCE_RESOLUTION,
        },
        age: AgeConfig {
            n_a: REFERENCE_RESOLUTION,
            horizon: None,
        },
        kernel: KernelSpec::new(KernelProfile::Constant { radius: 2.0 }, 1.0, 0.0)
            .expect("constant radius-2 kernel is valid"),
        beta,
        mu,
        beta_cutoff_age: None,
        mu_lower_bound: None,
        diffusion_rate: 1.0,
        tolerances: Tolerances::default(),
        seed: 7,
    }
}

fn expr(source: &str) -> RateFn {
    RateFn::expression(source).expect("preset expressions parse")
}

/// Spatially constant rates with the flat radius-2 kernel on (−1,1):
/// every spectral quantity has a closed form (kernel radius 1/2, Lotka root
/// 3/2, transport bound 1/2, full bound 1).
pub fn homogeneous_reference() -> ScenarioConfig {
    base("homogeneous-reference", RateFn::Constant(2.0), RateFn::Constant(0.5))
}

/// Same, with births stopping at age 2: the Lotka root drops to the solution
/// of 2(1−e^{−2q}) = q and the age grid pins itself to the cutoff.
pub fn truncated_birth() -> ScenarioConfig {
    let mut c = base("truncated-birth", RateFn::Constant(2.0), RateFn::Constant(0.5));
    c.beta_cutoff_age = Some(2.0);
    c
}

/// Truncated births under heavy mortality (μ = 2): the spectral bound is
/// negative (≈ −0.5396), the decaying counterpart of [`truncated_birth`].
pub fn rapid_decay() -> ScenarioConfig {
    let mut c = base("rapid-decay", RateFn::Constant(2.0), RateFn::Constant(2.0));
    c.beta_cutoff_age = Some(2.0);
    c
}

/// Birth rate with a flat maximum plateau on |x| ≤ 1/2 (β = 2 there, ramping
/// down to 0.2 outside): the characteristic gap 1 − G_{α**}(x) vanishes on a
/// set of positive measure, so the divergence criterion fires and a positive
/// principal eigenfunction exists.
pub fn plateau_birth() -> ScenarioConfig {
    base(
        "plateau-birth",
        expr("max(0.2, min(2, 2 - 4*(abs(x) - 0.5)))"),
        RateFn::Constant(0.5),
    )
}

/// Age-truncated birth with a quadratic spatial peak: α** − α(x) ≈ c·x²
/// near the maximum, whose reciprocal is non-integrable in one dimension —
/// the second existence criterion fires.
pub fn quadratic_gap() -> ScenarioConfig {
    let mut c = base(
        "quadratic-gap",
        expr("max(0.2, 2 - 2*x*x)"),
        RateFn::Constant(0.5),
    );
    c.beta_cutoff_age = Some(2.0);
    c
}

/// The square-root cusp β(x) = 2 − 2√|x| with the flat kernel: the scalar
/// nonexistence test value ρ∫dx/(β_max−β) equals 1/2 < 1, so no principal
/// eigenvalue with a positive eigenfunction exists; the detector's spectral
/// and localization signatures must both fire on this scenario.
pub fn nonexistence_cusp() -> ScenarioConfig {
    let mut c = base(
        "nonexistence-cusp",
        expr("2 - 2*sqrt(abs(x))"),
        RateFn::Constant(0.5),
    );
    // Odd node count keeps a grid point at the cusp itself.
    c.domain.n_x = 201;
    c
}

/// Separable age×space births over a spatial mortality gradient: a generic
/// smooth scenario with a strict diffusion gap s_A > s_B1C.
pub fn separable_mixed() -> ScenarioConfig {
    let mut c = base(
        "separable-mixed",
        expr("(2 - x*x) * exp(0 - 0.2*a)"),
        expr("0.5 + 0.1*x*x"),
    );
    c.beta_cutoff_age = Some(6.0);
    c
}

/// Base scenario for the large-diffusion ladder: a small spatial mortality
/// bowl keeps the upper envelope bound −Dλ⁰ + λ¹ a strict inequality.
pub fn upper_ladder_base() -> ScenarioConfig {
    base("upper-ladder", RateFn::Constant(2.0), expr("0.5 + 0.01*x*x"))
}

/// Smooth (C²) rates for the small-range kernel ladders, where the scaling
/// limit needs two spatial derivatives of the rates to exist.
///
/// Sized so the γ ↓ 0 ladder bottoming out at γ = 0.25 already sits inside
/// the asymptotic window for every exponent m ∈ [0, 2): the base kernel
/// range (0.5) stays below the domain scale from γ = 1 downward, which keeps
/// the Dirichlet-leak part of the gap on its γ^{2−m} decay law, and the
/// moderate diffusion/curvature product keeps the localization correction
/// √(D·σ²·|α''|/2)·γ^{(2−m)/2} a few times below the verification tolerance.
/// Larger D or steeper rates push the finite-γ gaps above `LIMIT_TOL`
/// without any bug being involved.
pub fn scaling_smooth() -> ScenarioConfig {
    let mut c = base(
        "scaling-smooth",
        expr("2 - 0.2*x*x"),
        expr("0.5 + 0.15*x*x"),
    );
    c.kernel = KernelSpec::new(KernelProfile::Constant { radius: 0.5 }, 1.0, 0.0)
        .expect("constant radius-0.5 kernel is valid");
    c.diffusion_rate = 0.25;
    c
}

/// Seeded random scenario for the property suites. Rates are drawn from a
/// smooth two-parameter family (quadratic in x, optionally exponentially
/// tilted in age), the kernel alternates between the flat and parabolic
/// profiles, and μ stays age-independent (exact propagator path).
///
/// `favor_growth`: `Some(true)` biases toward supercritical scenarios
/// (s_A > 0), `Some(false)` toward subcritical, `None` leaves it to chance.
pub fn random_scenario(seed: u64, favor_growth: Option<bool>) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b0: f64 = rng.gen_range(1.2..3.0);
    let b2: f64 = rng.gen_range(-0.8..0.8);
    let age_tilt: f64 = if rng.gen_bool(0.5) {
        rng.gen_range(0.05..0.3)
    } else {
        0.0
    };
    let mut m0: f64 = rng.gen_range(0.35..1.0);
    let m2: f64 = rng.gen_range(0.0..0.4);
    match favor_growth {
        Some(true) => m0 = rng.gen_range(0.25..0.45),
        Some(false) => m0 = rng.gen_range(1.2..2.2),
        None => {}
    }
    let beta_src = if age_tilt > 0.0 {
        format!("({b0} + {b2}*x*x) * exp(0 - {age_tilt}*a)")
    } else {
        format!("{b0} + {b2}*x*x")
    };
    let mu_src = format!("{m0} + {m2}*x*x");
    let kernel = if rng.gen_bool(0.5) {
        KernelSpec::new(KernelProfile::Constant { radius: 2.0 }, 1.0, 0.0)
    } else {
        KernelSpec::new(KernelProfile::Epanechnikov { radius: 1.0 }, 1.0, 0.0)
    }
    .expect("preset kernels are valid");
    let mut c = base(
        &format!("random-{seed}"),
        expr(&beta_src),
        expr(&mu_src),
    );
    c.kernel = kernel;
    c.diffusion_rate = rng.gen_range(0.3..2.0);
    c.domain.n_x = 80;
    c.age.n_a = 120;
    if rng.gen_bool(0.4) {
        c.beta_cutoff_age = Some(rng.gen_range(2.0..5.0));
    }
    c.seed = seed;
    c
}

/// Named catalogue for the command line (`--scenario NAME`).
pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    let c = match name {
        "homogeneous-reference" => homogeneous_reference(),
        "truncated-birth" => truncated_birth(),
        "rapid-decay" => rapid_decay(),
        "plateau-birth" => plateau_birth(),
        "quadratic-gap" => quadratic_gap(),
        "nonexistence-cusp" => nonexistence_cusp(),
        "separable-mixed" => separable_mixed(),
        "upper-ladder" => upper_ladder_base(),
        "scaling-smooth" => scaling_smooth(),
        other => {
            if let Some(seed_text) = other.strip_prefix("random-") {
                if let Ok(seed) = seed_text.parse::<u64>() {
                    return Some(random_scenario(seed, None));
                }
            }
            return None;
        }
    };
    Some(c)
}

/// All fixed preset names, in catalogue order.
pub fn names() -> Vec<String> {
    [
        "homogeneous-reference",
        "truncated-birth",
        "rapid-decay",
        "plateau-birth",
        "quadratic-gap",
        "nonexistence-cusp",
        "separable-mixed",
        "upper-ladder",
        "scaling-smooth",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}
