//! Spectral solvers: characteristic equations, next-generation operators,
//! and the two principal bounds `s_B1C` and `s_A`.

pub mod bound;
pub mod characteristic;
pub mod flambda;
pub mod power;

pub use bound::{
    assemble_m_lambda, diffused_admissible_floor, solve_spectral_bound, SpectralReport,
};

pub use characteristic::{
    evaluate_characteristic, homogeneous_closed_form, lower_envelope_root, solve_alpha_of_x,
    solve_alpha_profile, solve_alpha_star, upper_envelope_root, AlphaAtNode, AlphaProfile,
    CharacteristicProfile, HomogeneousClosedForm,
};
pub use flambda::{
    assemble_feedback_action, feedback_spectral_radius, sample_feedback_radius, FeedbackAction,
};
pub use power::{second_eigenvalue_magnitude, spectral_radius, spectral_radius_of, PowerResult};
