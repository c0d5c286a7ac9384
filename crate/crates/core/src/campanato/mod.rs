//! Large-scale Lipschitz machinery: affine excess, the sequence iteration
//! lemma with explicit constants, and the flatness-decay profiler.

pub mod excess;
pub mod lemma;
pub mod profile;

pub use excess::{affine_excess, affine_objective, constant_excess, AffineExcess};
pub use lemma::{generate_instance, lemma_check, lemma_constant, lemma_fuzz, lemma_log_constant, FuzzSummary, Hypothesis, LemmaCheck, LemmaInstance, Saturation};
pub use profile::{
    constant_excess_curve, flatness_profile, improvement_step_audit, profile_scales, ExcessProfile, ExcessScale, StepAudit, DEFAULT_THETA,
};
