//! Homogenized tensors, the moduli `Θ_σ` and `ω`, Dini integrals and the
//! two-scale remainder.

pub mod dini;
pub mod effective;
pub mod moduli;
pub mod remainder;

pub use dini::{dini_integral, log_power_integral, log_power_modulus, DiniResult};
pub use effective::{b_matrix, effective_tensor, exact_periodic_cell, BMatrix, EffectiveMethod, EffectiveTensor};
pub use moduli::{omega, theta, theta_with, ModulusTable, ThetaValue};
pub use remainder::{interpolate_corrector, two_scale_remainder, Remainder};
