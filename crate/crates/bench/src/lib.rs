//! Shared fixtures for the criterion benchmarks.

use std::f64::consts::PI;

use homoglab_core::field::TensorField;

/// `a(y) = 2 + sin(y₁)` with period `2π` on each axis.
pub fn laminate() -> TensorField {
    TensorField::scalar(2, 2.0, &[(vec![1.0, 0.0], 0.0, 1.0)], 1.0, Some(vec![2.0 * PI; 2])).expect("valid laminate")
}

/// `a(y) = 2 + (sin y + sin(√2 y))/2` in one dimension.
pub fn quasiperiodic() -> TensorField {
    TensorField::scalar(1, 2.0, &[(vec![1.0], 0.0, 0.5), (vec![2f64.sqrt()], 0.0, 0.5)], 0.5, None).expect("valid field")
}
