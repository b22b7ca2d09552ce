use rand::Rng;

use crate::{Real, Tensor};

/// Uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, drawn in 64-bit so both
/// precisions start from the same values.
pub fn fan_in_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    Tensor::from_fn(shape, |_| T::cast(rng.random_range(-bound..bound)))
}
