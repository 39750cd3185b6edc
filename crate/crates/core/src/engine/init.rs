use rand::Rng;

use super::real::Real;
use super::tensor::Tensor;

/// Uniform in `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`.
pub fn fan_in_uniform<T: Real, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
}
