use rand::Rng as _;

use crate::scalar::Scalar;

use super::gumbel::Rng;
use super::tensor::Tensor;

/// `[fan_in, fan_out]` weight matrix drawn from U(-l, l) with
/// `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::from_f64_lossy(rng.random_range(-limit..limit)))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}
