//! Gumbel(0,1) noise for categorical reparameterization.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Seedable generator used everywhere randomness is needed: ChaCha with
/// 8 rounds, so runs are bit-reproducible across platforms.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lower clamp of the uniform draw before the double logarithm.
pub const UNIFORM_MIN: f64 = 1e-20;
/// Upper clamp of the uniform draw before the double logarithm.
pub const UNIFORM_MAX: f64 = 1.0 - 1e-7;

/// `-ln(-ln(u))` with `u` clamped to `[UNIFORM_MIN, UNIFORM_MAX]`; always finite.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_MIN, UNIFORM_MAX);
    -(-u.ln()).ln()
}

/// A buffer of Gumbel(0,1) samples matching the shape of the logits it
/// perturbs.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelNoise<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    seed: Option<u64>,
}

impl<T: Scalar> GumbelNoise<T> {
    /// All-zero noise: `gumbel_softmax` reduces to a tempered softmax.
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        GumbelNoise {
            shape,
            values: vec![T::zero(); n],
            seed: None,
        }
    }

    pub fn sample(shape: impl Into<Vec<usize>>, rng: &mut Rng) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| T::from_f64_lossy(gumbel_from_uniform(rng.random::<f64>())))
            .collect();
        GumbelNoise {
            shape,
            values,
            seed: None,
        }
    }

    pub fn from_seed(shape: impl Into<Vec<usize>>, seed: u64) -> Self {
        let mut noise = Self::sample(shape, &mut rng_from_seed(seed));
        noise.seed = Some(seed);
        noise
    }

    pub fn from_values(shape: impl Into<Vec<usize>>, values: Vec<T>) -> Self {
        let shape = shape.into();
        assert_eq!(shape.iter().product::<usize>(), values.len(), "noise shape");
        GumbelNoise {
            shape,
            values,
            seed: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Seed this buffer was drawn from, when created by [`Self::from_seed`].
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Gumbel-Max categorical sample: `argmax(noise + log_probs)`, lowest index on ties.
pub fn gumbel_max<T: Scalar>(log_probs: &[T], noise: &[T]) -> usize {
    let perturbed: Vec<T> = log_probs.iter().zip(noise).map(|(l, g)| *l + *g).collect();
    super::tensor::argmax(&perturbed)
}
