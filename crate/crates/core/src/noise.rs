//! Forward noise simulators.
//!
//! Every pixel draws from its own ChaCha8 stream keyed by `(seed, pixel
//! index)`, so a realization does not depend on evaluation order and pixels
//! can be sampled in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Image, Result};

/// Observation model generating `y` from the true intensities `x*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `y_i ~ Bernoulli(x_i)`, `x_i ∈ [0, 1]`.
    Bernoulli,
    /// `y_i ~ Poisson(x_i)`, `x_i ≥ 0`.
    Poisson,
    /// `y_i = x_i n_i` with `n_i ~ Gamma(shape S, rate S)`.
    Speckle { looks: u32 },
}

impl NoiseModel {
    pub fn speckle(looks: u32) -> Result<Self> {
        if looks == 0 {
            return Err(Error::InvalidArgument(
                "speckle needs at least one look".into(),
            ));
        }
        Ok(NoiseModel::Speckle { looks })
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Bernoulli => "bernoulli",
            NoiseModel::Poisson => "poisson",
            NoiseModel::Speckle { .. } => "speckle",
        }
    }

    fn check_truth(&self, truth: &Image) -> Result<()> {
        let bad = match self {
            NoiseModel::Bernoulli => truth.data().iter().position(|&v| !(0.0..=1.0).contains(&v)),
            NoiseModel::Poisson | NoiseModel::Speckle { .. } => {
                truth.data().iter().position(|&v| v < 0.0)
            }
        };
        match bad {
            Some(idx) => Err(Error::Domain(format!(
                "{} noise cannot be driven by intensity {} (pixel {idx})",
                self.name(),
                truth.data()[idx]
            ))),
            None => Ok(()),
        }
    }
}

/// Root of all randomness in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub const DEFAULT: Seed = Seed(0x5eed_2015_0001);

    /// A child seed for a labelled sub-experiment, e.g. `(image, realization)`.
    pub fn derive(self, a: u64, b: u64) -> Seed {
        let mut s = splitmix64(self.0 ^ 0x9e37_79b9_7f4a_7c15);
        s = splitmix64(s ^ a);
        Seed(splitmix64(s ^ b.rotate_left(32)))
    }

    fn key(self) -> [u8; 32] {
        let mut key = [0u8; 32];
        let mut state = self.0;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        key
    }
}

impl Default for Seed {
    fn default() -> Self {
        Seed::DEFAULT
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const INVERSION_LIMIT: f64 = 30.0;

/// Poisson draw: sequential-search inversion below rate 30, the
/// `rand_distr` rejection sampler above.
fn poisson_draw(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    if rate < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut p = (-rate).exp();
        let mut cdf = p;
        let mut k = 0u32;
        // cdf can saturate just below 1 in floating point; cap the walk
        let cap = (rate + 40.0 * rate.sqrt() + 40.0) as u32;
        while u > cdf && k < cap {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
        }
        k as f64
    } else {
        Poisson::new(rate)
            .expect("rate validated finite and positive")
            .sample(rng)
    }
}

/// Draws one noisy realization of `truth`.
pub fn sample(model: NoiseModel, truth: &Image, seed: Seed) -> Result<Image> {
    model.check_truth(truth)?;
    let key = seed.key();
    let gamma = match model {
        NoiseModel::Speckle { looks } => {
            if looks == 0 {
                return Err(Error::InvalidArgument(
                    "speckle needs at least one look".into(),
                ));
            }
            let s = f64::from(looks);
            Some(Gamma::new(s, 1.0 / s).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        }
        _ => None,
    };
    let data: Vec<f64> = truth
        .data()
        .par_iter()
        .enumerate()
        .map(|(idx, &x)| {
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(idx as u64);
            match model {
                NoiseModel::Bernoulli => {
                    let u: f64 = rng.random();
                    if x > u {
                        1.0
                    } else {
                        0.0
                    }
                }
                NoiseModel::Poisson => poisson_draw(x, &mut rng),
                NoiseModel::Speckle { .. } => {
                    x * gamma.as_ref().expect("speckle gamma").sample(&mut rng)
                }
            }
        })
        .collect();
    Image::new(truth.rows(), truth.cols(), data)
}

/// Elementwise sample mean and unbiased sample variance.
pub fn empirical_moments(samples: &[Image]) -> Result<(Image, Image)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "moments need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let first = &samples[0];
    for s in &samples[1..] {
        first.same_dims(s)?;
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; first.len()];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(s.data()).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n - 1.0);
    Ok((
        Image::new(first.rows(), first.cols(), mean)?,
        Image::new(first.rows(), first.cols(), var)?,
    ))
}
