//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(seed, label)`. Labels are stable strings naming the operation and the
//! sample index, so batches can be split across workers without changing any
//! individual sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dendrogram::Dendrogram;
use crate::error::Result;

pub type Rng = ChaCha8Rng;

/// Stream keyed by `(seed, label)`.
pub fn stream(seed: u64, label: &str) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    Rng::from_seed(h.finalize().into())
}

/// Derives a child seed, e.g. for one of several independent experiments.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"derive/");
    h.update(label.as_bytes());
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

/// A seeded source of random dendrograms. Sample `index` under `seed` must be
/// a pure function of `(self, seed, index)`.
pub trait Sampler: Sync {
    fn sample(&self, seed: u64, index: u64) -> Result<Dendrogram>;
}

impl<F> Sampler for F
where
    F: Fn(u64, u64) -> Result<Dendrogram> + Sync,
{
    fn sample(&self, seed: u64, index: u64) -> Result<Dendrogram> {
        self(seed, index)
    }
}

/// Always returns the same space.
#[derive(Clone, Debug)]
pub struct Constant(pub Dendrogram);

impl Sampler for Constant {
    fn sample(&self, _seed: u64, _index: u64) -> Result<Dendrogram> {
        Ok(self.0.clone())
    }
}

/// Draws samples `0..n` in parallel and returns `f` of each, in index order.
pub fn map_samples<S, T, F>(sampler: &S, seed: u64, n: usize, f: F) -> Result<Vec<T>>
where
    S: Sampler + ?Sized,
    T: Send,
    F: Fn(&Dendrogram) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(seed, i).and_then(|d| f(&d)))
        .collect()
}

/// Mean with its CLT standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Estimate {
        Estimate {
            mean: value,
            stderr: 0.0,
            n: 1,
        }
    }

    /// Sample mean and standard error; values are summed in order so the
    /// result does not depend on how they were produced.
    pub fn from_values(values: &[f64]) -> Estimate {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        // shifted by the first value, so constant inputs give it back exactly
        let shift = values[0];
        let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, n }
    }

    pub fn scale(self, c: f64) -> Estimate {
        Estimate {
            mean: self.mean * c,
            stderr: self.stderr * c.abs(),
            n: self.n,
        }
    }

    /// `-log` of a Laplace estimate with the delta-method standard error.
    pub fn neg_log(self) -> Estimate {
        Estimate {
            mean: -self.mean.ln(),
            stderr: self.stderr / self.mean,
            n: self.n,
        }
    }

    /// z-score of the difference to an exact value.
    pub fn z_against(&self, exact: f64) -> f64 {
        z_score(self.mean - exact, self.stderr)
    }

    /// z-score of the difference of two independent estimates.
    pub fn z_between(&self, other: &Estimate) -> f64 {
        z_score(self.mean - other.mean, self.stderr.hypot(other.stderr))
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}
