use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::norm;

/// Seeded ChaCha8 generator with an explicit stream id.
///
/// Two generators with the same `(seed, stream)` produce identical sequences
/// on every platform. Independent trials use distinct stream ids.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A generator on the same stream whose seed is mixed with `label`.
    ///
    /// Used to give each random component of a trial (operator, signal,
    /// network, noise) its own sequence.
    pub fn derive(&self, label: u64) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(label)), self.stream)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.standard_normal()).collect()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// ±1 with equal probability.
    pub fn rademacher(&mut self) -> f64 {
        if self.inner.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform point on the unit sphere in `R^d`.
    pub fn unit_sphere(&mut self, d: usize) -> Vec<f64> {
        loop {
            let mut v = self.normal_vec(d);
            let r = norm(&v);
            if r > 1e-300 {
                v.iter_mut().for_each(|x| *x /= r);
                return v;
            }
        }
    }
}

/// Stable 64-bit hash of a list of integers, for labelling derived streams.
pub fn label(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |h, &p| splitmix64(h ^ p))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
