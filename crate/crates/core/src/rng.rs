//! Seeded random sources.
//!
//! Batch samplers use an ordinary [`ChaCha8Rng`] stream. SDE noise is drawn
//! from [`NoiseStream`], which is addressable: the Gaussian vector for
//! `(stream, step, sample)` does not depend on how samples are batched.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-addressed standard normal source.
///
/// Each `(stream, step)` pair selects a ChaCha8 stream keyed by the seed;
/// each sample owns a fixed window of that stream and turns it into normals
/// with Box-Muller, which consumes a fixed number of words per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Standard normals for samples `first..first + n` at `step`, row-major
    /// `[n, dim]`.
    pub fn normals(&self, step: u64, first: u64, n: usize, dim: usize) -> Vec<f64> {
        let pairs = dim.div_ceil(2);
        // two u64 (four u32 words) per Box-Muller pair
        let words_per_sample = 4 * pairs as u128;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(derive_seed(self.stream, step));
        rng.set_word_pos(first as u128 * words_per_sample);

        let mut out = Vec::with_capacity(n * dim);
        let mut buf = vec![0.0; 2 * pairs];
        for _ in 0..n {
            for p in 0..pairs {
                let (a, b) = box_muller(rng.next_u64(), rng.next_u64());
                buf[2 * p] = a;
                buf[2 * p + 1] = b;
            }
            out.extend_from_slice(&buf[..dim]);
        }
        out
    }
}

fn box_muller(a: u64, b: u64) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = 1.0 - (a >> 11) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}
