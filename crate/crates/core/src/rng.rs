//! Seeded, splittable random streams.
//!
//! Every stream is identified by a 64-bit seed. Child streams are derived
//! from the parent's seed and a string label, never from the parent's
//! consumed state, so `split` is a pure function:
//!
//! ```text
//! child_seed = splitmix64(parent_seed ^ splitmix64(fnv1a64(label)))
//! ```
//!
//! `splitmix64` is the SplitMix64 output function (add the golden-ratio
//! increment, then the 30/27/31 xor-shift-multiply finaliser) and `fnv1a64`
//! is 64-bit FNV-1a over the UTF-8 bytes of the label. Within a stream,
//! draws come from ChaCha8 seeded with the stream seed; normals use the
//! ziggurat sampler of `rand_distr::StandardNormal`, uniforms are in
//! `[0, 1)`, and permutations are Fisher-Yates shuffles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a hash of a label.
pub fn fnv1a64(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from a parent seed and a label.
pub fn mix_seed(parent: u64, label: &str) -> u64 {
    splitmix64(parent ^ splitmix64(fnv1a64(label)))
}

/// A single-owner random stream. Share across threads by splitting first.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            label: String::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Slash-separated path of labels from the root stream.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn split(&self, label: &str) -> RngStream {
        let seed = mix_seed(self.seed, label);
        let path = if self.label.is_empty() {
            label.to_string()
        } else {
            format!("{}/{label}", self.label)
        };
        Self {
            seed,
            label: path,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `split(&format!("{label}#{index}"))`, the rule used for replicates.
    pub fn split_indexed(&self, label: &str, index: usize) -> RngStream {
        self.split(&format!("{label}#{index}"))
    }

    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn next_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }

    pub fn uniform(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_uniform()).collect()
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.rng);
        p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}
