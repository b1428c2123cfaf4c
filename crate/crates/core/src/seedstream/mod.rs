//! Deterministic randomness for every stage of repository generation.
//!
//! All draws flow through [`RandomStream`], a splitmix64 generator whose
//! output is identical on every platform. Streams are seeded either from a
//! labeled stage of a repository seed ([`derive_stage_seed`]) or from a file
//! path ([`path_seed`]); both use the leading eight bytes of a SHA-256 digest.

mod distributions;

pub use distributions::{DistributionSpec, MalformedDistribution};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::value::Value;

/// First eight bytes of `SHA-256(label || 0x00 || decimal(master_seed))`,
/// read big-endian.
pub fn derive_stage_seed(master_seed: u64, stage_label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(stage_label.as_bytes());
    hasher.update([0u8]);
    hasher.update(master_seed.to_string().as_bytes());
    leading_u64(&hasher.finalize())
}

/// First eight bytes of `SHA-256(path)`, read big-endian.
pub fn path_seed(path: &str) -> u64 {
    leading_u64(&Sha256::digest(path.as_bytes()))
}

fn leading_u64(digest: &[u8]) -> u64 {
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(bytes)
}

/// A (repository seed, stage label) pair naming one derived stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedContext {
    pub master_seed: u64,
    pub stage_label: String,
}

impl SeedContext {
    pub fn new(master_seed: u64, stage_label: impl Into<String>) -> Self {
        Self {
            master_seed,
            stage_label: stage_label.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        derive_stage_seed(self.master_seed, &self.stage_label)
    }

    pub fn stream(&self) -> RandomStream {
        RandomStream::new(self.seed())
    }

    /// A context for a sub-stage, e.g. `titles` -> `titles/retry1`.
    pub fn child(&self, suffix: &str) -> Self {
        Self::new(self.master_seed, format!("{}/{}", self.stage_label, suffix))
    }
}

/// splitmix64 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    state: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn for_stage(master_seed: u64, stage_label: &str) -> Self {
        Self::new(derive_stage_seed(master_seed, stage_label))
    }

    pub fn for_path(path: &str) -> Self {
        Self::new(path_seed(path))
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform index in `0..len`. Consumes exactly one uniform.
    pub fn index(&mut self, len: usize) -> usize {
        assert!(len > 0, "index() over an empty range");
        let i = (self.next_f64() * len as f64) as usize;
        i.min(len - 1)
    }

    /// Uniform integer in `lo..=hi`. Consumes exactly one uniform.
    pub fn range_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + self.index(span as usize) as i64
    }

    pub fn uniform(&mut self, a: f64, b: f64) -> f64 {
        a + self.next_f64() * (b - a)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.index(items.len())]
    }

    /// Standard normal by Box–Muller, cosine branch. Always consumes two
    /// uniforms.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        radius * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher–Yates shuffle, drawing one uniform per swap position.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn sample(&mut self, dist: &DistributionSpec) -> Result<Value, MalformedDistribution> {
        dist.sample(self)
    }
}

/// Parameters of the Beta-subsampled path count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathSamplerParams {
    pub alpha: f64,
    pub beta: f64,
    /// Floor `l` on the number of sampled paths.
    pub low: u64,
    /// Global cap `h` on the number of sampled paths.
    pub high: u64,
}

impl Default for PathSamplerParams {
    fn default() -> Self {
        Self {
            alpha: 1.05,
            beta: 25.0,
            low: 15,
            high: 10_000,
        }
    }
}

/// Number of paths to keep from a cross product of `h_max` candidates:
/// `round(l + Beta(alpha, beta) * (min(h, h_max) - l))`, or all of them when
/// the cross product is no larger than `l`.
pub fn sample_path_count(h_max: u64, params: &PathSamplerParams, stream: &mut RandomStream) -> u64 {
    assert!(h_max >= 1, "cross product must be non-empty");
    if h_max <= params.low {
        return h_max;
    }
    let upper = params.high.min(h_max);
    if upper <= params.low {
        return upper;
    }
    let b = distributions::sample_beta(stream, params.alpha, params.beta);
    let n = (params.low as f64 + b * (upper - params.low) as f64).round_ties_even();
    (n as u64).clamp(params.low, upper)
}
