//! Deterministic random streams.
//!
//! Every stream is a ChaCha20 generator whose 256-bit seed is the SHA-256
//! digest of a key (base seed, label, trial index, optional sub-index). The
//! generator is counter based, so its full state is the seed plus the word
//! position and can be saved and restored mid-trial.
//!
//! Gaussian variates use the Box–Muller transform. Each transform consumes
//! two 64-bit words and yields two variates; the second is cached and returned
//! by the next call. Uniforms are `(word >> 11) * 2^-53`, in `[0, 1)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const DOMAIN_TAG: &[u8] = b"tssa-stream-v1";

#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

/// Serializable snapshot of a [`Stream`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: [u8; 32],
    pub word_pos: u128,
    pub spare: Option<f64>,
}

impl Stream {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            rng: ChaCha20Rng::from_seed(seed),
            spare: None,
        }
    }

    /// Convenience constructor for tests and ad-hoc use.
    pub fn seeded(seed: u64) -> Self {
        Self::from_seed(derive_seed(seed, "adhoc", 0, None))
    }

    pub fn state(&self) -> StreamState {
        StreamState {
            seed: self.rng.get_seed(),
            word_pos: self.rng.get_word_pos(),
            spare: self.spare,
        }
    }

    pub fn restore(state: &StreamState) -> Self {
        let mut rng = ChaCha20Rng::from_seed(state.seed);
        rng.set_word_pos(state.word_pos);
        Self {
            rng,
            spare: state.spare,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by multiply-shift. The bias is below
    /// `n / 2^64` and irrelevant at the sizes used here.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal variate (Box–Muller).
    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

fn derive_seed(base_seed: u64, label: &str, trial: u64, sub: Option<u64>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN_TAG);
    hasher.update(base_seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(trial.to_le_bytes());
    match sub {
        Some(s) => {
            hasher.update([1u8]);
            hasher.update(s.to_le_bytes());
        }
        None => hasher.update([0u8]),
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    seed
}

/// Stream keyed by `(base_seed, label, trial)`.
pub fn provision_stream(base_seed: u64, label: &str, trial: u64) -> Stream {
    Stream::from_seed(derive_seed(base_seed, label, trial, None))
}

/// Stream keyed by `(base_seed, label, trial, sub)`; used for per-arm reward streams.
pub fn provision_substream(base_seed: u64, label: &str, trial: u64, sub: u64) -> Stream {
    Stream::from_seed(derive_seed(base_seed, label, trial, Some(sub)))
}
