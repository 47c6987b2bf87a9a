//! Deterministic, hierarchically derived random streams.
//!
//! Every stochastic quantity in the crate is drawn from a [`StreamRng`]
//! derived from `(master_seed, salt, ...)` key parts, so any trajectory,
//! iteration or evaluation batch can be regenerated independently of
//! everything else that happened in a run.

use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream salts. Training and evaluation never share a stream.
pub const SALT_INIT_ACTOR: u64 = 0x01;
pub const SALT_INIT_CRITIC: u64 = 0x02;
pub const SALT_TRAIN: u64 = 0x03;
pub const SALT_EVAL: u64 = 0x04;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seedable, counter-derived random stream (ChaCha8 underneath).
#[derive(Clone, Debug)]
pub struct StreamRng(ChaCha8Rng);

impl StreamRng {
    /// Derive a stream from an ordered list of key parts.
    pub fn derive(parts: &[u64]) -> Self {
        let mut state: u64 = 0x243f_6a88_85a3_08d3; // arbitrary nonzero start
        for &p in parts {
            state ^= p.wrapping_mul(0xff51_afd7_ed55_8ccd);
            splitmix64(&mut state);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        StreamRng(ChaCha8Rng::from_seed(seed))
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        // 53 random bits scaled into [0, 1).
        let bits = self.0.next_u64() >> 11;
        bits as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[low, high)`; degenerate ranges return `low`.
    #[inline]
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + self.uniform01() * (high - low)
    }

    /// Standard normal draw via the Marsaglia polar method.
    pub fn standard_normal(&mut self) -> f64 {
        loop {
            let u = self.uniform(-1.0, 1.0);
            let v = self.uniform(-1.0, 1.0);
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * libm::sqrt(-2.0 * libm::log(s) / s);
            }
        }
    }

    /// Normal draw with the given mean and standard deviation.
    #[inline]
    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.standard_normal()
    }
}
