//! Counter-based Wiener increments.
//!
//! Every increment is a pure function of `(master_seed, trajectory_index,
//! step)`: the seed keys a ChaCha8 generator, the trajectory index selects the
//! stream and the step selects a fixed four-word window in it. Two 64-bit
//! words feed one Box-Muller draw.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS_PER_STEP: u128 = 4;
const TWO_PI: f64 = std::f64::consts::TAU;

fn keyed(master_seed: u64, trajectory_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory_index);
    rng
}

#[inline]
fn box_muller(a: u64, b: u64) -> f64 {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
}

/// Standard normal variate for a given step, by random access.
pub fn standard_normal_at(master_seed: u64, trajectory_index: u64, step: u64) -> f64 {
    let mut rng = keyed(master_seed, trajectory_index);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    let a = rng.next_u64();
    let b = rng.next_u64();
    box_muller(a, b)
}

/// Sequential reader producing the same values as [`standard_normal_at`]
/// for steps 0, 1, 2, ...
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, trajectory_index: u64, dt: f64) -> Self {
        Self {
            rng: keyed(master_seed, trajectory_index),
            sqrt_dt: dt.sqrt(),
        }
    }

    /// Positions the stream so the next draw is for `step`.
    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    }

    pub fn next_standard(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        box_muller(a, b)
    }

    /// Next Wiener increment, Normal(0, dt).
    pub fn next_increment(&mut self) -> f64 {
        self.next_standard() * self.sqrt_dt
    }
}
