//! File-free generated datasets used for tests, smoke training, and
//! transfer experiments.
//!
//! Each channel cycles through regimes that pick a waveform shape (smooth,
//! ramp-up, ramp-down, flat-topped), an amplitude, and a phase, on top of a
//! shared minor tone, a mild trend, and a little noise.  Regimes persist for
//! a few hundred steps, so the shape of the recent past carries over into
//! the forecast range.  The structure is deliberately learnable: a
//! carry-forward baseline does poorly, a smoothed seasonal fit does fine on
//! magnitude but misses turning-point geometry, and the waveform identity
//! is what distinguishes regimes — not just scale.

use super::RawTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROWS: usize = 2000;
pub const CHANNELS: usize = 3;
/// Row count of the long variant; enough history that even a 720-step
/// horizon leaves windows in every split.
pub const LONG_ROWS: usize = 7600;

struct Recipe {
    seed: u64,
    rows: usize,
    /// Base period per channel, in steps.
    periods: [f64; CHANNELS],
    /// Secondary period shared by all channels.
    minor_period: f64,
    regime_len: usize,
    noise: f64,
}

fn recipe(name: &str) -> Option<Recipe> {
    match name {
        "synthetic" => Some(Recipe {
            seed: 0x5747_0001,
            rows: ROWS,
            periods: [24.0, 37.0, 53.0],
            minor_period: 12.0,
            regime_len: 450,
            noise: 0.05,
        }),
        "synthetic2" => Some(Recipe {
            seed: 0x5747_0002,
            rows: ROWS,
            periods: [20.0, 41.0, 61.0],
            minor_period: 9.0,
            regime_len: 480,
            noise: 0.05,
        }),
        "synthetic_long" => Some(Recipe {
            seed: 0x5747_0003,
            rows: LONG_ROWS,
            periods: [23.0, 48.0, 71.0],
            minor_period: 11.0,
            regime_len: 600,
            noise: 0.05,
        }),
        _ => None,
    }
}

/// Unit-amplitude periodic shapes, indexed by the per-regime draw.  `u` is
/// the cycle fraction in [0, 1).
fn waveform(kind: u8, u: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    match kind {
        // slow rise, sharp drop
        1 => {
            let r = 0.7;
            if u < r {
                -1.0 + 2.0 * u / r
            } else {
                1.0 - 2.0 * (u - r) / (1.0 - r)
            }
        }
        // sharp rise, slow decay
        2 => {
            let r = 0.3;
            if u < r {
                -1.0 + 2.0 * u / r
            } else {
                1.0 - 2.0 * (u - r) / (1.0 - r)
            }
        }
        // flat-topped: saturated sine
        3 => (2.5 * (tau * u).sin()).tanh() / 2.5f64.tanh(),
        _ => (tau * u).sin(),
    }
}

/// Deterministic: the same name always yields the same table.
pub fn generate(name: &str) -> Option<RawTable> {
    let r = recipe(name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let regimes = r.rows / r.regime_len + 1;
    // Per-regime, per-channel shape, amplitude, and phase for the dominant tone.
    let mut kinds = vec![[0u8; CHANNELS]; regimes];
    let mut amps = vec![[0.0f64; CHANNELS]; regimes];
    let mut phases = vec![[0.0f64; CHANNELS]; regimes];
    for g in 0..regimes {
        for c in 0..CHANNELS {
            kinds[g][c] = rng.random_range(0..4u8);
            amps[g][c] = rng.random_range(0.8..1.4);
            phases[g][c] = rng.random_range(0.0..1.0);
        }
    }
    let mut values = Vec::with_capacity(r.rows * CHANNELS);
    let mut timestamps = Vec::with_capacity(r.rows);
    for t in 0..r.rows {
        timestamps.push(format!("t{t:05}"));
        let g = t / r.regime_len;
        for c in 0..CHANNELS {
            let u = (t as f64 / r.periods[c] + phases[g][c]).fract();
            let main = amps[g][c] * waveform(kinds[g][c], u);
            let minor = 0.3 * (std::f64::consts::TAU * t as f64 / r.minor_period).sin();
            let trend = 2e-4 * t as f64 * (c as f64 + 1.0);
            let eps = r.noise * (rng.random_range(0.0f64..1.0) - 0.5);
            values.push(main + minor + trend + eps);
        }
    }
    Some(RawTable {
        values,
        rows: r.rows,
        channels: CHANNELS,
        timestamps,
    })
}
