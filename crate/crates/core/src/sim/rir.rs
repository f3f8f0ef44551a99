//! Stochastic room impulse response: a single direct tap followed, after a
//! reflection-free gap, by a Gaussian diffuse tail with exponential decay
//! calibrated so the expected energy falls 60 dB per T60.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_SOUND;

/// Tail taps are kept until the decay envelope falls 80 dB below the direct
/// tap, comfortably past the 60 dB reverberation-time definition.
const TRIM_DB: f64 = 80.0;

#[derive(Debug, Clone)]
pub struct StochasticRir {
    pub direct_delay_s: f64,
    pub direct_gain: f64,
    pub gap_s: f64,
    pub t60_s: f64,
    pub seed: u64,
    taps: Vec<f64>,
    direct_index: usize,
    sample_rate: u32,
}

impl StochasticRir {
    /// Full tap sequence at the sample rate, starting at k = 0.
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn direct_index(&self) -> usize {
        self.direct_index
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Taps with the direct tap zeroed; the renderer applies the direct path
    /// separately with sub-sample accuracy.
    pub fn diffuse_tail(&self) -> Vec<f64> {
        let mut t = self.taps.clone();
        t[self.direct_index] = 0.0;
        t
    }

    /// Expected squared tail envelope at tap `k`.
    pub fn expected_sq_envelope(&self, k: usize) -> f64 {
        let dt = k as f64 / self.sample_rate as f64 - self.direct_delay_s;
        self.direct_gain * self.direct_gain * 10f64.powf(-6.0 * dt / self.t60_s)
    }
}

/// Generates an RIR for a source at `distance_m` using the default speed of
/// sound. Direct gain is `1 / max(distance, 0.1)`.
pub fn generate_rir(
    distance_m: f64,
    t60_s: f64,
    gap_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<StochasticRir> {
    generate_rir_with_speed(distance_m, t60_s, gap_s, sample_rate, seed, SPEED_OF_SOUND)
}

pub fn generate_rir_with_speed(
    distance_m: f64,
    t60_s: f64,
    gap_s: f64,
    sample_rate: u32,
    seed: u64,
    speed_of_sound: f64,
) -> Result<StochasticRir> {
    if !(distance_m > 0.0) {
        return Err(Error::arg("generate_rir: distance must be positive"));
    }
    if !(t60_s > 0.0) {
        return Err(Error::arg("generate_rir: t60 must be positive"));
    }
    if !(gap_s > 0.0) {
        return Err(Error::arg("generate_rir: gap must be positive"));
    }
    if sample_rate == 0 {
        return Err(Error::arg("generate_rir: sample_rate must be positive"));
    }
    let fs = sample_rate as f64;
    let direct_delay_s = distance_m / speed_of_sound;
    let direct_gain = 1.0 / distance_m.max(0.1);
    let direct_index = (direct_delay_s * fs).round() as usize;
    let tail_start = ((direct_delay_s + gap_s) * fs).round() as usize;
    let tail_start = tail_start.max(direct_index + 1);
    // Envelope 10^(-3 dt / T60) crosses -80 dB at dt = (80/60) T60.
    let end = ((direct_delay_s + TRIM_DB / 60.0 * t60_s) * fs).round() as usize;

    let mut taps = vec![0.0; end + 1];
    taps[direct_index] = direct_gain;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for k in tail_start..=end {
        let dt = k as f64 / fs - direct_delay_s;
        let nu: f64 = StandardNormal.sample(&mut rng);
        taps[k] = direct_gain * nu * 10f64.powf(-3.0 * dt / t60_s);
    }
    Ok(StochasticRir {
        direct_delay_s,
        direct_gain,
        gap_s,
        t60_s,
        seed,
        taps,
        direct_index,
        sample_rate,
    })
}
