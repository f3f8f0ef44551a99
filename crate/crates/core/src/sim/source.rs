//! Harmonic source synthesis: sums of amplitude-modulated cosine harmonics,
//! plus a seeded burst generator that produces onset-rich speech-like
//! envelopes (attack / hold / decay syllables separated by gaps).

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};

/// Piecewise-linear nonnegative envelope over time.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    breakpoints: Vec<(f64, f64)>,
}

impl Envelope {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::arg("envelope needs at least one breakpoint"));
        }
        for w in breakpoints.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::arg("envelope breakpoints must be strictly increasing"));
            }
        }
        if breakpoints.iter().any(|&(_, level)| level < 0.0) {
            return Err(Error::arg("envelope levels must be nonnegative"));
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(level: f64) -> Result<Self> {
        Self::new(vec![(0.0, level)])
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    /// Linear interpolation; clamps to the first/last level outside.
    pub fn value(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0].0 {
            return bp[0].1;
        }
        if t >= bp[bp.len() - 1].0 {
            return bp[bp.len() - 1].1;
        }
        let i = bp.partition_point(|&(bt, _)| bt <= t);
        let (t0, v0) = bp[i - 1];
        let (t1, v1) = bp[i];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Scales all levels by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breakpoints: self
                .breakpoints
                .iter()
                .map(|&(t, v)| (t, v * factor))
                .collect(),
        }
    }
}

/// One harmonic: its amplitude envelope and starting phase.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicComponent {
    pub envelope: Envelope,
    pub phase: f64,
}

/// A voiced-sound source: harmonics of a fundamental, each with its own
/// envelope and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSourceSpec {
    pub f0_hz: f64,
    pub harmonics: Vec<HarmonicComponent>,
    pub duration_s: f64,
}

impl HarmonicSourceSpec {
    pub fn num_harmonics(&self) -> usize {
        self.harmonics.len()
    }
}

/// Renders the harmonic sum and normalizes the peak to 0.5 full scale.
pub fn synthesize_harmonic_speech(spec: &HarmonicSourceSpec, sample_rate: u32) -> Result<Vec<f64>> {
    if !(spec.f0_hz > 0.0) {
        return Err(Error::arg("f0 must be positive"));
    }
    if spec.harmonics.is_empty() {
        return Err(Error::arg("need at least one harmonic"));
    }
    if !(spec.duration_s > 0.0) {
        return Err(Error::arg("duration must be positive"));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let top = spec.f0_hz * spec.harmonics.len() as f64;
    if top >= nyquist {
        return Err(Error::arg(format!(
            "harmonic {} at {top} Hz would alias (Nyquist {nyquist} Hz)",
            spec.harmonics.len()
        )));
    }
    let fs = sample_rate as f64;
    let n = (spec.duration_s * fs).round() as usize;
    let mut out = vec![0.0; n];
    for (h, comp) in spec.harmonics.iter().enumerate() {
        let freq = spec.f0_hz * (h + 1) as f64;
        let w = 2.0 * std::f64::consts::PI * freq;
        for (k, o) in out.iter_mut().enumerate() {
            let t = k as f64 / fs;
            let a = comp.envelope.value(t);
            if a > 0.0 {
                *o += a * (w * t + comp.phase).cos();
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let g = 0.5 / peak;
        for o in &mut out {
            *o *= g;
        }
    }
    Ok(out)
}

/// Burst-schedule ranges for [`speech_like_with`], all in seconds.
#[derive(Debug, Clone, Copy)]
pub struct BurstParams {
    pub initial_silence: (f64, f64),
    pub attack: (f64, f64),
    pub hold: (f64, f64),
    pub decay: (f64, f64),
    pub gap: (f64, f64),
    pub level: (f64, f64),
}

impl Default for BurstParams {
    fn default() -> Self {
        Self {
            initial_silence: (0.05, 0.20),
            attack: (0.015, 0.06),
            hold: (0.06, 0.20),
            decay: (0.04, 0.12),
            gap: (0.08, 0.30),
            level: (0.6, 1.0),
        }
    }
}

impl BurstParams {
    /// Short gaps: a talker that is active almost continuously.
    pub fn continuous() -> Self {
        Self {
            initial_silence: (0.01, 0.05),
            gap: (0.02, 0.08),
            ..Self::default()
        }
    }
}

/// Seeded speech-like source: random syllable bursts shared by all harmonics,
/// per-harmonic 1/h amplitude rolloff and random phases.
pub fn speech_like(
    f0_hz: f64,
    num_harmonics: usize,
    duration_s: f64,
    seed: u64,
) -> Result<HarmonicSourceSpec> {
    speech_like_with(f0_hz, num_harmonics, duration_s, seed, BurstParams::default())
}

pub fn speech_like_with(
    f0_hz: f64,
    num_harmonics: usize,
    duration_s: f64,
    seed: u64,
    params: BurstParams,
) -> Result<HarmonicSourceSpec> {
    if num_harmonics == 0 {
        return Err(Error::arg("need at least one harmonic"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut rand_chacha::ChaCha8Rng, range: (f64, f64)| -> f64 {
        if range.0 >= range.1 {
            range.0
        } else {
            rng.gen_range(range.0..range.1)
        }
    };

    let mut bp = vec![(0.0, 0.0)];
    let mut t = sample(&mut rng, params.initial_silence);
    while t < duration_s {
        let attack = sample(&mut rng, params.attack);
        let hold = sample(&mut rng, params.hold);
        let decay = sample(&mut rng, params.decay);
        let gap = sample(&mut rng, params.gap);
        let level = sample(&mut rng, params.level);
        let push = |time: f64, v: f64, bp: &mut Vec<(f64, f64)>| {
            if time < duration_s && time > bp.last().unwrap().0 {
                bp.push((time, v));
                true
            } else {
                false
            }
        };
        if !push(t, 0.0, &mut bp) {
            break;
        }
        if !push(t + attack, level, &mut bp) {
            break;
        }
        push(t + attack + hold, level, &mut bp);
        push(t + attack + hold + decay, 0.0, &mut bp);
        t += attack + hold + decay + gap;
    }
    // Force silence at the very end so renders do not cut a burst.
    if bp.last().unwrap().1 != 0.0 {
        bp.push((duration_s, 0.0));
    }
    let burst = Envelope::new(bp)?;

    let harmonics = (0..num_harmonics)
        .map(|h| HarmonicComponent {
            envelope: burst.scaled(1.0 / (h + 1) as f64),
            phase: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
        })
        .collect();
    Ok(HarmonicSourceSpec {
        f0_hz,
        harmonics,
        duration_s,
    })
}
