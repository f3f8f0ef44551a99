//! Multichannel PHAT localizer: the product of rectified per-pair GCC-PHAT
//! values at the steering delays, over alias-safe microphone pairs. With two
//! microphones this is plain steered GCC-PHAT.

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::config::LocalizerConfig;
use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{steering_tdoa, ArrayGeometry};
use crate::map::SteeredResponseMap;
use crate::mccc::pairs_below_spacing;
use crate::signal::MultichannelSignal;

/// Bins whose cross-power magnitude falls below this are zeroed instead of
/// phase-normalized.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

/// Cross-power spectrum of one frame pair on bins `0..=fft_size/2`.
#[derive(Debug, Clone)]
pub struct CrossPowerSpectrum {
    pub fft_size: usize,
    values: Vec<Complex<f64>>,
}

impl CrossPowerSpectrum {
    /// `G[k] = X_i[k] * conj(X_j[k])` with both frames zero-padded to the
    /// next power of two.
    pub fn compute(frame_i: &[f64], frame_j: &[f64]) -> Result<Self> {
        if frame_i.len() != frame_j.len() {
            return Err(Error::arg("cross_power_spectrum: frame lengths differ"));
        }
        if frame_i.is_empty() {
            return Err(Error::arg("cross_power_spectrum: empty frames"));
        }
        let n = fft::next_pow2(frame_i.len());
        let xi = rfft(frame_i, n);
        let xj = rfft(frame_j, n);
        let values = xi
            .iter()
            .zip(&xj)
            .map(|(a, b)| a * b.conj())
            .collect();
        Ok(Self { fft_size: n, values })
    }

    /// Bin values on `0..=fft_size/2`.
    pub fn values(&self) -> &[Complex<f64>] {
        &self.values
    }
}

fn rfft(frame: &[f64], n: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(n, Complex::default());
    fft::forward(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Phase-transform correlation of two frames evaluated at lag `tau_s`,
/// using bins up to `f_max_hz` (DC excluded) and normalized by the number of
/// contributing bins so the self-correlation at zero lag is 1.
pub fn gcc_phat(
    frame_i: &[f64],
    frame_j: &[f64],
    tau_s: f64,
    f_max_hz: f64,
    sample_rate: u32,
) -> Result<f64> {
    if !(f_max_hz > 0.0) {
        return Err(Error::arg("gcc_phat: f_max must be positive"));
    }
    let len_s = frame_i.len() as f64 / sample_rate as f64;
    if !(tau_s.abs() < len_s) {
        return Err(Error::arg("gcc_phat: |tau| must be below the frame length"));
    }
    let spec = CrossPowerSpectrum::compute(frame_i, frame_j)?;
    let phasors = normalize_bins(&spec, f_max_hz, sample_rate);
    Ok(evaluate_at(&phasors, spec.fft_size, sample_rate, tau_s))
}

/// Unit phasors for bins `1..=k_max` (floored bins become zero).
fn normalize_bins(
    spec: &CrossPowerSpectrum,
    f_max_hz: f64,
    sample_rate: u32,
) -> Vec<Complex<f64>> {
    let n = spec.fft_size;
    let k_max = ((f_max_hz * n as f64 / sample_rate as f64).floor() as usize).min(n / 2);
    (1..=k_max)
        .map(|k| {
            let g = spec.values[k];
            let mag = g.norm();
            if mag < SPECTRAL_FLOOR {
                Complex::default()
            } else {
                g / mag
            }
        })
        .collect()
}

/// `Re( sum_k phasor_k * exp(-i 2 pi f_k tau) ) / #nonzero`, bins from 1.
fn evaluate_at(phasors: &[Complex<f64>], fft_size: usize, sample_rate: u32, tau_s: f64) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    let base = -2.0 * std::f64::consts::PI * sample_rate as f64 / fft_size as f64 * tau_s;
    for (idx, p) in phasors.iter().enumerate() {
        if p.re == 0.0 && p.im == 0.0 {
            continue;
        }
        let k = (idx + 1) as f64;
        let phase = base * k;
        acc += p.re * phase.cos() - p.im * phase.sin();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Microphone pairs (i < j) with spacing below `v / f_max`.
pub fn pair_set_global(geometry: &ArrayGeometry, f_max_hz: f64) -> Result<Vec<(usize, usize)>> {
    if !(f_max_hz > 0.0) {
        return Err(Error::arg("pair_set_global: f_max must be positive"));
    }
    Ok(pairs_below_spacing(
        geometry,
        geometry.speed_of_sound() / f_max_hz,
    ))
}

/// Runs the MCC-PHAT pipeline: Hann frames with 50% overlap, per-pair PHAT
/// correlations at the steering delay, rectified product over the pair set,
/// then the shared trailing average.
pub fn mcc_phat_map(
    signal: &MultichannelSignal,
    geometry: &ArrayGeometry,
    config: &LocalizerConfig,
) -> Result<SteeredResponseMap> {
    config.validate()?;
    if signal.channels() != geometry.num_mics() {
        return Err(Error::Data(format!(
            "signal has {} channels but the array has {} microphones",
            signal.channels(),
            geometry.num_mics()
        )));
    }
    if signal.channels() < 2 {
        return Err(Error::Data("need at least 2 channels".into()));
    }
    if signal.sample_rate() != config.sample_rate {
        return Err(Error::Data(format!(
            "signal rate {} does not match configured rate {}",
            signal.sample_rate(),
            config.sample_rate
        )));
    }
    let fs = config.sample_rate as f64;
    let frame_len = config.frame_len();
    let hop = (frame_len / 2).max(1);
    if signal.len() < frame_len {
        return Err(Error::Data("signal shorter than one frame".into()));
    }
    let num_frames = (signal.len() - frame_len) / hop + 1;
    let channels = signal.channels();
    let n = fft::next_pow2(frame_len);
    let k_max = ((config.f_max_hz * n as f64 / fs).floor() as usize).min(n / 2);
    if k_max == 0 {
        return Err(Error::Data("f_max leaves no usable frequency bins".into()));
    }

    let pairs = pair_set_global(geometry, config.f_max_hz)?;
    let window: Vec<f64> = (0..frame_len)
        .map(|i| {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame_len as f64).cos()
        })
        .collect();

    // Steering phasors e^(-i 2 pi f_k tau) per (azimuth, pair, bin).
    let steering: Vec<Vec<Vec<Complex<f64>>>> = config
        .grid
        .azimuths_deg()
        .iter()
        .map(|&az| {
            let p = config.grid.point(az);
            pairs
                .iter()
                .map(|&(i, j)| {
                    let tau = steering_tdoa(geometry, p, i, j)?;
                    let base = -2.0 * std::f64::consts::PI * fs / n as f64 * tau;
                    Ok((1..=k_max)
                        .map(|k| Complex::from_polar(1.0, base * k as f64))
                        .collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let values: Vec<Vec<f64>> = (0..num_frames)
        .into_par_iter()
        .map(|f| {
            let start = f * hop;
            // Windowed channel spectra for this frame.
            let spectra: Vec<Vec<Complex<f64>>> = (0..channels)
                .map(|ch| {
                    let seg = &signal.channel(ch)[start..start + frame_len];
                    let windowed: Vec<f64> =
                        seg.iter().zip(&window).map(|(x, w)| x * w).collect();
                    rfft(&windowed, n)
                })
                .collect();
            // Normalized cross spectra per pair (bins 1..=k_max).
            let mut pair_phasors: Vec<Vec<Complex<f64>>> = Vec::with_capacity(pairs.len());
            let mut pair_counts: Vec<usize> = Vec::with_capacity(pairs.len());
            for &(i, j) in &pairs {
                let mut ph = Vec::with_capacity(k_max);
                let mut count = 0usize;
                for k in 1..=k_max {
                    let g = spectra[i][k] * spectra[j][k].conj();
                    let mag = g.norm();
                    if mag < SPECTRAL_FLOOR {
                        ph.push(Complex::default());
                    } else {
                        ph.push(g / mag);
                        count += 1;
                    }
                }
                pair_phasors.push(ph);
                pair_counts.push(count);
            }
            // Rectified product over pairs at each azimuth.
            let row: Vec<f64> = steering
                .iter()
                .map(|az_pairs| {
                    let mut score = 1.0f64;
                    for (pi, phasors) in pair_phasors.iter().enumerate() {
                        if pair_counts[pi] == 0 {
                            return 0.0;
                        }
                        let mut acc = 0.0;
                        for (p, s) in phasors.iter().zip(&az_pairs[pi]) {
                            acc += p.re * s.re - p.im * s.im;
                        }
                        let val = acc / pair_counts[pi] as f64;
                        if val <= 0.0 {
                            return 0.0;
                        }
                        score *= val.min(1.0);
                    }
                    if pairs.is_empty() {
                        0.0
                    } else {
                        score
                    }
                })
                .collect();
            row
        })
        .collect();

    let t0 = signal.start_index() as f64 / fs;
    let frame_times: Vec<f64> = (0..num_frames)
        .map(|f| t0 + (f * hop + frame_len) as f64 / fs)
        .collect();
    SteeredResponseMap::new(
        config.grid.azimuths_deg().to_vec(),
        frame_times,
        values,
        hop as f64 / fs,
        config.t_avg_s,
        config.t_shift_s,
    )
}
