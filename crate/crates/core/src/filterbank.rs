//! Gammatone filterbank with ERB-rate spaced center frequencies.
//!
//! Filters are FIR truncations of the analytic gammatone at -60 dB of its
//! envelope, normalized to unit magnitude response at the center frequency.
//! Each band output is advanced by the envelope-peak delay so bands stay
//! time-aligned with each other and with the input.

use std::io::Write;
use std::path::Path;

use crate::config::GammatoneSpec;
use crate::error::{Error, Result};
use crate::fft;

/// One gammatone band.
#[derive(Debug, Clone)]
pub struct GammatoneBand {
    pub center_hz: f64,
    /// Bandwidth parameter f_B = 1.019 * ERB(center).
    pub bandwidth_hz: f64,
    /// Envelope-peak delay compensated during decomposition.
    pub align_delay_s: f64,
    kernel: Vec<f64>,
    delay_samples: usize,
    sample_rate: u32,
}

impl GammatoneBand {
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }
}

/// ERB-spaced bank of gammatone filters.
#[derive(Debug, Clone)]
pub struct GammatoneBank {
    bands: Vec<GammatoneBand>,
    order: usize,
    sample_rate: u32,
}

/// Equivalent rectangular bandwidth at `f` Hz (Glasberg-Moore).
pub fn erb_hz(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// ERB-rate scale value at `f` Hz.
pub fn erb_scale(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

/// Inverse of [`erb_scale`].
pub fn erb_scale_inv(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

/// Designs a bank with centers uniformly spaced on the ERB-rate scale.
pub fn design_bank(spec: &GammatoneSpec, sample_rate: u32) -> Result<GammatoneBank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(spec.fmin_hz > 0.0 && spec.fmin_hz <= spec.fmax_hz && spec.fmax_hz < nyquist) {
        return Err(Error::arg(
            "design_bank: need 0 < fmin <= fmax < Nyquist".to_string(),
        ));
    }
    if spec.num_bands == 0 {
        return Err(Error::arg("design_bank: need at least one band"));
    }
    if spec.order == 0 {
        return Err(Error::arg("design_bank: order must be >= 1"));
    }
    let e_lo = erb_scale(spec.fmin_hz);
    let e_hi = erb_scale(spec.fmax_hz);
    let centers: Vec<f64> = if spec.num_bands == 1 {
        vec![erb_scale_inv((e_lo + e_hi) / 2.0)]
    } else {
        (0..spec.num_bands)
            .map(|b| {
                let e = e_lo + (e_hi - e_lo) * b as f64 / (spec.num_bands - 1) as f64;
                erb_scale_inv(e)
            })
            .collect()
    };
    let bands = centers
        .into_iter()
        .map(|fc| design_band(fc, spec.order, sample_rate))
        .collect::<Result<Vec<_>>>()?;
    Ok(GammatoneBank {
        bands,
        order: spec.order,
        sample_rate,
    })
}

fn design_band(center_hz: f64, order: usize, sample_rate: u32) -> Result<GammatoneBand> {
    let fs = sample_rate as f64;
    let fb = 1.019 * erb_hz(center_hz);
    let theta = order as f64;
    // Envelope u^(order-1) exp(-2 pi fb u) peaks here.
    let t_peak = (theta - 1.0) / (2.0 * std::f64::consts::PI * fb);
    let envelope = |u: f64| u.powf(theta - 1.0) * (-2.0 * std::f64::consts::PI * fb * u).exp();
    let peak_value = if order == 1 { 1.0 } else { envelope(t_peak) };

    // Truncate where the envelope drops 60 dB below its peak.
    let mut len = (t_peak * fs).ceil() as usize + 1;
    loop {
        let u = len as f64 / fs;
        if u > t_peak && envelope(u) < 1e-3 * peak_value {
            break;
        }
        len += 1;
        if len > 10 * sample_rate as usize {
            return Err(Error::Internal(format!(
                "gammatone kernel for fc={center_hz} Hz does not decay"
            )));
        }
    }

    let mut kernel: Vec<f64> = (0..len)
        .map(|m| {
            let u = m as f64 / fs;
            envelope(u) * (2.0 * std::f64::consts::PI * center_hz * (u - t_peak)).cos()
        })
        .collect();

    // Unit gain at the center frequency.
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (m, &k) in kernel.iter().enumerate() {
        let phase = -2.0 * std::f64::consts::PI * center_hz * m as f64 / fs;
        re += k * phase.cos();
        im += k * phase.sin();
    }
    let gain = (re * re + im * im).sqrt();
    if gain == 0.0 {
        return Err(Error::Internal("zero gammatone gain".into()));
    }
    for k in &mut kernel {
        *k /= gain;
    }

    Ok(GammatoneBand {
        center_hz,
        bandwidth_hz: fb,
        align_delay_s: t_peak,
        delay_samples: (t_peak * fs).round() as usize,
        kernel,
        sample_rate,
    })
}

impl GammatoneBank {
    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn bands(&self) -> &[GammatoneBand] {
        &self.bands
    }

    pub fn band(&self, b: usize) -> &GammatoneBand {
        &self.bands[b]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Filters a mono stream into all bands; each output has the input's
    /// length and is advanced by the band's alignment delay.
    pub fn decompose(&self, signal: &[f64], sample_rate: u32) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .bands
            .iter()
            .map(|band| Self::filter_band(band, signal, sample_rate))
            .collect::<Result<Vec<_>>>()?)
    }

    /// Filters a mono stream into a single band.
    pub fn filter_band(band: &GammatoneBand, signal: &[f64], sample_rate: u32) -> Result<Vec<f64>> {
        if sample_rate != band.sample_rate {
            return Err(Error::arg(format!(
                "filter_band: signal rate {sample_rate} does not match bank rate {}",
                band.sample_rate
            )));
        }
        if signal.is_empty() {
            return Ok(Vec::new());
        }
        let full = fft::convolve(signal, &band.kernel);
        let d = band.delay_samples;
        Ok((0..signal.len())
            .map(|n| full.get(n + d).copied().unwrap_or(0.0))
            .collect())
    }

    /// Writes band definitions as CSV: `band,center_hz,bandwidth_hz,delay_s`.
    pub fn write_band_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "band,center_hz,bandwidth_hz,delay_s").map_err(|e| Error::io(path, e))?;
        for (b, band) in self.bands.iter().enumerate() {
            writeln!(
                f,
                "{b},{:.6},{:.6},{:.9}",
                band.center_hz, band.bandwidth_hz, band.align_delay_s
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}
