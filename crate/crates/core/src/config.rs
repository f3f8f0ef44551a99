//! Shared localizer configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SteeringGrid;

/// Gammatone filterbank parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammatoneSpec {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub num_bands: usize,
    pub order: usize,
}

impl Default for GammatoneSpec {
    fn default() -> Self {
        Self {
            fmin_hz: 250.0,
            fmax_hz: 3600.0,
            num_bands: 16,
            order: 4,
        }
    }
}

/// How the onset localizer aligns streams for each scan azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMode {
    /// Reference pipeline: fractionally align every subband stream per
    /// azimuth and re-run onset detection on the aligned streams.
    Exact,
    /// Detect onsets once on unaligned streams, then shift spike indices by
    /// the rounded steering delay. Much cheaper, slightly coarser.
    SnappedSpikes,
}

/// Parameters shared by both steered localizers.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerConfig {
    pub sample_rate: u32,
    pub grid: SteeringGrid,
    /// Correlation frame length, seconds.
    pub frame_s: f64,
    /// Trailing average window, seconds.
    pub t_avg_s: f64,
    /// Hop between DOA readouts, seconds; in (0, t_avg].
    pub t_shift_s: f64,
    /// Forgetting factor of the onset detector's reflection-level average.
    pub lambda: f64,
    pub bank: GammatoneSpec,
    /// Maximum frequency used by the PHAT localizer, Hz.
    pub f_max_hz: f64,
    pub alignment: AlignmentMode,
}

impl LocalizerConfig {
    pub fn defaults(sample_rate: u32) -> Result<Self> {
        let cfg = Self {
            sample_rate,
            grid: SteeringGrid::uniform(1.0, 1.0)?,
            frame_s: 0.02,
            t_avg_s: 0.5,
            t_shift_s: 0.5,
            lambda: 0.9998,
            bank: GammatoneSpec::default(),
            f_max_hz: 3600.0,
            alignment: AlignmentMode::Exact,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.frame_s > 0.0) {
            return Err(Error::Config("frame_s must be positive".into()));
        }
        if !(self.t_avg_s > 0.0) {
            return Err(Error::Config("t_avg_s must be positive".into()));
        }
        if !(self.t_shift_s > 0.0 && self.t_shift_s <= self.t_avg_s + 1e-12) {
            return Err(Error::Config("t_shift_s must be in (0, t_avg_s]".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config("lambda must be in (0, 1)".into()));
        }
        if !(self.f_max_hz > 0.0 && self.f_max_hz < nyquist) {
            return Err(Error::Config("f_max_hz must be in (0, Nyquist)".into()));
        }
        if !(self.bank.fmin_hz > 0.0
            && self.bank.fmin_hz <= self.bank.fmax_hz
            && self.bank.fmax_hz < nyquist)
        {
            return Err(Error::Config(
                "filterbank range must satisfy 0 < fmin <= fmax < Nyquist".into(),
            ));
        }
        if self.bank.num_bands == 0 || self.bank.order == 0 {
            return Err(Error::Config(
                "filterbank needs at least one band and order >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Frame length in samples.
    pub fn frame_len(&self) -> usize {
        (self.frame_s * self.sample_rate as f64).round() as usize
    }
}
