//! Onset-steered multichannel cross-correlation localizer.
//!
//! For every scan azimuth the channels are aligned to microphone 0 by the
//! steering delays, decomposed into gammatone subbands, reduced to onset
//! spikes, and scored per frame: each subband contributes the product of
//! half-wave-rectified normalized pair correlations over its alias-safe
//! microphone pairs, and subbands average into the frame score. Because the
//! filterbank and the steering delays are both LTI, the bank runs once per
//! channel and the (much cheaper) per-azimuth alignment happens on the band
//! streams.

use rayon::prelude::*;

use crate::align::FractionalDelay;
use crate::config::{AlignmentMode, LocalizerConfig};
use crate::error::{Error, Result};
use crate::filterbank::design_bank;
use crate::geometry::{steering_tdoa, ArrayGeometry};
use crate::map::SteeredResponseMap;
use crate::onset::{detect_onsets_from_zero, SpikeTrain};
use crate::signal::MultichannelSignal;

/// Spatial correlation of mean-removed frames: `r`, per-channel `sigma`, and
/// normalized coefficients with the zero-sigma pseudoinverse rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCorrMatrix {
    dim: usize,
    r: Vec<f64>,
    sigma: Vec<f64>,
}

impl SpatialCorrMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.dim + j]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigma[i]
    }

    /// `r_ij / (sigma_i sigma_j)`, zero when either sigma vanishes.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        let si = self.sigma[i];
        let sj = self.sigma[j];
        if si == 0.0 || sj == 0.0 {
            0.0
        } else {
            (self.r(i, j) / (si * sj)).clamp(-1.0, 1.0)
        }
    }
}

/// Mean-removed spatial correlation matrix of equal-length channel frames:
/// `r_ij = (1/L) sum_k (x_i[k] - mean_i)(x_j[k] - mean_j)`.
pub fn spatial_corr(frames: &[&[f64]]) -> Result<SpatialCorrMatrix> {
    let dim = frames.len();
    if dim == 0 {
        return Err(Error::arg("spatial_corr: no channels"));
    }
    let len = frames[0].len();
    if len == 0 {
        return Err(Error::arg("spatial_corr: empty frames"));
    }
    if frames.iter().any(|f| f.len() != len) {
        return Err(Error::arg("spatial_corr: frames must share one length"));
    }
    let means: Vec<f64> = frames
        .iter()
        .map(|f| f.iter().sum::<f64>() / len as f64)
        .collect();
    let mut r = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let mut acc = 0.0;
            for k in 0..len {
                acc += (frames[i][k] - means[i]) * (frames[j][k] - means[j]);
            }
            let v = acc / len as f64;
            r[i * dim + j] = v;
            r[j * dim + i] = v;
        }
    }
    let sigma = (0..dim).map(|i| r[i * dim + i].max(0.0).sqrt()).collect();
    Ok(SpatialCorrMatrix { dim, r, sigma })
}

/// Microphone pairs (i < j) spaced closely enough to avoid spatial aliasing
/// in a band: `||m_i - m_j|| < v / (f_c + f_B)`.
pub fn pair_set_for_band(
    geometry: &ArrayGeometry,
    band_fc_hz: f64,
    band_fb_hz: f64,
) -> Result<Vec<(usize, usize)>> {
    let f = band_fc_hz + band_fb_hz;
    if !(f > 0.0) {
        return Err(Error::arg("pair_set_for_band: band frequencies must be positive"));
    }
    Ok(pairs_below_spacing(geometry, geometry.speed_of_sound() / f))
}

pub(crate) fn pairs_below_spacing(geometry: &ArrayGeometry, limit_m: f64) -> Vec<(usize, usize)> {
    let n = geometry.num_mics();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if geometry.spacing(i, j) < limit_m {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Product of half-wave-rectified pair correlations; 0 for an empty pair set.
pub fn subband_score(matrix: &SpatialCorrMatrix, pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut score = 1.0;
    for &(i, j) in pairs {
        let rect = matrix.rho(i, j).max(0.0);
        score *= rect;
        if score == 0.0 {
            return 0.0;
        }
    }
    score
}

/// One channel-band spike train bucketed by frame for sparse scoring.
struct FramedSpikes {
    /// Per frame: (index within frame, amplitude), sorted by index.
    frames: Vec<Vec<(u32, f64)>>,
}

impl FramedSpikes {
    fn from_train(train: &SpikeTrain, frame_len: usize, num_frames: usize) -> Self {
        let mut frames = vec![Vec::new(); num_frames];
        for s in train.spikes() {
            let f = s.index / frame_len;
            if f < num_frames {
                frames[f].push(((s.index - f * frame_len) as u32, s.amplitude));
            }
        }
        Self { frames }
    }
}

/// Per-frame sparse equivalent of [`spatial_corr`] + [`subband_score`]:
/// operates on the spike lists directly, using
/// `r_ij = dot_ij/L - mean_i*mean_j`.
fn sparse_band_score(
    per_channel: &[&[(u32, f64)]],
    frame_len: usize,
    pairs: &[(usize, usize)],
) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let l = frame_len as f64;
    let dim = per_channel.len();
    let mut mean = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    for (ch, spikes) in per_channel.iter().enumerate() {
        let mut s = 0.0;
        let mut q = 0.0;
        for &(_, a) in *spikes {
            s += a;
            q += a * a;
        }
        let m = s / l;
        mean[ch] = m;
        var[ch] = (q / l - m * m).max(0.0);
    }
    let mut score = 1.0;
    for &(i, j) in pairs {
        if var[i] == 0.0 || var[j] == 0.0 {
            return 0.0; // sigma = 0 forces rho = 0, rectified product dies
        }
        let mut dot = 0.0;
        let (a, b) = (per_channel[i], per_channel[j]);
        let (mut p, mut q) = (0usize, 0usize);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    dot += a[p].1 * b[q].1;
                    p += 1;
                    q += 1;
                }
            }
        }
        let r = dot / l - mean[i] * mean[j];
        let rho = (r / (var[i] * var[j]).sqrt()).clamp(-1.0, 1.0);
        if rho <= 0.0 {
            return 0.0;
        }
        score *= rho;
    }
    score
}

/// Runs the onset-MCCC pipeline over the whole scan grid.
pub fn onset_mccc_map(
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
    let num_frames = signal.len() / frame_len;
    if num_frames == 0 {
        return Err(Error::Data("signal shorter than one frame".into()));
    }
    let bank = design_bank(&config.bank, config.sample_rate)?;
    let num_bands = bank.num_bands();
    let channels = signal.channels();

    // Band decomposition runs once; delays and the filterbank are both LTI,
    // so aligning the band streams equals filtering the aligned channels.
    let band_streams: Vec<Vec<Vec<f64>>> = (0..channels)
        .into_par_iter()
        .map(|ch| bank.decompose(signal.channel(ch), config.sample_rate))
        .collect::<Result<Vec<_>>>()?;

    let pair_sets: Vec<Vec<(usize, usize)>> = bank
        .bands()
        .iter()
        .map(|b| pair_set_for_band(geometry, b.center_hz, b.bandwidth_hz))
        .collect::<Result<Vec<_>>>()?;

    // Steering advances per (azimuth, channel), in samples. Channel 0 is the
    // reference and always has advance 0.
    let advances: Vec<Vec<f64>> = config
        .grid
        .azimuths_deg()
        .iter()
        .map(|&az| {
            let p = config.grid.point(az);
            (0..channels)
                .map(|ch| steering_tdoa(geometry, p, 0, ch).map(|tau| tau * fs))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let exact = config.alignment == AlignmentMode::Exact;
    // The reference channel's advance is zero at every azimuth, so its
    // detections are shared. In snapped mode all channels detect once on the
    // unaligned streams and only spike indices move per azimuth.
    let ref_framed: Vec<FramedSpikes> = if exact {
        (0..num_bands)
            .map(|b| {
                let train = detect_onsets_from_zero(&band_streams[0][b], config.lambda)?;
                Ok(FramedSpikes::from_train(&train, frame_len, num_frames))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let all_trains: Vec<Vec<SpikeTrain>> = if exact {
        Vec::new()
    } else {
        (0..channels)
            .into_par_iter()
            .map(|ch| {
                (0..num_bands)
                    .map(|b| detect_onsets_from_zero(&band_streams[ch][b], config.lambda))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
    };

    // Column of frame scores per azimuth, computed independently.
    let columns: Vec<Vec<f64>> = (0..config.grid.len())
        .into_par_iter()
        .map(|ai| {
            let mut scratch = vec![0.0f64; signal.len()];
            let mut frame_scores = vec![0.0f64; num_frames];
            let kernels: Vec<FractionalDelay> = if exact {
                advances[ai].iter().map(|&a| FractionalDelay::new(a)).collect()
            } else {
                Vec::new()
            };
            for (b, pairs) in pair_sets.iter().enumerate() {
                if pairs.is_empty() {
                    continue; // contributes zero but stays in the divisor
                }
                // This band's framed spikes; None marks the shared reference.
                let mut owned: Vec<Option<FramedSpikes>> = Vec::with_capacity(channels);
                for ch in 0..channels {
                    let fr = if exact {
                        if ch == 0 {
                            None
                        } else {
                            kernels[ch].apply_into(&band_streams[ch][b], &mut scratch);
                            let train = detect_onsets_from_zero(&scratch, config.lambda)?;
                            Some(FramedSpikes::from_train(&train, frame_len, num_frames))
                        }
                    } else {
                        let shifted =
                            all_trains[ch][b].shifted(advances[ai][ch].round() as i64);
                        Some(FramedSpikes::from_train(&shifted, frame_len, num_frames))
                    };
                    owned.push(fr);
                }
                let mut views: Vec<&[(u32, f64)]> = Vec::with_capacity(channels);
                for (f, score) in frame_scores.iter_mut().enumerate() {
                    views.clear();
                    for (ch, fr) in owned.iter().enumerate() {
                        views.push(match fr {
                            Some(fs) => fs.frames[f].as_slice(),
                            None => ref_framed[b].frames[f].as_slice(),
                        });
                        let _ = ch;
                    }
                    *score += sparse_band_score(&views, frame_len, pairs);
                }
            }
            let inv = 1.0 / num_bands as f64;
            frame_scores.iter_mut().for_each(|s| *s *= inv);
            Ok(frame_scores)
        })
        .collect::<Result<Vec<_>>>()?;

    // Transpose azimuth columns into frame rows.
    let values: Vec<Vec<f64>> = (0..num_frames)
        .map(|f| columns.iter().map(|col| col[f]).collect())
        .collect();
    let t0 = signal.start_index() as f64 / fs;
    let frame_times: Vec<f64> = (0..num_frames)
        .map(|f| t0 + (f + 1) as f64 * frame_len as f64 / fs)
        .collect();
    SteeredResponseMap::new(
        config.grid.azimuths_deg().to_vec(),
        frame_times,
        values,
        frame_len as f64 / fs,
        config.t_avg_s,
        config.t_shift_s,
    )
}
