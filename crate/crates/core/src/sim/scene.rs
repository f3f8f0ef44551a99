//! Multichannel scene rendering and scene description files.
//!
//! Static sources convolve with one stochastic RIR per microphone; the
//! direct path is applied separately with a windowed-sinc fractional delay
//! so sub-sample TDOAs survive. Moving sources are rendered block-wise
//! (100 ms blocks, 10 ms raised-cosine crossfades) with the RIR regenerated
//! per block from a per-source seed.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::align::FractionalDelay;
use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{wrap_deg, ArrayGeometry};
use crate::signal::{add_noise, mix_seed, MultichannelSignal};
use crate::sim::rir::generate_rir_with_speed;
use crate::sim::source::{
    speech_like, synthesize_harmonic_speech, Envelope, HarmonicComponent, HarmonicSourceSpec,
};
use crate::wav::read_wav;

const BLOCK_S: f64 = 0.1;
const FADE_S: f64 = 0.01;

/// Time-stamped positions with piecewise-linear interpolation between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<(f64, [f64; 2])>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, [f64; 2])>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::arg("trajectory needs at least one waypoint"));
        }
        for w in waypoints.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::arg("trajectory timestamps must be strictly increasing"));
            }
        }
        Ok(Self { waypoints })
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].0
    }

    /// Clamps to the first/last waypoint outside the time span.
    pub fn position(&self, t: f64) -> [f64; 2] {
        let wp = &self.waypoints;
        if t <= wp[0].0 {
            return wp[0].1;
        }
        if t >= wp[wp.len() - 1].0 {
            return wp[wp.len() - 1].1;
        }
        let i = wp.partition_point(|&(wt, _)| wt <= t);
        let (t0, p0) = wp[i - 1];
        let (t1, p1) = wp[i];
        let a = (t - t0) / (t1 - t0);
        [p0[0] + a * (p1[0] - p0[0]), p0[1] + a * (p1[1] - p0[1])]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourcePlacement {
    Static([f64; 2]),
    Moving(Trajectory),
}

impl SourcePlacement {
    fn position_at(&self, t: f64) -> [f64; 2] {
        match self {
            SourcePlacement::Static(p) => *p,
            SourcePlacement::Moving(tr) => tr.position(t),
        }
    }

    pub fn azimuth_deg_at(&self, t: f64) -> f64 {
        let p = self.position_at(t);
        wrap_deg(p[1].atan2(p[0]).to_degrees())
    }
}

/// One dry source: mono samples plus where it sits (or moves).
#[derive(Debug, Clone)]
pub struct SceneSource {
    pub id: String,
    pub samples: Vec<f64>,
    pub placement: SourcePlacement,
}

/// Renders a reverberant noisy mixture. `t60_s = 0` renders anechoic;
/// otherwise the stochastic RIR model is used with the given gap. `snr_db`
/// may be infinite for a noise-free render.
pub fn render_scene(
    sources: &[SceneSource],
    geometry: &ArrayGeometry,
    t60_s: f64,
    gap_s: f64,
    snr_db: f64,
    seed: u64,
    sample_rate: u32,
) -> Result<MultichannelSignal> {
    if sources.is_empty() {
        return Err(Error::arg("render_scene: no sources"));
    }
    if t60_s < 0.0 {
        return Err(Error::arg("render_scene: t60 must be nonnegative"));
    }
    if t60_s > 0.0 && !(gap_s > 0.0) {
        return Err(Error::arg("render_scene: gap must be positive"));
    }
    let n = sources.iter().map(|s| s.samples.len()).max().unwrap_or(0);
    if n == 0 {
        return Err(Error::arg("render_scene: sources are empty"));
    }
    let fs = sample_rate as f64;
    let duration = n as f64 / fs;
    for (q, src) in sources.iter().enumerate() {
        if let SourcePlacement::Moving(tr) = &src.placement {
            if tr.end_time() > duration + 1e-9 {
                return Err(Error::arg(format!(
                    "render_scene: trajectory of source {q} ends at {:.3} s but the signal lasts {:.3} s",
                    tr.end_time(),
                    duration
                )));
            }
        }
    }

    let mut channels = vec![vec![0.0f64; n]; geometry.num_mics()];
    for (q, src) in sources.iter().enumerate() {
        for (i, ch) in channels.iter_mut().enumerate() {
            let src_seed = mix_seed(seed, 1 + (q * geometry.num_mics() + i) as u64);
            render_source_to_mic(src, geometry, i, t60_s, gap_s, src_seed, sample_rate, ch)?;
        }
    }
    let mixed = MultichannelSignal::new(channels, sample_rate)?;
    if snr_db.is_finite() {
        add_noise(&mixed, snr_db, mix_seed(seed, 0))
    } else {
        Ok(mixed)
    }
}

/// Blocks covering [0, n): (block span including fades, window, center time).
fn blocks(src: &SceneSource, n: usize, fs: f64) -> Vec<(usize, usize, f64)> {
    match &src.placement {
        SourcePlacement::Static(_) => vec![(0, n, 0.0)],
        SourcePlacement::Moving(_) => {
            let block = (BLOCK_S * fs).round() as usize;
            let fade = (FADE_S * fs).round() as usize;
            let num = n.div_ceil(block);
            (0..num)
                .map(|b| {
                    let s0 = (b * block).saturating_sub(fade / 2);
                    let s1 = ((b + 1) * block + fade / 2).min(n);
                    let center = ((b as f64 + 0.5) * block as f64 / fs).min(n as f64 / fs);
                    (s0, s1, center)
                })
                .collect()
        }
    }
}

/// Raised-cosine block window; complementary ramps at the joins sum to one.
fn block_window(k: usize, b: usize, num: usize, block: usize, fade: usize) -> f64 {
    let k = k as f64;
    let lo = (b * block) as f64;
    let hi = ((b + 1) * block) as f64;
    let f = fade as f64;
    let mut w = 1.0;
    if b > 0 && k < lo + f / 2.0 {
        let x = (k - (lo - f / 2.0)) / f;
        w *= 0.5 * (1.0 - (std::f64::consts::PI * x.clamp(0.0, 1.0)).cos());
    }
    if b + 1 < num && k >= hi - f / 2.0 {
        let x = (k - (hi - f / 2.0)) / f;
        w *= 0.5 * (1.0 + (std::f64::consts::PI * x.clamp(0.0, 1.0)).cos());
    }
    w
}

#[allow(clippy::too_many_arguments)]
fn render_source_to_mic(
    src: &SceneSource,
    geometry: &ArrayGeometry,
    mic: usize,
    t60_s: f64,
    gap_s: f64,
    src_seed: u64,
    sample_rate: u32,
    out: &mut [f64],
) -> Result<()> {
    let fs = sample_rate as f64;
    let n = out.len();
    let v = geometry.speed_of_sound();
    let m = geometry.mic(mic);
    let spans = blocks(src, src.samples.len(), fs);
    let num = spans.len();
    let block = (BLOCK_S * fs).round() as usize;
    let fade = (FADE_S * fs).round() as usize;

    for (b, &(s0, s1, center_t)) in spans.iter().enumerate() {
        let pos = src.placement.position_at(center_t);
        let dist = ((pos[0] - m[0]).powi(2) + (pos[1] - m[1]).powi(2)).sqrt();
        if dist == 0.0 {
            return Err(Error::arg(format!(
                "source '{}' coincides with microphone {mic}",
                src.id
            )));
        }
        let delay_samples = dist / v * fs;
        let gain = 1.0 / dist.max(0.1);

        // Windowed dry segment.
        let seg: Vec<f64> = (s0..s1)
            .map(|k| {
                let w = if num == 1 {
                    1.0
                } else {
                    block_window(k, b, num, block, fade)
                };
                src.samples[k] * w
            })
            .collect();

        // Direct path at sub-sample accuracy.
        let d_int = delay_samples.ceil() as usize;
        let mut padded = seg.clone();
        padded.resize(seg.len() + d_int + 48, 0.0);
        let delayed = FractionalDelay::new(-delay_samples).apply(&padded);
        for (j, &y) in delayed.iter().enumerate() {
            let dst = s0 + j;
            if dst < n && y != 0.0 {
                out[dst] += gain * y;
            }
        }

        // Diffuse tail from the stochastic model.
        if t60_s > 0.0 {
            let rir = generate_rir_with_speed(dist, t60_s, gap_s, sample_rate, src_seed, v)?;
            let tail = rir.diffuse_tail();
            let wet = fft::convolve(&seg, &tail);
            for (j, &y) in wet.iter().enumerate() {
                let dst = s0 + j;
                if dst < n {
                    out[dst] += y;
                }
            }
        }
    }
    Ok(())
}

/// Writes ground truth rows `time_s,source_id,azimuth_deg,active_flag` at a
/// fixed hop. A source is active in a window when its RMS is at least 5% of
/// its loudest window.
pub fn write_truth_csv(
    sources: &[SceneSource],
    sample_rate: u32,
    hop_s: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if !(hop_s > 0.0) {
        return Err(Error::arg("write_truth_csv: hop must be positive"));
    }
    let fs = sample_rate as f64;
    let n = sources.iter().map(|s| s.samples.len()).max().unwrap_or(0);
    let hop = (hop_s * fs).round() as usize;
    if hop == 0 {
        return Err(Error::arg("write_truth_csv: hop shorter than one sample"));
    }
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(f, "time_s,source_id,azimuth_deg,active_flag").map_err(|e| Error::io(path, e))?;

    // Per-source window RMS series and activity threshold.
    let windows = n.div_ceil(hop);
    for src in sources {
        let rms: Vec<f64> = (0..windows)
            .map(|w| {
                let lo = w * hop;
                let hi = ((w + 1) * hop).min(src.samples.len());
                if lo >= hi {
                    return 0.0;
                }
                let e: f64 = src.samples[lo..hi].iter().map(|x| x * x).sum();
                (e / (hi - lo) as f64).sqrt()
            })
            .collect();
        let peak = rms.iter().cloned().fold(0.0f64, f64::max);
        for (w, &r) in rms.iter().enumerate() {
            let t = (w * hop) as f64 / fs;
            let active = if peak > 0.0 && r >= 0.05 * peak { 1 } else { 0 };
            let az = src.placement.azimuth_deg_at(t);
            writeln!(f, "{t:.4},{},{az:.3},{active}", src.id).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scene description files
// ---------------------------------------------------------------------------

/// SNR in dB; serializes the infinite (noise-free) case as the string "inf".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrDb(pub f64);

impl Default for SnrDb {
    fn default() -> Self {
        SnrDb(f64::INFINITY)
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = SnrDb;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "a number of dB or the string \"inf\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<SnrDb, E> {
                Ok(SnrDb(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<SnrDb, E> {
                Ok(SnrDb(v as f64))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<SnrDb, E> {
                Ok(SnrDb(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<SnrDb, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => Ok(SnrDb(f64::INFINITY)),
                    other => other
                        .parse::<f64>()
                        .map(SnrDb)
                        .map_err(|_| E::custom(format!("invalid SNR: {other:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ArraySpec {
    Circular { mics: usize, diameter_m: f64 },
    Positions { positions: Vec<[f64; 2]> },
}

impl ArraySpec {
    pub fn build(&self) -> Result<ArrayGeometry> {
        match self {
            ArraySpec::Circular { mics, diameter_m } => {
                ArrayGeometry::circular(*mics, *diameter_m)
            }
            ArraySpec::Positions { positions } => ArrayGeometry::new(positions.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WaypointSpec {
    pub t: f64,
    pub azimuth_deg: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpeechLikeSpec {
    pub f0_hz: f64,
    pub harmonics: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WavRef {
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HarmonicSpecFile {
    pub f0_hz: f64,
    pub duration_s: f64,
    pub harmonics: Vec<HarmonicComponentFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HarmonicComponentFile {
    #[serde(default)]
    pub phase: f64,
    /// Breakpoints as (time_s, level) pairs.
    pub envelope: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SourceSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuth_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<WaypointSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wav: Option<WavRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech_like: Option<SpeechLikeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic: Option<HarmonicSpecFile>,
}

/// A complete scene description (TOML or JSON on disk).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SceneSpec {
    pub sample_rate: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub t60_s: f64,
    #[serde(default = "default_gap_ms")]
    pub gap_ms: f64,
    #[serde(default)]
    pub snr_db: SnrDb,
    #[serde(default)]
    pub seed: u64,
    pub array: ArraySpec,
    pub sources: Vec<SourceSpec>,
}

fn default_gap_ms() -> f64 {
    6.0
}

impl SceneSpec {
    /// Parses a scene file; the format follows the extension (.toml/.json).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            other => Err(Error::Config(format!(
                "{}: unsupported scene extension {other:?} (want .toml or .json)",
                path.display()
            ))),
        }
    }

    /// Builds render-ready sources. WAV paths resolve against `base_dir`.
    pub fn build_sources(&self, base_dir: &Path) -> Result<Vec<SceneSource>> {
        if self.sources.is_empty() {
            return Err(Error::Config("sources: at least one source required".into()));
        }
        let fs = self.sample_rate;
        let mut built = Vec::with_capacity(self.sources.len());
        for (idx, spec) in self.sources.iter().enumerate() {
            let ctx = format!("sources[{idx}] ({})", spec.id);
            let placement = match (&spec.trajectory, spec.azimuth_deg, spec.distance_m) {
                (Some(wps), None, None) => {
                    let pts = wps
                        .iter()
                        .map(|w| {
                            let th = w.azimuth_deg.to_radians();
                            (w.t, [w.distance_m * th.cos(), w.distance_m * th.sin()])
                        })
                        .collect();
                    SourcePlacement::Moving(
                        Trajectory::new(pts)
                            .map_err(|e| Error::Config(format!("{ctx}.trajectory: {e}")))?,
                    )
                }
                (None, Some(az), Some(d)) => {
                    if !(d > 0.0) {
                        return Err(Error::Config(format!(
                            "{ctx}.distance_m: must be positive"
                        )));
                    }
                    let th = az.to_radians();
                    SourcePlacement::Static([d * th.cos(), d * th.sin()])
                }
                _ => {
                    return Err(Error::Config(format!(
                        "{ctx}: set either azimuth_deg+distance_m or trajectory"
                    )))
                }
            };

            let duration_hint = self.duration_s;
            let samples = match (&spec.wav, &spec.speech_like, &spec.harmonic) {
                (Some(wav), None, None) => {
                    let p = base_dir.join(&wav.path);
                    let sig = read_wav(&p)?;
                    if sig.sample_rate() != fs {
                        return Err(Error::Data(format!(
                            "{ctx}.wav: {} is at {} Hz but the scene wants {fs} Hz (resampling unsupported)",
                            p.display(),
                            sig.sample_rate()
                        )));
                    }
                    if sig.channels() != 1 {
                        return Err(Error::Data(format!(
                            "{ctx}.wav: {} has {} channels; sources must be mono",
                            p.display(),
                            sig.channels()
                        )));
                    }
                    sig.into_samples().remove(0)
                }
                (None, Some(sl), None) => {
                    let dur = duration_hint.ok_or_else(|| {
                        Error::Config(format!(
                            "{ctx}.speech_like: scene duration_s required for generated sources"
                        ))
                    })?;
                    let spec = speech_like(sl.f0_hz, sl.harmonics, dur, sl.seed)
                        .map_err(|e| Error::Config(format!("{ctx}.speech_like: {e}")))?;
                    synthesize_harmonic_speech(&spec, fs)?
                }
                (None, None, Some(h)) => {
                    let harmonics = h
                        .harmonics
                        .iter()
                        .map(|c| {
                            Ok(HarmonicComponent {
                                envelope: Envelope::new(c.envelope.clone())
                                    .map_err(|e| Error::Config(format!("{ctx}.harmonic: {e}")))?,
                                phase: c.phase,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let hs = HarmonicSourceSpec {
                        f0_hz: h.f0_hz,
                        harmonics,
                        duration_s: h.duration_s,
                    };
                    synthesize_harmonic_speech(&hs, fs)?
                }
                _ => {
                    return Err(Error::Config(format!(
                        "{ctx}: set exactly one of wav, speech_like, harmonic"
                    )))
                }
            };
            built.push(SceneSource {
                id: spec.id.clone(),
                samples,
                placement,
            });
        }

        // Equalize lengths to the scene duration (pad or truncate).
        let n = match self.duration_s {
            Some(d) => {
                if !(d > 0.0) {
                    return Err(Error::Config("duration_s must be positive".into()));
                }
                (d * fs as f64).round() as usize
            }
            None => built.iter().map(|s| s.samples.len()).max().unwrap_or(0),
        };
        if n == 0 {
            return Err(Error::Config("scene has zero duration".into()));
        }
        for s in &mut built {
            s.samples.resize(n, 0.0);
        }
        Ok(built)
    }

    pub fn render(&self, base_dir: &Path) -> Result<(MultichannelSignal, Vec<SceneSource>)> {
        let geometry = self.array.build()?;
        let sources = self.build_sources(base_dir)?;
        let out = render_scene(
            &sources,
            &geometry,
            self.t60_s,
            self.gap_ms / 1000.0,
            self.snr_db.0,
            self.seed,
            self.sample_rate,
        )?;
        Ok((out, sources))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::steering_tdoa;
    use crate::sim::source::speech_like;

    const FS: u32 = 48_000;

    fn tone_burst(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let env = ((k as f64 / 2400.0).min(1.0)) * 0.5;
                env * (2.0 * std::f64::consts::PI * 800.0 * k as f64 / FS as f64).sin()
            })
            .collect()
    }

    fn static_source(id: &str, az_deg: f64, dist: f64, samples: Vec<f64>) -> SceneSource {
        let th = az_deg.to_radians();
        SceneSource {
            id: id.into(),
            samples,
            placement: SourcePlacement::Static([dist * th.cos(), dist * th.sin()]),
        }
    }

    #[test]
    fn equidistant_mics_get_identical_channels() {
        let g = ArrayGeometry::new(vec![[0.05, 0.0], [-0.05, 0.0]]).unwrap();
        let src = static_source("s", 90.0, 1.0, tone_burst(FS as usize));
        let out = render_scene(&[src], &g, 0.0, 0.006, f64::INFINITY, 1, FS).unwrap();
        for (a, b) in out.channel(0).iter().zip(out.channel(1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn anechoic_pair_lag_matches_steering_tdoa() {
        let g = ArrayGeometry::new(vec![[0.05, 0.0], [-0.05, 0.0]]).unwrap();
        let az = 30.0f64;
        let dist = 1.5;
        let pos = [dist * az.to_radians().cos(), dist * az.to_radians().sin()];
        let src = static_source("s", az, dist, tone_burst(FS as usize / 2));
        let out = render_scene(&[src], &g, 0.0, 0.006, f64::INFINITY, 1, FS).unwrap();

        // Parabolic-interpolated peak of the plain cross-correlation.
        let x0 = out.channel(0);
        let x1 = out.channel(1);
        let max_lag = 20i64;
        let mut best = (0i64, f64::MIN);
        let mut corr = std::collections::HashMap::new();
        for lag in -max_lag..=max_lag {
            let mut c = 0.0;
            for k in 0..x0.len() {
                let j = k as i64 + lag;
                if j >= 0 && (j as usize) < x1.len() {
                    c += x0[k] * x1[j as usize];
                }
            }
            corr.insert(lag, c);
            if c > best.1 {
                best = (lag, c);
            }
        }
        let (kp, cp) = best;
        let cm = corr[&(kp - 1)];
        let cn = corr[&(kp + 1)];
        let frac = 0.5 * (cm - cn) / (cm - 2.0 * cp + cn);
        let lag = kp as f64 + frac;

        // x1 lags x0 by tdoa(0->1); correlation peak sits at that lag.
        let tau = steering_tdoa(&g, pos, 0, 1).unwrap();
        let expect = tau * FS as f64;
        assert!(
            (lag - expect).abs() <= 0.25,
            "xcorr lag {lag} vs steering {expect}"
        );
    }

    #[test]
    fn mixing_is_linear() {
        let g = ArrayGeometry::circular(4, 0.1).unwrap();
        let n = FS as usize / 2;
        let a: Vec<f64> = tone_burst(n);
        let b: Vec<f64> = (0..n)
            .map(|k| 0.3 * (2.0 * std::f64::consts::PI * 333.0 * k as f64 / FS as f64).sin())
            .collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let render = |samples: Vec<f64>| {
            render_scene(
                &[static_source("s", 120.0, 1.2, samples)],
                &g,
                0.4,
                0.006,
                f64::INFINITY,
                9,
                FS,
            )
            .unwrap()
        };
        let ra = render(a);
        let rb = render(b);
        let rsum = render(sum);
        for ch in 0..4 {
            let scale = rsum.channel(ch).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            for k in 0..n {
                let lhs = rsum.channel(ch)[k];
                let rhs = ra.channel(ch)[k] + rb.channel(ch)[k];
                assert!(
                    (lhs - rhs).abs() <= 1e-6 * scale.max(1e-12),
                    "ch {ch} k {k}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn render_deterministic() {
        let g = ArrayGeometry::circular(4, 0.1).unwrap();
        let src = || static_source("s", 45.0, 1.2, tone_burst(FS as usize / 4));
        let a = render_scene(&[src()], &g, 0.5, 0.006, 30.0, 3, FS).unwrap();
        let b = render_scene(&[src()], &g, 0.5, 0.006, 30.0, 3, FS).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_trajectory_matches_static_render() {
        let g = ArrayGeometry::circular(4, 0.1).unwrap();
        let n = FS as usize / 2;
        let samples = tone_burst(n);
        let stat = render_scene(
            &[static_source("s", 200.0, 1.5, samples.clone())],
            &g,
            0.3,
            0.006,
            f64::INFINITY,
            5,
            FS,
        )
        .unwrap();
        let th = 200.0f64.to_radians();
        let p = [1.5 * th.cos(), 1.5 * th.sin()];
        let moving = SceneSource {
            id: "s".into(),
            samples,
            placement: SourcePlacement::Moving(
                Trajectory::new(vec![(0.0, p), (0.49, p)]).unwrap(),
            ),
        };
        let moved = render_scene(&[moving], &g, 0.3, 0.006, f64::INFINITY, 5, FS).unwrap();
        for ch in 0..4 {
            let energy: f64 = stat.channel(ch).iter().map(|x| x * x).sum();
            let err: f64 = stat
                .channel(ch)
                .iter()
                .zip(moved.channel(ch))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!(
                err / energy < 1e-4,
                "ch {ch}: block-rendering residual {}",
                err / energy
            );
        }
    }

    #[test]
    fn trajectory_beyond_duration_rejected() {
        let g = ArrayGeometry::circular(4, 0.1).unwrap();
        let src = SceneSource {
            id: "m".into(),
            samples: tone_burst(FS as usize / 4), // 0.25 s
            placement: SourcePlacement::Moving(
                Trajectory::new(vec![(0.0, [1.0, 0.0]), (1.0, [0.0, 1.0])]).unwrap(),
            ),
        };
        assert!(matches!(
            render_scene(&[src], &g, 0.0, 0.006, f64::INFINITY, 0, FS),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn scene_spec_toml_round_trip() {
        let spec = SceneSpec {
            sample_rate: FS,
            duration_s: Some(4.0),
            t60_s: 0.6,
            gap_ms: 6.0,
            snr_db: SnrDb(40.0),
            seed: 1,
            array: ArraySpec::Circular {
                mics: 8,
                diameter_m: 0.1,
            },
            sources: vec![SourceSpec {
                id: "s1".into(),
                azimuth_deg: Some(180.0),
                distance_m: Some(1.2),
                trajectory: None,
                wav: None,
                speech_like: Some(SpeechLikeSpec {
                    f0_hz: 120.0,
                    harmonics: 12,
                    seed: 11,
                }),
                harmonic: None,
            }],
        };
        let text = toml::to_string_pretty(&spec).unwrap();
        let back: SceneSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);

        // Infinite SNR survives the round trip as the string "inf".
        let noiseless = SceneSpec {
            snr_db: SnrDb::default(),
            ..spec
        };
        let text = toml::to_string_pretty(&noiseless).unwrap();
        let back: SceneSpec = toml::from_str(&text).unwrap();
        assert!(back.snr_db.0.is_infinite());
    }

    #[test]
    fn scene_builds_speech_like_sources() {
        let spec = SceneSpec {
            sample_rate: FS,
            duration_s: Some(1.0),
            t60_s: 0.2,
            gap_ms: 6.0,
            snr_db: SnrDb(40.0),
            seed: 2,
            array: ArraySpec::Circular {
                mics: 8,
                diameter_m: 0.1,
            },
            sources: vec![SourceSpec {
                id: "a".into(),
                azimuth_deg: Some(60.0),
                distance_m: Some(1.2),
                trajectory: None,
                wav: None,
                speech_like: Some(SpeechLikeSpec {
                    f0_hz: 210.0,
                    harmonics: 10,
                    seed: 3,
                }),
                harmonic: None,
            }],
        };
        let (sig, sources) = spec.render(Path::new(".")).unwrap();
        assert_eq!(sig.channels(), 8);
        assert_eq!(sig.len(), FS as usize);
        assert_eq!(sources.len(), 1);
        // speech_like is what got rendered.
        let again = synthesize_harmonic_speech(&speech_like(210.0, 10, 1.0, 3).unwrap(), FS)
            .unwrap();
        assert_eq!(sources[0].samples, again);
    }

    #[test]
    fn truth_csv_has_all_sources() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let sources = vec![
            static_source("s1", 60.0, 1.2, tone_burst(FS as usize / 2)),
            static_source("s2", 300.0, 1.2, tone_burst(FS as usize / 2)),
        ];
        write_truth_csv(&sources, FS, 0.01, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "time_s,source_id,azimuth_deg,active_flag"
        );
        let body: Vec<&str> = lines.collect();
        assert_eq!(body.len(), 2 * 50);
        assert!(body.iter().any(|l| l.contains(",s1,60.000,")));
        assert!(body.iter().any(|l| l.contains(",s2,300.000,")));
    }

    #[test]
    fn missing_field_named_in_error() {
        let toml_text = r#"
sample_rate = 48000
t60_s = 0.2
[array.circular]
mics = 8
diameter_m = 0.1
[[sources]]
id = "x"
azimuth_deg = 10.0
"#;
        let spec: SceneSpec = toml::from_str(toml_text).unwrap();
        let err = spec.build_sources(Path::new(".")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sources[0]"), "{msg}");
    }
}
