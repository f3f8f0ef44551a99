//! Distinct speech-onset detection and delta-spike encoding.
//!
//! A subband stream is half-wave rectified and its reflection level tracked
//! with a first-order recursive average `avg(k) = lambda*avg(k-1) +
//! (1-lambda)*rect(k)`. Within each maximal positive run the local peak is
//! kept as an onset spike iff its rectified value is at least pi times the
//! running average at the peak: the peak-to-average ratio of a steadily
//! repeating rectified sinusoid tops out at pi, so only rising envelopes
//! (onsets, dominated by the direct path) clear the threshold while
//! reflections and decays do not.

use crate::error::{Error, Result};

/// The direct-to-reflection ratio threshold. Derived, not tunable.
pub const DRR_THRESHOLD: f64 = std::f64::consts::PI;

/// Forgetting factor matched to a reverberation time: `10^(-3/(t60*fs))`.
pub fn lambda_from_t60(t60_s: f64, sample_rate: u32) -> Result<f64> {
    if !(t60_s > 0.0) {
        return Err(Error::arg("lambda_from_t60: t60 must be positive"));
    }
    if sample_rate == 0 {
        return Err(Error::arg("lambda_from_t60: sample_rate must be positive"));
    }
    let lambda = 10f64.powf(-3.0 / (t60_s * sample_rate as f64));
    Ok(lambda.clamp(f64::MIN_POSITIVE, 1.0 - 1e-12))
}

/// First-order recursive average of a rectified stream.
#[derive(Debug, Clone)]
pub struct RecursiveAverage {
    lambda: f64,
    value: f64,
}

impl RecursiveAverage {
    /// Starts from zero, which makes the first onset maximally detectable.
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::arg("lambda must be in (0, 1)"));
        }
        Ok(Self { lambda, value: 0.0 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Advances one sample; `rectified` must be non-negative.
    #[inline]
    pub fn update(&mut self, rectified: f64) -> f64 {
        debug_assert!(rectified >= 0.0);
        self.value = self.lambda * self.value + (1.0 - self.lambda) * rectified;
        self.value
    }
}

/// One encoded onset: the stream index of a positive-run peak and the raw
/// sample value there (positive by construction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub index: usize,
    pub amplitude: f64,
}

/// Sparse delta-spike encoding of the detected onsets of one stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpikeTrain {
    spikes: Vec<Spike>,
    len: usize,
}

impl SpikeTrain {
    pub fn new(spikes: Vec<Spike>, len: usize) -> Result<Self> {
        for w in spikes.windows(2) {
            if w[0].index >= w[1].index {
                return Err(Error::arg("spike indices must be strictly increasing"));
            }
        }
        if let Some(last) = spikes.last() {
            if last.index >= len {
                return Err(Error::arg("spike index beyond stream length"));
            }
        }
        if spikes.iter().any(|s| !(s.amplitude > 0.0)) {
            return Err(Error::arg("spike amplitudes must be positive"));
        }
        Ok(Self { spikes, len })
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    /// Dense equivalent: zeros everywhere except the spike indices.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for s in &self.spikes {
            out[s.index] = s.amplitude;
        }
        out
    }

    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let spikes = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| Spike {
                index: i,
                amplitude: v,
            })
            .collect();
        Self::new(spikes, dense.len())
    }

    /// Shifts every spike earlier by `advance` samples (nearest-sample
    /// steering of an already-detected train); spikes leaving [0, len) drop.
    pub fn shifted(&self, advance: i64) -> Self {
        let spikes = self
            .spikes
            .iter()
            .filter_map(|s| {
                let idx = s.index as i64 - advance;
                (idx >= 0 && idx < self.len as i64).then_some(Spike {
                    index: idx as usize,
                    amplitude: s.amplitude,
                })
            })
            .collect();
        Self {
            spikes,
            len: self.len,
        }
    }
}

/// Detects distinct onsets in a subband stream.
///
/// The state is updated on every sample, so a single state can be threaded
/// through consecutive chunks of one stream. Peak ties within a run keep the
/// earliest index.
pub fn detect_onsets(stream: &[f64], state: &mut RecursiveAverage) -> SpikeTrain {
    let mut spikes = Vec::new();
    // (peak index, rectified peak, running average at the peak)
    let mut run: Option<(usize, f64, f64)> = None;
    for (k, &x) in stream.iter().enumerate() {
        let rect = if x > 0.0 { x } else { 0.0 };
        let avg = state.update(rect);
        if rect > 0.0 {
            match run {
                Some((_, peak, _)) if rect <= peak => {}
                _ => run = Some((k, rect, avg)),
            }
        } else if let Some((idx, peak, avg_at_peak)) = run.take() {
            if peak / avg_at_peak >= DRR_THRESHOLD {
                spikes.push(Spike {
                    index: idx,
                    amplitude: peak,
                });
            }
        }
    }
    if let Some((idx, peak, avg_at_peak)) = run.take() {
        if peak / avg_at_peak >= DRR_THRESHOLD {
            spikes.push(Spike {
                index: idx,
                amplitude: peak,
            });
        }
    }
    SpikeTrain {
        spikes,
        len: stream.len(),
    }
}

/// Convenience wrapper starting from a zero average.
pub fn detect_onsets_from_zero(stream: &[f64], lambda: f64) -> Result<SpikeTrain> {
    let mut state = RecursiveAverage::new(lambda)?;
    Ok(detect_onsets(stream, &mut state))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: u32 = 48_000;

    fn tone(freq: f64, n: usize, amp: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..n)
            .map(|k| amp(k) * (2.0 * std::f64::consts::PI * freq * k as f64 / FS as f64).sin())
            .collect()
    }

    #[test]
    fn lambda_matches_quoted_values() {
        let l1 = lambda_from_t60(1.0, FS).unwrap();
        assert!((l1 - 0.9999).abs() < 5e-5, "l1={l1}");
        let l2 = lambda_from_t60(0.015, FS).unwrap();
        assert!((l2 - 0.99).abs() < 5e-3, "l2={l2}");
        assert!(lambda_from_t60(0.2, FS).unwrap() < lambda_from_t60(1.0, FS).unwrap());
        assert!(lambda_from_t60(0.0, FS).is_err());
        assert!(lambda_from_t60(-1.0, FS).is_err());
    }

    #[test]
    fn recursion_converges_to_constant() {
        let mut st = RecursiveAverage::new(0.99).unwrap();
        for _ in 0..5000 {
            st.update(0.7);
        }
        assert!((st.value() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_input_stays_zero() {
        let mut st = RecursiveAverage::new(0.9998).unwrap();
        for _ in 0..1000 {
            assert_eq!(st.update(0.0), 0.0);
        }
    }

    #[test]
    fn rectified_sine_average_near_one_over_pi() {
        // Half-wave rectified unit 1 kHz sinusoid, lambda = 0.9998: the
        // steady-state average approaches 1/pi.
        let mut st = RecursiveAverage::new(0.9998).unwrap();
        let x = tone(1000.0, 2 * FS as usize, |_| 1.0);
        let mut last = 0.0;
        for &v in &x {
            last = st.update(v.max(0.0));
        }
        let target = 1.0 / std::f64::consts::PI;
        assert!(
            (last - target).abs() < 0.02 * target,
            "steady average {last} vs {target}"
        );
    }

    #[test]
    fn average_bounded_by_input_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut st = RecursiveAverage::new(0.995).unwrap();
        let mut max_in = 0.0f64;
        for _ in 0..20_000 {
            let v = rng.gen_range(0.0..3.0);
            max_in = max_in.max(v);
            let avg = st.update(v);
            assert!(avg >= 0.0 && avg <= max_in + 1e-12);
        }
    }

    #[test]
    fn silence_gives_no_spikes() {
        let train = detect_onsets_from_zero(&vec![0.0; 4800], 0.9998).unwrap();
        assert!(train.is_empty());
    }

    #[test]
    fn burst_after_silence_spikes_every_period() {
        // 0.3 s silence, then a tone ramping up over 30 ms: the first runs
        // all clear the threshold and spikes land one band-period apart.
        let silence = 14_400usize;
        let ramp = 1_440usize;
        let n = silence + 9_600;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                if k < silence {
                    0.0
                } else {
                    let a = ((k - silence) as f64 / ramp as f64).min(1.0);
                    a * (2.0 * std::f64::consts::PI * 1000.0 * (k - silence) as f64
                        / FS as f64)
                        .sin()
                }
            })
            .collect();
        let train = detect_onsets_from_zero(&x, 0.9998).unwrap();
        assert!(train.spikes().len() >= 5, "{} spikes", train.spikes().len());
        let period = FS as f64 / 1000.0; // 48 samples
        for w in train.spikes().windows(2).take(5) {
            let gap = (w[1].index - w[0].index) as f64;
            assert!(
                (gap - period).abs() <= 1.0,
                "inter-spike gap {gap}, period {period}"
            );
        }
        // All early-run peaks pass while the envelope is still rising.
        let first = train.spikes()[0].index;
        assert!(first >= silence && first < silence + 3 * period as usize);
    }

    #[test]
    fn slow_decay_emits_no_spikes() {
        // Hold a tone for 1.5 s (long past 1/(1-lambda) samples), then decay
        // slowly; runs in the decay must not spike.
        let hold = 72_000usize;
        let decay = 48_000usize;
        let x = tone(1000.0, hold + decay, |k| {
            if k < hold {
                1.0
            } else {
                (-((k - hold) as f64) / (0.5 * FS as f64)).exp()
            }
        });
        let train = detect_onsets_from_zero(&x, 0.9998).unwrap();
        let late: Vec<_> = train
            .spikes()
            .iter()
            .filter(|s| s.index >= hold)
            .collect();
        assert!(late.is_empty(), "spikes in decay: {late:?}");
    }

    #[test]
    fn threshold_is_exact_iff() {
        // Re-derive the ratio independently and check the spike set matches
        // the >= pi rule bit for bit.
        let x = tone(700.0, 24_000, |k| {
            if k < 9_600 {
                0.0
            } else {
                ((k - 9_600) as f64 / 4_800.0).min(1.0)
            }
        });
        let lambda = 0.9998;
        let train = detect_onsets_from_zero(&x, lambda).unwrap();
        let spike_set: std::collections::HashSet<usize> =
            train.spikes().iter().map(|s| s.index).collect();

        // Oracle: replay the recursion, collate positive runs.
        let mut avg = 0.0f64;
        let mut avgs = Vec::with_capacity(x.len());
        for &v in &x {
            avg = lambda * avg + (1.0 - lambda) * v.max(0.0);
            avgs.push(avg);
        }
        let mut k = 0;
        let mut runs = 0;
        while k < x.len() {
            if x[k] > 0.0 {
                let start = k;
                while k < x.len() && x[k] > 0.0 {
                    k += 1;
                }
                runs += 1;
                let (peak_idx, peak) = x[start..k]
                    .iter()
                    .enumerate()
                    .fold((0usize, f64::MIN), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    });
                let idx = start + peak_idx;
                let expect = peak / avgs[idx] >= DRR_THRESHOLD;
                assert_eq!(
                    spike_set.contains(&idx),
                    expect,
                    "run at {start}: peak {peak} avg {}",
                    avgs[idx]
                );
            } else {
                k += 1;
            }
        }
        assert!(train.spikes().len() <= runs);
    }

    #[test]
    fn dense_round_trip() {
        let x = tone(500.0, 24_000, |k| if k < 12_000 { 0.0 } else { 1.0 });
        let train = detect_onsets_from_zero(&x, 0.9998).unwrap();
        assert!(!train.is_empty());
        let dense = train.to_dense();
        let back = SpikeTrain::from_dense(&dense).unwrap();
        assert_eq!(back, train);
    }

    #[test]
    fn shifted_drops_out_of_range() {
        let train = SpikeTrain::new(
            vec![
                Spike {
                    index: 2,
                    amplitude: 1.0,
                },
                Spike {
                    index: 50,
                    amplitude: 0.5,
                },
            ],
            60,
        )
        .unwrap();
        let s = train.shifted(3);
        assert_eq!(s.spikes().len(), 1);
        assert_eq!(s.spikes()[0].index, 47);
        let s = train.shifted(-5);
        assert_eq!(s.spikes().len(), 2);
        assert_eq!(s.spikes()[0].index, 7);
        assert_eq!(s.spikes()[1].index, 55);
    }

    #[test]
    fn invalid_trains_rejected() {
        assert!(SpikeTrain::new(
            vec![
                Spike {
                    index: 5,
                    amplitude: 1.0
                },
                Spike {
                    index: 5,
                    amplitude: 1.0
                }
            ],
            10
        )
        .is_err());
        assert!(SpikeTrain::new(
            vec![Spike {
                index: 5,
                amplitude: -1.0
            }],
            10
        )
        .is_err());
        assert!(SpikeTrain::new(
            vec![Spike {
                index: 15,
                amplitude: 1.0
            }],
            10
        )
        .is_err());
    }
}
