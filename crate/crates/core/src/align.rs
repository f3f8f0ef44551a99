//! Time alignment: fractional sample delays for steering and rendering.
//!
//! Two implementations live here. [`align_channel`] applies an arbitrary
//! fractional advance through a frequency-domain phase ramp on 50%-overlap
//! windows. [`FractionalDelay`] is a 32-tap Hann-windowed sinc interpolator
//! which is much cheaper per stream and has lower residual than the -60 dB
//! contract for content below a quarter of Nyquist; it is used in the
//! simulator and in the steered-localizer hot loops where a stream gets
//! realigned hundreds of times.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft;

/// Window length for the overlap-add aligner. Much larger than any steering
/// delay of a compact array.
const OLA_WINDOW: usize = 4096;

/// Applies a fractional time advance to a mono stream: `y[n] ~= x[n + delay*fs]`.
///
/// The integer part is an index shift; the fractional residual (at most half
/// a sample) is applied as a phase ramp on 4096-sample Hann windows with 50%
/// overlap. Output length equals input length; edges are zero-padded.
pub fn align_channel(signal: &[f64], delay_s: f64, sample_rate: u32) -> Result<Vec<f64>> {
    if !(delay_s.abs() < 1.0) {
        return Err(Error::arg("align_channel: |delay| must be < 1 s"));
    }
    let shift = delay_s * sample_rate as f64;
    let n0 = shift.round() as i64;
    let frac = shift - n0 as f64; // in [-0.5, 0.5]
    let shifted = integer_shift(signal, n0);
    if frac == 0.0 {
        return Ok(shifted);
    }
    Ok(ola_fractional_advance(&shifted, frac))
}

/// Advances a stream by whole samples: positive `n0` moves content earlier.
pub fn integer_shift(signal: &[f64], n0: i64) -> Vec<f64> {
    let len = signal.len() as i64;
    (0..len)
        .map(|n| {
            let src = n + n0;
            if src >= 0 && src < len {
                signal[src as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Phase-ramp advance by `frac` samples (|frac| <= 0.5) via windowed OLA.
fn ola_fractional_advance(signal: &[f64], frac: f64) -> Vec<f64> {
    let n = OLA_WINDOW;
    let hop = n / 2;
    // Periodic Hann; shifted copies at 50% overlap sum to exactly 1.
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    // Phase ramp for a time advance: X(f) * exp(+i 2 pi f frac / fs).
    let mut ramp = vec![Complex::default(); n];
    for (k, r) in ramp.iter_mut().enumerate() {
        let f_norm = if k <= n / 2 {
            k as f64 / n as f64
        } else {
            k as f64 / n as f64 - 1.0
        };
        let phase = 2.0 * std::f64::consts::PI * f_norm * frac;
        *r = Complex::from_polar(1.0, phase);
    }
    // Keep the Nyquist bin real so the output stays real.
    ramp[n / 2] = Complex::new((std::f64::consts::PI * frac).cos(), 0.0);

    let mut out = vec![0.0; signal.len()];
    let mut buf = vec![Complex::default(); n];
    // Start one hop early so the first samples are covered by two windows.
    let mut start = -(hop as i64);
    while (start as isize) < signal.len() as isize {
        for i in 0..n {
            let src = start + i as i64;
            let x = if src >= 0 && (src as usize) < signal.len() {
                signal[src as usize]
            } else {
                0.0
            };
            buf[i] = Complex::new(x * window[i], 0.0);
        }
        fft::forward(&mut buf);
        for (b, r) in buf.iter_mut().zip(&ramp) {
            *b *= r;
        }
        fft::inverse(&mut buf);
        let scale = 1.0 / n as f64;
        for i in 0..n {
            let dst = start + i as i64;
            if dst >= 0 && (dst as usize) < out.len() {
                out[dst as usize] += buf[i].re * scale;
            }
        }
        start += hop as i64;
    }
    out
}

/// Number of taps of the windowed-sinc interpolator.
pub const SINC_TAPS: usize = 32;

/// Precomputed 32-tap Hann-windowed sinc kernel for one fractional advance.
///
/// `delay()` returns the advance in samples this kernel applies; `apply`
/// produces `y[n] ~= x[n + delay]` with zero-padded edges.
#[derive(Debug, Clone)]
pub struct FractionalDelay {
    taps: [f64; SINC_TAPS],
    // y[n] = sum_t taps[t] * x[n + offset + t]
    offset: i64,
    advance_samples: f64,
}

impl FractionalDelay {
    /// Builds an interpolator advancing by `advance_samples` (may be negative).
    pub fn new(advance_samples: f64) -> Self {
        let n0 = advance_samples.round() as i64;
        let frac = advance_samples - n0 as f64; // [-0.5, 0.5]
        let half = (SINC_TAPS / 2) as i64;
        let mut taps = [0.0; SINC_TAPS];
        let mut sum = 0.0;
        for (t, tap) in taps.iter_mut().enumerate() {
            // Tap t reads x[n + n0 + t - half + 1]; ideal impulse response of
            // an advance by frac is sinc(m - frac) at integer offsets m.
            let m = (t as i64 - half + 1) as f64;
            let arg = m - frac;
            *tap = sinc(arg) * hann_centered(arg / SINC_TAPS as f64);
            sum += *tap;
        }
        // Unity DC gain keeps amplitudes exact regardless of frac.
        for tap in &mut taps {
            *tap /= sum;
        }
        Self {
            taps,
            offset: n0 - half + 1,
            advance_samples,
        }
    }

    pub fn advance_samples(&self) -> f64 {
        self.advance_samples
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), out.len());
        let len = x.len() as i64;
        for (n, o) in out.iter_mut().enumerate() {
            let base = n as i64 + self.offset;
            let mut acc = 0.0;
            if base >= 0 && base + SINC_TAPS as i64 <= len {
                let win = &x[base as usize..base as usize + SINC_TAPS];
                for (tap, &v) in self.taps.iter().zip(win) {
                    acc += tap * v;
                }
            } else {
                for (t, tap) in self.taps.iter().enumerate() {
                    let src = base + t as i64;
                    if src >= 0 && src < len {
                        acc += tap * x[src as usize];
                    }
                }
            }
            *o = acc;
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Hann window on [-0.5, 0.5] centered at 0.
fn hann_centered(x: f64) -> f64 {
    if x.abs() > 0.5 {
        0.0
    } else {
        0.5 + 0.5 * (2.0 * std::f64::consts::PI * x).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * freq * k as f64 / fs + phase).sin())
            .collect()
    }

    fn residual_db(a: &[f64], b: &[f64], skip: usize) -> f64 {
        let core_a = &a[skip..a.len() - skip];
        let core_b = &b[skip..b.len() - skip];
        let err: f64 = core_a
            .iter()
            .zip(core_b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let sig: f64 = core_a.iter().map(|x| x * x).sum();
        10.0 * (err / sig).log10()
    }

    #[test]
    fn zero_delay_is_identity() {
        let x = sine(1000.0, 48_000.0, 9600, 0.3);
        let y = align_channel(&x, 0.0, 48_000).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn one_sample_delay_is_integer_shift() {
        let x = sine(700.0, 48_000.0, 4800, 0.0);
        let y = align_channel(&x, 1.0 / 48_000.0, 48_000).unwrap();
        let shifted = integer_shift(&x, 1);
        for (a, b) in y.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn half_sample_round_trip_below_minus_60db() {
        let fs = 48_000;
        let x = sine(1234.0, fs as f64, 48_000, 0.1);
        let fwd = align_channel(&x, 0.5 / fs as f64, fs).unwrap();
        let back = align_channel(&fwd, -0.5 / fs as f64, fs).unwrap();
        let db = residual_db(&x, &back, 4096);
        assert!(db < -60.0, "round-trip residual {db} dB");
    }

    #[test]
    fn sinc_interpolator_matches_analytic_shift() {
        let fs = 48_000.0;
        for &adv in &[0.5, -0.35, 2.25, -7.8] {
            let x = sine(2000.0, fs, 4800, 0.0);
            let expect = sine(2000.0, fs, 4800, 2.0 * std::f64::consts::PI * 2000.0 * adv / fs);
            let y = FractionalDelay::new(adv).apply(&x);
            let db = residual_db(&expect, &y, 64);
            assert!(db < -70.0, "advance {adv}: residual {db} dB");
        }
    }

    #[test]
    fn sinc_integer_advance_is_exact_shift() {
        let x: Vec<f64> = (0..256).map(|i| ((i * 37) % 17) as f64 - 8.0).collect();
        let y = FractionalDelay::new(3.0).apply(&x);
        let shifted = integer_shift(&x, 3);
        for (n, (a, b)) in y.iter().zip(&shifted).enumerate().skip(32).take(192) {
            assert!((a - b).abs() < 1e-9, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn delay_longer_than_a_second_rejected() {
        let x = vec![0.0; 10];
        assert!(align_channel(&x, 1.5, 48_000).is_err());
    }
}
