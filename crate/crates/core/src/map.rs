//! Steered response maps over a time x azimuth grid with trailing averaging
//! and shared local-peak DOA extraction.

use crate::error::{Error, Result};
use crate::geometry::circular_diff_deg;

/// Frame-resolution localizer scores and their trailing average.
///
/// `values[f][a]` is the score of frame `f` at azimuth index `a`; frames are
/// stamped with the END time of their analysis window. `averaged` has the
/// same shape: row `f` is the mean of the raw rows inside the trailing
/// window `(t_f - t_avg, t_f]`, with missing history counted as zero, so the
/// divisor is always the full window's frame count.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeredResponseMap {
    azimuths_deg: Vec<f64>,
    frame_times: Vec<f64>,
    values: Vec<Vec<f64>>,
    averaged: Vec<Vec<f64>>,
    frame_hop_s: f64,
    t_avg_s: f64,
    t_shift_s: f64,
}

impl SteeredResponseMap {
    pub fn new(
        azimuths_deg: Vec<f64>,
        frame_times: Vec<f64>,
        values: Vec<Vec<f64>>,
        frame_hop_s: f64,
        t_avg_s: f64,
        t_shift_s: f64,
    ) -> Result<Self> {
        if frame_times.len() != values.len() {
            return Err(Error::Internal("frame count mismatch".into()));
        }
        if values.iter().any(|row| row.len() != azimuths_deg.len()) {
            return Err(Error::Internal("azimuth count mismatch".into()));
        }
        if !(frame_hop_s > 0.0 && t_avg_s > 0.0 && t_shift_s > 0.0) {
            return Err(Error::arg("map time parameters must be positive"));
        }
        let win = (t_avg_s / frame_hop_s).round().max(1.0) as usize;
        let mut averaged = Vec::with_capacity(values.len());
        let mut acc = vec![0.0f64; azimuths_deg.len()];
        for f in 0..values.len() {
            for (a, v) in acc.iter_mut().zip(&values[f]) {
                *a += v;
            }
            if f >= win {
                for (a, v) in acc.iter_mut().zip(&values[f - win]) {
                    *a -= v;
                }
            }
            averaged.push(acc.iter().map(|&a| (a / win as f64).max(0.0)).collect());
        }
        Ok(Self {
            azimuths_deg,
            frame_times,
            values,
            averaged,
            frame_hop_s,
            t_avg_s,
            t_shift_s,
        })
    }

    pub fn azimuths_deg(&self) -> &[f64] {
        &self.azimuths_deg
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn averaged(&self) -> &[Vec<f64>] {
        &self.averaged
    }

    pub fn t_avg_s(&self) -> f64 {
        self.t_avg_s
    }

    pub fn t_shift_s(&self) -> f64 {
        self.t_shift_s
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.frame_hop_s
    }

    /// Mean of the raw map over all frames; a whole-record azimuth profile.
    pub fn time_mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.azimuths_deg.len()];
        for row in &self.values {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.values.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Rows at which DOAs are read out: every `t_shift`, skipping frames
    /// whose trailing window is not yet full. Readouts are stamped at the
    /// CENTER of their averaging window, which is what they estimate.
    pub fn doa_rows(&self) -> Vec<DoaRow<'_>> {
        let mut rows = Vec::new();
        let mut next = self.t_avg_s - 1e-9;
        for (f, &t) in self.frame_times.iter().enumerate() {
            if t >= next {
                rows.push(DoaRow {
                    window_end_s: t,
                    time_s: t - self.t_avg_s / 2.0,
                    averaged: &self.averaged[f],
                });
                next = t + self.t_shift_s - 1e-9;
            }
        }
        rows
    }
}

/// One DOA readout row: the trailing-averaged scores at a readout instant.
#[derive(Debug, Clone, Copy)]
pub struct DoaRow<'a> {
    /// End of the averaging window.
    pub window_end_s: f64,
    /// Center of the averaging window; the representative timestamp.
    pub time_s: f64,
    pub averaged: &'a [f64],
}

/// Distinct local peaks of one azimuth profile: entries that reach
/// `threshold` and are the maximum within ±`theta_r` (circularly wrapped).
/// On plateaus of equal values only the first grid index survives.
pub fn pick_peaks(
    azimuths_deg: &[f64],
    row: &[f64],
    threshold: f64,
    theta_r_deg: f64,
) -> Result<Vec<f64>> {
    if !(theta_r_deg > 0.0 && theta_r_deg <= 180.0) {
        return Err(Error::arg("theta_r must be in (0, 180] degrees"));
    }
    if azimuths_deg.len() != row.len() {
        return Err(Error::arg("azimuth/profile length mismatch"));
    }
    let n = row.len();
    let mut peaks = Vec::new();
    'candidate: for i in 0..n {
        let v = row[i];
        if !(v >= threshold) {
            continue;
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            if circular_diff_deg(azimuths_deg[i], azimuths_deg[j]) <= theta_r_deg {
                if row[j] > v || (row[j] == v && j < i) {
                    continue 'candidate;
                }
            }
        }
        peaks.push(azimuths_deg[i]);
    }
    Ok(peaks)
}

/// DOA sets over time: applies [`pick_peaks`] to every readout row.
pub fn pick_doas(
    map: &SteeredResponseMap,
    threshold: f64,
    theta_r_deg: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    map.doa_rows()
        .into_iter()
        .map(|row| Ok((row.time_s, pick_peaks(&map.azimuths_deg, row.averaged, threshold, theta_r_deg)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..360).map(|i| i as f64).collect()
    }

    fn map_from_rows(rows: Vec<Vec<f64>>) -> SteeredResponseMap {
        let times: Vec<f64> = (0..rows.len()).map(|f| 0.02 * (f + 1) as f64).collect();
        SteeredResponseMap::new(grid(), times, rows, 0.02, 0.1, 0.1).unwrap()
    }

    #[test]
    fn averaging_is_trailing_mean_with_zero_history() {
        let mut rows = vec![vec![0.0; 360]; 10];
        for row in rows.iter_mut() {
            row[100] = 1.0;
        }
        let map = map_from_rows(rows);
        // Window = 5 frames. Frame 0 has only itself: 1/5.
        assert!((map.averaged()[0][100] - 0.2).abs() < 1e-12);
        assert!((map.averaged()[4][100] - 1.0).abs() < 1e-12);
        assert!((map.averaged()[9][100] - 1.0).abs() < 1e-12);
        assert_eq!(map.averaged()[9][99], 0.0);
    }

    #[test]
    fn doa_rows_start_after_full_window_and_stamp_center() {
        let rows = vec![vec![0.0; 360]; 20];
        let map = map_from_rows(rows);
        let picked = map.doa_rows();
        // t_avg = 0.1 s, hop 0.02 -> first full window ends at 0.10; shift 0.1.
        assert_eq!(picked.len(), 4);
        assert!((picked[0].window_end_s - 0.10).abs() < 1e-9);
        assert!((picked[0].time_s - 0.05).abs() < 1e-9);
        assert!((picked[1].window_end_s - 0.20).abs() < 1e-9);
    }

    #[test]
    fn flat_map_below_threshold_gives_empty_sets() {
        let rows = vec![vec![0.1; 360]; 10];
        let map = map_from_rows(rows);
        for (_, doas) in pick_doas(&map, 0.5, 20.0).unwrap() {
            assert!(doas.is_empty());
        }
    }

    #[test]
    fn unequal_close_peaks_keep_only_larger() {
        let az = grid();
        let mut row = vec![0.0; 360];
        row[170] = 0.9;
        row[190] = 0.7; // within 20 degrees of the larger peak
        let peaks = pick_peaks(&az, &row, 0.5, 20.0).unwrap();
        assert_eq!(peaks, vec![170.0]);
    }

    #[test]
    fn equal_peaks_just_outside_window_both_survive() {
        let az = grid();
        let mut row = vec![0.0; 360];
        row[170] = 0.8;
        row[191] = 0.8; // 21 degrees apart, theta_r = 20
        let peaks = pick_peaks(&az, &row, 0.5, 20.0).unwrap();
        assert_eq!(peaks, vec![170.0, 191.0]);
    }

    #[test]
    fn wraparound_window_keeps_larger_only() {
        let az = grid();
        let mut row = vec![0.0; 360];
        row[359] = 0.9;
        row[5] = 0.8; // 6 degrees apart across the wrap
        let peaks = pick_peaks(&az, &row, 0.5, 20.0).unwrap();
        assert_eq!(peaks, vec![359.0]);
    }

    #[test]
    fn plateau_keeps_first_index() {
        let az = grid();
        let mut row = vec![0.0; 360];
        row[100] = 0.8;
        row[101] = 0.8;
        let peaks = pick_peaks(&az, &row, 0.5, 20.0).unwrap();
        assert_eq!(peaks, vec![100.0]);
    }

    #[test]
    fn theta_r_validated() {
        let az = grid();
        let row = vec![0.0; 360];
        assert!(pick_peaks(&az, &row, 0.5, 0.0).is_err());
        assert!(pick_peaks(&az, &row, 0.5, 180.1).is_err());
    }
}
