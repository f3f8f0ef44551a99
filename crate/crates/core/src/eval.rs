//! Evaluation: OSPA metric with location/cardinality split, RMSE against a
//! fixed ground truth, and CSV/JSON exports.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::circular_diff_deg;
use crate::map::SteeredResponseMap;

/// Order and cutoff of the OSPA metric. Defaults are order 2 with a 20
/// degree cutoff, matching the DOA resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaConfig {
    pub order_rho: f64,
    pub cutoff_c: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self {
            order_rho: 2.0,
            cutoff_c: 20.0,
        }
    }
}

impl OspaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.order_rho >= 1.0) {
            return Err(Error::arg("ospa: order rho must be >= 1"));
        }
        if !(self.cutoff_c > 0.0) {
            return Err(Error::arg("ospa: cutoff c must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaResult {
    pub total: f64,
    pub location: f64,
    pub cardinality: f64,
}

/// Largest set size the exact assignment search accepts.
pub const OSPA_MAX_TARGETS: usize = 20;

/// OSPA distance between azimuth sets, in degrees. Angular distances wrap
/// and saturate at the cutoff; the assignment is solved exactly.
pub fn ospa(truth: &[f64], estimates: &[f64], cfg: &OspaConfig) -> Result<OspaResult> {
    cfg.validate()?;
    let (small, large) = if truth.len() <= estimates.len() {
        (truth, estimates)
    } else {
        (estimates, truth)
    };
    let m = small.len();
    let n = large.len();
    if n == 0 {
        return Ok(OspaResult {
            total: 0.0,
            location: 0.0,
            cardinality: 0.0,
        });
    }
    if n > OSPA_MAX_TARGETS {
        return Err(Error::arg(format!(
            "ospa: {n} targets exceeds the exact-assignment limit {OSPA_MAX_TARGETS}"
        )));
    }
    let rho = cfg.order_rho;
    let c_pow = cfg.cutoff_c.powf(rho);
    let matched_pow_sum = if m == 0 {
        0.0
    } else {
        let cost: Vec<Vec<f64>> = small
            .iter()
            .map(|&r| {
                large
                    .iter()
                    .map(|&s| circular_diff_deg(r, s).min(cfg.cutoff_c).powf(rho))
                    .collect()
            })
            .collect();
        min_assignment_cost(&cost, m, n)
    };
    let inv_n = 1.0 / n as f64;
    let total = (inv_n * (matched_pow_sum + c_pow * (n - m) as f64)).powf(1.0 / rho);
    let location = (inv_n * matched_pow_sum).powf(1.0 / rho);
    let cardinality = (inv_n * c_pow * (n - m) as f64).powf(1.0 / rho);
    Ok(OspaResult {
        total,
        location,
        cardinality,
    })
}

/// Exact min-cost injective assignment of `m` rows into `n` columns via
/// subset DP over the columns.
fn min_assignment_cost(cost: &[Vec<f64>], m: usize, n: usize) -> f64 {
    let full = 1usize << n;
    let mut dp = vec![f64::INFINITY; full];
    dp[0] = 0.0;
    for mask in 0..full {
        let row = (mask as u32).count_ones() as usize;
        if row >= m || dp[mask].is_infinite() {
            continue;
        }
        for j in 0..n {
            let bit = 1usize << j;
            if mask & bit == 0 {
                let cand = dp[mask] + cost[row][j];
                if cand < dp[mask | bit] {
                    dp[mask | bit] = cand;
                }
            }
        }
    }
    (0..full)
        .filter(|&mask| (mask as u32).count_ones() as usize == m)
        .map(|mask| dp[mask])
        .fold(f64::INFINITY, f64::min)
}

/// Per-source RMSE against a fixed truth set.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    /// RMSE per truth source, in truth order; `None` when no frame matched.
    pub per_source: Vec<Option<f64>>,
    /// Matched frames per truth source.
    pub frames_per_source: Vec<usize>,
    pub matched_frames: usize,
    pub total_frames: usize,
}

impl RmseReport {
    pub fn match_rate(&self) -> f64 {
        if self.total_frames == 0 {
            0.0
        } else {
            self.matched_frames as f64 / self.total_frames as f64
        }
    }
}

/// RMSE over frames whose estimates pair 1:1 with the truth set within
/// `theta_r` degrees (optimal assignment); frames with cardinality errors or
/// out-of-gate estimates are excluded and only counted.
pub fn rmse_fixed_truth(
    estimate_series: &[(f64, Vec<f64>)],
    truth: &[f64],
    theta_r_deg: f64,
) -> Result<RmseReport> {
    if truth.is_empty() {
        return Err(Error::arg("rmse_fixed_truth: empty truth set"));
    }
    if !(theta_r_deg > 0.0) {
        return Err(Error::arg("rmse_fixed_truth: theta_r must be positive"));
    }
    let k = truth.len();
    let mut sq = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    let mut matched_frames = 0usize;
    for (_, ests) in estimate_series {
        if ests.len() != k || k > 8 {
            continue;
        }
        // Exact assignment minimizing the squared angular error.
        let Some(assign) = best_permutation(truth, ests) else {
            continue;
        };
        if assign
            .iter()
            .enumerate()
            .any(|(ti, &ei)| circular_diff_deg(truth[ti], ests[ei]) > theta_r_deg)
        {
            continue;
        }
        matched_frames += 1;
        for (ti, &ei) in assign.iter().enumerate() {
            let d = circular_diff_deg(truth[ti], ests[ei]);
            sq[ti] += d * d;
            counts[ti] += 1;
        }
    }
    let per_source = sq
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c == 0 {
                None
            } else {
                Some((s / c as f64).sqrt())
            }
        })
        .collect();
    Ok(RmseReport {
        per_source,
        frames_per_source: counts,
        matched_frames,
        total_frames: estimate_series.len(),
    })
}

/// Minimum sum-of-squares pairing of equally sized sets (brute force).
fn best_permutation(truth: &[f64], ests: &[f64]) -> Option<Vec<usize>> {
    let k = truth.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p
            .iter()
            .enumerate()
            .map(|(ti, &ei)| {
                let d = circular_diff_deg(truth[ti], ests[ei]);
                d * d
            })
            .sum();
        match &best {
            Some((c, _)) if *c <= cost => {}
            _ => best = Some((cost, p.to_vec())),
        }
    });
    best.map(|(_, p)| p)
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

// ---------------------------------------------------------------------------
// CSV / JSON interchange
// ---------------------------------------------------------------------------

/// Writes the long-format map CSV: `frame_time_s,azimuth_deg,xi,xi_avg`.
pub fn export_map_csv(map: &SteeredResponseMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(f, "frame_time_s,azimuth_deg,xi,xi_avg").map_err(|e| Error::io(path, e))?;
    for (fi, t) in map.frame_times().iter().enumerate() {
        for (ai, az) in map.azimuths_deg().iter().enumerate() {
            writeln!(f, "{t},{az},{},{}", map.values()[fi][ai], map.averaged()[fi][ai])
                .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// How the per-azimuth histogram aggregates over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistogramAggregate {
    Max,
    Mean,
}

/// dB floor used when the histogram is exported on a log scale.
pub const HISTOGRAM_DB_FLOOR: f64 = -120.0;

/// Writes `azimuth_deg,value`: the per-azimuth max (or mean) of the averaged
/// map, normalized to a peak of one, optionally scaled by `20*log10`.
pub fn export_histogram(
    map: &SteeredResponseMap,
    path: impl AsRef<Path>,
    aggregate: HistogramAggregate,
    in_db: bool,
) -> Result<()> {
    let path = path.as_ref();
    let rows = map.averaged();
    let num_az = map.azimuths_deg().len();
    let mut agg = vec![0.0f64; num_az];
    for row in rows {
        for (a, &v) in agg.iter_mut().zip(row) {
            match aggregate {
                HistogramAggregate::Max => *a = a.max(v),
                HistogramAggregate::Mean => *a += v,
            }
        }
    }
    if aggregate == HistogramAggregate::Mean && !rows.is_empty() {
        let inv = 1.0 / rows.len() as f64;
        agg.iter_mut().for_each(|a| *a *= inv);
    }
    let peak = agg.iter().cloned().fold(0.0f64, f64::max);
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(f, "azimuth_deg,value").map_err(|e| Error::io(path, e))?;
    for (az, &v) in map.azimuths_deg().iter().zip(&agg) {
        let norm = if peak > 0.0 { v / peak } else { 0.0 };
        let out = if in_db {
            if norm > 0.0 {
                (20.0 * norm.log10()).max(HISTOGRAM_DB_FLOOR)
            } else {
                HISTOGRAM_DB_FLOOR
            }
        } else {
            norm
        };
        writeln!(f, "{az},{out}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes DOA sets as `frame_time_s,azimuth_deg` rows; a frame without
/// detections emits one row with an empty azimuth field so the frame (and
/// its empty set) stays visible to evaluation.
pub fn write_doa_csv(doas: &[(f64, Vec<f64>)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(f, "frame_time_s,azimuth_deg").map_err(|e| Error::io(path, e))?;
    for (t, azs) in doas {
        if azs.is_empty() {
            writeln!(f, "{t},").map_err(|e| Error::io(path, e))?;
        } else {
            for az in azs {
                writeln!(f, "{t},{az}").map_err(|e| Error::io(path, e))?;
            }
        }
    }
    Ok(())
}

/// Reads the DOA CSV back into per-frame sets.
pub fn read_doa_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, Vec<f64>)>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for (li, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let t: f64 = rec
            .get(0)
            .ok_or_else(|| Error::Data(format!("{}:{}: missing time", path.display(), li + 2)))?
            .trim()
            .parse()
            .map_err(|e| Error::Data(format!("{}:{}: bad time: {e}", path.display(), li + 2)))?;
        let az_field = rec.get(1).unwrap_or("").trim();
        if out.last().map(|(lt, _)| *lt) != Some(t) {
            out.push((t, Vec::new()));
        }
        if !az_field.is_empty() {
            let az: f64 = az_field.parse().map_err(|e| {
                Error::Data(format!("{}:{}: bad azimuth: {e}", path.display(), li + 2))
            })?;
            out.last_mut().unwrap().1.push(az);
        }
    }
    Ok(out)
}

/// Ground truth rows grouped by source.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    /// Sorted, deduplicated row times.
    pub times: Vec<f64>,
    /// Per source id: (time, azimuth, active) rows sorted by time.
    pub by_source: BTreeMap<String, Vec<(f64, f64, bool)>>,
}

impl TruthTable {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut by_source: BTreeMap<String, Vec<(f64, f64, bool)>> = BTreeMap::new();
        let mut times = Vec::new();
        for (li, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let ctx = || format!("{}:{}", path.display(), li + 2);
            let t: f64 = rec
                .get(0)
                .ok_or_else(|| Error::Data(format!("{}: missing time", ctx())))?
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("{}: bad time: {e}", ctx())))?;
            let id = rec
                .get(1)
                .ok_or_else(|| Error::Data(format!("{}: missing source id", ctx())))?
                .trim()
                .to_string();
            let az: f64 = rec
                .get(2)
                .ok_or_else(|| Error::Data(format!("{}: missing azimuth", ctx())))?
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("{}: bad azimuth: {e}", ctx())))?;
            let active = matches!(rec.get(3).map(str::trim), Some("1") | Some("true"));
            by_source.entry(id).or_default().push((t, az, active));
            times.push(t);
        }
        if by_source.is_empty() {
            return Err(Error::Data(format!(
                "{}: no ground truth rows",
                path.display()
            )));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        for rows in by_source.values_mut() {
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Ok(Self { times, by_source })
    }

    /// Median spacing of truth rows.
    pub fn hop_s(&self) -> f64 {
        if self.times.len() < 2 {
            return f64::INFINITY;
        }
        let mut deltas: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        deltas.sort_by(f64::total_cmp);
        deltas[deltas.len() / 2]
    }

    /// Azimuths of sources active at the truth row nearest to `t` (within
    /// half a hop).
    pub fn active_set_at(&self, t: f64) -> Result<Vec<f64>> {
        let hop = self.hop_s();
        let idx = match self
            .times
            .binary_search_by(|probe| probe.total_cmp(&t))
        {
            Ok(i) => i,
            Err(i) => {
                let before = i.checked_sub(1);
                let after = (i < self.times.len()).then_some(i);
                match (before, after) {
                    (Some(b), Some(a)) => {
                        if (t - self.times[b]).abs() <= (self.times[a] - t).abs() {
                            b
                        } else {
                            a
                        }
                    }
                    (Some(b), None) => b,
                    (None, Some(a)) => a,
                    (None, None) => return Err(Error::Data("empty truth table".into())),
                }
            }
        };
        let nearest = self.times[idx];
        if (nearest - t).abs() > hop / 2.0 + 1e-9 {
            return Err(Error::Data(format!(
                "no truth row within half a hop of t={t:.4}s (nearest {nearest:.4}s, hop {hop:.4}s)"
            )));
        }
        let mut set = Vec::new();
        for rows in self.by_source.values() {
            let ri = match rows.binary_search_by(|probe| probe.0.total_cmp(&nearest)) {
                Ok(i) => i,
                Err(i) => i.min(rows.len() - 1),
            };
            let (_, az, active) = rows[ri];
            if active {
                set.push(az);
            }
        }
        Ok(set)
    }

    /// Per-source fixed azimuth, if every source holds one position over its
    /// active rows (static scene).
    pub fn static_azimuths(&self) -> Option<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for (id, rows) in &self.by_source {
            let active: Vec<f64> = rows
                .iter()
                .filter(|(_, _, a)| *a)
                .map(|(_, az, _)| *az)
                .collect();
            let first = *active.first()?;
            if active
                .iter()
                .any(|&az| circular_diff_deg(az, first) > 1e-6)
            {
                return None;
            }
            out.insert(id.clone(), first);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OspaPoint {
    pub time_s: f64,
    pub total: f64,
    pub location: f64,
    pub cardinality: f64,
}

/// The evaluation artifact written by `evaluate`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalResults {
    /// Per-source RMSE in degrees; empty for moving-truth scenes, null for
    /// sources that never matched.
    pub per_source_rmse: BTreeMap<String, Option<f64>>,
    pub rmse_match_rate: Option<f64>,
    pub ospa_series: Vec<OspaPoint>,
    pub ospa_mean: f64,
    pub cardinality_mean: f64,
}

/// Scores estimate sets against ground truth: the OSPA series plus, for
/// static scenes, gated per-source RMSE.
pub fn evaluate(
    estimates: &[(f64, Vec<f64>)],
    truth: &TruthTable,
    ospa_cfg: &OspaConfig,
    theta_r_deg: f64,
) -> Result<EvalResults> {
    ospa_cfg.validate()?;
    if estimates.is_empty() {
        return Err(Error::Data("no estimate rows".into()));
    }
    let t_lo = truth.times.first().copied().unwrap_or(0.0) - truth.hop_s();
    let t_hi = truth.times.last().copied().unwrap_or(0.0) + truth.hop_s();
    let overlaps = estimates.iter().any(|(t, _)| *t >= t_lo && *t <= t_hi);
    if !overlaps {
        return Err(Error::Data(format!(
            "estimate times [{:.3}, {:.3}]s do not overlap truth times [{:.3}, {:.3}]s",
            estimates.first().unwrap().0,
            estimates.last().unwrap().0,
            t_lo,
            t_hi
        )));
    }

    let mut series = Vec::with_capacity(estimates.len());
    let mut total_acc = 0.0;
    let mut card_acc = 0.0;
    for (t, ests) in estimates {
        let truth_set = truth.active_set_at(*t)?;
        let r = ospa(&truth_set, ests, ospa_cfg)?;
        total_acc += r.total;
        card_acc += r.cardinality;
        series.push(OspaPoint {
            time_s: *t,
            total: r.total,
            location: r.location,
            cardinality: r.cardinality,
        });
    }
    let n = series.len() as f64;

    let mut per_source_rmse = BTreeMap::new();
    let mut rmse_match_rate = None;
    if let Some(static_az) = truth.static_azimuths() {
        let ids: Vec<&String> = static_az.keys().collect();
        let truth_vec: Vec<f64> = static_az.values().copied().collect();
        let report = rmse_fixed_truth(estimates, &truth_vec, theta_r_deg)?;
        for (idx, id) in ids.iter().enumerate() {
            per_source_rmse.insert((*id).clone(), report.per_source[idx]);
        }
        rmse_match_rate = Some(report.match_rate());
    }

    Ok(EvalResults {
        per_source_rmse,
        rmse_match_rate,
        ospa_series: series,
        ospa_mean: total_acc / n,
        cardinality_mean: card_acc / n,
    })
}
