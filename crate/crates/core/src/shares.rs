//! Shares of scored individuals within a bandwidth of their zone's threshold,
//! per county-by-district cell and election year.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geo::{CellId, CommutingZone, Geography};
use crate::rd::{CreditRecord, ThresholdEstimate, MAX_SCORE, MIN_SCORE};

pub const BANDWIDTHS: [i32; 5] = [5, 10, 15, 20, 25];

const HIST_LEN: usize = (MAX_SCORE - MIN_SCORE) as usize + 1;

/// Shares around the threshold for one cell, year and bandwidth. Shares are
/// `None` when the cell's zone has no threshold for the year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareRecord {
    pub cell_id: CellId,
    pub year: i32,
    #[serde(rename = "bw")]
    pub bandwidth: i32,
    #[serde(rename = "share_tot")]
    pub share_total: Option<f64>,
    pub share_above: Option<f64>,
    pub share_below: Option<f64>,
    #[serde(rename = "pop")]
    pub cell_population: u64,
}

/// Score histogram of one cell-year.
#[derive(Debug, Clone)]
pub struct ScoreHistogram {
    counts: Vec<u32>,
    total: u64,
}

impl Default for ScoreHistogram {
    fn default() -> Self {
        ScoreHistogram {
            counts: vec![0; HIST_LEN],
            total: 0,
        }
    }
}

impl ScoreHistogram {
    pub fn add(&mut self, score: u16) {
        if (MIN_SCORE..=MAX_SCORE).contains(&score) {
            self.counts[(score - MIN_SCORE) as usize] += 1;
            self.total += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Individuals with scores in `[lo, hi]`.
    pub fn count_between(&self, lo: i32, hi: i32) -> u64 {
        let lo = lo.max(MIN_SCORE as i32);
        let hi = hi.min(MAX_SCORE as i32);
        if lo > hi {
            return 0;
        }
        self.counts[(lo - MIN_SCORE as i32) as usize..=(hi - MIN_SCORE as i32) as usize]
            .iter()
            .map(|&c| c as u64)
            .sum()
    }

    /// (below, above) counts: `[c-b, c-1]` and `[c, c+b-1]`.
    pub fn around(&self, cutoff: i32, bandwidth: i32) -> (u64, u64) {
        (
            self.count_between(cutoff - bandwidth, cutoff - 1),
            self.count_between(cutoff, cutoff + bandwidth - 1),
        )
    }
}

/// Shares from raw counts. The total is the sum of the two side shares so
/// that the partition holds exactly in floating point.
pub fn shares_from_counts(below: u64, above: u64, population: u64) -> (f64, f64, f64) {
    if population == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = population as f64;
    let share_below = below as f64 / p;
    let share_above = above as f64 / p;
    (share_above + share_below, share_above, share_below)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareLogEntry {
    pub cell_id: Option<CellId>,
    pub year: i32,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ShareBuild {
    pub records: Vec<ShareRecord>,
    pub log: Vec<ShareLogEntry>,
}

/// Score histograms per (cell, election year), including cells valid in a
/// year that received no records.
pub fn cell_histograms(
    records: &[CreditRecord],
    geography: &Geography,
    election_years: &[i32],
) -> (BTreeMap<(CellId, i32), ScoreHistogram>, usize) {
    let years: BTreeSet<i32> = election_years.iter().copied().collect();
    let mut hist: BTreeMap<(CellId, i32), ScoreHistogram> = BTreeMap::new();
    for &year in &years {
        for zcta in geography.zcta_county.map.keys() {
            if let Some(cell) = geography.cell_for(*zcta, year) {
                hist.entry((cell.cell_id, year)).or_default();
            }
        }
    }
    let mut unmapped = 0;
    for r in records.iter().filter(|r| years.contains(&r.year)) {
        match geography.cell_for(r.zcta, r.year) {
            Some(cell) => hist
                .entry((cell.cell_id, r.year))
                .or_default()
                .add(r.credit_score),
            None => unmapped += 1,
        }
    }
    (hist, unmapped)
}

/// One share record per (cell, election year, bandwidth).
pub fn compute_shares(
    records: &[CreditRecord],
    thresholds: &[ThresholdEstimate],
    geography: &Geography,
    bandwidths: &[i32],
    election_years: &[i32],
) -> ShareBuild {
    let (hist, unmapped) = cell_histograms(records, geography, election_years);
    let cutoffs: BTreeMap<(CommutingZone, i32), i32> = thresholds
        .iter()
        .map(|t| ((t.commuting_zone, t.year), t.cutoff))
        .collect();
    let entries: Vec<_> = hist.into_iter().collect();
    let per_cell: Vec<(Vec<ShareRecord>, Option<ShareLogEntry>)> = entries
        .par_iter()
        .map(|((cell_id, year), h)| {
            let zone = geography.cells.get(cell_id).map(|c| c.commuting_zone);
            let cutoff = zone.and_then(|z| cutoffs.get(&(z, *year)).copied());
            let out = bandwidths
                .iter()
                .map(|&b| {
                    let (total, above, below) = match cutoff {
                        Some(c) => {
                            let (nb, na) = h.around(c, b);
                            let (t, a, bl) = shares_from_counts(nb, na, h.total());
                            (Some(t), Some(a), Some(bl))
                        }
                        None => (None, None, None),
                    };
                    ShareRecord {
                        cell_id: *cell_id,
                        year: *year,
                        bandwidth: b,
                        share_total: total,
                        share_above: above,
                        share_below: below,
                        cell_population: h.total(),
                    }
                })
                .collect();
            let log = cutoff.is_none().then(|| ShareLogEntry {
                cell_id: Some(*cell_id),
                year: *year,
                message: match zone {
                    Some(z) => format!("commuting zone {z} has no threshold"),
                    None => "cell has no commuting zone".into(),
                },
            });
            (out, log)
        })
        .collect();
    let mut build = ShareBuild::default();
    for (recs, log) in per_cell {
        build.records.extend(recs);
        build.log.extend(log);
    }
    if unmapped > 0 {
        build.log.push(ShareLogEntry {
            cell_id: None,
            year: 0,
            message: format!("{unmapped} records outside the cell crosswalk"),
        });
    }
    build
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareMeasure {
    Tot,
    Above,
    Below,
}

impl ShareMeasure {
    fn label(self) -> &'static str {
        match self {
            ShareMeasure::Tot => "tot",
            ShareMeasure::Above => "above",
            ShareMeasure::Below => "below",
        }
    }

    fn pick(self, r: &ShareRecord) -> Option<f64> {
        match self {
            ShareMeasure::Tot => r.share_total,
            ShareMeasure::Above => r.share_above,
            ShareMeasure::Below => r.share_below,
        }
    }
}

/// Population-weighted statistics of one share measure at one bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareSummary {
    pub bandwidth: i32,
    pub measure: ShareMeasure,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub total_weight: u64,
}

/// Weighted mean, standard deviation, min and max per bandwidth and
/// measure, weighting each cell-year by its population. Rows with null
/// shares or zero population are left out.
pub fn summarize_shares(records: &[ShareRecord]) -> Vec<ShareSummary> {
    let bandwidths: BTreeSet<i32> = records.iter().map(|r| r.bandwidth).collect();
    let mut out = Vec::new();
    for b in bandwidths {
        for m in [ShareMeasure::Tot, ShareMeasure::Above, ShareMeasure::Below] {
            let vals: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.bandwidth == b && r.cell_population > 0)
                .filter_map(|r| m.pick(r).map(|v| (v, r.cell_population as f64)))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let sw: f64 = vals.iter().map(|(_, w)| w).sum();
            let mean = vals.iter().map(|(v, w)| v * w).sum::<f64>() / sw;
            let var = vals
                .iter()
                .map(|(v, w)| w * (v - mean).powi(2))
                .sum::<f64>()
                / sw;
            out.push(ShareSummary {
                bandwidth: b,
                measure: m,
                mean,
                sd: var.max(0.0).sqrt(),
                min: vals.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min),
                max: vals
                    .iter()
                    .map(|(v, _)| *v)
                    .fold(f64::NEG_INFINITY, f64::max),
                total_weight: sw as u64,
            });
        }
    }
    out
}

/// Three decimals with trailing zeros removed (`0.250` -> `0.25`, `1.000` -> `1`).
pub(crate) fn compact(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Integer with comma thousands separators.
pub(crate) fn grouped(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Plain-text table of share statistics by bandwidth.
pub fn render_share_table(summary: &[ShareSummary]) -> String {
    let total = summary.first().map(|s| s.total_weight).unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Population shares close to thresholds at different bandwidths (BW), weighted by population ({} total observations)",
        grouped(total)
    );
    let _ = writeln!(
        out,
        "{:<22}{:>8}{:>10}{:>8}{:>8}",
        "Variable", "Mean", "St. Dev.", "Min", "Max"
    );
    for s in summary {
        let label = format!("share({}), BW: {}", s.measure.label(), s.bandwidth);
        let _ = writeln!(
            out,
            "{:<22}{:>8.3}{:>10.3}{:>8}{:>8}",
            label,
            s.mean,
            s.sd,
            compact(s.min),
            compact(s.max)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{CongressionalDistrict, CountyFips};

    fn cell() -> CellId {
        CellId {
            county: CountyFips(1001),
            district: CongressionalDistrict(101),
        }
    }

    #[test]
    fn hand_counted_example() {
        let mut h = ScoreHistogram::default();
        for s in [590, 600, 610, 700, 710, 720, 730, 740, 750, 760] {
            h.add(s);
        }
        let (below, above) = h.around(600, 15);
        let (t, a, b) = shares_from_counts(below, above, h.total());
        assert_eq!((below, above), (1, 2));
        assert!((t - 0.3).abs() < 1e-15);
        assert!((a - 0.2).abs() < 1e-15);
        assert!((b - 0.1).abs() < 1e-15);
        assert_eq!(a + b, t);
    }

    #[test]
    fn cutoff_counts_as_above() {
        let mut h = ScoreHistogram::default();
        h.add(600);
        assert_eq!(h.around(600, 5), (0, 1));
        h.add(595);
        h.add(594);
        assert_eq!(h.around(600, 5), (1, 1));
    }

    #[test]
    fn empty_cell_year_has_zero_shares() {
        assert_eq!(shares_from_counts(0, 0, 0), (0.0, 0.0, 0.0));
    }

    fn rec(share: f64, pop: u64) -> ShareRecord {
        ShareRecord {
            cell_id: cell(),
            year: 2010,
            bandwidth: 15,
            share_total: Some(share),
            share_above: Some(share / 2.0),
            share_below: Some(share / 2.0),
            cell_population: pop,
        }
    }

    #[test]
    fn summary_of_single_cell() {
        let s = summarize_shares(&[rec(0.3, 10)]);
        assert_eq!(s[0].mean, 0.3);
        assert_eq!(s[0].sd, 0.0);
    }

    #[test]
    fn summary_of_two_equal_weight_cells() {
        let s = summarize_shares(&[rec(0.0, 5), rec(0.2, 5)]);
        assert!((s[0].mean - 0.1).abs() < 1e-15);
        assert!((s[0].sd - 0.1).abs() < 1e-15);
        assert_eq!(s[0].min, 0.0);
        assert_eq!(s[0].max, 0.2);
    }

    #[test]
    fn compact_numbers() {
        assert_eq!(compact(0.0), "0");
        assert_eq!(compact(1.0), "1");
        assert_eq!(compact(0.25), "0.25");
        assert_eq!(compact(0.0333), "0.033");
    }
}
