use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{scan_sample, RdSample};
use super::{
    impute_thresholds, select_threshold, CreditRecord, CutoffEstimate, RdConfig, SkipRecord,
    ThresholdEstimate, ZoneYear,
};
use crate::geo::CommutingZone;

/// Groups records into per-zone-year estimation samples. With
/// `pool_preceding_year`, a non-election year's records join the following
/// election year.
pub fn zone_year_samples(
    records: &[CreditRecord],
    config: &RdConfig,
    election_years: &[i32],
) -> BTreeMap<ZoneYear, RdSample> {
    let elections: BTreeSet<i32> = election_years.iter().copied().collect();
    let mut grouped: BTreeMap<ZoneYear, Vec<&CreditRecord>> = BTreeMap::new();
    for r in records {
        let year = if elections.contains(&r.year) {
            r.year
        } else if config.pool_preceding_year && elections.contains(&(r.year + 1)) {
            r.year + 1
        } else {
            continue;
        };
        grouped
            .entry(ZoneYear {
                commuting_zone: r.commuting_zone,
                year,
            })
            .or_default()
            .push(r);
    }
    grouped
        .into_iter()
        .map(|(k, recs)| (k, RdSample::from_records(recs, config)))
        .collect()
}

/// Everything produced by scanning a set of zone-years.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub estimates: Vec<CutoffEstimate>,
    /// Selected threshold per scanned zone-year before imputation.
    pub detected: BTreeMap<ZoneYear, Option<ThresholdEstimate>>,
    /// Detected and imputed thresholds for zones with at least one detection.
    pub thresholds: Vec<ThresholdEstimate>,
    pub skips: Vec<SkipRecord>,
    /// Zones without a detection in any year.
    pub dropped_zones: Vec<CommutingZone>,
}

impl ScanReport {
    /// Number of cutoff regressions that produced an estimate.
    pub fn n_regressions(&self) -> usize {
        self.estimates.len()
    }

    /// Appends a report covering disjoint commuting zones.
    pub fn extend(&mut self, other: ScanReport) {
        self.estimates.extend(other.estimates);
        self.detected.extend(other.detected);
        self.thresholds.extend(other.thresholds);
        self.skips.extend(other.skips);
        self.dropped_zones.extend(other.dropped_zones);
    }

    /// Restores canonical (zone, year, cutoff) ordering after merging.
    pub fn sort(&mut self) {
        self.estimates
            .sort_by_key(|e| (e.commuting_zone, e.year, e.cutoff));
        self.thresholds.sort_by_key(|t| (t.commuting_zone, t.year));
        self.skips.sort_by_key(|s| (s.zone_year, s.cutoff));
        self.dropped_zones.sort();
    }
}

/// Scans every zone-year in parallel, selects thresholds and imputes
/// missing election years. Output order does not depend on scheduling.
pub fn scan_zone_years(
    records: &[CreditRecord],
    config: &RdConfig,
    election_years: &[i32],
) -> ScanReport {
    let samples: Vec<(ZoneYear, RdSample)> = zone_year_samples(records, config, election_years)
        .into_iter()
        .collect();
    let outcomes: Vec<_> = samples
        .par_iter()
        .map(|(key, sample)| (*key, scan_sample(*key, sample, config)))
        .collect();

    let mut report = ScanReport::default();
    let mut series: BTreeMap<CommutingZone, BTreeMap<i32, Option<ThresholdEstimate>>> =
        BTreeMap::new();
    for (key, outcome) in outcomes {
        let chosen = select_threshold(&outcome.estimates, config);
        report.detected.insert(key, chosen);
        series
            .entry(key.commuting_zone)
            .or_default()
            .insert(key.year, chosen);
        report.estimates.extend(outcome.estimates);
        report.skips.extend(outcome.skips);
    }
    for (cz, years) in &mut series {
        // Election years with no usable sample still need a threshold.
        for &y in election_years {
            years.entry(y).or_insert(None);
        }
        match impute_thresholds(*cz, years) {
            Some(filled) => report.thresholds.extend(filled.into_values()),
            None => report.dropped_zones.push(*cz),
        }
    }
    report
}
