use std::collections::BTreeMap;

use super::{CutoffEstimate, Provenance, RdConfig, ThresholdEstimate};
use crate::geo::CommutingZone;

fn qualifies(e: &CutoffEstimate, critical: f64) -> bool {
    e.alpha > 0.0 && e.t_stat > critical
}

/// Orders by descending jump, breaking ties toward the lower cutoff.
fn by_strength(a: &CutoffEstimate, b: &CutoffEstimate) -> std::cmp::Ordering {
    b.alpha
        .total_cmp(&a.alpha)
        .then_with(|| a.cutoff.cmp(&b.cutoff))
}

/// Significant positive candidates that are not within `config.contiguity`
/// points of a larger significant jump, strongest first.
pub fn suppress_contiguous(estimates: &[CutoffEstimate], config: &RdConfig) -> Vec<CutoffEstimate> {
    let critical = config.critical_value();
    let mut candidates: Vec<CutoffEstimate> = estimates
        .iter()
        .filter(|e| qualifies(e, critical))
        .copied()
        .collect();
    candidates.sort_by(by_strength);
    let mut kept: Vec<CutoffEstimate> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|k| (k.cutoff - c.cutoff).abs() > config.contiguity)
        {
            kept.push(c);
        }
    }
    kept
}

/// The largest significant positive jump, if any.
pub fn select_threshold(
    estimates: &[CutoffEstimate],
    config: &RdConfig,
) -> Option<ThresholdEstimate> {
    suppress_contiguous(estimates, config)
        .first()
        .map(|e| ThresholdEstimate {
            commuting_zone: e.commuting_zone,
            year: e.year,
            cutoff: e.cutoff,
            alpha: e.alpha,
            se: e.se,
            t_stat: e.t_stat,
            provenance: Provenance::Detected,
            source_year: e.year,
        })
}

/// Fills years without a detection from the most recent earlier detection,
/// and leading years from the first detection. Returns `None` when the zone
/// never shows a threshold.
pub fn impute_thresholds(
    commuting_zone: CommutingZone,
    series: &BTreeMap<i32, Option<ThresholdEstimate>>,
) -> Option<BTreeMap<i32, ThresholdEstimate>> {
    let first = series.values().flatten().next().copied()?;
    let mut out = BTreeMap::new();
    let mut last: Option<ThresholdEstimate> = None;
    for (&year, detected) in series {
        let t = match detected {
            Some(d) => {
                last = Some(*d);
                *d
            }
            None => {
                let (source, provenance) = match last {
                    Some(prev) => (prev, Provenance::ImputedForward),
                    None => (first, Provenance::ImputedBackward),
                };
                ThresholdEstimate {
                    commuting_zone,
                    year,
                    provenance,
                    source_year: source.year,
                    ..source
                }
            }
        };
        out.insert(year, t);
    }
    Some(out)
}
