use serde::{Deserialize, Serialize};

use super::{
    CreditRecord, CutoffEstimate, PolynomialSpec, RdConfig, RdCovariance, SkipReason, SkipRecord,
    ZoneYear,
};
use crate::error::Error;
use crate::geo::CountyFips;
use crate::kernel::{
    absorb_fixed_effects, wls_fit_with, ClusterSpec, Covariance, DesignMatrix, FitOptions,
    GroupLabels,
};

/// Centered scores are divided by this before taking powers.
const SCORE_SCALE: f64 = 100.0;

/// Inverse hyperbolic sine, `ln(v + sqrt(v^2 + 1))`.
pub fn asinh_transform(v: f64) -> f64 {
    v.asinh()
}

/// Credit limit implied by a jump of `jump` in `asinh(limit)` starting from `limit`.
pub fn limit_after_jump(limit: f64, jump: f64) -> f64 {
    (limit.asinh() + jump).sinh()
}

/// Records of one zone-year restricted to the estimation range, with the
/// outcome already transformed.
#[derive(Debug, Clone, Default)]
pub struct RdSample {
    pub scores: Vec<i32>,
    pub outcome: Vec<f64>,
    pub counties: Vec<CountyFips>,
}

impl RdSample {
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a CreditRecord>,
        config: &RdConfig,
    ) -> Self {
        let (lo, hi) = config.score_range();
        let mut s = RdSample::default();
        for r in records {
            let score = r.credit_score as i32;
            if score < lo || score > hi {
                continue;
            }
            s.scores.push(score);
            s.outcome.push(asinh_transform(r.total_credit_limit));
            s.counties.push(r.county_fips);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Jump estimate at `cutoff`, or the reason the cutoff cannot be fitted.
    pub fn fit(
        &self,
        key: ZoneYear,
        cutoff: i32,
        config: &RdConfig,
    ) -> Result<CutoffEstimate, SkipReason> {
        let rows: Vec<usize> = match config.window_halfwidth {
            Some(h) => (0..self.len())
                .filter(|&i| (self.scores[i] - cutoff).abs() <= h)
                .collect(),
            None => (0..self.len()).collect(),
        };
        let n = rows.len();
        if n < config.min_observations {
            return Err(SkipReason::InsufficientObservations {
                n,
                required: config.min_observations,
            });
        }
        let n_right = rows.iter().filter(|&&i| self.scores[i] >= cutoff).count();
        let n_left = n - n_right;
        if n_left == 0 || n_right == 0 {
            return Err(SkipReason::OneSided { n_left, n_right });
        }

        let p = config.polynomial_degree;
        let interacted = match config.polynomial {
            PolynomialSpec::SideSpecific => p,
            PolynomialSpec::CommonHigherOrder => 1,
        };
        let distinct = |right: bool| {
            let mut v: Vec<i32> = rows
                .iter()
                .map(|&i| self.scores[i])
                .filter(|&s| (s >= cutoff) == right)
                .collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        let (distinct_left, distinct_right) = (distinct(false), distinct(true));
        let required = interacted + 2;
        if distinct_left < required || distinct_right < required {
            return Err(SkipReason::ThinSupport {
                distinct_left,
                distinct_right,
                required,
            });
        }
        let jump: Vec<f64> = rows
            .iter()
            .map(|&i| if self.scores[i] >= cutoff { 1.0 } else { 0.0 })
            .collect();
        let centered: Vec<f64> = rows
            .iter()
            .map(|&i| (self.scores[i] - cutoff) as f64 / SCORE_SCALE)
            .collect();
        let mut columns = vec![("jump".to_string(), jump.clone())];
        for k in 1..=p {
            columns.push((
                format!("score_{k}"),
                centered.iter().map(|u| u.powi(k as i32)).collect(),
            ));
        }
        for k in 1..=interacted {
            columns.push((
                format!("jump_score_{k}"),
                centered
                    .iter()
                    .zip(&jump)
                    .map(|(u, d)| d * u.powi(k as i32))
                    .collect(),
            ));
        }
        let y: Vec<f64> = rows.iter().map(|&i| self.outcome[i]).collect();
        let counties: Vec<CountyFips> = rows.iter().map(|&i| self.counties[i]).collect();

        let failed = |e: Error| match e {
            Error::RankDeficient { columns } => SkipReason::RankDeficient {
                columns: columns.join(", "),
            },
            other => SkipReason::EstimationFailed {
                message: other.to_string(),
            },
        };
        let design = DesignMatrix::from_columns(columns, vec![1.0; n]).map_err(failed)?;
        let groups = GroupLabels::new()
            .with_dimension("county", counties.iter().copied())
            .map_err(failed)?;
        let absorbed = absorb_fixed_effects(&design, &y, &groups).map_err(failed)?;
        let covariance = match config.covariance {
            RdCovariance::Classical => Covariance::Classical,
            RdCovariance::Hc1 => Covariance::Hc1,
            RdCovariance::County => Covariance::Cr1(ClusterSpec::new(counties.iter().copied())),
        };
        let nested = match &covariance {
            Covariance::Cr1(c) => absorbed.nested_dof(c),
            _ => 0,
        };
        let opts = FitOptions {
            covariance,
            absorbed_dof: absorbed.absorbed_dof,
            nested_absorbed_dof: nested,
            total_sum_squares: Some(absorbed.total_sum_squares),
        };
        let fit = wls_fit_with(&absorbed.x, &absorbed.y, &opts).map_err(failed)?;
        let alpha = fit.result.coefficients[0];
        let se = fit.result.standard_errors[0];
        Ok(CutoffEstimate {
            commuting_zone: key.commuting_zone,
            year: key.year,
            cutoff,
            alpha,
            se,
            t_stat: if se > 0.0 { alpha / se } else { f64::NAN },
            n_left,
            n_right,
        })
    }
}

/// Fits the jump at a single cutoff for one zone-year's records.
pub fn fit_rd_at_cutoff(
    key: ZoneYear,
    records: &[CreditRecord],
    cutoff: i32,
    config: &RdConfig,
) -> Result<CutoffEstimate, SkipReason> {
    RdSample::from_records(records, config).fit(key, cutoff, config)
}

/// Estimates and skips from scanning one zone-year.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub estimates: Vec<CutoffEstimate>,
    pub skips: Vec<SkipRecord>,
}

/// Fits every grid cutoff with adequate support, in ascending cutoff order.
pub fn scan_cutoffs(key: ZoneYear, records: &[CreditRecord], config: &RdConfig) -> ScanOutcome {
    scan_sample(key, &RdSample::from_records(records, config), config)
}

pub(crate) fn scan_sample(key: ZoneYear, sample: &RdSample, config: &RdConfig) -> ScanOutcome {
    let mut out = ScanOutcome::default();
    if sample.len() < config.min_observations {
        out.skips.push(SkipRecord {
            zone_year: key,
            cutoff: None,
            reason: SkipReason::InsufficientObservations {
                n: sample.len(),
                required: config.min_observations,
            },
        });
        return out;
    }
    let mut grid = config.cutoff_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    for cutoff in grid {
        match sample.fit(key, cutoff, config) {
            Ok(est) => out.estimates.push(est),
            Err(reason) => out.skips.push(SkipRecord {
                zone_year: key,
                cutoff: Some(cutoff),
                reason,
            }),
        }
    }
    out
}
