//! Credit-score threshold detection.
//!
//! For each commuting zone and election year, `asinh(total credit limit)` is
//! regressed on a jump dummy at each candidate cutoff plus side-specific
//! polynomials in the centered score, with county fixed effects absorbed.
//! The largest significant positive jump becomes the zone-year's threshold.

mod batch;
mod density;
mod fit;
mod select;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{CommutingZone, CountyFips, HasCounty, Zcta};

pub use batch::{scan_zone_years, zone_year_samples, ScanReport};
pub use density::{density_smoothness_test, DensityConfig, DensityTestResult};
pub use fit::{
    asinh_transform, fit_rd_at_cutoff, limit_after_jump, scan_cutoffs, RdSample, ScanOutcome,
};
pub use select::{impute_thresholds, select_threshold, suppress_contiguous};

pub const MIN_SCORE: u16 = 300;
pub const MAX_SCORE: u16 = 850;

/// One person-year credit observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreditRecord {
    pub person_id: u64,
    pub year: i32,
    pub credit_score: u16,
    #[serde(rename = "total_limit")]
    pub total_credit_limit: f64,
    pub zcta: Zcta,
    pub county_fips: CountyFips,
    #[serde(rename = "cz")]
    pub commuting_zone: CommutingZone,
}

impl CreditRecord {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_SCORE..=MAX_SCORE).contains(&self.credit_score) {
            return Err(Error::Validation(format!(
                "credit score {} outside [{MIN_SCORE}, {MAX_SCORE}]",
                self.credit_score
            )));
        }
        if !self.total_credit_limit.is_finite() || self.total_credit_limit < 0.0 {
            return Err(Error::Validation(format!(
                "total credit limit {} is not a nonnegative amount",
                self.total_credit_limit
            )));
        }
        Ok(())
    }
}

impl HasCounty for CreditRecord {
    fn county(&self) -> CountyFips {
        self.county_fips
    }

    fn set_county(&mut self, county: CountyFips) {
        self.county_fips = county;
    }
}

/// Commuting zone and (election) year a scan belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZoneYear {
    #[serde(rename = "cz")]
    pub commuting_zone: CommutingZone,
    pub year: i32,
}

/// How the two sides' polynomials relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolynomialSpec {
    /// Separate degree-p polynomial on each side of the cutoff.
    #[default]
    SideSpecific,
    /// Side-specific slope, common higher-order terms.
    CommonHigherOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdCovariance {
    Classical,
    #[default]
    Hc1,
    /// CR1 with counties as clusters.
    County,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RdConfig {
    pub cutoff_grid: Vec<i32>,
    pub polynomial_degree: usize,
    /// Restrict each candidate fit to scores within this distance of the cutoff.
    pub window_halfwidth: Option<i32>,
    /// Scores within this margin outside the grid still enter the fits.
    pub range_margin: i32,
    pub min_observations: usize,
    pub alpha_level: f64,
    pub polynomial: PolynomialSpec,
    pub covariance: RdCovariance,
    /// Candidates this close to a larger significant jump are suppressed.
    pub contiguity: i32,
    /// Pool each election year with the preceding non-election year.
    pub pool_preceding_year: bool,
}

impl Default for RdConfig {
    fn default() -> Self {
        RdConfig {
            cutoff_grid: (560..=660).step_by(5).collect(),
            polynomial_degree: 4,
            window_halfwidth: None,
            range_margin: 25,
            min_observations: 500,
            alpha_level: 0.05,
            polynomial: PolynomialSpec::SideSpecific,
            covariance: RdCovariance::Hc1,
            contiguity: 5,
            pool_preceding_year: false,
        }
    }
}

impl RdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.polynomial_degree < 1 {
            return Err(Error::Config("polynomial degree must be at least 1".into()));
        }
        if self.cutoff_grid.is_empty() {
            return Err(Error::Config("cutoff grid is empty".into()));
        }
        if self.cutoff_grid.iter().any(|c| !(560..=660).contains(c)) {
            return Err(Error::Config(
                "cutoff grid must lie within [560, 660]".into(),
            ));
        }
        if self.min_observations < 2 * self.polynomial_degree + 2 {
            return Err(Error::Config(format!(
                "min_observations {} below 2 * degree + 2",
                self.min_observations
            )));
        }
        if !(0.0..1.0).contains(&self.alpha_level) || self.alpha_level == 0.0 {
            return Err(Error::Config("alpha_level must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Inclusive score range entering the candidate fits.
    pub fn score_range(&self) -> (i32, i32) {
        let lo = self.cutoff_grid.iter().min().copied().unwrap_or(560);
        let hi = self.cutoff_grid.iter().max().copied().unwrap_or(660);
        (lo - self.range_margin, hi + self.range_margin)
    }

    pub fn critical_value(&self) -> f64 {
        crate::kernel::normal_critical(self.alpha_level)
    }
}

/// Jump estimate at one candidate cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffEstimate {
    #[serde(rename = "cz")]
    pub commuting_zone: CommutingZone,
    pub year: i32,
    pub cutoff: i32,
    pub alpha: f64,
    pub se: f64,
    #[serde(rename = "t")]
    pub t_stat: f64,
    pub n_left: usize,
    pub n_right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Detected,
    ImputedForward,
    ImputedBackward,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Detected => "detected",
            Provenance::ImputedForward => "imputed_forward",
            Provenance::ImputedBackward => "imputed_backward",
        })
    }
}

/// The threshold assigned to a zone-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    #[serde(rename = "cz")]
    pub commuting_zone: CommutingZone,
    pub year: i32,
    pub cutoff: i32,
    pub alpha: f64,
    pub se: f64,
    #[serde(rename = "t")]
    pub t_stat: f64,
    pub provenance: Provenance,
    /// Year whose detection this threshold comes from (its own year when detected).
    pub source_year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    InsufficientObservations {
        n: usize,
        required: usize,
    },
    OneSided {
        n_left: usize,
        n_right: usize,
    },
    /// Too few distinct scores on a side to leave residual variation there.
    ThinSupport {
        distinct_left: usize,
        distinct_right: usize,
        required: usize,
    },
    RankDeficient {
        columns: String,
    },
    EstimationFailed {
        message: String,
    },
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::InsufficientObservations { n, required } => write!(
                f,
                "{n} observations; zone-years need at least {required} observations"
            ),
            SkipReason::OneSided { n_left, n_right } => write!(
                f,
                "no support on one side of the cutoff ({n_left} below, {n_right} above)"
            ),
            SkipReason::ThinSupport {
                distinct_left,
                distinct_right,
                required,
            } => write!(
                f,
                "{distinct_left} distinct scores below and {distinct_right} above the cutoff; each side needs {required}"
            ),
            SkipReason::RankDeficient { columns } => {
                write!(f, "rank-deficient design ({columns})")
            }
            SkipReason::EstimationFailed { message } => f.write_str(message),
        }
    }
}

/// A zone-year (or a single cutoff within it) that was not estimated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub zone_year: ZoneYear,
    /// `None` when the whole zone-year was skipped.
    pub cutoff: Option<i32>,
    pub reason: SkipReason,
}
