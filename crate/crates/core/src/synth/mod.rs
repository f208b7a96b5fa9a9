//! Synthetic worlds with planted thresholds and treatment effects.
//!
//! Every random stream is a ChaCha8 generator seeded from the world seed with
//! its own stream number (purpose in the high 32 bits, zone or replication
//! index in the low 32 bits), so generation is reproducible under any
//! parallel schedule.

mod credit;
mod election;
mod geography;
mod montecarlo;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use credit::{
    generate_credit_panel, generate_zone_credit, rd_zone_sample, CreditWorld, RdZoneSpec,
};
pub use election::{generate_election_panel, ElectionWorld};
pub use geography::{generate_geography, SyntheticGeography, ZoneLayout};
pub use montecarlo::{
    cluster_coverage_trial, density_trial, iv_trial, monte_carlo, pipeline_trial, recovery_trial,
    ClusterDgp, CoefficientDraw, IvDgp, IvDraw, Mean, MonteCarloReport, PipelineDraw, Rate,
    RecoveryDraw, Scenario,
};

pub(crate) const STREAM_GEOGRAPHY: u64 = 1;
pub(crate) const STREAM_CREDIT: u64 = 2;
pub(crate) const STREAM_THRESHOLDS: u64 = 3;
pub(crate) const STREAM_ELECTION: u64 = 4;
pub(crate) const STREAM_TRADE: u64 = 5;
pub(crate) const STREAM_TRIAL: u64 = 6;

/// Independent generator for (`purpose`, `index`) under `seed`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | (index & 0xffff_ffff));
    rng
}

/// Election-outcome data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteDgp {
    /// Effect of the total threshold share on the Republican vote share.
    pub beta_share: f64,
    /// Separate effects of the shares above / below the threshold; replaces
    /// `beta_share` when set.
    pub beta_above_below: Option<(f64, f64)>,
    pub gamma_white: f64,
    pub gamma_female: f64,
    pub gamma_china: f64,
    pub cell_effect_sd: f64,
    pub year_effect_sd: f64,
    pub noise_sd: f64,
    /// Upper bound of the uniform third-party vote share (0 = two-party).
    pub other_share_max: f64,
    /// Correlation between the vote shock and the local exposure shock.
    pub confounding: f64,
    pub exposure_shock_sd: f64,
    /// Effect of the total threshold share on the winner's ideology score.
    pub nominate_shift: f64,
    pub nominate_cell_sd: f64,
    pub nominate_noise_sd: f64,
    /// Bandwidth at which the planted shares are measured.
    pub bandwidth: i32,
    pub votes_per_person: u64,
}

impl Default for VoteDgp {
    fn default() -> Self {
        VoteDgp {
            beta_share: 0.27,
            beta_above_below: None,
            gamma_white: 0.7,
            gamma_female: -0.97,
            gamma_china: -0.02,
            cell_effect_sd: 0.05,
            year_effect_sd: 0.02,
            noise_sd: 0.02,
            other_share_max: 0.03,
            confounding: 0.5,
            exposure_shock_sd: 0.3,
            nominate_shift: 0.509,
            nominate_cell_sd: 0.2,
            nominate_noise_sd: 0.05,
            bandwidth: 15,
            votes_per_person: 20,
        }
    }
}

/// Scenario for a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_czs: usize,
    pub counties_per_cz: usize,
    pub cells_per_county: usize,
    pub zctas_per_cell: usize,
    pub persons_per_cz: usize,
    /// Panel years; even years are election years.
    pub years: Vec<i32>,
    /// Fixed planted threshold for every zone-year; random on the grid when unset.
    pub planted_threshold: Option<i32>,
    /// Probability that a zone's threshold moves between election years.
    pub threshold_change_prob: f64,
    /// Jump in asinh(total credit limit) at the threshold.
    pub planted_jump: f64,
    /// Noise sd of asinh(total credit limit).
    pub limit_noise_sd: f64,
    pub county_effect_sd: f64,
    pub score_mean: f64,
    pub score_sd: f64,
    /// Year-to-year idiosyncratic score noise (points).
    pub score_noise_sd: f64,
    /// Short-run drift range (points), uniform in +/- this value.
    pub monthly_drift: f64,
    /// Fraction of individuals just below the threshold moved just above it.
    pub bunching: f64,
    pub vote_dgp: VoteDgp,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_czs: 20,
            counties_per_cz: 3,
            cells_per_county: 2,
            zctas_per_cell: 2,
            persons_per_cz: 3000,
            years: (2004..=2016).step_by(2).collect(),
            planted_threshold: None,
            threshold_change_prob: 0.3,
            planted_jump: 1.2,
            limit_noise_sd: 0.3,
            county_effect_sd: 0.2,
            score_mean: 648.0,
            score_sd: 110.0,
            score_noise_sd: 10.0,
            monthly_drift: 5.0,
            bunching: 0.0,
            vote_dgp: VoteDgp::default(),
            seed: 20_240_601,
        }
    }
}

impl WorldConfig {
    /// Roughly paper-sized: 400 zones, 5000 people each, 13 annual waves.
    pub fn paper_scale() -> Self {
        WorldConfig {
            n_czs: 400,
            persons_per_cz: 5000,
            years: (2004..=2016).collect(),
            ..WorldConfig::default()
        }
    }

    pub fn election_years(&self) -> Vec<i32> {
        self.years.iter().copied().filter(|y| y % 2 == 0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.n_czs,
            self.counties_per_cz,
            self.cells_per_county,
            self.zctas_per_cell,
            self.persons_per_cz,
        ];
        if counts.iter().any(|c| *c == 0) {
            return Err(Error::Config("all world counts must be at least 1".into()));
        }
        if self.years.is_empty() {
            return Err(Error::Config("world needs at least one year".into()));
        }
        if let Some(t) = self.planted_threshold {
            if !(560..=660).contains(&t) || t % 5 != 0 {
                return Err(Error::Config(format!(
                    "planted threshold {t} is not on the 560..660 step-5 grid"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.bunching)
            || !(0.0..=1.0).contains(&self.threshold_change_prob)
        {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if !(-1.0..=1.0).contains(&self.vote_dgp.confounding) {
            return Err(Error::Config("confounding must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}
