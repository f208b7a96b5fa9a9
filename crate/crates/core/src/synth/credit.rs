use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geography::{generate_geography, SyntheticGeography, ZoneLayout};
use super::{stream_rng, WorldConfig, STREAM_CREDIT, STREAM_THRESHOLDS};
use crate::error::Result;
use crate::geo::{CommutingZone, CountyFips, Zcta};
use crate::rd::{CreditRecord, Provenance, ThresholdEstimate, ZoneYear, MAX_SCORE, MIN_SCORE};

const THRESHOLD_GRID: std::ops::RangeInclusive<i32> = 560..=660;
const BUNCHING_DEPTH: i32 = 10;

/// A synthetic credit panel with its geography and planted thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditWorld {
    pub config: WorldConfig,
    pub geography: SyntheticGeography,
    pub records: Vec<CreditRecord>,
    /// Planted threshold per zone and panel year.
    pub planted: BTreeMap<ZoneYear, i32>,
}

impl CreditWorld {
    /// Planted thresholds of the election years in the form the share
    /// builder consumes.
    pub fn planted_thresholds(&self) -> Vec<ThresholdEstimate> {
        self.planted
            .iter()
            .filter(|(k, _)| k.year % 2 == 0)
            .map(|(k, &cutoff)| ThresholdEstimate {
                commuting_zone: k.commuting_zone,
                year: k.year,
                cutoff,
                alpha: self.config.planted_jump,
                se: 0.0,
                t_stat: 0.0,
                provenance: Provenance::Detected,
                source_year: k.year,
            })
            .collect()
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, dist: &Normal<f64>) -> f64 {
    loop {
        let x = dist.sample(rng);
        if (MIN_SCORE as f64..=MAX_SCORE as f64).contains(&x) {
            return x;
        }
    }
}

fn clamp_score(x: f64) -> i32 {
    (x.round() as i32).clamp(MIN_SCORE as i32, MAX_SCORE as i32)
}

/// Persistent truncated-normal score plus yearly noise, short-run drift and
/// optional bunching just above the threshold.
pub(crate) struct ScoreProcess {
    base: Normal<f64>,
    noise: Normal<f64>,
    drift: f64,
    bunching: f64,
}

impl ScoreProcess {
    pub(crate) fn new(config: &WorldConfig) -> Self {
        ScoreProcess {
            base: Normal::new(config.score_mean, config.score_sd).expect("score sd"),
            noise: Normal::new(0.0, config.score_noise_sd.max(0.0)).expect("noise sd"),
            drift: config.monthly_drift.max(0.0),
            bunching: config.bunching,
        }
    }

    pub(crate) fn base(&self, rng: &mut ChaCha8Rng) -> f64 {
        truncated_normal(rng, &self.base)
    }

    pub(crate) fn year_score(&self, rng: &mut ChaCha8Rng, base: f64, cutoff: i32) -> i32 {
        let drift = if self.drift > 0.0 {
            rng.gen_range(-self.drift..=self.drift)
        } else {
            0.0
        };
        let score = clamp_score(base + self.noise.sample(rng) + drift);
        let bunch = rng.gen::<f64>() < self.bunching;
        if bunch && (cutoff - BUNCHING_DEPTH..cutoff).contains(&score) {
            2 * cutoff - 1 - score
        } else {
            score
        }
    }
}

/// Smooth part of asinh(total limit) as a function of the score.
fn base_profile(score: i32, curvature: f64) -> f64 {
    let u = (score - 600) as f64;
    9.0 + 0.01 * u + curvature * u * u
}

fn random_grid_cutoff(rng: &mut ChaCha8Rng) -> i32 {
    let steps = (THRESHOLD_GRID.end() - THRESHOLD_GRID.start()) / 5;
    THRESHOLD_GRID.start() + 5 * rng.gen_range(0..=steps)
}

/// Thresholds move only at election years; a non-election year shares the
/// threshold of the election that follows it.
fn planted_path(config: &WorldConfig, zone_index: usize) -> BTreeMap<i32, i32> {
    let mut rng = stream_rng(config.seed, STREAM_THRESHOLDS, zone_index as u64);
    let mut years = config.years.clone();
    years.sort_unstable();
    years.dedup();
    let mut elections: Vec<i32> = years.iter().copied().filter(|y| y % 2 == 0).collect();
    if elections.is_empty() {
        elections.push(years[years.len() - 1] + 1);
    }
    let mut by_election = BTreeMap::new();
    let mut current = None;
    for &e in &elections {
        let c = match (config.planted_threshold, current) {
            (Some(t), _) => t,
            (None, Some(c)) if !rng.gen_bool(config.threshold_change_prob) => c,
            (None, _) => random_grid_cutoff(&mut rng),
        };
        current = Some(c);
        by_election.insert(e, c);
    }
    years
        .iter()
        .map(|&y| {
            let c = by_election
                .range(y..)
                .next()
                .or_else(|| by_election.range(..y).next_back())
                .map(|(_, c)| *c)
                .expect("at least one election");
            (y, c)
        })
        .collect()
}

/// Person-year records of one zone, ordered by person then year.
pub fn generate_zone_credit(
    config: &WorldConfig,
    zone: &ZoneLayout,
    zone_index: usize,
) -> (Vec<CreditRecord>, BTreeMap<i32, i32>) {
    let path = planted_path(config, zone_index);
    let mut rng = stream_rng(config.seed, STREAM_CREDIT, zone_index as u64);
    let scores = ScoreProcess::new(config);
    let limit_noise = Normal::new(0.0, config.limit_noise_sd.max(0.0)).expect("limit sd");
    let county_dist = Normal::new(0.0, config.county_effect_sd.max(0.0)).expect("county sd");
    let county_effect: BTreeMap<CountyFips, f64> = zone
        .counties
        .iter()
        .map(|c| (*c, county_dist.sample(&mut rng)))
        .collect();

    let mut out = Vec::with_capacity(config.persons_per_cz * path.len());
    for p in 0..config.persons_per_cz {
        let (zcta, county, _) = zone.zctas[rng.gen_range(0..zone.zctas.len())];
        let base = scores.base(&mut rng);
        let person_id = ((zone.commuting_zone.0 as u64) << 32) | p as u64;
        for (&year, &cutoff) in &path {
            let score = scores.year_score(&mut rng, base, cutoff);
            let v = base_profile(score, -1e-5)
                + county_effect[&county]
                + if score >= cutoff {
                    config.planted_jump
                } else {
                    0.0
                }
                + limit_noise.sample(&mut rng);
            out.push(CreditRecord {
                person_id,
                year,
                credit_score: score as u16,
                total_credit_limit: v.sinh().max(0.0),
                zcta,
                county_fips: county,
                commuting_zone: zone.commuting_zone,
            });
        }
    }
    (out, path)
}

/// Full synthetic credit panel; zones are generated in parallel from
/// independent streams and concatenated in zone order.
pub fn generate_credit_panel(config: &WorldConfig) -> Result<CreditWorld> {
    let geography = generate_geography(config)?;
    let parts: Vec<_> = geography
        .zones
        .par_iter()
        .enumerate()
        .map(|(i, z)| generate_zone_credit(config, z, i))
        .collect();
    let mut records = Vec::with_capacity(parts.iter().map(|p| p.0.len()).sum());
    let mut planted = BTreeMap::new();
    for (zone, (recs, path)) in geography.zones.iter().zip(parts) {
        records.extend(recs);
        for (year, c) in path {
            planted.insert(
                ZoneYear {
                    commuting_zone: zone.commuting_zone,
                    year,
                },
                c,
            );
        }
    }
    Ok(CreditWorld {
        config: config.clone(),
        geography,
        records,
        planted,
    })
}

/// A single zone-year sample for threshold-recovery experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RdZoneSpec {
    pub n: usize,
    pub cutoff: i32,
    pub jump: f64,
    pub noise_sd: f64,
    /// Scores are uniform integers on this closed range.
    pub score_range: (i32, i32),
    pub counties: usize,
    pub county_effect_sd: f64,
    pub curvature: f64,
}

impl Default for RdZoneSpec {
    fn default() -> Self {
        RdZoneSpec {
            n: 2000,
            cutoff: 600,
            jump: 1.2,
            noise_sd: 0.3,
            score_range: (560, 660),
            counties: 1,
            county_effect_sd: 0.0,
            curvature: 0.0,
        }
    }
}

/// Draws `asinh(limit) = 9 + 0.01 (s - 600) + curvature (s - 600)^2 +
/// county effect + jump 1[s >= cutoff] + noise` for one zone-year.
pub fn rd_zone_sample(spec: &RdZoneSpec, rng: &mut ChaCha8Rng) -> Vec<CreditRecord> {
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).expect("noise sd");
    let county_dist = Normal::new(0.0, spec.county_effect_sd.max(0.0)).expect("county sd");
    let n_counties = spec.counties.max(1);
    let effects: Vec<f64> = (0..n_counties).map(|_| county_dist.sample(rng)).collect();
    let (lo, hi) = spec.score_range;
    (0..spec.n)
        .map(|i| {
            let score = rng
                .gen_range(lo..=hi)
                .clamp(MIN_SCORE as i32, MAX_SCORE as i32);
            let c = i % n_counties;
            let v = base_profile(score, spec.curvature)
                + effects[c]
                + if score >= spec.cutoff { spec.jump } else { 0.0 }
                + noise.sample(rng);
            CreditRecord {
                person_id: i as u64,
                year: 2012,
                credit_score: score as u16,
                total_credit_limit: v.sinh().max(0.0),
                zcta: Zcta(10_000 + c as u32),
                county_fips: CountyFips(1001 + 2 * c as u32),
                commuting_zone: CommutingZone(100),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            n_czs: 2,
            persons_per_cz: 300,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_credit_panel(&small()).unwrap();
        let b = generate_credit_panel(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 2 * 300 * 7);
        assert!(a.records.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn planted_thresholds_on_grid() {
        let w = generate_credit_panel(&small()).unwrap();
        assert!(w
            .planted
            .values()
            .all(|c| (560..=660).contains(c) && c % 5 == 0));
        assert_eq!(w.planted_thresholds().len(), 2 * 7);
    }

    #[test]
    fn odd_years_follow_next_election() {
        let cfg = WorldConfig {
            years: (2004..=2008).collect(),
            threshold_change_prob: 1.0,
            ..small()
        };
        let path = planted_path(&cfg, 0);
        assert_eq!(path[&2005], path[&2006]);
        assert_eq!(path[&2007], path[&2008]);
    }

    #[test]
    fn bunching_empties_the_band_below() {
        let cfg = WorldConfig {
            planted_threshold: Some(600),
            bunching: 1.0,
            ..small()
        };
        let w = generate_credit_panel(&cfg).unwrap();
        assert!(!w
            .records
            .iter()
            .any(|r| (590..600).contains(&r.credit_score)));
    }
}
