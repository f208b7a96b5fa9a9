use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::credit::CreditWorld;
use super::{stream_rng, STREAM_ELECTION, STREAM_TRADE};
use crate::error::Result;
use crate::geo::CellId;
use crate::panel::{build_shift_share, ControlRecord, ElectionRecord, Party, ShiftShareInputs};
use crate::shares::{compute_shares, ShareRecord, BANDWIDTHS};

const INDUSTRIES: [&str; 4] = ["3111", "3152", "3341", "3361"];
const WHITE_CENTER: f64 = 0.7;
const FEMALE_CENTER: f64 = 0.51;
const REP_BASE: f64 = 0.45;

/// Election outcomes and covariates generated on top of a credit world,
/// together with the shares at the planted thresholds that drive them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionWorld {
    pub shares: Vec<ShareRecord>,
    pub elections: Vec<ElectionRecord>,
    pub controls: Vec<ControlRecord>,
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd.max(0.0)).expect("finite sd")
}

/// Import exposure and its instrument per (zone, election year) from four
/// industries with zone-specific employment shares. Comparison-country
/// growth follows an industry trend; US growth tracks it with noise.
fn trade_exposure(world: &CreditWorld, years: &[i32]) -> Result<BTreeMap<(u32, i32), (f64, f64)>> {
    let mut rng = stream_rng(world.config.seed, STREAM_TRADE, 0);
    let trends: Vec<f64> = INDUSTRIES.iter().map(|_| rng.gen_range(0.2..1.5)).collect();
    let mut industry_shares = BTreeMap::new();
    for zone in &world.geography.zones {
        let raw: Vec<f64> = INDUSTRIES.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let manufacturing = rng.gen_range(0.05..0.45);
        industry_shares.insert(
            zone.commuting_zone.to_string(),
            INDUSTRIES
                .iter()
                .zip(&raw)
                .map(|(k, r)| (k.to_string(), manufacturing * r / total))
                .collect(),
        );
    }
    let first = years.iter().copied().min().unwrap_or(0);
    let mut out = BTreeMap::new();
    for &year in years {
        let elapsed = (year - first) as f64 / 2.0;
        let mut other = BTreeMap::new();
        let mut us = BTreeMap::new();
        for (k, trend) in INDUSTRIES.iter().zip(&trends) {
            let g = trend * elapsed + 0.1 * rng.gen_range(-1.0..1.0);
            other.insert(k.to_string(), g);
            us.insert(k.to_string(), 0.8 * g + 0.05 * rng.gen_range(-1.0..1.0));
        }
        let exposures = build_shift_share(&ShiftShareInputs {
            industry_shares: industry_shares.clone(),
            us_import_growth: us,
            other_import_growth: other,
        })?;
        for zone in &world.geography.zones {
            let e = exposures[&zone.commuting_zone.to_string()];
            out.insert((zone.commuting_zone.0, year), (e.exposure, e.instrument));
        }
    }
    Ok(out)
}

/// Draws House results, ideology scores and controls for every cell and
/// election year of `world`.
///
/// The Republican share is `0.45 + cell + year + beta * share_total +
/// gamma_white (white - 0.7) + gamma_female (female - 0.51) + gamma_china
/// exposure + u`, clipped to [0, 1], where the shock `u` is correlated with
/// the local exposure shock. The winner's ideology is `cell + year +
/// nominate_shift * share_total + e`, clipped to [-1, 1].
pub fn generate_election_panel(world: &CreditWorld) -> Result<ElectionWorld> {
    let dgp = &world.config.vote_dgp;
    let years = world.config.election_years();
    let geography = world.geography.build()?;
    let shares = compute_shares(
        &world.records,
        &world.planted_thresholds(),
        &geography,
        &BANDWIDTHS,
        &years,
    )
    .records;
    let trade = trade_exposure(world, &years)?;

    let mut rng = stream_rng(world.config.seed, STREAM_ELECTION, 0);
    let std = normal(1.0);
    let year_fx: BTreeMap<i32, (f64, f64)> = years
        .iter()
        .map(|&y| {
            (
                y,
                (
                    dgp.year_effect_sd * std.sample(&mut rng),
                    0.1 * std.sample(&mut rng),
                ),
            )
        })
        .collect();
    let cells: Vec<CellId> = geography.cells.keys().copied().collect();
    let cell_fx: BTreeMap<CellId, (f64, f64, f64, f64)> = cells
        .iter()
        .map(|c| {
            (
                *c,
                (
                    dgp.cell_effect_sd * std.sample(&mut rng),
                    dgp.nominate_cell_sd * std.sample(&mut rng),
                    rng.gen_range(0.5..0.9),
                    rng.gen_range(0.48..0.54),
                ),
            )
        })
        .collect();
    let measured: BTreeMap<(CellId, i32), &ShareRecord> = shares
        .iter()
        .filter(|s| s.bandwidth == dgp.bandwidth)
        .map(|s| ((s.cell_id, s.year), s))
        .collect();

    let rho = dgp.confounding;
    let mut elections = Vec::with_capacity(cells.len() * years.len());
    let mut controls = Vec::with_capacity(cells.len() * years.len());
    for cell in &cells {
        let zone = geography.cells[cell].commuting_zone;
        let (a_rep, a_nom, white0, female0) = cell_fx[cell];
        for &year in &years {
            let (b_rep, b_nom) = year_fx[&year];
            let (exposure_zone, instrument) = trade[&(zone.0, year)];
            let e1 = std.sample(&mut rng);
            let e2 = std.sample(&mut rng);
            let exposure = exposure_zone + dgp.exposure_shock_sd * e1;
            let u = dgp.noise_sd * (rho * e1 + (1.0 - rho * rho).sqrt() * e2);
            let white = (white0 + 0.02 * std.sample(&mut rng)).clamp(0.0, 1.0);
            let female = (female0 + 0.005 * std.sample(&mut rng)).clamp(0.0, 1.0);
            let share = measured.get(&(*cell, year));
            let population = share.map_or(0, |s| s.cell_population);
            let (s_tot, s_above, s_below) = share.map_or((0.0, 0.0, 0.0), |s| {
                (
                    s.share_total.unwrap_or(0.0),
                    s.share_above.unwrap_or(0.0),
                    s.share_below.unwrap_or(0.0),
                )
            });
            let share_effect = match dgp.beta_above_below {
                Some((ba, bb)) => ba * s_above + bb * s_below,
                None => dgp.beta_share * s_tot,
            };
            let rep = (REP_BASE
                + a_rep
                + b_rep
                + share_effect
                + dgp.gamma_white * (white - WHITE_CENTER)
                + dgp.gamma_female * (female - FEMALE_CENTER)
                + dgp.gamma_china * exposure
                + u)
                .clamp(0.0, 1.0);
            let other = if dgp.other_share_max > 0.0 {
                rng.gen_range(0.0..dgp.other_share_max).min(1.0 - rep)
            } else {
                0.0
            };
            let total = population.max(1) * dgp.votes_per_person.max(1);
            let votes_rep = (rep * total as f64).round() as u64;
            let votes_other = ((other * total as f64).round() as u64).min(total - votes_rep);
            let votes_dem = total - votes_rep - votes_other;
            let winner_party = if votes_rep > votes_dem {
                Party::R
            } else {
                Party::D
            };
            let nominate = (a_nom
                + b_nom
                + dgp.nominate_shift * s_tot
                + dgp.nominate_noise_sd * std.sample(&mut rng))
            .clamp(-1.0, 1.0);
            elections.push(ElectionRecord {
                cell_id: *cell,
                year,
                votes_rep,
                votes_dem,
                votes_other,
                winner_party,
                winner_nominate_dim1: Some(nominate),
            });
            controls.push(ControlRecord {
                cell_id: *cell,
                year,
                share_white: white,
                share_female: female,
                exposure,
                instrument,
                pop: (population * 100) as f64,
            });
        }
    }
    Ok(ElectionWorld {
        shares,
        elections,
        controls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{assemble_panel, estimate_baseline, EstimationOptions, Outcome, Subset};
    use crate::synth::{generate_credit_panel, VoteDgp, WorldConfig};

    #[test]
    fn noiseless_world_recovers_exactly() {
        let cfg = WorldConfig {
            n_czs: 6,
            persons_per_cz: 400,
            vote_dgp: VoteDgp {
                cell_effect_sd: 0.0,
                year_effect_sd: 0.0,
                noise_sd: 0.0,
                other_share_max: 0.0,
                confounding: 0.0,
                votes_per_person: 10_000_000_000_000,
                ..VoteDgp::default()
            },
            ..WorldConfig::default()
        };
        let world = generate_credit_panel(&cfg).unwrap();
        let ew = generate_election_panel(&world).unwrap();
        let panel = assemble_panel(
            &ew.shares,
            &ew.elections,
            &ew.controls,
            15,
            Outcome::RepShare,
            Subset::All,
        );
        let est = estimate_baseline(
            &panel,
            &EstimationOptions {
                instrumented: false,
                ..EstimationOptions::default()
            },
        )
        .unwrap();
        let b = est.result.coefficient("share_close").unwrap();
        assert!((b - 0.27).abs() < 1e-10, "{b}");
    }

    #[test]
    fn votes_partition_total() {
        let cfg = WorldConfig {
            n_czs: 2,
            persons_per_cz: 300,
            ..WorldConfig::default()
        };
        let world = generate_credit_panel(&cfg).unwrap();
        let ew = generate_election_panel(&world).unwrap();
        assert_eq!(ew.elections.len(), 2 * 6 * 7);
        for e in &ew.elections {
            assert!(e.rep_share().unwrap() <= 1.0);
            assert!(e.validate().is_ok());
        }
    }
}
