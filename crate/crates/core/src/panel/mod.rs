//! Vote-share and ideology panel regressions on threshold shares with
//! cell and year fixed effects, demographic controls, instrumented import
//! exposure, population weights and cell-clustered errors.

mod estimate;
mod report;
mod shift_share;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::CellId;
use crate::shares::ShareRecord;

pub use estimate::{
    bandwidth_sweep, estimate_above_below, estimate_baseline, estimate_nominate, estimate_panel,
    EstimationOptions, PanelEstimate, ShareSpec, SweepRow, EXPOSURE, SHARE_ABOVE, SHARE_BELOW,
    SHARE_CLOSE, SHARE_FEMALE, SHARE_WHITE,
};
pub use report::{render_estimate_table, render_sweep_table, significance_stars};
pub use shift_share::{build_shift_share, RegionExposure, ShiftShareInputs};

/// Election years whose House maps were drawn after the 2010 census.
pub const GERRYMANDER_YEARS: [i32; 3] = [2012, 2014, 2016];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    R,
    D,
    #[serde(rename = "other")]
    Other,
}

/// House election outcome in a cell-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectionRecord {
    pub cell_id: CellId,
    pub year: i32,
    pub votes_rep: u64,
    pub votes_dem: u64,
    pub votes_other: u64,
    pub winner_party: Party,
    #[serde(rename = "nominate1")]
    pub winner_nominate_dim1: Option<f64>,
}

impl ElectionRecord {
    pub fn total_votes(&self) -> u64 {
        self.votes_rep + self.votes_dem + self.votes_other
    }

    /// Party votes over all votes cast, third parties included.
    pub fn rep_share(&self) -> Option<f64> {
        let t = self.total_votes();
        (t > 0).then(|| self.votes_rep as f64 / t as f64)
    }

    pub fn dem_share(&self) -> Option<f64> {
        let t = self.total_votes();
        (t > 0).then(|| self.votes_dem as f64 / t as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.winner_nominate_dim1 {
            if !(-1.0..=1.0).contains(&n) {
                return Err(Error::Validation(format!(
                    "nominate score {n} outside [-1, 1] for {} {}",
                    self.cell_id, self.year
                )));
            }
        }
        Ok(())
    }
}

/// Time-varying cell covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub cell_id: CellId,
    pub year: i32,
    pub share_white: f64,
    pub share_female: f64,
    pub exposure: f64,
    pub instrument: f64,
    /// Census population of the cell (not used as the regression weight).
    pub pop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    RepShare,
    DemShare,
    Nominate,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::RepShare => "Rep",
            Outcome::DemShare => "Dem",
            Outcome::Nominate => "DW-NOMINATE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    #[default]
    All,
    RepWinning,
    DemWinning,
}

impl Subset {
    fn keeps(self, party: Party) -> bool {
        match self {
            Subset::All => true,
            Subset::RepWinning => party == Party::R,
            Subset::DemWinning => party == Party::D,
        }
    }
}

/// One cell-year observation of the estimation panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub cell_id: CellId,
    pub year: i32,
    pub outcome: f64,
    pub share_total: f64,
    pub share_above: f64,
    pub share_below: f64,
    pub share_white: f64,
    pub share_female: f64,
    pub exposure: f64,
    pub instrument: f64,
    pub weight: f64,
    pub winner_party: Party,
}

/// Counts of rows dropped while joining the panel inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelDrops {
    pub null_shares: usize,
    pub zero_weight: usize,
    pub missing_election: usize,
    pub missing_controls: usize,
    pub missing_outcome: usize,
    pub outside_subset: usize,
}

/// Estimation panel for one outcome, winner subset and bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub rows: Vec<PanelRow>,
    pub outcome: Outcome,
    pub subset: Subset,
    pub bandwidth: i32,
    pub drops: PanelDrops,
}

impl Panel {
    /// Keeps only the given election years.
    pub fn restrict_years(&self, years: &[i32]) -> Panel {
        Panel {
            rows: self
                .rows
                .iter()
                .filter(|r| years.contains(&r.year))
                .copied()
                .collect(),
            ..self.clone()
        }
    }
}

/// Keeps the 2012, 2014 and 2016 elections, fought on fixed district maps.
pub fn gerrymander_window(panel: &Panel) -> Panel {
    panel.restrict_years(&GERRYMANDER_YEARS)
}

/// Joins shares at `bandwidth` with elections and controls on (cell, year).
/// Rows without shares, weight, outcome or covariates are dropped.
pub fn assemble_panel(
    shares: &[ShareRecord],
    elections: &[ElectionRecord],
    controls: &[ControlRecord],
    bandwidth: i32,
    outcome: Outcome,
    subset: Subset,
) -> Panel {
    let elections: BTreeMap<(CellId, i32), &ElectionRecord> =
        elections.iter().map(|e| ((e.cell_id, e.year), e)).collect();
    let controls: BTreeMap<(CellId, i32), &ControlRecord> =
        controls.iter().map(|c| ((c.cell_id, c.year), c)).collect();
    let mut drops = PanelDrops::default();
    let mut rows = Vec::new();
    let mut shares: Vec<&ShareRecord> =
        shares.iter().filter(|s| s.bandwidth == bandwidth).collect();
    shares.sort_by_key(|s| (s.cell_id, s.year));
    for s in shares {
        let (Some(total), Some(above), Some(below)) = (s.share_total, s.share_above, s.share_below)
        else {
            drops.null_shares += 1;
            continue;
        };
        if s.cell_population == 0 {
            drops.zero_weight += 1;
            continue;
        }
        let Some(e) = elections.get(&(s.cell_id, s.year)) else {
            drops.missing_election += 1;
            continue;
        };
        let Some(c) = controls.get(&(s.cell_id, s.year)) else {
            drops.missing_controls += 1;
            continue;
        };
        if !subset.keeps(e.winner_party) {
            drops.outside_subset += 1;
            continue;
        }
        let y = match outcome {
            Outcome::RepShare => e.rep_share(),
            Outcome::DemShare => e.dem_share(),
            Outcome::Nominate => e.winner_nominate_dim1,
        };
        let Some(y) = y else {
            drops.missing_outcome += 1;
            continue;
        };
        rows.push(PanelRow {
            cell_id: s.cell_id,
            year: s.year,
            outcome: y,
            share_total: total,
            share_above: above,
            share_below: below,
            share_white: c.share_white,
            share_female: c.share_female,
            exposure: c.exposure,
            instrument: c.instrument,
            weight: s.cell_population as f64,
            winner_party: e.winner_party,
        });
    }
    Panel {
        rows,
        outcome,
        subset,
        bandwidth,
        drops,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{CongressionalDistrict, CountyFips};

    fn row(year: i32) -> PanelRow {
        PanelRow {
            cell_id: CellId {
                county: CountyFips(1001),
                district: CongressionalDistrict(101),
            },
            year,
            outcome: 0.5,
            share_total: 0.1,
            share_above: 0.05,
            share_below: 0.05,
            share_white: 0.7,
            share_female: 0.51,
            exposure: 1.0,
            instrument: 1.0,
            weight: 10.0,
            winner_party: Party::R,
        }
    }

    #[test]
    fn gerrymander_window_keeps_three_years() {
        let panel = Panel {
            rows: (2004..=2016).step_by(2).map(row).collect(),
            outcome: Outcome::RepShare,
            subset: Subset::All,
            bandwidth: 15,
            drops: PanelDrops::default(),
        };
        let w = gerrymander_window(&panel);
        let years: Vec<i32> = w.rows.iter().map(|r| r.year).collect();
        assert_eq!(years, vec![2012, 2014, 2016]);
        assert_eq!(gerrymander_window(&w), w);
    }

    #[test]
    fn vote_shares_include_third_parties() {
        let e = ElectionRecord {
            cell_id: row(2010).cell_id,
            year: 2010,
            votes_rep: 45,
            votes_dem: 50,
            votes_other: 5,
            winner_party: Party::D,
            winner_nominate_dim1: Some(-0.3),
        };
        assert_eq!(e.rep_share(), Some(0.45));
        assert_eq!(e.dem_share(), Some(0.5));
        let bad = ElectionRecord {
            winner_nominate_dim1: Some(1.5),
            ..e
        };
        assert!(bad.validate().is_err());
    }
}
