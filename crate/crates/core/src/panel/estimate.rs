use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble_panel, ControlRecord, ElectionRecord, Outcome, Panel, PanelRow, Subset};
use crate::error::{Error, Result};
use crate::kernel::{
    absorb_fixed_effects, tsls_fit, wls_fit_with, ClusterSpec, Covariance, DesignMatrix,
    FitOptions, GroupLabels, RegressionResult, WaldTest,
};
use crate::shares::ShareRecord;

pub const SHARE_CLOSE: &str = "share_close";
pub const SHARE_ABOVE: &str = "share_above";
pub const SHARE_BELOW: &str = "share_below";
pub const SHARE_WHITE: &str = "share_white";
pub const SHARE_FEMALE: &str = "share_female";
pub const EXPOSURE: &str = "china_exposure";

/// Whether the threshold share enters whole or split at the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareSpec {
    Total,
    AboveBelow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationOptions {
    /// Instrument import exposure with the comparison-country shift-share.
    pub instrumented: bool,
    /// Absorb state-by-year instead of year effects.
    pub state_year_effects: bool,
    /// Keep only these election years.
    pub years: Option<Vec<i32>>,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            instrumented: true,
            state_year_effects: false,
            years: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEstimate {
    pub outcome: Outcome,
    pub subset: Subset,
    pub bandwidth: i32,
    pub spec: ShareSpec,
    pub instrumented: bool,
    #[serde(default)]
    pub state_year_effects: bool,
    pub result: RegressionResult,
    /// Test of equal above/below coefficients (split specification only).
    pub wald_above_below: Option<WaldTest>,
    /// Sum of the population weights.
    pub weighted_obs: f64,
    pub n_cells: usize,
    pub n_years: usize,
}

fn column(rows: &[PanelRow], f: impl Fn(&PanelRow) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

/// Fits the panel model on already-assembled rows.
pub fn estimate_panel(
    panel: &Panel,
    spec: ShareSpec,
    opts: &EstimationOptions,
) -> Result<PanelEstimate> {
    let rows: Vec<PanelRow> = match &opts.years {
        Some(years) => panel.restrict_years(years).rows,
        None => panel.rows.clone(),
    };
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let cells: BTreeSet<_> = rows.iter().map(|r| r.cell_id).collect();
    let years: BTreeSet<_> = rows.iter().map(|r| r.year).collect();
    if cells.len() < 2 {
        return Err(Error::TooFewClusters { found: cells.len() });
    }
    if years.len() < 2 {
        return Err(Error::Validation(format!(
            "panel needs at least two years, found {}",
            years.len()
        )));
    }

    let weights = column(&rows, |r| r.weight);
    let mut exog: Vec<(&str, Vec<f64>)> = match spec {
        ShareSpec::Total => vec![(SHARE_CLOSE, column(&rows, |r| r.share_total))],
        ShareSpec::AboveBelow => vec![
            (SHARE_ABOVE, column(&rows, |r| r.share_above)),
            (SHARE_BELOW, column(&rows, |r| r.share_below)),
        ],
    };
    exog.push((SHARE_WHITE, column(&rows, |r| r.share_white)));
    exog.push((SHARE_FEMALE, column(&rows, |r| r.share_female)));
    let k_exog = if opts.instrumented {
        exog.len()
    } else {
        exog.len() + 1
    };
    exog.push((EXPOSURE, column(&rows, |r| r.exposure)));
    if opts.instrumented {
        exog.push(("china_instrument", column(&rows, |r| r.instrument)));
    }
    let stacked = DesignMatrix::from_columns(exog, weights)?;
    let y = column(&rows, |r| r.outcome);

    let second = if opts.state_year_effects {
        rows.iter()
            .map(|r| (r.cell_id.county.state(), r.year))
            .collect::<Vec<_>>()
    } else {
        rows.iter().map(|r| (0, r.year)).collect()
    };
    let groups = GroupLabels::new()
        .with_dimension("cell", rows.iter().map(|r| r.cell_id))?
        .with_dimension(
            if opts.state_year_effects {
                "state_year"
            } else {
                "year"
            },
            second,
        )?;
    let absorbed = absorb_fixed_effects(&stacked, &y, &groups)?;
    let clusters = ClusterSpec::new(rows.iter().map(|r| r.cell_id));
    let fit_opts = FitOptions {
        nested_absorbed_dof: absorbed.nested_dof(&clusters),
        covariance: Covariance::Cr1(clusters),
        absorbed_dof: absorbed.absorbed_dof,
        total_sum_squares: Some(absorbed.total_sum_squares),
    };
    let mut result = if opts.instrumented {
        let idx: Vec<usize> = (0..k_exog).collect();
        let x = absorbed.x.select(&idx);
        let endog = absorbed.x.select(&[k_exog]);
        let instr = absorbed.x.select(&[k_exog + 1]);
        tsls_fit(&absorbed.y, &x, &endog, &instr, &fit_opts)?
    } else {
        wls_fit_with(&absorbed.x, &absorbed.y, &fit_opts)?.result
    };
    result.dep_var_mean = Some(absorbed.dep_var_mean);

    let wald_above_below = match spec {
        ShareSpec::AboveBelow => Some(result.wald_equal(SHARE_ABOVE, SHARE_BELOW)?),
        ShareSpec::Total => None,
    };
    Ok(PanelEstimate {
        outcome: panel.outcome,
        subset: panel.subset,
        bandwidth: panel.bandwidth,
        spec,
        instrumented: opts.instrumented,
        state_year_effects: opts.state_year_effects,
        result,
        wald_above_below,
        weighted_obs: rows.iter().map(|r| r.weight).sum(),
        n_cells: cells.len(),
        n_years: years.len(),
    })
}

/// Outcome on the total threshold share.
pub fn estimate_baseline(panel: &Panel, opts: &EstimationOptions) -> Result<PanelEstimate> {
    estimate_panel(panel, ShareSpec::Total, opts)
}

/// Outcome on the shares just above and just below the threshold, with a
/// test of equal effects.
pub fn estimate_above_below(panel: &Panel, opts: &EstimationOptions) -> Result<PanelEstimate> {
    estimate_panel(panel, ShareSpec::AboveBelow, opts)
}

/// Winner ideology on the total threshold share for a winner subset.
pub fn estimate_nominate(
    shares: &[ShareRecord],
    elections: &[ElectionRecord],
    controls: &[ControlRecord],
    subset: Subset,
    bandwidth: i32,
    opts: &EstimationOptions,
) -> Result<PanelEstimate> {
    let panel = assemble_panel(
        shares,
        elections,
        controls,
        bandwidth,
        Outcome::Nominate,
        subset,
    );
    estimate_baseline(&panel, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bandwidth: i32,
    pub estimate: PanelEstimate,
}

/// Re-estimates one specification at each bandwidth, in bandwidth order.
#[allow(clippy::too_many_arguments)]
pub fn bandwidth_sweep(
    shares: &[ShareRecord],
    elections: &[ElectionRecord],
    controls: &[ControlRecord],
    outcome: Outcome,
    subset: Subset,
    bandwidths: &[i32],
    spec: ShareSpec,
    opts: &EstimationOptions,
) -> Result<Vec<SweepRow>> {
    bandwidths
        .par_iter()
        .map(|&b| {
            let panel = assemble_panel(shares, elections, controls, b, outcome, subset);
            estimate_panel(&panel, spec, opts).map(|estimate| SweepRow {
                bandwidth: b,
                estimate,
            })
        })
        .collect()
}
