//! Shift-share import exposure and its comparison-country instrument.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base-period industry employment shares per region and import growth per
/// industry, for the US and for the comparison countries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShiftShareInputs {
    pub industry_shares: BTreeMap<String, BTreeMap<String, f64>>,
    pub us_import_growth: BTreeMap<String, f64>,
    pub other_import_growth: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionExposure {
    pub exposure: f64,
    pub instrument: f64,
}

/// `exposure_r = sum_j share_rj * dUS_j`, `instrument_r = sum_j share_rj * dOther_j`.
pub fn build_shift_share(inputs: &ShiftShareInputs) -> Result<BTreeMap<String, RegionExposure>> {
    let mut missing = BTreeSet::new();
    for shares in inputs.industry_shares.values() {
        for code in shares.keys() {
            if !inputs.us_import_growth.contains_key(code)
                || !inputs.other_import_growth.contains_key(code)
            {
                missing.insert(code.clone());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingIndustry {
            codes: missing.into_iter().collect(),
        });
    }
    let mut out = BTreeMap::new();
    for (region, shares) in &inputs.industry_shares {
        if shares.values().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Validation(format!(
                "region {region} has a negative or non-finite industry share"
            )));
        }
        let total: f64 = shares.values().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::Validation(format!(
                "industry shares of region {region} sum to {total} > 1"
            )));
        }
        let dot = |growth: &BTreeMap<String, f64>| -> f64 {
            shares.iter().map(|(j, s)| s * growth[j]).sum()
        };
        out.insert(
            region.clone(),
            RegionExposure {
                exposure: dot(&inputs.us_import_growth),
                instrument: dot(&inputs.other_import_growth),
            },
        );
    }
    Ok(out)
}
