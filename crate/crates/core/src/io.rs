//! CSV and JSON interchange files. Every reader checks the header first and
//! reports missing or malformed columns by name.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{CcdCell, CommutingZone, CountyZoneRow, DistrictRow, RelationshipRow};
use crate::panel::{ControlRecord, ElectionRecord};
use crate::rd::{
    CreditRecord, CutoffEstimate, SkipRecord, ThresholdEstimate, MAX_SCORE, MIN_SCORE,
};
use crate::shares::ShareRecord;

/// A CSV file layout: conventional file name and ordered columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub file: &'static str,
    pub columns: &'static [&'static str],
}

pub const CREDIT_PANEL: Schema = Schema {
    file: "credit_panel.csv",
    columns: &[
        "person_id",
        "year",
        "credit_score",
        "total_limit",
        "zcta",
        "county_fips",
        "cz",
    ],
};
pub const ZCTA_COUNTY: Schema = Schema {
    file: "zcta_county.csv",
    columns: &["zcta", "county_fips", "pop"],
};
pub const ZCTA_CD: Schema = Schema {
    file: "zcta_cd.csv",
    columns: &["zcta", "cd", "congress"],
};
pub const COUNTY_CZ: Schema = Schema {
    file: "county_cz.csv",
    columns: &["county_fips", "cz"],
};
pub const CCD_CELLS: Schema = Schema {
    file: "ccd_cells.csv",
    columns: &["cell_id", "county_fips", "cd", "cz", "state"],
};
pub const PLANTED: Schema = Schema {
    file: "planted_thresholds.csv",
    columns: &["cz", "year", "cutoff"],
};
pub const CUTOFF_ESTIMATES: Schema = Schema {
    file: "cutoff_estimates.csv",
    columns: &[
        "cz", "year", "cutoff", "alpha", "se", "t", "n_left", "n_right",
    ],
};
pub const THRESHOLDS: Schema = Schema {
    file: "thresholds.csv",
    columns: &[
        "cz",
        "year",
        "cutoff",
        "alpha",
        "se",
        "t",
        "provenance",
        "source_year",
    ],
};
pub const SCAN_SKIPS: Schema = Schema {
    file: "scan_skips.csv",
    columns: &["cz", "year", "cutoff", "reason", "detail"],
};
pub const SHARES: Schema = Schema {
    file: "shares.csv",
    columns: &[
        "cell_id",
        "year",
        "bw",
        "share_tot",
        "share_above",
        "share_below",
        "pop",
    ],
};
pub const ELECTIONS: Schema = Schema {
    file: "elections.csv",
    columns: &[
        "cell_id",
        "year",
        "votes_rep",
        "votes_dem",
        "votes_other",
        "winner_party",
        "nominate1",
    ],
};
pub const CONTROLS: Schema = Schema {
    file: "controls.csv",
    columns: &[
        "cell_id",
        "year",
        "share_white",
        "share_female",
        "exposure",
        "instrument",
        "pop",
    ],
};
pub const ESTIMATES_JSON: &str = "estimates.json";

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

/// Reads rows of `T`, requiring every column of `schema` in the header.
/// Extra columns are ignored.
pub fn read_rows<T: DeserializeOwned>(path: &Path, schema: &Schema) -> Result<Vec<T>> {
    let file = File::open(path)?;
    read_rows_from(BufReader::new(file), &file_label(path), schema)
}

pub fn read_rows_from<T: DeserializeOwned, R: Read>(
    reader: R,
    label: &str,
    schema: &Schema,
) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in schema.columns {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::schema(label, format!("missing column `{col}`")));
        }
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row.map_err(|e| named_column_error(e, &headers, label))?);
    }
    Ok(out)
}

fn named_column_error(e: csv::Error, headers: &csv::StringRecord, label: &str) -> Error {
    let line = e.position().map(|p| p.line());
    let at = line.map(|l| format!(" on line {l}")).unwrap_or_default();
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            let column = err
                .field()
                .and_then(|i| headers.get(i as usize))
                .unwrap_or("?");
            Error::schema(label, format!("column `{column}`{at}: {}", err.kind()))
        }
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::schema(
            label,
            format!("row{at} has {len} fields, header has {expected_len}"),
        ),
        _ => Error::Csv(e),
    }
}

/// Writes `rows` under the schema header (also for an empty slice). The
/// field order of `T` must match the schema.
pub fn write_rows<T: Serialize>(path: &Path, schema: &Schema, rows: &[T]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_rows_to(&mut file, schema, rows)?;
    file.flush()?;
    Ok(())
}

pub fn write_rows_to<T: Serialize, W: Write>(writer: W, schema: &Schema, rows: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    wtr.write_record(schema.columns)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Planted threshold of a synthetic zone-year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedRow {
    pub cz: CommutingZone,
    pub year: i32,
    pub cutoff: i32,
}

/// Flat form of a [`SkipRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRow {
    pub cz: CommutingZone,
    pub year: i32,
    pub cutoff: Option<i32>,
    pub reason: String,
    pub detail: String,
}

impl From<&SkipRecord> for SkipRow {
    fn from(s: &SkipRecord) -> Self {
        let reason = match &s.reason {
            crate::rd::SkipReason::InsufficientObservations { .. } => "insufficient_observations",
            crate::rd::SkipReason::OneSided { .. } => "one_sided",
            crate::rd::SkipReason::ThinSupport { .. } => "thin_support",
            crate::rd::SkipReason::RankDeficient { .. } => "rank_deficient",
            crate::rd::SkipReason::EstimationFailed { .. } => "estimation_failed",
        };
        SkipRow {
            cz: s.zone_year.commuting_zone,
            year: s.zone_year.year,
            cutoff: s.cutoff,
            reason: reason.into(),
            detail: s.reason.to_string(),
        }
    }
}

/// Credit records plus the number of rows dropped for scores outside
/// [300, 850]. Other invalid values are schema errors.
pub fn read_credit_panel(path: &Path) -> Result<(Vec<CreditRecord>, usize)> {
    let rows: Vec<CreditRecord> = read_rows(path, &CREDIT_PANEL)?;
    let mut kept = Vec::with_capacity(rows.len());
    let mut dropped = 0;
    for (i, r) in rows.into_iter().enumerate() {
        if !(MIN_SCORE..=MAX_SCORE).contains(&r.credit_score) {
            dropped += 1;
            continue;
        }
        r.validate()
            .map_err(|e| Error::schema(file_label(path), format!("row {}: {e}", i + 2)))?;
        kept.push(r);
    }
    Ok((kept, dropped))
}

pub fn write_credit_panel(path: &Path, rows: &[CreditRecord]) -> Result<()> {
    write_rows(path, &CREDIT_PANEL, rows)
}

pub fn read_relationships(path: &Path) -> Result<Vec<RelationshipRow>> {
    read_rows(path, &ZCTA_COUNTY)
}

pub fn read_districts(path: &Path) -> Result<Vec<DistrictRow>> {
    read_rows(path, &ZCTA_CD)
}

pub fn read_county_zones(path: &Path) -> Result<Vec<CountyZoneRow>> {
    read_rows(path, &COUNTY_CZ)
}

pub fn write_cells(path: &Path, cells: &[CcdCell]) -> Result<()> {
    write_rows(path, &CCD_CELLS, cells)
}

pub fn read_thresholds(path: &Path) -> Result<Vec<ThresholdEstimate>> {
    read_rows(path, &THRESHOLDS)
}

pub fn write_thresholds(path: &Path, rows: &[ThresholdEstimate]) -> Result<()> {
    write_rows(path, &THRESHOLDS, rows)
}

pub fn write_cutoff_estimates(path: &Path, rows: &[CutoffEstimate]) -> Result<()> {
    write_rows(path, &CUTOFF_ESTIMATES, rows)
}

pub fn write_skips(path: &Path, rows: &[SkipRecord]) -> Result<()> {
    let flat: Vec<SkipRow> = rows.iter().map(SkipRow::from).collect();
    write_rows(path, &SCAN_SKIPS, &flat)
}

pub fn read_shares(path: &Path) -> Result<Vec<ShareRecord>> {
    let rows: Vec<ShareRecord> = read_rows(path, &SHARES)?;
    for (i, r) in rows.iter().enumerate() {
        let parts = [r.share_total, r.share_above, r.share_below];
        if parts.iter().flatten().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::schema(
                file_label(path),
                format!("row {}: share outside [0, 1]", i + 2),
            ));
        }
    }
    Ok(rows)
}

pub fn write_shares(path: &Path, rows: &[ShareRecord]) -> Result<()> {
    write_rows(path, &SHARES, rows)
}

pub fn read_elections(path: &Path) -> Result<Vec<ElectionRecord>> {
    let rows: Vec<ElectionRecord> = read_rows(path, &ELECTIONS)?;
    for (i, r) in rows.iter().enumerate() {
        r.validate()
            .map_err(|e| Error::schema(file_label(path), format!("row {}: {e}", i + 2)))?;
    }
    Ok(rows)
}

pub fn write_elections(path: &Path, rows: &[ElectionRecord]) -> Result<()> {
    write_rows(path, &ELECTIONS, rows)
}

pub fn read_controls(path: &Path) -> Result<Vec<ControlRecord>> {
    read_rows(path, &CONTROLS)
}

pub fn write_controls(path: &Path, rows: &[ControlRecord]) -> Result<()> {
    write_rows(path, &CONTROLS, rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
