//! Staged, file-based pipeline: simulate, scan, shares, estimate, report.
//!
//! Each stage reads the previous stage's files from the output directory
//! (or the configured input paths), writes its own files, and records a
//! manifest with the SHA-256 of every input and output plus the hash of
//! the effective configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::Geography;
use crate::io::{self, PlantedRow};
use crate::panel::{
    assemble_panel, bandwidth_sweep, estimate_panel, render_estimate_table, render_sweep_table,
    EstimationOptions, Outcome, PanelEstimate, ShareSpec, Subset, SweepRow, GERRYMANDER_YEARS,
};
use crate::rd::{scan_zone_years, CreditRecord, RdConfig, ScanReport};
use crate::shares::{compute_shares, render_share_table, summarize_shares, BANDWIDTHS};
use crate::synth::{
    generate_credit_panel, generate_election_panel, generate_geography, generate_zone_credit,
    WorldConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Scan,
    Shares,
    Estimate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Simulate,
        Stage::Scan,
        Stage::Shares,
        Stage::Estimate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Scan => "scan",
            Stage::Shares => "shares",
            Stage::Estimate => "estimate",
            Stage::Report => "report",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Input files; unset paths default to the output directory, where earlier
/// stages write them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    pub credit_panel: Option<PathBuf>,
    pub zcta_county: Option<PathBuf>,
    pub zcta_cd: Option<PathBuf>,
    pub county_cz: Option<PathBuf>,
    pub elections: Option<PathBuf>,
    pub controls: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationSettings {
    /// Bandwidth of the headline tables.
    pub bandwidth: i32,
    pub instrumented: bool,
    pub state_year_effects: bool,
    /// Election years to keep; `None` keeps all.
    pub years: Option<Vec<i32>>,
    /// Shorthand for keeping 2012, 2014 and 2016 only.
    pub gerrymander_window: bool,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            bandwidth: 15,
            instrumented: true,
            state_year_effects: false,
            years: None,
            gerrymander_window: false,
        }
    }
}

impl EstimationSettings {
    pub fn options(&self) -> EstimationOptions {
        let years = if self.gerrymander_window {
            Some(GERRYMANDER_YEARS.to_vec())
        } else {
            self.years.clone()
        };
        EstimationOptions {
            instrumented: self.instrumented,
            state_year_effects: self.state_year_effects,
            years,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    pub bandwidths: Vec<i32>,
    pub rd: RdConfig,
    pub estimation: EstimationSettings,
    pub world: WorldConfig,
    /// Overrides `world.seed` when set.
    pub seed: Option<u64>,
    /// Worker threads; all cores when unset.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            inputs: InputPaths::default(),
            bandwidths: BANDWIDTHS.to_vec(),
            rd: RdConfig::default(),
            estimation: EstimationSettings::default(),
            world: WorldConfig::default(),
            seed: None,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::Config("at least one bandwidth is required".into()));
        }
        for b in self.bandwidths.iter().chain([&self.estimation.bandwidth]) {
            if !BANDWIDTHS.contains(b) {
                return Err(Error::Config(format!(
                    "bandwidth {b} is not one of {BANDWIDTHS:?}"
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        self.rd
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.effective_world().validate()
    }

    /// World configuration with the seed override applied.
    pub fn effective_world(&self) -> WorldConfig {
        let mut w = self.world.clone();
        if let Some(s) = self.seed {
            w.seed = s;
        }
        w
    }

    fn input(&self, set: &Option<PathBuf>, file: &str) -> PathBuf {
        set.clone().unwrap_or_else(|| self.out_dir.join(file))
    }

    pub fn credit_panel_path(&self) -> PathBuf {
        self.input(&self.inputs.credit_panel, io::CREDIT_PANEL.file)
    }

    pub fn zcta_county_path(&self) -> PathBuf {
        self.input(&self.inputs.zcta_county, io::ZCTA_COUNTY.file)
    }

    pub fn zcta_cd_path(&self) -> PathBuf {
        self.input(&self.inputs.zcta_cd, io::ZCTA_CD.file)
    }

    pub fn county_cz_path(&self) -> PathBuf {
        self.input(&self.inputs.county_cz, io::COUNTY_CZ.file)
    }

    pub fn elections_path(&self) -> PathBuf {
        self.input(&self.inputs.elections, io::ELECTIONS.file)
    }

    pub fn controls_path(&self) -> PathBuf {
        self.input(&self.inputs.controls, io::CONTROLS.file)
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    /// Runs `f` on a pool of the configured size.
    pub fn with_workers<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = fs::File::open(path)?;
    std::io::copy(&mut file, &mut hasher)?;
    let mut s = String::with_capacity(64);
    for b in hasher.finalize() {
        let _ = write!(s, "{b:02x}");
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
            bytes: fs::metadata(path)?.len(),
        })
    }
}

/// Provenance record written next to each stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn file_name(stage: Stage) -> String {
        format!("manifest_{}.json", stage.name())
    }
}

fn write_manifest(
    cfg: &PipelineConfig,
    stage: Stage,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let mut config = serde_json::to_value(cfg)?;
    if let Some(obj) = config.as_object_mut() {
        // Outputs must not depend on the pool size.
        obj.remove("workers");
    }
    let canonical = serde_json::to_vec(&config)?;
    let manifest = Manifest {
        stage: stage.name().into(),
        version: VERSION.into(),
        seed: cfg.effective_world().seed,
        config_sha256: sha256_hex(&canonical),
        config,
        inputs: inputs
            .iter()
            .map(|p| FileDigest::of(p))
            .collect::<Result<_>>()?,
        outputs: outputs
            .iter()
            .map(|p| FileDigest::of(p))
            .collect::<Result<_>>()?,
    };
    let path = cfg.output(&Manifest::file_name(stage));
    io::write_json(&path, &manifest)?;
    Ok(path)
}

fn require(stage: Stage, path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingStage {
            stage: stage.name().into(),
            path,
        })
    }
}

/// Outputs of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRun {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn prepare_out(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

/// Writes a synthetic world: credit panel, crosswalk inputs, elections,
/// controls and the planted thresholds.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<StageRun> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let world_cfg = cfg.effective_world();
    let (world, ew) = cfg.with_workers(|| -> Result<_> {
        let world = generate_credit_panel(&world_cfg)?;
        let ew = generate_election_panel(&world)?;
        Ok((world, ew))
    })??;
    let planted: Vec<PlantedRow> = world
        .planted
        .iter()
        .map(|(k, c)| PlantedRow {
            cz: k.commuting_zone,
            year: k.year,
            cutoff: *c,
        })
        .collect();
    let out = |f: &str| cfg.output(f);
    io::write_credit_panel(&out(io::CREDIT_PANEL.file), &world.records)?;
    io::write_rows(
        &out(io::ZCTA_COUNTY.file),
        &io::ZCTA_COUNTY,
        &world.geography.relationships,
    )?;
    io::write_rows(
        &out(io::ZCTA_CD.file),
        &io::ZCTA_CD,
        &world.geography.districts,
    )?;
    io::write_rows(
        &out(io::COUNTY_CZ.file),
        &io::COUNTY_CZ,
        &world.geography.county_zones,
    )?;
    io::write_elections(&out(io::ELECTIONS.file), &ew.elections)?;
    io::write_controls(&out(io::CONTROLS.file), &ew.controls)?;
    io::write_rows(&out(io::PLANTED.file), &io::PLANTED, &planted)?;
    let outputs: Vec<PathBuf> = [
        io::CREDIT_PANEL.file,
        io::ZCTA_COUNTY.file,
        io::ZCTA_CD.file,
        io::COUNTY_CZ.file,
        io::ELECTIONS.file,
        io::CONTROLS.file,
        io::PLANTED.file,
    ]
    .iter()
    .map(|f| out(f))
    .collect();
    let manifest = write_manifest(cfg, Stage::Simulate, &[], &outputs)?;
    Ok(StageRun {
        stage: Stage::Simulate,
        outputs,
        manifest,
    })
}

fn election_years_of(records: &[CreditRecord]) -> Vec<i32> {
    let years: BTreeSet<i32> = records
        .iter()
        .map(|r| r.year)
        .filter(|y| y % 2 == 0)
        .collect();
    years.into_iter().collect()
}

/// Scans every zone in every election year and writes the selected and
/// imputed thresholds, all cutoff estimates and the skip log.
pub fn cmd_scan(cfg: &PipelineConfig) -> Result<StageRun> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let credit = require(Stage::Simulate, cfg.credit_panel_path())?;
    let (records, _) = io::read_credit_panel(&credit)?;
    let years = election_years_of(&records);
    let report = cfg.with_workers(|| scan_zone_years(&records, &cfg.rd, &years))?;
    write_scan(cfg, &report)?;
    let outputs = scan_outputs(cfg);
    let manifest = write_manifest(cfg, Stage::Scan, &[credit], &outputs)?;
    Ok(StageRun {
        stage: Stage::Scan,
        outputs,
        manifest,
    })
}

fn scan_outputs(cfg: &PipelineConfig) -> Vec<PathBuf> {
    [
        io::THRESHOLDS.file,
        io::CUTOFF_ESTIMATES.file,
        io::SCAN_SKIPS.file,
    ]
    .iter()
    .map(|f| cfg.output(f))
    .collect()
}

fn write_scan(cfg: &PipelineConfig, report: &ScanReport) -> Result<()> {
    io::write_thresholds(&cfg.output(io::THRESHOLDS.file), &report.thresholds)?;
    io::write_cutoff_estimates(&cfg.output(io::CUTOFF_ESTIMATES.file), &report.estimates)?;
    io::write_skips(&cfg.output(io::SCAN_SKIPS.file), &report.skips)?;
    Ok(())
}

const SHARE_SUMMARY: &str = "share_summary.txt";
const SHARE_LOG: &str = "share_log.txt";

fn load_geography(cfg: &PipelineConfig) -> Result<(Geography, Vec<PathBuf>)> {
    let paths = vec![
        require(Stage::Simulate, cfg.zcta_county_path())?,
        require(Stage::Simulate, cfg.zcta_cd_path())?,
        require(Stage::Simulate, cfg.county_cz_path())?,
    ];
    let geo = Geography::build(
        &io::read_relationships(&paths[0])?,
        &io::read_districts(&paths[1])?,
        &io::read_county_zones(&paths[2])?,
    )?;
    Ok((geo, paths))
}

/// Builds the county-by-district cells and the threshold shares.
pub fn cmd_shares(cfg: &PipelineConfig) -> Result<StageRun> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let credit = require(Stage::Simulate, cfg.credit_panel_path())?;
    let thresholds_path = require(Stage::Scan, cfg.output(io::THRESHOLDS.file))?;
    let (geo, mut inputs) = load_geography(cfg)?;
    let (records, out_of_range) = io::read_credit_panel(&credit)?;
    let thresholds = io::read_thresholds(&thresholds_path)?;
    let years = election_years_of(&records);
    let build =
        cfg.with_workers(|| compute_shares(&records, &thresholds, &geo, &cfg.bandwidths, &years))?;

    let cells: Vec<_> = geo.cells.values().copied().collect();
    io::write_cells(&cfg.output(io::CCD_CELLS.file), &cells)?;
    io::write_shares(&cfg.output(io::SHARES.file), &build.records)?;
    fs::write(
        cfg.output(SHARE_SUMMARY),
        render_share_table(&summarize_shares(&build.records)),
    )?;
    let mut log = String::new();
    if out_of_range > 0 {
        let _ = writeln!(
            log,
            "dropped {out_of_range} records with scores outside [300, 850]"
        );
    }
    for e in &geo.exclusions {
        let _ = writeln!(log, "excluded {} {}: {}", e.kind, e.code, e.reason);
    }
    for (congress, zcta) in &geo.zcta_district.ambiguous {
        let _ = writeln!(
            log,
            "zcta {zcta} in congress {congress} lists several districts; lowest code kept"
        );
    }
    for e in &build.log {
        match e.cell_id {
            Some(c) => {
                let _ = writeln!(log, "{c} {}: {}", e.year, e.message);
            }
            None => {
                let _ = writeln!(log, "{}", e.message);
            }
        }
    }
    fs::write(cfg.output(SHARE_LOG), log)?;
    inputs.insert(0, credit);
    inputs.push(thresholds_path);
    let outputs: Vec<PathBuf> = [
        io::CCD_CELLS.file,
        io::SHARES.file,
        SHARE_SUMMARY,
        SHARE_LOG,
    ]
    .iter()
    .map(|f| cfg.output(f))
    .collect();
    let manifest = write_manifest(cfg, Stage::Shares, &inputs, &outputs)?;
    Ok(StageRun {
        stage: Stage::Shares,
        outputs,
        manifest,
    })
}

/// A model that could not be estimated, kept in the output instead of
/// aborting the stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationFailure {
    pub label: String,
    pub error: String,
}

/// Contents of `estimates.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub estimates: Vec<PanelEstimate>,
    pub sweep: Vec<SweepRow>,
    #[serde(default)]
    pub failures: Vec<EstimationFailure>,
}

const MODELS: [(Outcome, Subset, ShareSpec); 6] = [
    (Outcome::RepShare, Subset::All, ShareSpec::Total),
    (Outcome::DemShare, Subset::All, ShareSpec::Total),
    (Outcome::RepShare, Subset::All, ShareSpec::AboveBelow),
    (Outcome::Nominate, Subset::All, ShareSpec::Total),
    (Outcome::Nominate, Subset::RepWinning, ShareSpec::Total),
    (Outcome::Nominate, Subset::DemWinning, ShareSpec::Total),
];

/// Estimates the vote-share and ideology models at the headline bandwidth
/// and the Republican-share bandwidth sweep. The headline Republican-share
/// model must succeed; other failures are recorded in the output.
pub fn cmd_estimate(cfg: &PipelineConfig) -> Result<StageRun> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let inputs = vec![
        require(Stage::Shares, cfg.output(io::SHARES.file))?,
        require(Stage::Simulate, cfg.elections_path())?,
        require(Stage::Simulate, cfg.controls_path())?,
    ];
    let shares = io::read_shares(&inputs[0])?;
    let elections = io::read_elections(&inputs[1])?;
    let controls = io::read_controls(&inputs[2])?;
    let opts = cfg.estimation.options();
    let bw = cfg.estimation.bandwidth;

    let file = cfg.with_workers(|| -> Result<EstimatesFile> {
        let fits: Vec<_> = MODELS
            .par_iter()
            .map(|&(outcome, subset, spec)| {
                let panel = assemble_panel(&shares, &elections, &controls, bw, outcome, subset);
                (outcome, subset, spec, estimate_panel(&panel, spec, &opts))
            })
            .collect();
        let mut file = EstimatesFile::default();
        for (i, (outcome, subset, spec, fit)) in fits.into_iter().enumerate() {
            match fit {
                Ok(e) => file.estimates.push(e),
                Err(e) if i == 0 => return Err(e),
                Err(e) => file.failures.push(EstimationFailure {
                    label: format!("{} {subset:?} {spec:?}", outcome.label()),
                    error: e.to_string(),
                }),
            }
        }
        let mut sweep_bws = cfg.bandwidths.clone();
        sweep_bws.sort_unstable();
        file.sweep = bandwidth_sweep(
            &shares,
            &elections,
            &controls,
            Outcome::RepShare,
            Subset::All,
            &sweep_bws,
            ShareSpec::Total,
            &opts,
        )?;
        Ok(file)
    })??;
    let path = cfg.output(io::ESTIMATES_JSON);
    io::write_json(&path, &file)?;
    let manifest = write_manifest(cfg, Stage::Estimate, &inputs, std::slice::from_ref(&path))?;
    Ok(StageRun {
        stage: Stage::Estimate,
        outputs: vec![path],
        manifest,
    })
}

const REPORT: &str = "report.txt";

/// Renders the regression tables, the bandwidth sweep and, when shares are
/// present, the share summary.
pub fn render_report(file: &EstimatesFile, share_summary: Option<&str>) -> String {
    let mut out = String::new();
    let votes: Vec<PanelEstimate> = file
        .estimates
        .iter()
        .filter(|e| e.outcome != Outcome::Nominate)
        .cloned()
        .collect();
    let ideology: Vec<PanelEstimate> = file
        .estimates
        .iter()
        .filter(|e| e.outcome == Outcome::Nominate)
        .cloned()
        .collect();
    out.push_str(&render_estimate_table(
        "Vote shares and threshold shares",
        &votes,
    ));
    out.push('\n');
    out.push_str(&render_estimate_table(
        "Winner ideology and threshold shares",
        &ideology,
    ));
    out.push('\n');
    out.push_str(&render_sweep_table(
        "Republican vote share across bandwidths",
        &file.sweep,
    ));
    if let Some(s) = share_summary {
        out.push('\n');
        out.push_str(s);
    }
    if !file.failures.is_empty() {
        out.push_str("\nNot estimated:\n");
        for f in &file.failures {
            let _ = writeln!(out, "  {}: {}", f.label, f.error);
        }
    }
    out
}

pub fn cmd_report(cfg: &PipelineConfig) -> Result<StageRun> {
    prepare_out(cfg)?;
    let est_path = require(Stage::Estimate, cfg.output(io::ESTIMATES_JSON))?;
    let file: EstimatesFile = io::read_json(&est_path)?;
    let mut inputs = vec![est_path];
    let shares_path = cfg.output(io::SHARES.file);
    let summary = if shares_path.is_file() {
        let shares = io::read_shares(&shares_path)?;
        inputs.push(shares_path);
        Some(render_share_table(&summarize_shares(&shares)))
    } else {
        None
    };
    let path = cfg.output(REPORT);
    fs::write(&path, render_report(&file, summary.as_deref()))?;
    let manifest = write_manifest(cfg, Stage::Report, &inputs, std::slice::from_ref(&path))?;
    Ok(StageRun {
        stage: Stage::Report,
        outputs: vec![path],
        manifest,
    })
}

pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageRun> {
    match stage {
        Stage::Simulate => cmd_simulate(cfg),
        Stage::Scan => cmd_scan(cfg),
        Stage::Shares => cmd_shares(cfg),
        Stage::Estimate => cmd_estimate(cfg),
        Stage::Report => cmd_report(cfg),
    }
}

/// Runs the stages from `from` through report, in order.
pub fn run_all(cfg: &PipelineConfig, from: Stage) -> Result<Vec<StageRun>> {
    Stage::ALL
        .into_iter()
        .filter(|s| *s >= from)
        .map(|s| run_stage(cfg, s))
        .collect()
}

/// Result of a streamed scan over a large synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub zones: usize,
    pub persons: usize,
    pub person_years: usize,
    pub zone_years: usize,
    pub regressions: usize,
    pub thresholds: usize,
    /// Zone-years whose selected threshold equals the planted one.
    pub exact_recoveries: usize,
    /// SHA-256 over the threshold and cutoff-estimate CSVs.
    pub digest: String,
}

/// Generates each zone of `world` and scans its election years without
/// materialising the full panel. Zones run in parallel on the current pool
/// and are merged in zone order.
pub fn scan_world_streaming(
    world: &WorldConfig,
    rd: &RdConfig,
) -> Result<(ScanReport, ScaleSummary)> {
    let geography = generate_geography(world)?;
    let years = world.election_years();
    let parts: Vec<(ScanReport, usize, usize)> = geography
        .zones
        .par_iter()
        .enumerate()
        .map(|(i, zone)| {
            let (mut records, path) = generate_zone_credit(world, zone, i);
            let person_years = records.len();
            records.retain(|r| r.year % 2 == 0 || rd.pool_preceding_year);
            let report = scan_zone_years(&records, rd, &years);
            let exact = report
                .detected
                .iter()
                .filter(|(k, t)| {
                    t.as_ref()
                        .is_some_and(|t| path.get(&k.year) == Some(&t.cutoff))
                })
                .count();
            (report, person_years, exact)
        })
        .collect();
    let mut report = ScanReport::default();
    let (mut person_years, mut exact) = (0, 0);
    for (r, n, e) in parts {
        report.extend(r);
        person_years += n;
        exact += e;
    }
    report.sort();
    let mut bytes = Vec::new();
    io::write_rows_to(&mut bytes, &io::THRESHOLDS, &report.thresholds)?;
    io::write_rows_to(&mut bytes, &io::CUTOFF_ESTIMATES, &report.estimates)?;
    let summary = ScaleSummary {
        zones: geography.zones.len(),
        persons: world.n_czs * world.persons_per_cz,
        person_years,
        zone_years: report.detected.len(),
        regressions: report.n_regressions(),
        thresholds: report.thresholds.len(),
        exact_recoveries: exact,
        digest: sha256_hex(&bytes),
    };
    Ok((report, summary))
}

/// Streamed scan of the configured world, writing the scan outputs.
pub fn cmd_scale(cfg: &PipelineConfig) -> Result<(StageRun, ScaleSummary)> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let world = cfg.effective_world();
    let (report, summary) = cfg.with_workers(|| scan_world_streaming(&world, &cfg.rd))??;
    write_scan(cfg, &report)?;
    let summary_path = cfg.output("scale_summary.json");
    io::write_json(&summary_path, &summary)?;
    let mut outputs = scan_outputs(cfg);
    outputs.push(summary_path);
    let manifest = write_manifest(cfg, Stage::Scan, &[], &outputs)?;
    Ok((
        StageRun {
            stage: Stage::Scan,
            outputs,
            manifest,
        },
        summary,
    ))
}
