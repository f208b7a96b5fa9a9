use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::credit::{generate_credit_panel, rd_zone_sample, RdZoneSpec, ScoreProcess};
use super::election::generate_election_panel;
use super::{stream_rng, WorldConfig, STREAM_TRIAL};
use crate::error::{Error, Result};
use crate::kernel::{tsls_fit, wls_fit_with, ClusterSpec, Covariance, DesignMatrix, FitOptions};
use crate::panel::{
    assemble_panel, estimate_above_below, estimate_baseline, EstimationOptions, Outcome, Subset,
    SHARE_ABOVE, SHARE_BELOW, SHARE_CLOSE,
};
use crate::rd::{
    density_smoothness_test, scan_cutoffs, scan_zone_years, select_threshold, suppress_contiguous,
    DensityConfig, DensityTestResult, RdConfig, ZoneYear,
};
use crate::shares::compute_shares;

const ALPHA: f64 = 0.05;

/// Seed of replication `r` derived from a base seed.
fn replication_seed(seed: u64, r: u64) -> u64 {
    seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// An empirical proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub se: f64,
}

impl Rate {
    pub fn new(successes: usize, trials: usize) -> Self {
        let p = if trials == 0 {
            f64::NAN
        } else {
            successes as f64 / trials as f64
        };
        Rate {
            successes,
            trials,
            estimate: p,
            se: (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    pub fn from_flags(flags: impl IntoIterator<Item = bool>) -> Self {
        let (mut s, mut n) = (0, 0);
        for f in flags {
            n += 1;
            s += f as usize;
        }
        Rate::new(s, n)
    }
}

/// Mean of a Monte Carlo statistic with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mean {
    pub estimate: f64,
    pub se: f64,
}

impl Mean {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Mean {
            estimate: m,
            se: (var / n).sqrt(),
        }
    }
}

/// Outcome of one threshold-recovery trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDraw {
    pub planted: i32,
    pub selected: Option<i32>,
    pub alpha: Option<f64>,
}

impl RecoveryDraw {
    pub fn recovered(&self, tolerance: i32) -> bool {
        self.selected
            .is_some_and(|s| (s - self.planted).abs() <= tolerance)
    }
}

/// Scans one synthetic zone-year and selects its threshold. With no fixed
/// cutoff in `cutoff`, the planted cutoff is drawn from the scan grid.
pub fn recovery_trial(
    spec: &RdZoneSpec,
    cutoff: Option<i32>,
    rd: &RdConfig,
    seed: u64,
    index: u64,
) -> RecoveryDraw {
    let mut rng = stream_rng(seed, STREAM_TRIAL, index);
    let planted = cutoff.unwrap_or_else(|| rd.cutoff_grid[rng.gen_range(0..rd.cutoff_grid.len())]);
    let spec = RdZoneSpec {
        cutoff: planted,
        ..spec.clone()
    };
    let records = rd_zone_sample(&spec, &mut rng);
    let key = ZoneYear {
        commuting_zone: records[0].commuting_zone,
        year: records[0].year,
    };
    let scan = scan_cutoffs(key, &records, rd);
    let selected = select_threshold(&suppress_contiguous(&scan.estimates, rd), rd);
    RecoveryDraw {
        planted,
        selected: selected.as_ref().map(|t| t.cutoff),
        alpha: selected.map(|t| t.alpha),
    }
}

/// Grouped regression `y = 1 + beta x + a_g + e` with a cluster-correlated
/// regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterDgp {
    pub clusters: usize,
    pub per_cluster: usize,
    pub beta: f64,
    pub cluster_sd: f64,
    pub noise_sd: f64,
    pub x_cluster_sd: f64,
}

impl Default for ClusterDgp {
    fn default() -> Self {
        ClusterDgp {
            clusters: 50,
            per_cluster: 20,
            beta: 1.0,
            cluster_sd: 1.0,
            noise_sd: 1.0,
            x_cluster_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDraw {
    pub estimate: f64,
    pub se: f64,
    pub covered: bool,
}

fn draw_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One CR1-clustered fit; `covered` is whether the 95% interval contains
/// the true slope.
pub fn cluster_coverage_trial(dgp: &ClusterDgp, seed: u64, index: u64) -> Result<CoefficientDraw> {
    let mut rng = stream_rng(seed, STREAM_TRIAL, index);
    let n = dgp.clusters * dgp.per_cluster;
    let (mut x, mut y, mut g) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for c in 0..dgp.clusters {
        let a = dgp.cluster_sd * draw_normal(&mut rng);
        let xc = dgp.x_cluster_sd * draw_normal(&mut rng);
        for _ in 0..dgp.per_cluster {
            let xi = xc + draw_normal(&mut rng);
            x.push(xi);
            y.push(1.0 + dgp.beta * xi + a + dgp.noise_sd * draw_normal(&mut rng));
            g.push(c);
        }
    }
    let design = DesignMatrix::from_columns(vec![("const", vec![1.0; n]), ("x", x)], vec![1.0; n])?;
    let fit = wls_fit_with(
        &design,
        &y,
        &FitOptions {
            covariance: Covariance::Cr1(ClusterSpec::new(g)),
            ..FitOptions::default()
        },
    )?;
    coefficient_draw(&fit.result, "x", dgp.beta)
}

fn coefficient_draw(
    result: &crate::kernel::RegressionResult,
    name: &str,
    truth: f64,
) -> Result<CoefficientDraw> {
    let missing = || Error::Validation(format!("no coefficient `{name}`"));
    let (lo, hi) = result
        .confidence_interval(name, ALPHA)
        .ok_or_else(missing)?;
    Ok(CoefficientDraw {
        estimate: result.coefficient(name).ok_or_else(missing)?,
        se: result.standard_error(name).ok_or_else(missing)?,
        covered: lo <= truth && truth <= hi,
    })
}

/// `x = pi z + v`, `y = beta x + u` with `corr(u, v) = rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IvDgp {
    pub n: usize,
    pub beta: f64,
    pub pi: f64,
    pub rho: f64,
}

impl Default for IvDgp {
    fn default() -> Self {
        IvDgp {
            n: 1000,
            beta: 1.0,
            pi: 0.5,
            rho: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvDraw {
    pub ols: CoefficientDraw,
    pub tsls: CoefficientDraw,
    pub first_stage_f: f64,
}

/// OLS and 2SLS on one draw of the endogenous design, HC1 standard errors.
pub fn iv_trial(dgp: &IvDgp, seed: u64, index: u64) -> Result<IvDraw> {
    let mut rng = stream_rng(seed, STREAM_TRIAL, index);
    let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
    let tail = (1.0 - dgp.rho * dgp.rho).sqrt();
    for _ in 0..dgp.n {
        let zi = draw_normal(&mut rng);
        let v = draw_normal(&mut rng);
        let u = dgp.rho * v + tail * draw_normal(&mut rng);
        let xi = dgp.pi * zi + v;
        z.push(zi);
        x.push(xi);
        y.push(dgp.beta * xi + u);
    }
    let w = vec![1.0; dgp.n];
    let ones = vec![1.0; dgp.n];
    let ols_design =
        DesignMatrix::from_columns(vec![("const", ones.clone()), ("x", x.clone())], w.clone())?;
    let ols = wls_fit_with(&ols_design, &y, &FitOptions::default())?.result;
    let exog = DesignMatrix::from_columns(vec![("const", ones)], w.clone())?;
    let endog = DesignMatrix::from_columns(vec![("x", x)], w.clone())?;
    let inst = DesignMatrix::from_columns(vec![("z", z)], w)?;
    let tsls = tsls_fit(&y, &exog, &endog, &inst, &FitOptions::default())?;
    Ok(IvDraw {
        ols: coefficient_draw(&ols, "x", dgp.beta)?,
        tsls: coefficient_draw(&tsls, "x", dgp.beta)?,
        first_stage_f: tsls.first_stage_f.get("x").copied().unwrap_or(f64::NAN),
    })
}

/// Smoothness test on `n` one-year scores drawn from the world's score
/// process around a threshold at `cutoff`.
pub fn density_trial(
    config: &WorldConfig,
    n: usize,
    cutoff: i32,
    density: &DensityConfig,
    index: u64,
) -> DensityTestResult {
    let mut rng = stream_rng(config.seed, STREAM_TRIAL, index);
    let process = ScoreProcess::new(config);
    let scores: Vec<i32> = (0..n)
        .map(|_| {
            let base = process.base(&mut rng);
            process.year_score(&mut rng, base, cutoff)
        })
        .collect();
    density_smoothness_test(scores, cutoff, density)
}

/// Estimates from one complete synthetic world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineDraw {
    pub share: CoefficientDraw,
    pub nominate: CoefficientDraw,
    pub above: f64,
    pub below: f64,
    /// p-value of the test of equal above / below effects.
    pub wald_p: f64,
    /// Share of planted election-year thresholds recovered exactly (1 when
    /// planted thresholds are used directly).
    pub threshold_match: f64,
}

/// Generates replication `r` of `config`, optionally re-detects the
/// thresholds with `rd`, and estimates the vote-share, ideology and
/// above/below models at the DGP bandwidth.
pub fn pipeline_trial(config: &WorldConfig, rd: Option<&RdConfig>, r: u64) -> Result<PipelineDraw> {
    let cfg = WorldConfig {
        seed: replication_seed(config.seed, r),
        ..config.clone()
    };
    let dgp = &cfg.vote_dgp;
    let years = cfg.election_years();
    let world = generate_credit_panel(&cfg)?;
    let ew = generate_election_panel(&world)?;
    let (shares, threshold_match) = match rd {
        None => (ew.shares.clone(), 1.0),
        Some(rd) => {
            let report = scan_zone_years(&world.records, rd, &years);
            let planted: Vec<_> = world
                .planted
                .iter()
                .filter(|(k, _)| k.year % 2 == 0)
                .collect();
            let hits = planted
                .iter()
                .filter(|(k, c)| {
                    report.thresholds.iter().any(|t| {
                        t.commuting_zone == k.commuting_zone && t.year == k.year && t.cutoff == **c
                    })
                })
                .count();
            let geography = world.geography.build()?;
            let shares = compute_shares(
                &world.records,
                &report.thresholds,
                &geography,
                &[dgp.bandwidth],
                &years,
            );
            (shares.records, hits as f64 / planted.len() as f64)
        }
    };
    let opts = EstimationOptions::default();
    let rep = assemble_panel(
        &shares,
        &ew.elections,
        &ew.controls,
        dgp.bandwidth,
        Outcome::RepShare,
        Subset::All,
    );
    let nom = assemble_panel(
        &shares,
        &ew.elections,
        &ew.controls,
        dgp.bandwidth,
        Outcome::Nominate,
        Subset::All,
    );
    let baseline = estimate_baseline(&rep, &opts)?;
    let nominate = estimate_baseline(&nom, &opts)?;
    let split = estimate_above_below(&rep, &opts)?;
    let coef = |name: &str| split.result.coefficient(name).unwrap_or(f64::NAN);
    Ok(PipelineDraw {
        share: coefficient_draw(&baseline.result, SHARE_CLOSE, dgp.beta_share)?,
        nominate: coefficient_draw(&nominate.result, SHARE_CLOSE, dgp.nominate_shift)?,
        above: coef(SHARE_ABOVE),
        below: coef(SHARE_BELOW),
        wald_p: split.wald_above_below.map_or(f64::NAN, |w| w.p_value),
        threshold_match,
    })
}

/// Experiment run by [`monte_carlo`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Share effect set to zero; size of the 5% test of no effect.
    NullShare,
    /// Coverage of the planted share and ideology effects, thresholds
    /// re-detected when `scan` is set.
    ShareCoverage { scan: bool },
    /// Single-zone worlds scanned in every election year.
    CutoffRecovery,
    /// CR1 interval coverage.
    ClusterCoverage(ClusterDgp),
    /// OLS bias and 2SLS coverage.
    Iv(IvDgp),
    /// Density smoothness test with `n` scores per draw at the world's
    /// bunching level.
    Density { n: usize, cutoff: i32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scenario: Scenario,
    pub replications: usize,
    pub rates: BTreeMap<String, Rate>,
    pub means: BTreeMap<String, Mean>,
}

fn collect<T: Send>(
    replications: usize,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..replications as u64).into_par_iter().map(f).collect()
}

/// Runs `replications` independent draws of `scenario` in parallel and
/// reports rejection, coverage and recovery rates with their standard errors.
pub fn monte_carlo(
    config: &WorldConfig,
    replications: usize,
    scenario: Scenario,
) -> Result<MonteCarloReport> {
    if replications < 100 {
        return Err(Error::Config(format!(
            "Monte Carlo needs at least 100 replications, got {replications}"
        )));
    }
    config.validate()?;
    let mut rates = BTreeMap::new();
    let mut means = BTreeMap::new();
    match &scenario {
        Scenario::NullShare => {
            let mut cfg = config.clone();
            cfg.vote_dgp.beta_share = 0.0;
            cfg.vote_dgp.beta_above_below = None;
            let draws = collect(replications, |r| pipeline_trial(&cfg, None, r))?;
            rates.insert(
                "size".into(),
                Rate::from_flags(draws.iter().map(|d| !d.share.covered)),
            );
            means.insert(
                "share".into(),
                Mean::of(&draws.iter().map(|d| d.share.estimate).collect::<Vec<_>>()),
            );
        }
        Scenario::ShareCoverage { scan } => {
            let rd = RdConfig::default();
            let rd = scan.then_some(&rd);
            let draws = collect(replications, |r| pipeline_trial(config, rd, r))?;
            rates.insert(
                "share_coverage".into(),
                Rate::from_flags(draws.iter().map(|d| d.share.covered)),
            );
            rates.insert(
                "nominate_coverage".into(),
                Rate::from_flags(draws.iter().map(|d| d.nominate.covered)),
            );
            rates.insert(
                "wald_rejection".into(),
                Rate::from_flags(draws.iter().map(|d| d.wald_p < 0.05)),
            );
            means.insert(
                "share".into(),
                Mean::of(&draws.iter().map(|d| d.share.estimate).collect::<Vec<_>>()),
            );
            means.insert(
                "nominate".into(),
                Mean::of(
                    &draws
                        .iter()
                        .map(|d| d.nominate.estimate)
                        .collect::<Vec<_>>(),
                ),
            );
            means.insert(
                "threshold_match".into(),
                Mean::of(&draws.iter().map(|d| d.threshold_match).collect::<Vec<_>>()),
            );
        }
        Scenario::CutoffRecovery => {
            let rd = RdConfig::default();
            let cfg = WorldConfig {
                n_czs: 1,
                ..config.clone()
            };
            let years = cfg.election_years();
            let draws: Vec<Vec<(bool, Option<f64>)>> = collect(replications, |r| {
                let world = generate_credit_panel(&WorldConfig {
                    seed: replication_seed(cfg.seed, r),
                    ..cfg.clone()
                })?;
                let report = scan_zone_years(&world.records, &rd, &years);
                Ok(report
                    .detected
                    .iter()
                    .map(|(k, t)| {
                        let planted = world.planted[k];
                        let hit = t
                            .as_ref()
                            .is_some_and(|t| (t.cutoff - planted).abs() <= rd.contiguity);
                        (hit, t.as_ref().map(|t| t.alpha))
                    })
                    .collect())
            })?;
            let flat: Vec<_> = draws.into_iter().flatten().collect();
            rates.insert(
                "recovery".into(),
                Rate::from_flags(flat.iter().map(|d| d.0)),
            );
            rates.insert(
                "detection".into(),
                Rate::from_flags(flat.iter().map(|d| d.1.is_some())),
            );
            let alphas: Vec<f64> = flat.iter().filter_map(|d| d.1).collect();
            if !alphas.is_empty() {
                means.insert("alpha".into(), Mean::of(&alphas));
            }
        }
        Scenario::ClusterCoverage(dgp) => {
            let draws = collect(replications, |r| {
                cluster_coverage_trial(dgp, config.seed, r)
            })?;
            rates.insert(
                "coverage".into(),
                Rate::from_flags(draws.iter().map(|d| d.covered)),
            );
            means.insert(
                "estimate".into(),
                Mean::of(&draws.iter().map(|d| d.estimate).collect::<Vec<_>>()),
            );
        }
        Scenario::Iv(dgp) => {
            let draws = collect(replications, |r| iv_trial(dgp, config.seed, r))?;
            rates.insert(
                "tsls_coverage".into(),
                Rate::from_flags(draws.iter().map(|d| d.tsls.covered)),
            );
            rates.insert(
                "ols_coverage".into(),
                Rate::from_flags(draws.iter().map(|d| d.ols.covered)),
            );
            means.insert(
                "ols".into(),
                Mean::of(&draws.iter().map(|d| d.ols.estimate).collect::<Vec<_>>()),
            );
            means.insert(
                "ols_se".into(),
                Mean::of(&draws.iter().map(|d| d.ols.se).collect::<Vec<_>>()),
            );
            means.insert(
                "tsls".into(),
                Mean::of(&draws.iter().map(|d| d.tsls.estimate).collect::<Vec<_>>()),
            );
        }
        Scenario::Density { n, cutoff } => {
            let density = DensityConfig::default();
            let draws = collect(replications, |r| {
                Ok(density_trial(config, *n, *cutoff, &density, r))
            })?;
            rates.insert(
                "pass".into(),
                Rate::from_flags(draws.iter().map(|d| d.pass)),
            );
            rates.insert(
                "inconclusive".into(),
                Rate::from_flags(draws.iter().map(|d| d.inconclusive)),
            );
            means.insert(
                "log_jump".into(),
                Mean::of(&draws.iter().map(|d| d.log_jump).collect::<Vec<_>>()),
            );
        }
    }
    Ok(MonteCarloReport {
        scenario,
        replications,
        rates,
        means,
    })
}
