use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Which sandwich (or classical) covariance a result carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    Classical,
    #[serde(rename = "HC1")]
    Hc1,
    #[serde(rename = "CR1")]
    Cr1,
}

/// Coefficients, covariance and fit diagnostics of a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub standard_errors: Vec<f64>,
    pub n_obs: usize,
    /// 0 when the covariance is not clustered.
    pub n_clusters: usize,
    pub r_squared: f64,
    pub dof_residual: usize,
    pub covariance: CovarianceKind,
    /// First-stage F statistic per endogenous regressor (2SLS only).
    pub first_stage_f: IndexMap<String, f64>,
    pub dep_var_mean: Option<f64>,
}

/// Wald test of a single linear restriction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub p_value: f64,
}

impl RegressionResult {
    pub(crate) fn new(
        names: Vec<String>,
        coefficients: Vec<f64>,
        vcov: DMatrix<f64>,
        n_obs: usize,
        dof_residual: usize,
        r_squared: f64,
        covariance: CovarianceKind,
    ) -> Self {
        let vcov = symmetrize(vcov);
        let standard_errors = (0..vcov.nrows())
            .map(|i| vcov[(i, i)].max(0.0).sqrt())
            .collect();
        RegressionResult {
            names,
            coefficients,
            vcov,
            standard_errors,
            n_obs,
            n_clusters: 0,
            r_squared,
            dof_residual,
            covariance,
            first_stage_f: IndexMap::new(),
            dep_var_mean: None,
        }
    }

    pub(crate) fn set_vcov(&mut self, vcov: DMatrix<f64>, kind: CovarianceKind, n_clusters: usize) {
        let vcov = symmetrize(vcov);
        self.standard_errors = (0..vcov.nrows())
            .map(|i| vcov[(i, i)].max(0.0).sqrt())
            .collect();
        self.vcov = vcov;
        self.covariance = kind;
        self.n_clusters = n_clusters;
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Validation(format!("no coefficient named `{name}`")))
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.standard_errors[i])
    }

    pub fn t_stat(&self, name: &str) -> Option<f64> {
        self.index_of(name)
            .map(|i| self.coefficients[i] / self.standard_errors[i])
    }

    /// Degrees of freedom for t-based inference: G-1 when clustered,
    /// residual dof otherwise.
    pub fn inference_dof(&self) -> usize {
        if self.covariance == CovarianceKind::Cr1 {
            self.n_clusters.saturating_sub(1)
        } else {
            self.dof_residual
        }
    }

    /// Two-sided p-value from Student's t with [`inference_dof`](Self::inference_dof).
    pub fn p_value(&self, name: &str) -> Option<f64> {
        let t = self.t_stat(name)?;
        Some(two_sided_p(t, self.inference_dof()))
    }

    /// Critical value of the two-sided test at `level` (e.g. 0.05).
    pub fn critical_value(&self, level: f64) -> f64 {
        t_critical(level, self.inference_dof())
    }

    /// Two-sided interval at significance `alpha`; 0.05 gives 95% coverage.
    pub fn confidence_interval(&self, name: &str, alpha: f64) -> Option<(f64, f64)> {
        let i = self.index_of(name)?;
        let c = self.critical_value(alpha);
        let (b, se) = (self.coefficients[i], self.standard_errors[i]);
        Some((b - c * se, b + c * se))
    }

    /// Wald test of `coef[a] == coef[b]`, referred to F(1, inference dof).
    pub fn wald_equal(&self, a: &str, b: &str) -> Result<WaldTest> {
        let (i, j) = (self.require(a)?, self.require(b)?);
        let diff = self.coefficients[i] - self.coefficients[j];
        let var = self.vcov[(i, i)] + self.vcov[(j, j)] - 2.0 * self.vcov[(i, j)];
        if var <= 0.0 {
            return Err(Error::Validation(format!(
                "variance of {a} - {b} is not positive"
            )));
        }
        let t = diff / var.sqrt();
        Ok(WaldTest {
            statistic: t * t,
            p_value: two_sided_p(t, self.inference_dof()),
        })
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub(crate) fn two_sided_p(t: f64, dof: usize) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    let tail = if dof == 0 {
        Normal::standard().cdf(-t.abs())
    } else {
        StudentsT::new(0.0, 1.0, dof as f64)
            .expect("positive dof")
            .cdf(-t.abs())
    };
    2.0 * tail
}

pub(crate) fn t_critical(level: f64, dof: usize) -> f64 {
    let q = 1.0 - level / 2.0;
    if dof == 0 {
        Normal::standard().inverse_cdf(q)
    } else {
        StudentsT::new(0.0, 1.0, dof as f64)
            .expect("positive dof")
            .inverse_cdf(q)
    }
}

/// Two-sided standard-normal critical value.
pub fn normal_critical(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - level / 2.0)
}

#[derive(Serialize, Deserialize)]
struct ResultRepr {
    coefficients: IndexMap<String, f64>,
    se: IndexMap<String, f64>,
    vcov: Vec<Vec<f64>>,
    n_obs: usize,
    n_clusters: usize,
    r2: f64,
    dof_residual: usize,
    covariance: CovarianceKind,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    first_stage_f: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dep_var_mean: Option<f64>,
}

impl Serialize for RegressionResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.names.len();
        ResultRepr {
            coefficients: self
                .names
                .iter()
                .cloned()
                .zip(self.coefficients.iter().copied())
                .collect(),
            se: self
                .names
                .iter()
                .cloned()
                .zip(self.standard_errors.iter().copied())
                .collect(),
            vcov: (0..k)
                .map(|i| (0..k).map(|j| self.vcov[(i, j)]).collect())
                .collect(),
            n_obs: self.n_obs,
            n_clusters: self.n_clusters,
            r2: self.r_squared,
            dof_residual: self.dof_residual,
            covariance: self.covariance,
            first_stage_f: self.first_stage_f.clone(),
            dep_var_mean: self.dep_var_mean,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RegressionResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ResultRepr::deserialize(d)?;
        let k = r.coefficients.len();
        if r.vcov.len() != k || r.vcov.iter().any(|row| row.len() != k) {
            return Err(D::Error::custom("vcov shape does not match coefficients"));
        }
        let vcov = DMatrix::from_fn(k, k, |i, j| r.vcov[i][j]);
        let names: Vec<String> = r.coefficients.keys().cloned().collect();
        let standard_errors = names
            .iter()
            .map(|n| r.se.get(n).copied().unwrap_or(f64::NAN))
            .collect();
        Ok(RegressionResult {
            coefficients: r.coefficients.values().copied().collect(),
            names,
            vcov,
            standard_errors,
            n_obs: r.n_obs,
            n_clusters: r.n_clusters,
            r_squared: r.r2,
            dof_residual: r.dof_residual,
            covariance: r.covariance,
            first_stage_f: r.first_stage_f,
            dep_var_mean: r.dep_var_mean,
        })
    }
}
