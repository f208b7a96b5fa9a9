use nalgebra::DMatrix;

use super::design::{ClusterSpec, DesignMatrix};
use super::qr::PivotedQr;
use super::result::{CovarianceKind, RegressionResult};
use crate::error::{Error, Result};

/// Covariance estimator requested for a fit.
#[derive(Debug, Clone, Default)]
pub enum Covariance {
    Classical,
    #[default]
    Hc1,
    Cr1(ClusterSpec),
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub covariance: Covariance,
    /// Dummy columns removed by fixed-effect absorption before the fit.
    pub absorbed_dof: usize,
    /// Part of `absorbed_dof` belonging to fixed effects nested in the
    /// clusters; these do not count against K in the CR1 scaling.
    pub nested_absorbed_dof: usize,
    /// Total sum of squares of the original outcome. Defaults to the
    /// weighted sum of squares around the weighted mean of `y`.
    pub total_sum_squares: Option<f64>,
}

/// Everything needed to recompute a sandwich covariance after a fit.
#[derive(Debug, Clone)]
pub struct FitContext {
    /// Regressors entering the score (for 2SLS: the projected regressors).
    pub(crate) scores_x: DesignMatrix,
    pub(crate) residuals: Vec<f64>,
    /// `(X'WX)^{-1}`.
    pub(crate) bread: DMatrix<f64>,
    pub(crate) n_obs: usize,
    pub(crate) absorbed_dof: usize,
    pub(crate) nested_absorbed_dof: usize,
}

impl FitContext {
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn bread(&self) -> &DMatrix<f64> {
        &self.bread
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    fn k(&self) -> usize {
        self.scores_x.cols()
    }

    pub(crate) fn dof_residual(&self) -> usize {
        self.n_obs.saturating_sub(self.k() + self.absorbed_dof)
    }

    fn score(&self, i: usize, out: &mut [f64]) {
        let w = self.scores_x.weights()[i];
        let e = self.residuals[i];
        for (j, o) in out.iter_mut().enumerate() {
            *o = w * self.scores_x.values()[(i, j)] * e;
        }
    }

    fn sandwich(&self, meat: &DMatrix<f64>) -> DMatrix<f64> {
        &self.bread * meat * &self.bread
    }

    pub fn classical_vcov(&self) -> DMatrix<f64> {
        let w = self.scores_x.weights();
        let ssr: f64 = self.residuals.iter().zip(w).map(|(e, w)| w * e * e).sum();
        let dof = self.dof_residual().max(1) as f64;
        &self.bread * (ssr / dof)
    }

    /// Heteroskedasticity-robust sandwich with the n/(n-k) correction.
    pub fn hc1_vcov(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut meat = DMatrix::<f64>::zeros(k, k);
        let mut s = vec![0.0; k];
        for i in 0..self.scores_x.rows() {
            if self.scores_x.weights()[i] == 0.0 {
                continue;
            }
            self.score(i, &mut s);
            for a in 0..k {
                for b in 0..=a {
                    meat[(a, b)] += s[a] * s[b];
                }
            }
        }
        fill_upper(&mut meat);
        let n = self.n_obs as f64;
        let scale = n / self.dof_residual().max(1) as f64;
        self.sandwich(&meat) * scale
    }

    /// CR1 sandwich: score sums per cluster, scaled by
    /// G/(G-1) * (N-1)/(N-K).
    pub fn cluster_robust_vcov(&self, clusters: &ClusterSpec) -> Result<DMatrix<f64>> {
        if clusters.len() != self.scores_x.rows() {
            return Err(Error::Validation(format!(
                "{} cluster labels for {} rows",
                clusters.len(),
                self.scores_x.rows()
            )));
        }
        let k = self.k();
        let mut sums = DMatrix::<f64>::zeros(k, clusters.n_clusters());
        let mut active = vec![false; clusters.n_clusters()];
        let mut s = vec![0.0; k];
        for (i, &g) in clusters.index().iter().enumerate() {
            if self.scores_x.weights()[i] == 0.0 {
                continue;
            }
            active[g] = true;
            self.score(i, &mut s);
            for (a, v) in s.iter().enumerate() {
                sums[(a, g)] += v;
            }
        }
        let g_count = active.iter().filter(|a| **a).count();
        if g_count < 2 {
            return Err(Error::TooFewClusters { found: g_count });
        }
        let meat = &sums * sums.transpose();
        let n = self.n_obs as f64;
        let k_eff = k + self.absorbed_dof.saturating_sub(self.nested_absorbed_dof);
        let g = g_count as f64;
        let scale = g / (g - 1.0) * (n - 1.0) / (n - k_eff as f64).max(1.0);
        Ok(self.sandwich(&meat) * scale)
    }
}

fn fill_upper(m: &mut DMatrix<f64>) {
    for a in 0..m.nrows() {
        for b in a + 1..m.ncols() {
            m[(a, b)] = m[(b, a)];
        }
    }
}

/// Result of a weighted least-squares fit plus its score context.
#[derive(Debug, Clone)]
pub struct WlsFit {
    pub result: RegressionResult,
    pub context: FitContext,
}

pub(crate) struct Solved {
    pub coefficients: Vec<f64>,
    pub bread: DMatrix<f64>,
    pub n_obs: usize,
}

/// Solves weighted least squares through a pivoted QR of `sqrt(W) X`.
pub(crate) fn solve_weighted(x: &DesignMatrix, y: &[f64]) -> Result<Solved> {
    let keep: Vec<usize> = (0..x.rows()).filter(|&i| x.weights()[i] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = keep.len();
    let k = x.cols();
    if k == 0 {
        return Err(Error::Validation("design has no columns".into()));
    }
    let sw: Vec<f64> = keep.iter().map(|&i| x.weights()[i].sqrt()).collect();
    let mut a = Vec::with_capacity(n * k);
    for j in 0..k {
        let col = x.column(j);
        a.extend(keep.iter().zip(&sw).map(|(&i, s)| col[i] * s));
    }
    let qr = PivotedQr::new(n, k, a);
    if !qr.is_full_rank() || n < k {
        let mut cols = qr.dependent_columns();
        if cols.is_empty() {
            cols = (n..k).collect();
        }
        return Err(Error::RankDeficient {
            columns: cols.into_iter().map(|j| x.names()[j].clone()).collect(),
        });
    }
    let yw: Vec<f64> = keep.iter().zip(&sw).map(|(&i, s)| y[i] * s).collect();
    Ok(Solved {
        coefficients: qr.solve(&yw),
        bread: qr.gram_inverse(),
        n_obs: n,
    })
}

pub(crate) fn predict(x: &DesignMatrix, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.rows()];
    for (j, bj) in b.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(x.column(j)) {
            *o += bj * v;
        }
    }
    out
}

pub(crate) fn weighted_tss(y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return 0.0;
    }
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    y.iter().zip(w).map(|(y, w)| w * (y - mean).powi(2)).sum()
}

pub(crate) fn apply_covariance(
    result: &mut RegressionResult,
    ctx: &FitContext,
    covariance: &Covariance,
) -> Result<()> {
    match covariance {
        Covariance::Classical => {
            result.set_vcov(ctx.classical_vcov(), CovarianceKind::Classical, 0)
        }
        Covariance::Hc1 => result.set_vcov(ctx.hc1_vcov(), CovarianceKind::Hc1, 0),
        Covariance::Cr1(c) => {
            let v = ctx.cluster_robust_vcov(c)?;
            let g = active_clusters(c, ctx.scores_x.weights());
            result.set_vcov(v, CovarianceKind::Cr1, g);
        }
    }
    Ok(())
}

fn active_clusters(c: &ClusterSpec, w: &[f64]) -> usize {
    let mut seen = vec![false; c.n_clusters()];
    for (&g, &w) in c.index().iter().zip(w) {
        if w > 0.0 {
            seen[g] = true;
        }
    }
    seen.into_iter().filter(|s| *s).count()
}

/// Weighted least squares with HC1 standard errors.
pub fn wls_fit(x: &DesignMatrix, y: &[f64]) -> Result<RegressionResult> {
    wls_fit_with(x, y, &FitOptions::default()).map(|f| f.result)
}

pub fn wls_fit_with(x: &DesignMatrix, y: &[f64], opts: &FitOptions) -> Result<WlsFit> {
    if y.len() != x.rows() {
        return Err(Error::Validation(format!(
            "outcome has {} rows, design has {}",
            y.len(),
            x.rows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "outcome contains NaN or infinite values".into(),
        ));
    }
    let solved = solve_weighted(x, y)?;
    let fitted = predict(x, &solved.coefficients);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let w = x.weights();
    let ssr: f64 = residuals.iter().zip(w).map(|(e, w)| w * e * e).sum();
    let tss = opts.total_sum_squares.unwrap_or_else(|| weighted_tss(y, w));
    let r2 = if tss > 0.0 { 1.0 - ssr / tss } else { 0.0 };
    let context = FitContext {
        scores_x: x.clone(),
        residuals,
        bread: solved.bread,
        n_obs: solved.n_obs,
        absorbed_dof: opts.absorbed_dof,
        nested_absorbed_dof: opts.nested_absorbed_dof,
    };
    let mut result = RegressionResult::new(
        x.names().to_vec(),
        solved.coefficients,
        DMatrix::zeros(x.cols(), x.cols()),
        solved.n_obs,
        context.dof_residual(),
        r2,
        CovarianceKind::Hc1,
    );
    apply_covariance(&mut result, &context, &opts.covariance)?;
    let sw: f64 = w.iter().sum();
    result.dep_var_mean = Some(y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw);
    Ok(WlsFit { result, context })
}

/// CR1 covariance for an existing fit.
pub fn cluster_robust_vcov(fit: &FitContext, clusters: &ClusterSpec) -> Result<DMatrix<f64>> {
    fit.cluster_robust_vcov(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_fit() {
        let x =
            DesignMatrix::from_rows(&["const", "x"], &[vec![1., 0.], vec![1., 1.], vec![1., 2.]])
                .unwrap();
        let fit = wls_fit_with(&x, &[1., 2., 3.], &FitOptions::default()).unwrap();
        assert!((fit.result.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.result.coefficients[1] - 1.0).abs() < 1e-12);
        assert!(fit.context.residuals().iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn weighted_mean() {
        let x = DesignMatrix::from_rows(&["const"], &[vec![1.], vec![1.]])
            .unwrap()
            .with_weights(vec![1., 3.])
            .unwrap();
        let r = wls_fit(&x, &[2., 4.]).unwrap();
        // (1*2 + 3*4) / 4
        assert!((r.coefficients[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_rank_error() {
        let x = DesignMatrix::from_rows(
            &["const", "x", "x_copy"],
            &[
                vec![1., 0., 0.],
                vec![1., 1., 1.],
                vec![1., 2., 2.],
                vec![1., 5., 5.],
            ],
        )
        .unwrap();
        match wls_fit(&x, &[1., 2., 3., 4.]) {
            Err(Error::RankDeficient { columns }) => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0].starts_with('x'));
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn zero_weights_are_empty_sample() {
        let x = DesignMatrix::from_rows(&["const"], &[vec![1.], vec![1.]])
            .unwrap()
            .with_weights(vec![0., 0.])
            .unwrap();
        assert!(matches!(wls_fit(&x, &[1., 2.]), Err(Error::EmptySample)));
    }

    #[test]
    fn zero_residuals_give_zero_cluster_vcov() {
        let x = DesignMatrix::from_rows(
            &["const", "x"],
            &[vec![1., 0.], vec![1., 1.], vec![1., 2.], vec![1., 3.]],
        )
        .unwrap();
        let fit = wls_fit_with(&x, &[1., 3., 5., 7.], &FitOptions::default()).unwrap();
        let v = fit
            .context
            .cluster_robust_vcov(&ClusterSpec::new([0, 0, 1, 1]))
            .unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-20));
    }

    #[test]
    fn single_cluster_is_refused() {
        let x = DesignMatrix::from_rows(&["const"], &[vec![1.], vec![1.], vec![1.]]).unwrap();
        let fit = wls_fit_with(&x, &[1., 2., 4.], &FitOptions::default()).unwrap();
        assert!(matches!(
            fit.context
                .cluster_robust_vcov(&ClusterSpec::new(["a", "a", "a"])),
            Err(Error::TooFewClusters { found: 1 })
        ));
    }
}
