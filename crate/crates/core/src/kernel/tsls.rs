use indexmap::IndexMap;
use nalgebra::DMatrix;

use super::design::DesignMatrix;
use super::result::{CovarianceKind, RegressionResult};
use super::wls::{apply_covariance, predict, solve_weighted, weighted_tss, FitContext, FitOptions};
use crate::error::{Error, Result};

/// Two-stage least squares.
///
/// `exogenous` carries the row weights; `endogenous` and `instruments` must
/// have the same rows (their own weights are ignored). Coefficients are
/// reported for the exogenous columns followed by the endogenous ones.
pub fn tsls_fit(
    y: &[f64],
    exogenous: &DesignMatrix,
    endogenous: &DesignMatrix,
    instruments: &DesignMatrix,
    opts: &FitOptions,
) -> Result<RegressionResult> {
    let n = exogenous.rows();
    if y.len() != n || endogenous.rows() != n || instruments.rows() != n {
        return Err(Error::Validation(
            "2SLS inputs have mismatched row counts".into(),
        ));
    }
    let (p, m) = (endogenous.cols(), instruments.cols());
    if p == 0 {
        return Err(Error::Validation(
            "2SLS needs at least one endogenous regressor".into(),
        ));
    }
    if m < p {
        return Err(Error::Underidentified {
            instruments: m,
            endogenous: p,
        });
    }
    let w = exogenous.weights().to_vec();
    let endog = endogenous.clone().with_weights(w.clone())?;
    let instr = instruments.clone().with_weights(w.clone())?;
    let z_full = exogenous.hstack(&instr)?;

    let mut fitted_cols = Vec::with_capacity(p);
    let mut first_stage_f = IndexMap::new();
    for j in 0..p {
        let xj = endog.column(j);
        let unrestricted = match solve_weighted(&z_full, xj) {
            Ok(s) => s,
            Err(Error::RankDeficient { columns }) => {
                return Err(Error::FirstStageRankDeficient { columns })
            }
            Err(e) => return Err(e),
        };
        let fitted = predict(&z_full, &unrestricted.coefficients);
        let rss_u = weighted_ssr(xj, &fitted, &w);
        let rss_r = if exogenous.cols() == 0 {
            xj.iter().zip(&w).map(|(x, w)| w * x * x).sum()
        } else {
            let r = solve_weighted(exogenous, xj)?;
            weighted_ssr(xj, &predict(exogenous, &r.coefficients), &w)
        };
        let dof = unrestricted
            .n_obs
            .saturating_sub(z_full.cols() + opts.absorbed_dof)
            .max(1) as f64;
        let f = if rss_u > 0.0 {
            ((rss_r - rss_u) / m as f64) / (rss_u / dof)
        } else {
            f64::INFINITY
        };
        first_stage_f.insert(endog.names()[j].clone(), f);
        fitted_cols.push((endog.names()[j].clone(), fitted));
    }

    let projected = exogenous.hstack(&DesignMatrix::from_columns(fitted_cols, w.clone())?)?;
    let second = match solve_weighted(&projected, y) {
        Ok(s) => s,
        Err(Error::RankDeficient { columns }) => {
            return Err(Error::FirstStageRankDeficient { columns })
        }
        Err(e) => return Err(e),
    };
    let structural = exogenous.hstack(&endog)?;
    let resid: Vec<f64> = y
        .iter()
        .zip(predict(&structural, &second.coefficients))
        .map(|(y, f)| y - f)
        .collect();

    let context = FitContext {
        scores_x: projected,
        residuals: resid,
        bread: second.bread,
        n_obs: second.n_obs,
        absorbed_dof: opts.absorbed_dof,
        nested_absorbed_dof: opts.nested_absorbed_dof,
    };
    let ssr: f64 = context
        .residuals
        .iter()
        .zip(&w)
        .map(|(e, w)| w * e * e)
        .sum();
    let tss = opts
        .total_sum_squares
        .unwrap_or_else(|| weighted_tss(y, &w));
    let r2 = if tss > 0.0 { 1.0 - ssr / tss } else { 0.0 };
    let k = structural.cols();
    let mut result = RegressionResult::new(
        structural.names().to_vec(),
        second.coefficients,
        DMatrix::zeros(k, k),
        second.n_obs,
        context.dof_residual(),
        r2,
        CovarianceKind::Hc1,
    );
    apply_covariance(&mut result, &context, &opts.covariance)?;
    result.first_stage_f = first_stage_f;
    let sw: f64 = w.iter().sum();
    result.dep_var_mean = Some(y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw);
    Ok(result)
}

fn weighted_ssr(y: &[f64], fitted: &[f64], w: &[f64]) -> f64 {
    y.iter()
        .zip(fitted)
        .zip(w)
        .map(|((y, f), w)| w * (y - f) * (y - f))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::wls::wls_fit;

    fn col(name: &str, v: Vec<f64>) -> DesignMatrix {
        let n = v.len();
        DesignMatrix::from_columns(vec![(name, v)], vec![1.0; n]).unwrap()
    }

    #[test]
    fn wald_ratio_in_just_identified_case() {
        let z = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let x = vec![0.5, 1.1, 2.9, 3.2, 4.8, 6.1];
        let y = vec![1.0, 2.5, 3.1, 5.5, 6.0, 8.2];
        let w = vec![1.0, 2.0, 1.0, 3.0, 1.0, 2.0];
        let cov = |a: &[f64], b: &[f64]| {
            let sw: f64 = w.iter().sum();
            let ma = a.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / sw;
            let mb = b.iter().zip(&w).map(|(b, w)| b * w).sum::<f64>() / sw;
            a.iter()
                .zip(b)
                .zip(&w)
                .map(|((a, b), w)| w * (a - ma) * (b - mb))
                .sum::<f64>()
        };
        let expected = cov(&z, &y) / cov(&z, &x);
        let exog = DesignMatrix::from_columns(vec![("const", vec![1.0; 6])], w.clone()).unwrap();
        let r = tsls_fit(
            &y,
            &exog,
            &col("x", x),
            &col("z", z),
            &FitOptions::default(),
        )
        .unwrap();
        assert!((r.coefficient("x").unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn instrumenting_with_itself_is_ols() {
        let x = vec![0.2, 1.5, 1.9, 3.3, 4.1];
        let y = vec![1.0, 2.0, 2.5, 4.5, 5.0];
        let exog = DesignMatrix::from_columns(vec![("const", vec![1.0; 5])], vec![1.0; 5]).unwrap();
        let iv = tsls_fit(
            &y,
            &exog,
            &col("x", x.clone()),
            &col("z", x.clone()),
            &FitOptions::default(),
        )
        .unwrap();
        let ols = wls_fit(&exog.hstack(&col("x", x)).unwrap(), &y).unwrap();
        for (a, b) in iv.coefficients.iter().zip(&ols.coefficients) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in iv.standard_errors.iter().zip(&ols.standard_errors) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn underidentified_is_refused() {
        let exog = DesignMatrix::from_columns(vec![("const", vec![1.0; 4])], vec![1.0; 4]).unwrap();
        let endog = DesignMatrix::from_columns(
            vec![
                ("a", vec![1.0, 2.0, 3.0, 5.0]),
                ("b", vec![0.0, 1.0, 0.0, 1.0]),
            ],
            vec![1.0; 4],
        )
        .unwrap();
        let r = tsls_fit(
            &[1.0, 2.0, 3.0, 4.0],
            &exog,
            &endog,
            &col("z", vec![1.0, 0.0, 1.0, 1.0]),
            &FitOptions::default(),
        );
        assert!(matches!(
            r,
            Err(Error::Underidentified {
                instruments: 1,
                endogenous: 2
            })
        ));
    }

    #[test]
    fn irrelevant_constant_instrument_is_first_stage_error() {
        let exog = DesignMatrix::from_columns(vec![("const", vec![1.0; 4])], vec![1.0; 4]).unwrap();
        let r = tsls_fit(
            &[1.0, 2.0, 3.0, 4.0],
            &exog,
            &col("x", vec![1.0, 2.0, 3.0, 5.0]),
            &col("z", vec![2.0; 4]),
            &FitOptions::default(),
        );
        assert!(matches!(r, Err(Error::FirstStageRankDeficient { .. })));
    }
}
