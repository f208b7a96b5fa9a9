mod common;

use approx::assert_relative_eq;
use common::{max_abs_diff, rel_diff, FeDesign};
use creditrd_core::kernel::{
    absorb_fixed_effects, tsls_fit, wls_fit, wls_fit_with, ClusterSpec, Covariance, CovarianceKind,
    DesignMatrix, FitOptions, RegressionResult,
};
use creditrd_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fit_cr1(x: &DesignMatrix, y: &[f64], clusters: &[usize]) -> RegressionResult {
    let opts = FitOptions {
        covariance: Covariance::Cr1(ClusterSpec::new(clusters.iter().copied())),
        ..Default::default()
    };
    wls_fit_with(x, y, &opts).unwrap().result
}

#[test]
fn two_by_two_toy_matches_dummy_regression() {
    let cell = vec![0, 0, 0, 0, 1, 1, 1, 1];
    let year = vec![0, 1, 0, 1, 0, 1, 0, 1];
    let x = vec![vec![0.3, 1.1, -0.4, 2.0, 0.9, -1.2, 0.5, 1.7]];
    let y = vec![1.0, 2.5, 0.2, 3.9, 2.8, 0.1, 2.2, 4.6];
    let w = vec![1.0, 2.0, 1.5, 1.0, 3.0, 0.5, 1.0, 2.0];
    let d = FeDesign {
        x,
        y,
        w,
        cell,
        year,
    };
    let a = d.absorbed_slopes();
    let b = d.lsdv_slopes();
    assert!((a[0] - b[0]).abs() < 1e-8, "{a:?} vs {b:?}");
}

#[test]
fn absorbed_dof_counts_two_way_dummies() {
    let d = FeDesign::random(&mut ChaCha8Rng::seed_from_u64(3), 60, 6, 4, 2);
    let a = absorb_fixed_effects(&d.design(), &d.y, &d.groups()).unwrap();
    assert_eq!(a.absorbed_dof, 6 + 4 - 1);
}

#[test]
fn absorbed_group_means_vanish() {
    let d = FeDesign::random(&mut ChaCha8Rng::seed_from_u64(9), 80, 7, 5, 1);
    let a = absorb_fixed_effects(&d.design(), &d.y, &d.groups()).unwrap();
    for labels in [&d.cell, &d.year] {
        let groups = labels.iter().max().unwrap() + 1;
        for g in 0..groups {
            let (mut s, mut sw) = (0.0, 0.0);
            for i in (0..d.y.len()).filter(|&i| labels[i] == g) {
                s += d.w[i] * a.y[i];
                sw += d.w[i];
            }
            assert!((s / sw).abs() < 1e-10);
        }
    }
}

#[test]
fn two_cluster_toy_matches_hand_sandwich() {
    let x = DesignMatrix::from_rows(
        &["const", "x"],
        &[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 4.0],
        ],
    )
    .unwrap()
    .with_weights(vec![1.0, 2.0, 1.0, 0.5])
    .unwrap();
    let y = [0.5, 1.9, 2.2, 4.4];
    let clusters = [0, 0, 1, 1];
    let res = fit_cr1(&x, &y, &clusters);

    let xm = x.values().clone();
    let w = DVector::from_vec(x.weights().to_vec());
    let wx = DMatrix::from_fn(4, 2, |i, j| w[i] * xm[(i, j)]);
    let bread = (xm.transpose() * &wx).try_inverse().unwrap();
    let beta = &bread * (wx.transpose() * DVector::from_row_slice(&y));
    let e = DVector::from_row_slice(&y) - &xm * &beta;
    let mut meat = DMatrix::zeros(2, 2);
    for g in 0..2 {
        let mut s = DVector::zeros(2);
        for i in (0..4).filter(|&i| clusters[i] == g) {
            s += wx.row(i).transpose() * e[i];
        }
        meat += &s * s.transpose();
    }
    let scale = 2.0 / 1.0 * (4.0 - 1.0) / (4.0 - 2.0);
    let v = &bread * meat * &bread * scale;
    assert_eq!(res.covariance, CovarianceKind::Cr1);
    assert_eq!(res.n_clusters, 2);
    for i in 0..2 {
        assert_relative_eq!(res.coefficients[i], beta[i], max_relative = 1e-12);
        for j in 0..2 {
            assert_relative_eq!(
                res.vcov[(i, j)],
                v[(i, j)],
                max_relative = 1e-10,
                epsilon = 1e-14
            );
        }
    }
}

#[test]
fn singleton_clusters_reduce_to_hc1() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 50;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![1.0, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0)])
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 1.0 + 2.0 * r[1] - r[2] + rng.gen_range(-1.0..1.0) * r[2])
        .collect();
    let x = DesignMatrix::from_rows(&["const", "a", "b"], &rows).unwrap();
    let hc1 = wls_fit(&x, &y).unwrap();
    let cr1 = fit_cr1(&x, &y, &(0..n).collect::<Vec<_>>());
    assert_eq!(hc1.covariance, CovarianceKind::Hc1);
    // G/(G-1)·(N-1)/(N-K) equals N/(N-K) when every row is a cluster.
    for i in 0..3 {
        for j in 0..3 {
            assert!(rel_diff(hc1.vcov[(i, j)], cr1.vcov[(i, j)]) < 1e-10);
        }
    }
}

#[test]
fn nested_fixed_effects_do_not_inflate_cluster_scaling() {
    let d = FeDesign::random(&mut ChaCha8Rng::seed_from_u64(21), 120, 12, 5, 1);
    let a = absorb_fixed_effects(&d.design(), &d.y, &d.groups()).unwrap();
    let clusters = ClusterSpec::new(d.cell.iter().copied());
    let nested = a.nested_dof(&clusters);
    assert_eq!(nested, 12);
    let fit = |nested_absorbed_dof| {
        let opts = FitOptions {
            covariance: Covariance::Cr1(clusters.clone()),
            absorbed_dof: a.absorbed_dof,
            nested_absorbed_dof,
            total_sum_squares: Some(a.total_sum_squares),
        };
        wls_fit_with(&a.x, &a.y, &opts).unwrap().result
    };
    let with = fit(nested);
    let without = fit(0);
    let n = 120.0;
    let ratio = without.vcov[(0, 0)] / with.vcov[(0, 0)];
    let expected = (n - (1.0 + 4.0)) / (n - (1.0 + 16.0));
    assert_relative_eq!(ratio, expected, max_relative = 1e-10);
}

#[test]
fn collinear_regressors_are_named() {
    let rows: Vec<Vec<f64>> = (0..10)
        .map(|i| vec![1.0, i as f64, 2.0 * i as f64])
        .collect();
    let x = DesignMatrix::from_rows(&["const", "a", "b"], &rows).unwrap();
    let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
    match wls_fit(&x, &y) {
        Err(Error::RankDeficient { columns }) => assert!(!columns.is_empty()),
        other => panic!("expected collinearity error, got {other:?}"),
    }
}

#[test]
fn result_serializes_named_fields() {
    let x = DesignMatrix::from_rows(
        &["const", "x"],
        &[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 3.0]],
    )
    .unwrap();
    let res = wls_fit(&x, &[1.0, 2.0, 3.5]).unwrap();
    let v: serde_json::Value = serde_json::to_value(&res).unwrap();
    for key in ["coefficients", "se", "vcov", "n_obs", "n_clusters", "r2"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["coefficients"].get("x").is_some());
    let back: RegressionResult = serde_json::from_value(v).unwrap();
    assert_eq!(back.names, res.names);
    assert_eq!(back.coefficients, res.coefficients);
}

#[test]
fn tsls_reports_first_stage_strength() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 400;
    let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d: Vec<f64> = (0..n)
        .map(|i| z[i] + 0.8 * u[i] + 0.2 * rng.gen_range(-1.0..1.0))
        .collect();
    let y: Vec<f64> = (0..n).map(|i| 2.0 * d[i] + u[i]).collect();
    let w = vec![1.0; n];
    let exog = DesignMatrix::from_columns(vec![("const", vec![1.0; n])], w.clone()).unwrap();
    let endog = DesignMatrix::from_columns(vec![("d", d)], w.clone()).unwrap();
    let instr = DesignMatrix::from_columns(vec![("z", z)], w).unwrap();
    let res = tsls_fit(&y, &exog, &endog, &instr, &FitOptions::default()).unwrap();
    assert!(res.first_stage_f["d"] > 100.0);
    let (lo, hi) = res.confidence_interval("d", 0.001).unwrap();
    assert!(lo < 2.0 && 2.0 < hi);
}

fn fe_strategy() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 30usize..150, 2usize..10, 2usize..8)
}

fn psd_min_eigen(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn absorption_matches_dummy_regression((seed, n, cells, years) in fe_strategy()) {
        let d = FeDesign::random(&mut ChaCha8Rng::seed_from_u64(seed), n, cells, years, 2);
        let diff = max_abs_diff(&d.absorbed_slopes(), &d.lsdv_slopes());
        prop_assert!(diff < 1e-8, "diff {diff}");
    }

    #[test]
    fn weight_scaling_leaves_estimates_unchanged((seed, n, cells, years) in fe_strategy(), c in 0.01f64..100.0) {
        let d = FeDesign::random(&mut ChaCha8Rng::seed_from_u64(seed), n, cells, years, 2);
        let x = d.design();
        let scaled = x.clone().with_weights(d.w.iter().map(|w| w * c).collect()).unwrap();
        let a = fit_cr1(&x, &d.y, &d.cell);
        let b = fit_cr1(&scaled, &d.y, &d.cell);
        for j in 0..2 {
            prop_assert!(rel_diff(a.coefficients[j], b.coefficients[j]) < 1e-10);
            prop_assert!(rel_diff(a.standard_errors[j], b.standard_errors[j]) < 1e-10);
        }
    }

    #[test]
    fn row_order_does_not_matter((seed, n, cells, years) in fe_strategy(), shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        let d = FeDesign::random(&mut ChaCha8Rng::seed_from_u64(seed), n, cells, years, 2);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let p = FeDesign {
            x: d.x.iter().map(|c| order.iter().map(|&i| c[i]).collect()).collect(),
            y: order.iter().map(|&i| d.y[i]).collect(),
            w: order.iter().map(|&i| d.w[i]).collect(),
            cell: order.iter().map(|&i| d.cell[i]).collect(),
            year: order.iter().map(|&i| d.year[i]).collect(),
        };
        let a = fit_cr1(&d.design(), &d.y, &d.cell);
        let b = fit_cr1(&p.design(), &p.y, &p.cell);
        for j in 0..2 {
            prop_assert!(rel_diff(a.coefficients[j], b.coefficients[j]) < 1e-12);
            prop_assert!(rel_diff(a.standard_errors[j], b.standard_errors[j]) < 1e-12);
        }
        prop_assert!((a.r_squared - b.r_squared).abs() < 1e-12);
        let fa = d.absorbed_slopes();
        let fb = p.absorbed_slopes();
        for j in 0..2 {
            prop_assert!(rel_diff(fa[j], fb[j]) < 1e-12, "{} vs {}", fa[j], fb[j]);
        }
    }

    #[test]
    fn covariances_are_positive_semidefinite((seed, n, cells, years) in fe_strategy()) {
        let d = FeDesign::random(&mut ChaCha8Rng::seed_from_u64(seed), n, cells, years, 3);
        let x = d.design();
        let hc1 = wls_fit(&x, &d.y).unwrap();
        let cr1 = fit_cr1(&x, &d.y, &d.cell);
        for v in [&hc1.vcov, &cr1.vcov] {
            prop_assert!(psd_min_eigen(v) >= -1e-12 * v.trace().abs());
            prop_assert!((v - v.transpose()).amax() == 0.0);
        }
    }
}
