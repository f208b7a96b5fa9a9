#![allow(dead_code)]

use creditrd_core::kernel::{
    absorb_fixed_effects, wls_fit, wls_fit_with, Covariance, DesignMatrix, FitOptions, GroupLabels,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A two-way fixed-effects design with random labels, regressors and weights.
pub struct FeDesign {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub cell: Vec<usize>,
    pub year: Vec<usize>,
}

impl FeDesign {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, cells: usize, years: usize, k: usize) -> Self {
        let cell: Vec<usize> = (0..n)
            .map(|i| {
                if i < cells {
                    i
                } else {
                    rng.gen_range(0..cells)
                }
            })
            .collect();
        let year: Vec<usize> = (0..n)
            .map(|i| {
                if i < years {
                    i
                } else {
                    rng.gen_range(0..years)
                }
            })
            .collect();
        let ce: Vec<f64> = (0..cells).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ye: Vec<f64> = (0..years).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..n)
                    .map(|i| rng.gen_range(-1.0..1.0) + 0.5 * ce[cell[i]])
                    .collect()
            })
            .collect();
        let y = (0..n)
            .map(|i| {
                let xb: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (j as f64 + 1.0) * c[i])
                    .sum();
                xb + ce[cell[i]] + ye[year[i]] + rng.gen_range(-0.5..0.5)
            })
            .collect();
        let w = (0..n).map(|_| rng.gen_range(0.2..5.0)).collect();
        FeDesign {
            x,
            y,
            w,
            cell,
            year,
        }
    }

    pub fn design(&self) -> DesignMatrix {
        let cols = self
            .x
            .iter()
            .enumerate()
            .map(|(j, c)| (format!("x{j}"), c.clone()))
            .collect();
        DesignMatrix::from_columns(cols, self.w.clone()).unwrap()
    }

    pub fn groups(&self) -> GroupLabels {
        GroupLabels::new()
            .with_dimension("cell", self.cell.iter().copied())
            .unwrap()
            .with_dimension("year", self.year.iter().copied())
            .unwrap()
    }

    /// Slopes from the absorbed fit with HC1 errors.
    pub fn absorbed_slopes(&self) -> Vec<f64> {
        let a = absorb_fixed_effects(&self.design(), &self.y, &self.groups()).unwrap();
        let opts = FitOptions {
            covariance: Covariance::Hc1,
            absorbed_dof: a.absorbed_dof,
            total_sum_squares: Some(a.total_sum_squares),
            ..Default::default()
        };
        wls_fit_with(&a.x, &a.y, &opts).unwrap().result.coefficients
    }

    /// Slopes from the explicit-dummy regression.
    pub fn lsdv_slopes(&self) -> Vec<f64> {
        let n = self.y.len();
        let cells = self.cell.iter().max().unwrap() + 1;
        let years = self.year.iter().max().unwrap() + 1;
        let mut cols: Vec<(String, Vec<f64>)> = self
            .x
            .iter()
            .enumerate()
            .map(|(j, c)| (format!("x{j}"), c.clone()))
            .collect();
        for c in 0..cells {
            cols.push((
                format!("cell{c}"),
                (0..n).map(|i| f64::from(self.cell[i] == c)).collect(),
            ));
        }
        for t in 1..years {
            cols.push((
                format!("year{t}"),
                (0..n).map(|i| f64::from(self.year[i] == t)).collect(),
            ));
        }
        let x = DesignMatrix::from_columns(cols, self.w.clone()).unwrap();
        wls_fit(&x, &self.y).unwrap().coefficients[..self.x.len()].to_vec()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
