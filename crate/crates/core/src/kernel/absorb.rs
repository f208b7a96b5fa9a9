//! Fixed-effect absorption by alternating weighted within-group demeaning.

use rayon::prelude::*;

use super::design::{ClusterSpec, DesignMatrix, GroupDimension, GroupLabels};
use super::wls::weighted_tss;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AbsorbOptions {
    pub max_sweeps: usize,
    /// Convergence target for the largest absolute weighted group mean,
    /// relative to the column's magnitude when that exceeds one.
    pub tolerance: f64,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions {
            max_sweeps: 10_000,
            tolerance: 1e-10,
        }
    }
}

/// Demeaned regressors and outcome.
#[derive(Debug, Clone)]
pub struct Absorbed {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    /// Number of dummy columns implied by the absorbed fixed effects.
    pub absorbed_dof: usize,
    /// Weighted total sum of squares of the original outcome.
    pub total_sum_squares: f64,
    /// Weighted mean of the original outcome.
    pub dep_var_mean: f64,
    /// Dimensions that were absorbed.
    pub dimensions: Vec<GroupDimension>,
}

impl Absorbed {
    /// Dummy columns of the absorbed dimensions whose groups sit inside
    /// single clusters (capped at `absorbed_dof`).
    pub fn nested_dof(&self, clusters: &ClusterSpec) -> usize {
        self.dimensions
            .iter()
            .filter(|d| clusters.nests(d))
            .map(|d| d.n_groups)
            .sum::<usize>()
            .min(self.absorbed_dof)
    }
}

pub fn absorb_fixed_effects(x: &DesignMatrix, y: &[f64], groups: &GroupLabels) -> Result<Absorbed> {
    absorb_fixed_effects_with(x, y, groups, AbsorbOptions::default())
}

pub fn absorb_fixed_effects_with(
    x: &DesignMatrix,
    y: &[f64],
    groups: &GroupLabels,
    opts: AbsorbOptions,
) -> Result<Absorbed> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Validation(
            "outcome length differs from design rows".into(),
        ));
    }
    if let Some(rows) = groups.rows() {
        if rows != n {
            return Err(Error::Validation(format!(
                "{rows} group labels for {n} rows"
            )));
        }
    }
    let w = x.weights();
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return Err(Error::EmptySample);
    }
    let dims = groups.dimensions();
    let group_weights: Vec<Vec<f64>> = dims
        .iter()
        .map(|d| {
            let mut gw = vec![0.0; d.n_groups];
            for (&g, &wi) in d.index.iter().zip(w) {
                gw[g] += wi;
            }
            gw
        })
        .collect();

    let mut out_x = x.clone();
    let mut out_y = y.to_vec();
    let results: Vec<Result<()>> = {
        let ncols = x.cols();
        let mut columns: Vec<&mut [f64]> = out_x
            .values_mut()
            .as_mut_slice()
            .chunks_mut(n.max(1))
            .take(ncols)
            .collect();
        columns.push(&mut out_y);
        columns
            .into_par_iter()
            .map(|col| demean_column(col, w, dims, &group_weights, opts))
            .collect()
    };
    for r in results {
        r?;
    }

    Ok(Absorbed {
        x: out_x,
        y: out_y,
        absorbed_dof: absorbed_dof(dims, &group_weights),
        total_sum_squares: weighted_tss(y, w),
        dep_var_mean: y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw,
        dimensions: dims.to_vec(),
    })
}

fn demean_column(
    col: &mut [f64],
    w: &[f64],
    dims: &[GroupDimension],
    group_weights: &[Vec<f64>],
    opts: AbsorbOptions,
) -> Result<()> {
    if dims.is_empty() {
        return Ok(());
    }
    let scale = col.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = opts.tolerance * scale;
    let mut sums: Vec<Vec<f64>> = dims.iter().map(|d| vec![0.0; d.n_groups]).collect();
    let mut last = f64::INFINITY;
    for sweep in 0..opts.max_sweeps {
        let mut largest = 0.0_f64;
        for ((dim, gw), sum) in dims.iter().zip(group_weights).zip(sums.iter_mut()) {
            sum.iter_mut().for_each(|s| *s = 0.0);
            for ((&g, &wi), &v) in dim.index.iter().zip(w).zip(col.iter()) {
                sum[g] += wi * v;
            }
            for (s, &gwi) in sum.iter_mut().zip(gw) {
                *s = if gwi > 0.0 { *s / gwi } else { 0.0 };
                largest = largest.max(s.abs());
            }
            for (&g, v) in dim.index.iter().zip(col.iter_mut()) {
                *v -= sum[g];
            }
        }
        // One dimension is exact after a single pass.
        if dims.len() == 1 || (sweep > 0 && largest <= tol) {
            return Ok(());
        }
        last = largest;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_sweeps,
        residual: last,
    })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// G1 + G2 - (connected components of the bipartite group graph), minus one
/// more per additional dimension.
fn absorbed_dof(dims: &[GroupDimension], group_weights: &[Vec<f64>]) -> usize {
    let active = |d: usize| group_weights[d].iter().filter(|w| **w > 0.0).count();
    match dims.len() {
        0 => 0,
        1 => active(0),
        _ => {
            let (a, b) = (&dims[0], &dims[1]);
            let mut parent: Vec<usize> = (0..a.n_groups + b.n_groups).collect();
            for (&ga, &gb) in a.index.iter().zip(&b.index) {
                if group_weights[0][ga] <= 0.0 || group_weights[1][gb] <= 0.0 {
                    continue;
                }
                let (ra, rb) = (find(&mut parent, ga), find(&mut parent, a.n_groups + gb));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
            let mut roots = std::collections::HashSet::new();
            for g in 0..a.n_groups {
                if group_weights[0][g] > 0.0 {
                    roots.insert(find(&mut parent, g));
                }
            }
            for g in 0..b.n_groups {
                if group_weights[1][g] > 0.0 {
                    roots.insert(find(&mut parent, a.n_groups + g));
                }
            }
            let mut dof = active(0) + active(1) - roots.len();
            for d in 2..dims.len() {
                dof += active(d).saturating_sub(1);
            }
            dof
        }
    }
}
