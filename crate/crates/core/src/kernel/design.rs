use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense regressor matrix with named columns and per-row analytic weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
    weights: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, values: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Validation(format!(
                "{} column names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if weights.len() != values.nrows() {
            return Err(Error::Validation(format!(
                "{} weights for {} rows",
                weights.len(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "design contains NaN or infinite values".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(DesignMatrix {
            names,
            values,
            weights,
        })
    }

    /// Builds a design from named columns of equal length.
    pub fn from_columns<S: Into<String>>(
        columns: Vec<(S, Vec<f64>)>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let rows = weights.len();
        let mut names = Vec::with_capacity(columns.len());
        let mut data = Vec::with_capacity(rows * columns.len());
        for (name, col) in columns {
            let name = name.into();
            if col.len() != rows {
                return Err(Error::Validation(format!(
                    "column `{name}` has {} rows, expected {rows}",
                    col.len()
                )));
            }
            names.push(name);
            data.extend_from_slice(&col);
        }
        let cols = names.len();
        Self::new(names, DMatrix::from_vec(rows, cols, data), weights)
    }

    /// Builds a design from row-major data with unit weights.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        let k = names.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Validation("ragged rows".into()));
        }
        let n = rows.len();
        let values = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
        Self::new(
            names.iter().map(|s| s.to_string()).collect(),
            values,
            vec![1.0; n],
        )
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.rows() {
            return Err(Error::Validation(
                "weight count differs from row count".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation(
                "weights must be finite and nonnegative".into(),
            ));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.rows();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub(crate) fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    /// Appends the columns of `other` (same rows, weights taken from `self`).
    pub fn hstack(&self, other: &DesignMatrix) -> Result<DesignMatrix> {
        if other.rows() != self.rows() {
            return Err(Error::Validation(
                "cannot stack designs of different heights".into(),
            ));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut data = self.values.as_slice().to_vec();
        data.extend_from_slice(other.values.as_slice());
        Ok(DesignMatrix {
            names,
            values: DMatrix::from_vec(self.rows(), self.cols() + other.cols(), data),
            weights: self.weights.clone(),
        })
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> DesignMatrix {
        let n = self.rows();
        let mut data = Vec::with_capacity(n * columns.len());
        for &j in columns {
            data.extend_from_slice(self.column(j));
        }
        DesignMatrix {
            names: columns.iter().map(|&j| self.names[j].clone()).collect(),
            values: DMatrix::from_vec(n, columns.len(), data),
            weights: self.weights.clone(),
        }
    }
}

fn intern<K: Hash + Eq>(labels: impl IntoIterator<Item = K>) -> (Vec<usize>, usize) {
    let mut seen: HashMap<K, usize> = HashMap::new();
    let index = labels
        .into_iter()
        .map(|k| {
            let next = seen.len();
            *seen.entry(k).or_insert(next)
        })
        .collect();
    (index, seen.len())
}

/// One categorical grouping of the rows (a fixed-effect dimension).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupDimension {
    pub name: String,
    pub index: Vec<usize>,
    pub n_groups: usize,
}

/// Categorical labels for one or more fixed-effect dimensions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupLabels {
    dims: Vec<GroupDimension>,
}

impl GroupLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dimension<K: Hash + Eq>(
        mut self,
        name: impl Into<String>,
        labels: impl IntoIterator<Item = K>,
    ) -> Result<Self> {
        let (index, n_groups) = intern(labels);
        if let Some(first) = self.dims.first() {
            if first.index.len() != index.len() {
                return Err(Error::Validation(format!(
                    "group dimension has {} labels, expected {}",
                    index.len(),
                    first.index.len()
                )));
            }
        }
        self.dims.push(GroupDimension {
            name: name.into(),
            index,
            n_groups,
        });
        Ok(self)
    }

    pub fn dimensions(&self) -> &[GroupDimension] {
        &self.dims
    }

    pub fn rows(&self) -> Option<usize> {
        self.dims.first().map(|d| d.index.len())
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }
}

/// Cluster membership per row for cluster-robust inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    index: Vec<usize>,
    n_clusters: usize,
}

impl ClusterSpec {
    pub fn new<K: Hash + Eq>(labels: impl IntoIterator<Item = K>) -> Self {
        let (index, n_clusters) = intern(labels);
        ClusterSpec { index, n_clusters }
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// True when every group of `dim` lies inside a single cluster.
    pub fn nests(&self, dim: &GroupDimension) -> bool {
        let mut owner = vec![usize::MAX; dim.n_groups];
        for (&g, &c) in dim.index.iter().zip(&self.index) {
            if owner[g] == usize::MAX {
                owner[g] = c;
            } else if owner[g] != c {
                return false;
            }
        }
        true
    }
}
