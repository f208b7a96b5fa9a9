//! Householder QR with column pivoting on a dense column-major matrix.
//!
//! Columns are pivoted by largest remaining norm, so the magnitudes on the
//! diagonal of `R` are non-increasing and a tiny trailing pivot identifies the
//! columns that are (numerically) linear combinations of the leading ones.

use nalgebra::DMatrix;

/// Pivots smaller than this fraction of the leading pivot are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub(crate) struct PivotedQr {
    rows: usize,
    cols: usize,
    /// Householder vectors below the diagonal, `R` on and above it.
    packed: Vec<f64>,
    tau: Vec<f64>,
    /// `perm[j]` is the original index of the column in pivoted position `j`.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedQr {
    /// Factorizes an `rows x cols` column-major matrix.
    pub fn new(rows: usize, cols: usize, mut a: Vec<f64>) -> Self {
        debug_assert_eq!(a.len(), rows * cols);
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut tau = vec![0.0; cols.min(rows)];
        let steps = cols.min(rows);
        let mut lead = 0.0_f64;
        let mut rank = steps;

        for k in 0..steps {
            // Pick the remaining column with the largest trailing norm.
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..cols {
                let col = &a[j * rows + k..(j + 1) * rows];
                let norm = col.iter().map(|v| v * v).sum::<f64>();
                if norm > best_norm {
                    best_norm = norm;
                    best = j;
                }
            }
            if best != k {
                for i in 0..rows {
                    a.swap(k * rows + i, best * rows + i);
                }
                perm.swap(k, best);
            }

            let norm = best_norm.max(0.0).sqrt();
            if k == 0 {
                lead = norm;
            }
            if norm <= RANK_TOLERANCE * lead || norm == 0.0 {
                rank = k;
                break;
            }

            // Householder reflector for column k, rows k..
            let x0 = a[k * rows + k];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let v0 = x0 - alpha;
            let scale = 1.0 / v0;
            for i in k + 1..rows {
                a[k * rows + i] *= scale;
            }
            tau[k] = (alpha - x0) / alpha;
            a[k * rows + k] = alpha;

            for j in k + 1..cols {
                let (left, right) = a.split_at_mut(j * rows);
                let v = &left[k * rows + k + 1..(k + 1) * rows];
                let col = &mut right[k..rows];
                let mut dot = col[0];
                for (ci, vi) in col[1..].iter().zip(v) {
                    dot += ci * vi;
                }
                let f = tau[k] * dot;
                col[0] -= f;
                for (ci, vi) in col[1..].iter_mut().zip(v) {
                    *ci -= f * vi;
                }
            }
        }

        PivotedQr {
            rows,
            cols,
            packed: a,
            tau,
            perm,
            rank,
        }
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.cols
    }

    /// Original indices of the columns that fell below the rank tolerance.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    fn apply_qt(&self, y: &mut [f64]) {
        let n = self.rows;
        for k in 0..self.rank {
            let v = &self.packed[k * n + k + 1..(k + 1) * n];
            let mut dot = y[k];
            for (yi, vi) in y[k + 1..].iter().zip(v) {
                dot += yi * vi;
            }
            let f = self.tau[k] * dot;
            y[k] -= f;
            for (yi, vi) in y[k + 1..].iter_mut().zip(v) {
                *yi -= f * vi;
            }
        }
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> f64 {
        self.packed[j * self.rows + i]
    }

    /// Least-squares solution in the original column order. Requires full rank.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        debug_assert!(self.is_full_rank());
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let k = self.cols;
        let mut z = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = qty[i];
            for j in i + 1..k {
                s -= self.r(i, j) * z[j];
            }
            z[i] = s / self.r(i, i);
        }
        let mut b = vec![0.0; k];
        for (pos, &orig) in self.perm.iter().enumerate() {
            b[orig] = z[pos];
        }
        b
    }

    /// `(A'A)^{-1}` in the original column order. Requires full rank.
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        debug_assert!(self.is_full_rank());
        let k = self.cols;
        // R^{-1}, upper triangular.
        let mut rinv = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            rinv[(j, j)] = 1.0 / self.r(j, j);
            for i in (0..j).rev() {
                let mut s = 0.0;
                for m in i + 1..=j {
                    s += self.r(i, m) * rinv[(m, j)];
                }
                rinv[(i, j)] = -s / self.r(i, i);
            }
        }
        let pivoted = &rinv * rinv.transpose();
        let mut out = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                out[(self.perm[a], self.perm[b])] = pivoted[(a, b)];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_exact_system() {
        // columns [1,1,1], [0,1,2]
        let qr = PivotedQr::new(3, 2, vec![1.0, 1.0, 1.0, 0.0, 1.0, 2.0]);
        assert!(qr.is_full_rank());
        let b = qr.solve(&[1.0, 2.0, 3.0]);
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flags_duplicate_column() {
        let qr = PivotedQr::new(3, 3, vec![1.0, 1.0, 1.0, 0.0, 1.0, 2.0, 0.0, 1.0, 2.0]);
        assert_eq!(qr.rank, 2);
        assert_eq!(qr.dependent_columns().len(), 1);
    }

    #[test]
    fn gram_inverse_matches_direct_inverse() {
        let a = vec![1.0, 1.0, 1.0, 1.0, 0.5, -1.0, 2.0, 3.0];
        let qr = PivotedQr::new(4, 2, a.clone());
        let m = DMatrix::from_column_slice(4, 2, &a);
        let direct = (m.transpose() * &m).try_inverse().unwrap();
        let got = qr.gram_inverse();
        for i in 0..2 {
            for j in 0..2 {
                assert!((got[(i, j)] - direct[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
