//! Small dense linear-algebra kernels.
//!
//! Everything in this crate operates on instances that are small by
//! construction (tens of variables per agent, a few thousand rows for a
//! stacked centralized solve), so a row-major `Vec<f64>` matrix and a few
//! hand-written factorizations are all that is needed. All routines are
//! deterministic: no pivoting decision depends on anything but the input
//! values and fixed index order.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from a flat row-major slice.
    pub fn from_rows_flat(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "flat data length mismatch");
        Mat { rows, cols, data }
    }

    /// Build from nested rows, checking that they are rectangular.
    ///
    /// `expected_cols` disambiguates the column count of an empty matrix.
    pub fn from_nested(nested: &[Vec<f64>], expected_cols: Option<usize>) -> Result<Self, String> {
        let rows = nested.len();
        let cols = match (nested.first(), expected_cols) {
            (Some(r), _) => r.len(),
            (None, Some(c)) => c,
            (None, None) => 0,
        };
        let mut data = Vec::with_capacity(rows * cols);
        for (i, row) in nested.iter().enumerate() {
            if row.len() != cols {
                return Err(format!(
                    "ragged matrix: row {} has {} entries, expected {}",
                    i,
                    row.len(),
                    cols
                ));
            }
            data.extend_from_slice(row);
        }
        if let Some(c) = expected_cols {
            if cols != c && rows > 0 {
                return Err(format!("matrix has {} columns, expected {}", cols, c));
            }
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// y = A^T x
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "t_matvec dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi != 0.0 {
                for (yj, aij) in y.iter_mut().zip(self.row(i)) {
                    *yj += aij * xi;
                }
            }
        }
        y
    }

    /// Column `j` gathered into a dense vector.
    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Largest absolute asymmetry |A_ij - A_ji|.
    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq((0..self.rows).map(|i| self.row(i)))
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let nested = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Mat::from_nested(&nested, None).map_err(D::Error::custom)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// a - b
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// a += s * b
pub fn axpy(a: &mut [f64], s: f64, b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for (ai, bi) in a.iter_mut().zip(b) {
        *ai += s * bi;
    }
}

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as the columns of
/// the returned matrix, sorted by ascending eigenvalue. Deterministic sweep
/// order; intended for the small (n <= a few dozen) matrices this crate sees.
pub fn symmetric_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let scale = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .fold(0.0f64, |s, (i, j)| s.max(m[(i, j)].abs()))
        .max(1.0);
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vecs[(i, new_j)] = v[(i, old_j)];
        }
    }
    (eigvals, vecs)
}

/// Householder QR of an `m x k` matrix (`m >= k` not required).
///
/// Produces the full `m x m` orthogonal factor `q` and the `m x k` upper
/// trapezoidal factor `r`.
pub struct Qr {
    pub q: Mat,
    pub r: Mat,
}

pub fn householder_qr(a: &Mat) -> Qr {
    let m = a.nrows();
    let k = a.ncols();
    let mut r = a.clone();
    let mut q = Mat::identity(m);
    for j in 0..k.min(m) {
        // Householder vector for column j below the diagonal.
        let mut alpha = 0.0f64;
        for i in j..m {
            alpha += r[(i, j)] * r[(i, j)];
        }
        alpha = alpha.sqrt();
        if alpha < 1e-300 {
            continue;
        }
        if r[(j, j)] > 0.0 {
            alpha = -alpha;
        }
        let mut v = vec![0.0; m];
        v[j] = r[(j, j)] - alpha;
        for i in (j + 1)..m {
            v[i] = r[(i, j)];
        }
        let vnorm2 = dot(&v[j..], &v[j..]);
        if vnorm2 < 1e-300 {
            continue;
        }
        // Apply H = I - 2 v v^T / (v^T v) to R (left) and accumulate into Q.
        for col in j..k {
            let mut s = 0.0;
            for i in j..m {
                s += v[i] * r[(i, col)];
            }
            let f = 2.0 * s / vnorm2;
            for i in j..m {
                r[(i, col)] -= f * v[i];
            }
        }
        for col in 0..m {
            let mut s = 0.0;
            for i in j..m {
                s += v[i] * q[(i, col)];
            }
            let f = 2.0 * s / vnorm2;
            for i in j..m {
                q[(i, col)] -= f * v[i];
            }
        }
    }
    // q currently holds Q^T (product of reflectors applied to I).
    Qr {
        q: q.transpose(),
        r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose() {
        let a = Mat::from_rows_flat(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(a.t_matvec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert_eq!(a.transpose().row(0), &[1.0, 4.0]);
    }

    #[test]
    fn nested_round_trip_rejects_ragged() {
        let ok = Mat::from_nested(&[vec![1.0, 2.0], vec![3.0, 4.0]], Some(2)).unwrap();
        assert_eq!(ok.to_nested(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(Mat::from_nested(&[vec![1.0], vec![2.0, 3.0]], None).is_err());
    }

    #[test]
    fn jacobi_eigen_recovers_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let a = Mat::from_rows_flat(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = symmetric_eigen(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // A v = lambda v for each column.
        for j in 0..2 {
            let v = vecs.col(j);
            let av = a.matvec(&v);
            for i in 0..2 {
                assert!((av[i] - vals[j] * v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn qr_reconstructs_input() {
        let a = Mat::from_rows_flat(3, 2, vec![1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let Qr { q, r } = householder_qr(&a);
        // Q R = A
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += q[(i, k)] * r[(k, j)];
                }
                assert!((s - a[(i, j)]).abs() < 1e-12);
            }
        }
        // Q orthogonal
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += q[(k, i)] * q[(k, j)];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12);
            }
        }
    }
}
