//! Small dense matrices for dimensions up to C(5,2) = 10.
//!
//! Everything here is deliberately dependency-free: singular values come
//! from one-sided Jacobi iteration and orthonormalization from modified
//! Gram-Schmidt, both of which are bit-stable across platforms at these
//! sizes.

use std::fmt;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[r * self.cols..(r + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Mat { rows: self.rows, cols: self.cols, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Determinant by fraction-free Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "det of non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut piv = k;
            for r in k + 1..n {
                if a[(r, k)].abs() > a[(piv, k)].abs() {
                    piv = r;
                }
            }
            if a[(piv, k)] == 0.0 {
                return 0.0;
            }
            if piv != k {
                for c in 0..n {
                    let t = a[(k, c)];
                    a[(k, c)] = a[(piv, c)];
                    a[(piv, c)] = t;
                }
                det = -det;
            }
            det *= a[(k, k)];
            for r in k + 1..n {
                let f = a[(r, k)] / a[(k, k)];
                for c in k..n {
                    a[(r, c)] -= f * a[(k, c)];
                }
            }
        }
        det
    }

    /// Inverse via Gauss-Jordan with partial pivoting. Panics on singular input;
    /// the callers only invert Jacobians of diffeomorphisms.
    pub fn inverse(&self) -> Mat {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        for k in 0..n {
            let mut piv = k;
            for r in k + 1..n {
                if a[(r, k)].abs() > a[(piv, k)].abs() {
                    piv = r;
                }
            }
            assert!(a[(piv, k)] != 0.0, "singular matrix");
            if piv != k {
                for c in 0..n {
                    a.data.swap(k * n + c, piv * n + c);
                    inv.data.swap(k * n + c, piv * n + c);
                }
            }
            let d = a[(k, k)];
            for c in 0..n {
                a[(k, c)] /= d;
                inv[(k, c)] /= d;
            }
            for r in 0..n {
                if r == k {
                    continue;
                }
                let f = a[(r, k)];
                if f == 0.0 {
                    continue;
                }
                for c in 0..n {
                    a[(r, c)] -= f * a[(k, c)];
                    inv[(r, c)] -= f * inv[(k, c)];
                }
            }
        }
        inv
    }

    /// All singular values, descending, by one-sided Jacobi iteration on the
    /// columns. Converges quadratically; tolerance 1e-12 relative.
    pub fn singular_values(&self) -> Vec<f64> {
        let m = self.rows;
        let n = self.cols;
        // Work on columns of a copy; rotate column pairs until orthogonal.
        let mut a: Vec<Vec<f64>> = (0..n).map(|c| self.col(c)).collect();
        let tol = 1e-12;
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    let mut aii = 0.0;
                    let mut ajj = 0.0;
                    let mut aij = 0.0;
                    for r in 0..m {
                        aii += a[i][r] * a[i][r];
                        ajj += a[j][r] * a[j][r];
                        aij += a[i][r] * a[j][r];
                    }
                    if aij.abs() <= tol * (aii * ajj).sqrt() {
                        continue;
                    }
                    off = off.max(aij.abs() / (aii * ajj).sqrt().max(f64::MIN_POSITIVE));
                    let tau = (ajj - aii) / (2.0 * aij);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for r in 0..m {
                        let vi = a[i][r];
                        let vj = a[j][r];
                        a[i][r] = c * vi - s * vj;
                        a[j][r] = s * vi + c * vj;
                    }
                }
            }
            if off <= tol {
                break;
            }
        }
        let mut sv: Vec<f64> = a
            .iter()
            .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        sv
    }

    /// Spectral norm (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        *self
            .singular_values()
            .first()
            .expect("spectral norm of empty matrix")
    }

    /// Thin QR by modified Gram-Schmidt with one reorthogonalization pass.
    /// Returns (Q, diag(R)); the full R is not needed by any caller.
    pub fn qr_diag(&self) -> (Mat, Vec<f64>) {
        let m = self.rows;
        let n = self.cols;
        let mut q: Vec<Vec<f64>> = (0..n).map(|c| self.col(c)).collect();
        let mut rdiag = vec![0.0; n];
        for j in 0..n {
            // Two MGS passes keep Q orthonormal even for badly conditioned input.
            for _ in 0..2 {
                for i in 0..j {
                    let dot: f64 = (0..m).map(|r| q[i][r] * q[j][r]).sum();
                    for r in 0..m {
                        q[j][r] -= dot * q[i][r];
                    }
                }
            }
            let norm = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            rdiag[j] = norm;
            if norm > 0.0 {
                for x in q[j].iter_mut() {
                    *x /= norm;
                }
            }
        }
        let qmat = Mat::from_fn(m, n, |r, c| q[c][r]);
        (qmat, rdiag)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> Mat {
        Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]])
    }

    #[test]
    fn det_and_inverse() {
        let a = cat();
        assert!((a.det() - 1.0).abs() < 1e-12);
        let inv = a.inverse();
        let prod = a.matmul(&inv);
        assert!(prod.sub(&Mat::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn singular_values_of_symmetric() {
        // Cat map is symmetric; singular values are |eigenvalues|.
        let sv = cat().singular_values();
        let lam = (3.0 + 5.0f64.sqrt()) / 2.0;
        assert!((sv[0] - lam).abs() < 1e-12);
        assert!((sv[1] - 1.0 / lam).abs() < 1e-12);
    }

    #[test]
    fn singular_values_of_rectangular() {
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]);
        let sv = a.singular_values();
        assert!((sv[0] - 2.0).abs() < 1e-12);
        assert!((sv[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qr_reproduces_column_span() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 2.0], vec![0.0, 3.0]]);
        let (q, rdiag) = a.qr_diag();
        // Q orthonormal
        for i in 0..2 {
            for j in 0..2 {
                let d = dot(&q.col(i), &q.col(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
        assert!(rdiag.iter().all(|&r| r > 0.0));
    }

    #[test]
    fn jacobi_matches_eig_product() {
        // det = product of singular values for square matrices.
        let a = Mat::from_rows(&[vec![3.0, 1.0, 0.5], vec![0.2, 2.0, 0.1], vec![0.3, 0.4, 1.5]]);
        let sv = a.singular_values();
        let prod: f64 = sv.iter().product();
        assert!((prod - a.det().abs()).abs() / prod < 1e-10);
    }
}
