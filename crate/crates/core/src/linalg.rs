//! Small dense kernels for the p×p systems that show up everywhere in the
//! solver and the variance computations. p stays in the hundreds, so plain
//! loops over `ndarray` storage are sufficient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid(format!(
                "cholesky: matrix is {}x{}, expected square",
                n,
                a.ncols()
            )));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::numerical(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.l
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "cholesky solve: rhs length mismatch");
        let l = &self.l;
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= l[[i, k]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        z
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros(b.raw_dim());
        for (j, col) in b.axis_iter(Axis(1)).enumerate() {
            out.column_mut(j).assign(&self.solve(col));
        }
        out
    }

    /// Solves `A Zᵀ = Xᵀ` for every row of `x` at once, returning Z (same shape as x).
    pub fn solve_rows(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n = self.dim();
        assert_eq!(x.ncols(), n, "cholesky solve_rows: column mismatch");
        let l = &self.l;
        let mut z = x.to_owned();
        for mut row in z.axis_iter_mut(Axis(0)) {
            for i in 0..n {
                let mut s = row[i];
                for k in 0..i {
                    s -= l[[i, k]] * row[k];
                }
                row[i] = s / l[[i, i]];
            }
            for i in (0..n).rev() {
                let mut s = row[i];
                for k in (i + 1)..n {
                    s -= l[[k, i]] * row[k];
                }
                row[i] = s / l[[i, i]];
            }
        }
        z
    }

    pub fn inverse(&self) -> Array2<f64> {
        self.solve_matrix(&Array2::eye(self.dim()))
    }
}

/// `Xᵀ X`.
pub fn gram(x: ArrayView2<f64>) -> Array2<f64> {
    let g = x.t().dot(&x);
    symmetrize(&g)
}

/// `Xᵀ diag(w) X`.
pub fn weighted_gram(x: ArrayView2<f64>, w: ArrayView1<f64>) -> Array2<f64> {
    assert_eq!(x.nrows(), w.len());
    let scaled = &x * &w.insert_axis(Axis(1));
    symmetrize(&x.t().dot(&scaled))
}

pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    (a + &a.t()) * 0.5
}

/// Orthonormal factor Q of a thin QR decomposition `X = QR`, computed by
/// classical Gram–Schmidt with one full reorthogonalization pass.
///
/// Fails when a column is (numerically) in the span of the previous ones.
pub fn thin_q(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, p) = x.dim();
    if n < p {
        return Err(Error::invalid(format!(
            "thin QR needs at least as many rows as columns (got {n}x{p})"
        )));
    }
    let mut q = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        let original = x.column(j);
        let original_norm = original.dot(&original).sqrt();
        let mut v = original.to_owned();
        for _pass in 0..2 {
            for k in 0..j {
                let qk = q.column(k);
                let coef = qk.dot(&v);
                v.scaled_add(-coef, &qk);
            }
        }
        let norm = v.dot(&v).sqrt();
        if !(norm > 1e-10 * original_norm.max(f64::MIN_POSITIVE)) || original_norm == 0.0 {
            return Err(Error::numerical(format!(
                "design matrix is rank deficient: column {j} is linearly dependent on earlier columns"
            )));
        }
        q.column_mut(j).assign(&(v / norm));
    }
    Ok(q)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (ascending) and the matching eigenvectors as columns.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = symmetrize(a);
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += m[[i, i]] * m[[i, i]];
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

pub fn max_abs(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
