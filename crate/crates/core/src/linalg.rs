//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual below which a column counts as a linear combination of
/// the columns before it.
const COLLINEAR_TOL: f64 = 1e-10;

/// Condition number above which a solve is flagged as near-singular.
pub const COND_WARN: f64 = 1e10;

/// Indices of columns that are (numerically) linear combinations of earlier
/// columns, found by Gram-Schmidt with one reorthogonalisation pass.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            bad.push(j);
            continue;
        }
        let mut r = col;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn <= COLLINEAR_TOL * norm {
            bad.push(j);
        } else {
            basis.push(r / rn);
        }
    }
    bad
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    /// Ratio of the extreme singular values of the design.
    pub condition_number: f64,
}

/// Least squares of `y` on the columns of `x` through a thin SVD.
///
/// Rank deficiency is a hard error naming the offending columns.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    if x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() < x.ncols() {
        return Err(Error::Size(format!(
            "{} rows for {} columns",
            x.nrows(),
            x.ncols()
        )));
    }
    let bad = collinear_columns(x);
    if !bad.is_empty() {
        return Err(Error::Singular { columns: bad });
    }
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let beta = svd
        .solve(y, 0.0)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite least-squares solution".into()));
    }
    Ok(LeastSquares {
        beta,
        condition_number: smax / smin,
    })
}

/// `X'X`.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Makes a symmetric matrix PSD. Returns true when eigenvalues had to be
/// clipped, i.e. the Cholesky factorisation failed and a repair took place.
pub fn ensure_psd(m: &mut DMatrix<f64>) -> bool {
    if m.clone().cholesky().is_some() {
        return false;
    }
    let eig = m.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().all(|&v| v >= -1e-12 * scale) {
        // Semidefinite up to rounding; nothing to repair.
        return false;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let mut repaired =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut repaired);
    *m = repaired;
    true
}

/// In-place Cholesky solve of a small row-major SPD system `a x = b`.
/// Returns false if `a` is not numerically positive definite; `b` then holds
/// garbage.
pub fn cholesky_solve_in_place(a: &mut [f64], d: usize, b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), d * d);
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) {
            return false;
        }
        let l = s.sqrt();
        a[j * d + j] = l;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / l;
        }
    }
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * d + k] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s -= a[k * d + i] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    true
}

/// Neumaier-compensated running sum; order-independent to within rounding
/// of the compensated result.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}
