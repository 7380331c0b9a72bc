use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Time-ordered observations `(X_t, Y_t)`.
///
/// `x` is the design matrix used by the regression, passed verbatim: callers
/// add an intercept column or transformations of the covariates themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    time_ordered: bool,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Shape {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::Parameter("design matrix has no columns".into()));
        }
        if x.nrows() <= x.ncols() {
            return Err(Error::Size(format!(
                "{} observations for {} regressors",
                x.nrows(),
                x.ncols()
            )));
        }
        if let Some(t) =
            (0..x.nrows()).find(|&t| !y[t].is_finite() || x.row(t).iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numeric(format!("non-finite value in row {t}")));
        }
        Ok(Self {
            x,
            y,
            time_ordered: true,
        })
    }

    /// Builds a dataset from row-major covariates.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::Shape {
                expected: p,
                got: bad.len(),
            });
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x, DVector::from_vec(y))
    }

    /// Marks the rows as exchangeable (i.i.d.) rather than a time series.
    pub fn with_time_ordered(mut self, time_ordered: bool) -> Self {
        self.time_ordered = time_ordered;
        self
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn time_ordered(&self) -> bool {
        self.time_ordered
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.x.row(t).iter().copied().collect()
    }

    /// Consecutive block of rows `[start, end)`, without the `T > p` check.
    pub(crate) fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            x: self.x.rows(start, end - start).into_owned(),
            y: self.y.rows(start, end - start).into_owned(),
            time_ordered: self.time_ordered,
        }
    }

    /// Prepends a column of ones.
    pub fn with_intercept(&self) -> Dataset {
        let x = self.x.clone().insert_column(0, 1.0);
        Dataset {
            x,
            y: self.y.clone(),
            time_ordered: self.time_ordered,
        }
    }

    /// Multiplies one column by `c`.
    pub fn scale_column(&self, j: usize, c: f64) -> Dataset {
        let mut x = self.x.clone();
        x.column_mut(j).scale_mut(c);
        Dataset {
            x,
            y: self.y.clone(),
            time_ordered: self.time_ordered,
        }
    }

    /// Rows in reverse order.
    pub fn reversed(&self) -> Dataset {
        let n = self.nrows();
        let x = DMatrix::from_fn(n, self.ncols(), |i, j| self.x[(n - 1 - i, j)]);
        let y = DVector::from_fn(n, |i, _| self.y[n - 1 - i]);
        Dataset {
            x,
            y,
            time_ordered: self.time_ordered,
        }
    }
}
