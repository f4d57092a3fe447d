use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;

/// Column-centered predictor matrix (rows are samples, columns are features).
///
/// Every feature subspace in the crate is spanned by columns of one of
/// these, so it also carries the column norms and optional column names.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    column_norms: Vec<f64>,
    centered: bool,
    names: Option<Vec<String>>,
}

impl DesignMatrix {
    /// Centers every column of `values` and wraps the result.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        Self::build(center_columns(values), true)
    }

    /// Wraps `values` as given. The columns are assumed, not forced, to be
    /// centered; the flag records whether they actually are.
    pub fn uncentered(values: DMatrix<f64>) -> Result<Self> {
        let centered = is_centered(&values);
        Self::build(values, centered)
    }

    fn build(values: DMatrix<f64>, centered: bool) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 {
            return Err(Error::invalid(format!(
                "design needs at least 2 rows, got {n}"
            )));
        }
        if p < 1 {
            return Err(Error::invalid("design needs at least one column"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains non-finite values"));
        }
        let column_norms = values.column_iter().map(|c| c.norm()).collect();
        Ok(DesignMatrix {
            values,
            column_norms,
            centered,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: names.len(),
            });
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> DVectorView<'_, f64> {
        self.values.column(j)
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Name of column `j`, falling back to `x{j}`.
    pub fn name(&self, j: usize) -> String {
        match &self.names {
            Some(n) => n[j].clone(),
            None => format!("x{j}"),
        }
    }

    /// Copies the columns indexed by `s` into an `n × |s|` matrix.
    pub fn columns(&self, s: &FeatureSet) -> Result<DMatrix<f64>> {
        s.check_range(self.p())?;
        Ok(self.values.select_columns(s.indices()))
    }

    /// Sub-design on the given rows, re-centered.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DesignMatrix> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::invalid(format!(
                "row {r} out of range for {} rows",
                self.n()
            )));
        }
        let sub = DesignMatrix::new(self.values.select_rows(rows))?;
        Ok(DesignMatrix {
            names: self.names.clone(),
            ..sub
        })
    }

    /// Absolute sample correlation `|a·b| / (‖a‖‖b‖)`; zero when either column vanishes.
    pub fn abs_correlation(&self, j: usize, k: usize) -> f64 {
        let denom = self.column_norms[j] * self.column_norms[k];
        if denom == 0.0 {
            return 0.0;
        }
        (self.column(j).dot(&self.column(k)) / denom).abs()
    }
}

pub(crate) fn center_columns(mut values: DMatrix<f64>) -> DMatrix<f64> {
    let n = values.nrows() as f64;
    for mut col in values.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    values
}

pub(crate) fn center_vector(v: &DVector<f64>) -> DVector<f64> {
    let mean = v.mean();
    v.add_scalar(-mean)
}

fn is_centered(values: &DMatrix<f64>) -> bool {
    let n = values.nrows() as f64;
    values.column_iter().all(|c| {
        let scale = c.norm().max(f64::MIN_POSITIVE);
        c.sum().abs() <= 1e-8 * n * scale
    })
}
