use nalgebra::{DMatrix, DVector};

use crate::design::{center_columns, center_vector};
use crate::error::{Error, Result};

/// Sufficient statistics of a subsample after centering and scaling every
/// column to unit norm. Columns that vanish after centering are dropped.
#[derive(Clone, Debug)]
pub struct Standardized {
    /// Original column index of each kept column.
    pub keep: Vec<usize>,
    /// `ZᵀZ` (unit diagonal).
    pub gram: DMatrix<f64>,
    /// `Zᵀy`
    pub xty: DVector<f64>,
    /// `‖y‖²` after centering.
    pub yty: f64,
    pub n: usize,
    pub scale: Vec<f64>,
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if n < 2 {
            return Err(Error::invalid("a subsample needs at least 2 rows"));
        }
        let xc = center_columns(x.clone());
        let yc = center_vector(y);
        let mut keep = Vec::with_capacity(p);
        let mut scale = Vec::with_capacity(p);
        for j in 0..p {
            let norm = xc.column(j).norm();
            let raw = x.column(j).amax().max(f64::MIN_POSITIVE);
            if norm > 1e-12 * raw * (n as f64).sqrt() {
                keep.push(j);
                scale.push(norm);
            }
        }
        let mut z = xc.select_columns(&keep);
        for (k, mut col) in z.column_iter_mut().enumerate() {
            col /= scale[k];
        }
        let gram = z.tr_mul(&z);
        let xty = z.tr_mul(&yc);
        Ok(Standardized {
            keep,
            gram,
            xty,
            yty: yc.norm_squared(),
            n,
            scale,
        })
    }

    pub fn p(&self) -> usize {
        self.keep.len()
    }
}
