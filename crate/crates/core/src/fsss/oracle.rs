use nalgebra::{DMatrix, DVector};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::linalg::{self, AvgProjection};

/// Precomputed products that make stability and pre-screen evaluations
/// independent of the number of rows: `XᵀX` and `[Q_1 | … | Q_B]ᵀ X`.
#[derive(Debug)]
pub struct StabilityOracle<'a> {
    x: &'a DesignMatrix,
    b: f64,
    proj: DMatrix<f64>,
    tol: f64,
}

/// Factorization of one feature set.
#[derive(Clone, Debug)]
pub struct Node {
    pub set: FeatureSet,
    /// Orthonormal basis of `col(X_S)`.
    q: DMatrix<f64>,
    /// `[Q_1 | … | Q_B]ᵀ Q` (rows = stacked subsample directions).
    h: DMatrix<f64>,
    /// `None` when `X_S` is rank deficient.
    full_rank: bool,
}

/// A feature passing the pre-screen, with its alignment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub feature: usize,
    pub alignment: f64,
}

impl<'a> StabilityOracle<'a> {
    pub fn new(x: &'a DesignMatrix, p: &AvgProjection, tol: f64) -> Result<Self> {
        if p.ambient_dim() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                found: p.ambient_dim(),
            });
        }
        Ok(StabilityOracle {
            x,
            b: p.num_subsamples() as f64,
            proj: p.stacked().tr_mul(x.values()),
            tol,
        })
    }

    pub fn design(&self) -> &DesignMatrix {
        self.x
    }

    pub fn root(&self) -> Node {
        Node {
            set: FeatureSet::empty(),
            q: DMatrix::zeros(self.x.n(), 0),
            h: DMatrix::zeros(self.proj.nrows(), 0),
            full_rank: true,
        }
    }

    pub fn node(&self, set: &FeatureSet) -> Result<Node> {
        set.check_range(self.x.p())?;
        let cols = self.x.values().select_columns(set.indices());
        let (q, t) = linalg::basis_and_coordinates(&cols, self.tol);
        let full_rank = t.is_some() && q.ncols() == set.len();
        let h = match &t {
            Some(t) if full_rank => self.proj.select_columns(set.indices()) * t,
            _ => DMatrix::zeros(self.proj.nrows(), 0),
        };
        Ok(Node {
            set: set.clone(),
            q,
            h,
            full_rank,
        })
    }

    /// π of the node's set: smallest eigenvalue of `HᵀH / B`, zero for
    /// dependent columns, one for the empty set.
    pub fn stability(&self, node: &Node) -> f64 {
        if node.set.is_empty() {
            return 1.0;
        }
        if !node.full_rank {
            log::debug!("{} is rank deficient; stability 0", node.set);
            return 0.0;
        }
        let m = node.h.tr_mul(&node.h) / self.b;
        linalg::min_eigenpair(m).0
    }

    /// Alignment of the residual `v_j = P_{S⊥} X_j` with `P_avg` for every
    /// `j ∉ S` whose residual is numerically nonzero.
    pub fn alignments(&self, node: &Node) -> Vec<Option<f64>> {
        let p = self.x.p();
        let x = self.x.values();
        let norms = self.x.column_norms();
        // C = Qᵀ X, residual norms in sample space, R = proj − H C.
        let c = node.q.tr_mul(x);
        let mut out = vec![None; p];
        let r = if node.q.ncols() > 0 {
            &self.proj - &node.h * &c
        } else {
            self.proj.clone()
        };
        for j in 0..p {
            if node.set.contains(j) || norms[j] == 0.0 {
                continue;
            }
            let v: DVector<f64> = x.column(j) - &node.q * c.column(j);
            let vv = v.norm_squared();
            if vv.sqrt() <= self.tol * norms[j] {
                continue;
            }
            out[j] = Some((r.column(j).norm_squared() / (self.b * vv)).clamp(0.0, 1.0));
        }
        out
    }
}
