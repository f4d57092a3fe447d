//! Similarity, stability and error measures between feature sets.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::linalg::{self, AvgProjection, SubspaceBasis, DEFAULT_RANK_TOL};

/// A design matrix with a shared cache of subspace bases keyed by feature set.
///
/// The cache is behind a lock so a single space can be read from many
/// threads; writers are serialized.
#[derive(Debug)]
pub struct FeatureSpace<'a> {
    x: &'a DesignMatrix,
    tol: f64,
    cache: RwLock<HashMap<FeatureSet, Arc<SubspaceBasis>>>,
}

/// All set-to-set similarities for one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub tau: f64,
    pub tau_bar: f64,
    pub tau_tilde: f64,
    pub tau_y: Option<f64>,
    pub rank1: usize,
    pub rank2: usize,
}

impl<'a> FeatureSpace<'a> {
    pub fn new(x: &'a DesignMatrix) -> Self {
        Self::with_tolerance(x, DEFAULT_RANK_TOL)
    }

    pub fn with_tolerance(x: &'a DesignMatrix, tol: f64) -> Self {
        FeatureSpace {
            x,
            tol,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn design(&self) -> &'a DesignMatrix {
        self.x
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("basis cache poisoned").clear();
    }

    pub fn basis(&self, s: &FeatureSet) -> Result<Arc<SubspaceBasis>> {
        if let Some(q) = self.cache.read().expect("basis cache poisoned").get(s) {
            return Ok(Arc::clone(q));
        }
        let q = Arc::new(linalg::orthonormal_basis(self.x, s, self.tol)?);
        self.cache
            .write()
            .expect("basis cache poisoned")
            .insert(s.clone(), Arc::clone(&q));
        Ok(q)
    }

    /// `trace(P₁P₂)`
    pub fn similarity(&self, s1: &FeatureSet, s2: &FeatureSet) -> Result<f64> {
        let (q1, q2) = (self.basis(s1)?, self.basis(s2)?);
        linalg::trace_inner(&q1, &q2)
    }

    /// `τ / min(|S₁|, |S₂|)` with `0/0 = 1`.
    pub fn normalized_similarity(&self, s1: &FeatureSet, s2: &FeatureSet) -> Result<f64> {
        let tau = self.similarity(s1, s2)?;
        Ok(normalize(tau, s1.len(), s2.len()))
    }

    /// Squared cosine of principal angle number `max(|S₁|, |S₂|)`; zero
    /// whenever the sizes differ or that angle does not exist.
    pub fn conservative_similarity(&self, s1: &FeatureSet, s2: &FeatureSet) -> Result<f64> {
        let (q1, q2) = (self.basis(s1)?, self.basis(s2)?);
        conservative(&q1, &q2, s1.len(), s2.len())
    }

    /// `sup_{‖y‖=1} ‖P₁y − P₂y‖²`, the largest eigenvalue of `(P₁ − P₂)²`.
    pub fn worst_case_prediction_gap(&self, s1: &FeatureSet, s2: &FeatureSet) -> Result<f64> {
        if s1.len() != s2.len() {
            return Ok(1.0);
        }
        let (q1, q2) = (self.basis(s1)?, self.basis(s2)?);
        let (_, diff) = difference_in_span(&q1, &q2, None);
        if diff.nrows() == 0 {
            return Ok(0.0);
        }
        let eig = SymmetricEigen::new(diff);
        Ok(eig
            .eigenvalues
            .iter()
            .map(|l| l * l)
            .fold(0.0, f64::max)
            .clamp(0.0, 1.0))
    }

    /// `1 − ‖P₁y − P₂y‖² / ‖y‖²`
    pub fn response_similarity(
        &self,
        y: &DVector<f64>,
        s1: &FeatureSet,
        s2: &FeatureSet,
    ) -> Result<f64> {
        self.check_response(y)?;
        let (q1, q2) = (self.basis(s1)?, self.basis(s2)?);
        let d = q1.project(y) - q2.project(y);
        Ok((1.0 - d.norm_squared() / y.norm_squared()).clamp(0.0, 1.0))
    }

    /// `1 − sup ‖P₁y′ − P₂y′‖²` over unit `y′` within angle `eta` of `y`.
    ///
    /// Reduces to [`response_similarity`](Self::response_similarity) at
    /// `eta = 0` and to the all-directions bound at `eta = π/2`.
    pub fn cone_similarity(
        &self,
        y: &DVector<f64>,
        s1: &FeatureSet,
        s2: &FeatureSet,
        eta: f64,
    ) -> Result<f64> {
        self.check_response(y)?;
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&eta) {
            return Err(Error::invalid(format!(
                "cone angle must lie in [0, π/2], got {eta}"
            )));
        }
        let (q1, q2) = (self.basis(s1)?, self.basis(s2)?);
        let u = y / y.norm();
        let (z, diff) = difference_in_span(&q1, &q2, Some(&u));
        let a = &diff * &diff;
        let uz = z.tr_mul(&u);
        let sup = cap_supremum(&a, &uz, eta);
        Ok((1.0 - sup).clamp(0.0, 1.0))
    }

    /// `(τ(Ŝ, S*), |Ŝ| − τ(Ŝ, S*))`
    pub fn true_false_positives(
        &self,
        selected: &FeatureSet,
        truth: &FeatureSet,
    ) -> Result<(f64, f64)> {
        let qt = self.basis(truth)?;
        if qt.is_rank_deficient() {
            return Err(Error::RankDeficient(truth.to_string()));
        }
        let qs = self.basis(selected)?;
        let tp = linalg::trace_inner(&qs, &qt)?.clamp(0.0, selected.len().min(truth.len()) as f64);
        Ok((tp, selected.len() as f64 - tp))
    }

    /// Smallest eigenvalue of `P_S P_avg P_S` on `col(X_S)`; zero when the
    /// columns of `X_S` are dependent and one for the empty set.
    pub fn stability(&self, s: &FeatureSet, p: &AvgProjection) -> Result<f64> {
        if p.ambient_dim() != self.x.n() {
            return Err(Error::DimensionMismatch {
                expected: self.x.n(),
                found: p.ambient_dim(),
            });
        }
        if s.is_empty() {
            return Ok(1.0);
        }
        let q = self.basis(s)?;
        if q.is_rank_deficient() {
            debug!(
                "{s} has rank {} < {}; stability set to 0",
                q.rank(),
                s.len()
            );
            return Ok(0.0);
        }
        linalg::smallest_singular_projected(&q, p)
    }

    /// `π(S) ≥ α` and every one-feature extension falls below `α`.
    pub fn is_maximal_stable(&self, s: &FeatureSet, p: &AvgProjection, alpha: f64) -> Result<bool> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!(
                "threshold must lie in (0, 1), got {alpha}"
            )));
        }
        if self.stability(s, p)? < alpha {
            return Ok(false);
        }
        for j in (0..self.x.p()).filter(|&j| !s.contains(j)) {
            if self.stability(&s.with(j), p)? >= alpha {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Mean pairwise normalized similarity across repeated selections.
    pub fn output_stability(&self, sets: &[FeatureSet]) -> Result<f64> {
        let m = sets.len();
        if m < 2 {
            return Err(Error::invalid(format!(
                "output stability needs at least 2 sets, got {m}"
            )));
        }
        let mut total = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                total += self.normalized_similarity(&sets[i], &sets[j])?;
            }
        }
        Ok(total * 2.0 / (m * (m - 1)) as f64)
    }

    pub fn report(
        &self,
        s1: &FeatureSet,
        s2: &FeatureSet,
        y: Option<&DVector<f64>>,
    ) -> Result<SimilarityReport> {
        let (q1, q2) = (self.basis(s1)?, self.basis(s2)?);
        let tau = linalg::trace_inner(&q1, &q2)?;
        Ok(SimilarityReport {
            tau,
            tau_bar: normalize(tau, s1.len(), s2.len()),
            tau_tilde: conservative(&q1, &q2, s1.len(), s2.len())?,
            tau_y: y.map(|y| self.response_similarity(y, s1, s2)).transpose()?,
            rank1: q1.rank(),
            rank2: q2.rank(),
        })
    }

    fn check_response(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.x.n() {
            return Err(Error::DimensionMismatch {
                expected: self.x.n(),
                found: y.len(),
            });
        }
        if !(y.norm_squared() > 0.0) {
            return Err(Error::invalid("response vector must be nonzero"));
        }
        Ok(())
    }
}

fn normalize(tau: f64, k1: usize, k2: usize) -> f64 {
    let k = k1.min(k2);
    if k == 0 {
        // 0/0 = 1: τ is necessarily zero here.
        return 1.0;
    }
    (tau / k as f64).clamp(0.0, 1.0)
}

fn conservative(q1: &SubspaceBasis, q2: &SubspaceBasis, k1: usize, k2: usize) -> Result<f64> {
    if k1 != k2 {
        return Ok(0.0);
    }
    if k1 == 0 {
        return Ok(1.0);
    }
    let cos = linalg::principal_cosines(q1, q2)?;
    Ok(cos.get(k1 - 1).copied().unwrap_or(0.0))
}

/// Orthonormal `Z` spanning `col(Q₁) + col(Q₂)` (plus `extra` when given)
/// and `Zᵀ(P₁ − P₂)Z`.
fn difference_in_span(
    q1: &SubspaceBasis,
    q2: &SubspaceBasis,
    extra: Option<&DVector<f64>>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = q1.ambient_dim();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    cols.extend(q1.basis().column_iter().map(|c| c.into_owned()));
    cols.extend(q2.basis().column_iter().map(|c| c.into_owned()));
    if let Some(e) = extra {
        cols.push(e.clone());
    }
    if cols.is_empty() {
        return (DMatrix::zeros(n, 0), DMatrix::zeros(0, 0));
    }
    let z = linalg::orthonormal_columns(&DMatrix::from_columns(&cols), 1e-12);
    let a1 = z.tr_mul(q1.basis());
    let a2 = z.tr_mul(q2.basis());
    let diff = &a1 * a1.transpose() - &a2 * a2.transpose();
    (z, diff)
}

/// `max xᵀAx` over unit `x` with `⟨x, u⟩ ≥ cos(eta)`, for symmetric PSD `A`
/// and unit `u`.
pub(crate) fn cap_supremum(a: &DMatrix<f64>, u: &DVector<f64>, eta: f64) -> f64 {
    let m = a.nrows();
    if m == 0 {
        return 0.0;
    }
    let c = eta.cos();
    let s = eta.sin();
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.max();
    let scale = top.abs().max(1.0);
    // Largest achievable alignment with u inside the top eigenspace.
    let top_align: f64 = (0..m)
        .filter(|&i| eig.eigenvalues[i] >= top - 1e-12 * scale)
        .map(|i| eig.eigenvectors.column(i).dot(u).powi(2))
        .sum::<f64>()
        .sqrt();
    if top_align >= c - 1e-15 {
        return top.max(0.0);
    }
    // The maximizer sits on the boundary x = c·u + s·w with unit w ⟂ u.
    let n_perp = orthogonal_complement(u);
    let au = a * u;
    let g_mat = (n_perp.transpose() * a * &n_perp) * (s * s);
    let g_vec = n_perp.tr_mul(&au) * (c * s);
    let base = c * c * u.dot(&au);
    (base + sphere_quadratic_max(&g_mat, &g_vec)).max(0.0)
}

/// Orthonormal basis of the orthogonal complement of a unit vector.
fn orthogonal_complement(u: &DVector<f64>) -> DMatrix<f64> {
    let m = u.len();
    let proj = DMatrix::identity(m, m) - u * u.transpose();
    let eig = SymmetricEigen::new(proj);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    eig.eigenvectors.select_columns(&keep)
}

/// `max zᵀGz + 2gᵀz` over the unit sphere, for symmetric `G`.
fn sphere_quadratic_max(g_mat: &DMatrix<f64>, g_vec: &DVector<f64>) -> f64 {
    let k = g_mat.nrows();
    if k == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(g_mat.clone());
    let gam = &eig.eigenvalues;
    let gt = eig.eigenvectors.tr_mul(g_vec);
    let gmax = gam.max();
    let scale = gmax.abs().max(g_vec.norm()).max(1e-300);
    let near_top = |i: usize| gam[i] >= gmax - 1e-12 * scale;
    let secular = |mu: f64| -> f64 {
        (0..k)
            .map(|i| {
                let d = mu - gam[i];
                if d > 0.0 {
                    gt[i] * gt[i] / (d * d)
                } else if gt[i] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    };
    let top_weight: f64 = (0..k).filter(|&i| near_top(i)).map(|i| gt[i] * gt[i]).sum();
    let hard_rest: f64 = (0..k)
        .filter(|&i| !near_top(i))
        .map(|i| gt[i] * gt[i] / (gmax - gam[i]).powi(2))
        .sum();
    let objective = |z: &DVector<f64>| -> f64 {
        (0..k)
            .map(|i| gam[i] * z[i] * z[i] + 2.0 * gt[i] * z[i])
            .sum()
    };
    if top_weight <= (1e-14 * scale).powi(2) && hard_rest <= 1.0 {
        // Hard case: the multiplier sits at the top eigenvalue and the free
        // top-eigenspace component absorbs the remaining norm.
        let mut z = DVector::zeros(k);
        for i in (0..k).filter(|&i| !near_top(i)) {
            z[i] = gt[i] / (gmax - gam[i]);
        }
        let i_top = gam.imax();
        z[i_top] = (1.0 - hard_rest).max(0.0).sqrt();
        return objective(&z);
    }
    let mut lo = gmax;
    let mut hi = gmax + g_vec.norm().max(1e-300);
    while secular(hi) > 1.0 {
        hi = gmax + 2.0 * (hi - gmax);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    let mut z = DVector::from_fn(k, |i, _| {
        let d = mu - gam[i];
        if d > 0.0 {
            gt[i] / d
        } else {
            0.0
        }
    });
    let nz = z.norm();
    if nz > 0.0 {
        z /= nz;
    }
    objective(&z)
}
