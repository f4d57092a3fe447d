//! Orthonormal bases for feature subspaces and the trace / principal-angle
//! primitives built on them. Projections are never formed densely: every
//! quantity goes through cross-Gram matrices of bases.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;

/// Default relative singular-value cutoff for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of `col(X_S)` together with its numerical rank.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
    source: FeatureSet,
}

impl SubspaceBasis {
    /// Wraps a matrix whose columns are already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>, source: FeatureSet) -> Self {
        SubspaceBasis { basis, source }
    }

    pub fn empty(n: usize) -> Self {
        SubspaceBasis {
            basis: DMatrix::zeros(n, 0),
            source: FeatureSet::empty(),
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn source(&self) -> &FeatureSet {
        &self.source
    }

    /// True when the spanning columns were linearly dependent.
    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.source.len()
    }

    /// `P v` for the projection onto this subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.tr_mul(v))
    }
}

/// Rank-revealing orthonormal basis of the span of `values`' columns.
///
/// Uses Householder QR with column pivoting; diagonal entries of `R` below
/// `tol · |R₀₀|` (or the roundoff floor `max(n, k) · ε · |R₀₀|`) count as zero.
pub fn orthonormal_columns(values: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    basis_and_coordinates(values, tol).0
}

/// Orthonormal basis `Q` of the column span plus, when the columns are
/// independent, the `k × k` matrix `T` with `Q = values · T`.
pub fn basis_and_coordinates(
    values: &DMatrix<f64>,
    tol: f64,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let (n, k) = values.shape();
    if k == 0 || n == 0 {
        return (DMatrix::zeros(n, 0), Some(DMatrix::zeros(k, 0)));
    }
    let qr = values.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    if !(lead > 0.0) {
        return (DMatrix::zeros(n, 0), None);
    }
    let cutoff = lead * tol.max(n.max(k) as f64 * f64::EPSILON);
    let rank = (0..n.min(k))
        .take_while(|&i| r[(i, i)].abs() > cutoff)
        .count();
    let q = qr.q().columns(0, rank).into_owned();
    if rank < k {
        return (q, None);
    }
    // values · P = Q · R  ⇒  Q = values · (P · R⁻¹)
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("nonzero diagonal");
    let mut t = r_inv;
    qr.p().inv_permute_rows(&mut t);
    (q, Some(t))
}

/// Basis for the columns of `x` indexed by `s`.
pub fn orthonormal_basis(x: &DesignMatrix, s: &FeatureSet, tol: f64) -> Result<SubspaceBasis> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "rank tolerance must be positive, got {tol}"
        )));
    }
    let cols = x.columns(s)?;
    Ok(SubspaceBasis {
        basis: orthonormal_columns(&cols, tol),
        source: s.clone(),
    })
}

fn check_ambient(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// `trace(P_A P_B) = ‖Q_Aᵀ Q_B‖_F²`.
pub fn trace_inner(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<f64> {
    check_ambient(a.ambient_dim(), b.ambient_dim())?;
    if a.rank() == 0 || b.rank() == 0 {
        return Ok(0.0);
    }
    let cross = a.basis.tr_mul(&b.basis);
    Ok(cross.norm_squared())
}

/// Squared cosines of the principal angles, largest first.
pub fn principal_cosines(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<Vec<f64>> {
    check_ambient(a.ambient_dim(), b.ambient_dim())?;
    let d = a.rank().min(b.rank());
    if d == 0 {
        return Ok(Vec::new());
    }
    let cross = a.basis.tr_mul(&b.basis);
    // Squared singular values of the cross-Gram are the eigenvalues of its
    // smaller Gram matrix.
    let gram = if a.rank() <= b.rank() {
        &cross * cross.transpose()
    } else {
        cross.tr_mul(&cross)
    };
    let mut sv: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv.truncate(d);
    Ok(sv)
}

/// The average of `B` subsample projections, kept as the list of bases plus
/// their horizontal concatenation `[Q_1 | … | Q_B]`.
#[derive(Clone, Debug)]
pub struct AvgProjection {
    bases: Vec<SubspaceBasis>,
    stacked: DMatrix<f64>,
}

impl AvgProjection {
    pub fn new(bases: Vec<SubspaceBasis>) -> Result<Self> {
        let b = bases.len();
        if b < 2 || b % 2 != 0 {
            return Err(Error::invalid(format!(
                "number of subsamples must be even and at least 2, got {b}"
            )));
        }
        let n = bases[0].ambient_dim();
        for q in &bases {
            check_ambient(n, q.ambient_dim())?;
        }
        let total: usize = bases.iter().map(|q| q.rank()).sum();
        let mut stacked = DMatrix::zeros(n, total);
        let mut at = 0;
        for q in &bases {
            stacked.columns_mut(at, q.rank()).copy_from(&q.basis);
            at += q.rank();
        }
        Ok(AvgProjection { bases, stacked })
    }

    pub fn bases(&self) -> &[SubspaceBasis] {
        &self.bases
    }

    pub fn num_subsamples(&self) -> usize {
        self.bases.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.stacked.nrows()
    }

    /// `[Q_1 | … | Q_B]`, so that `P_avg = stacked · stackedᵀ / B`.
    pub fn stacked(&self) -> &DMatrix<f64> {
        &self.stacked
    }

    /// `stackedᵀ · m`
    pub(crate) fn project_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.stacked.tr_mul(m)
    }

    /// `vᵀ P_avg v / ‖v‖²`
    pub fn alignment(&self, v: &DVector<f64>) -> Result<f64> {
        avg_alignment(v, self)
    }
}

/// `(1/B) Σ_ℓ ‖Q_ℓᵀ v‖² / ‖v‖²`, in `[0, 1]`.
pub fn avg_alignment(v: &DVector<f64>, p: &AvgProjection) -> Result<f64> {
    check_ambient(p.ambient_dim(), v.len())?;
    let nv = v.norm_squared();
    if !(nv > 0.0) {
        return Err(Error::invalid("alignment of a zero vector is undefined"));
    }
    let h = p.stacked.tr_mul(v);
    Ok((h.norm_squared() / (p.num_subsamples() as f64 * nv)).clamp(0.0, 1.0))
}

/// Smallest eigenvalue of `M = (1/B) Σ_ℓ (Q_sᵀ Q_ℓ)(Q_ℓᵀ Q_s)` with the
/// eigenvector attaining it, expressed in the coordinates of `Q_s`.
pub fn smallest_eigenpair_projected(
    qs: &SubspaceBasis,
    p: &AvgProjection,
) -> Result<(f64, DVector<f64>)> {
    check_ambient(p.ambient_dim(), qs.ambient_dim())?;
    if qs.rank() == 0 {
        return Err(Error::invalid(
            "stability of a rank-0 subspace is undefined",
        ));
    }
    let h = p.project_columns(&qs.basis);
    let m = h.tr_mul(&h) / p.num_subsamples() as f64;
    Ok(min_eigenpair(m))
}

/// `σ_min(P_S P_avg P_S)` restricted to `col(Q_s)`, clipped to `[0, 1]`.
pub fn smallest_singular_projected(qs: &SubspaceBasis, p: &AvgProjection) -> Result<f64> {
    smallest_eigenpair_projected(qs, p).map(|(v, _)| v)
}

/// Smallest eigenvalue (clipped to `[0, 1]`) and its unit eigenvector.
pub(crate) fn min_eigenpair(m: DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(m);
    let i = eig.eigenvalues.imin();
    (
        eig.eigenvalues[i].clamp(0.0, 1.0),
        eig.eigenvectors.column(i).into_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design(rows: usize, cols: usize, data: &[f64]) -> DesignMatrix {
        DesignMatrix::uncentered(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    fn unit(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    fn span(n: usize, dirs: &[DVector<f64>]) -> SubspaceBasis {
        let m = DMatrix::from_columns(dirs);
        let q = orthonormal_columns(&m, DEFAULT_RANK_TOL);
        assert_eq!(q.nrows(), n);
        SubspaceBasis::from_orthonormal(q, FeatureSet::new(0..dirs.len()))
    }

    fn random_basis(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SubspaceBasis {
        let m = DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        SubspaceBasis::from_orthonormal(
            orthonormal_columns(&m, DEFAULT_RANK_TOL),
            FeatureSet::new(0..d),
        )
    }

    fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
        let g = q.tr_mul(q) - DMatrix::identity(q.ncols(), q.ncols());
        g.amax()
    }

    #[test]
    fn basis_of_identity_columns() {
        let x = design(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let q = orthonormal_basis(&x, &FeatureSet::from([0, 1]), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(q.rank(), 2);
        let b = q.basis();
        for i in 0..3 {
            let row_norm: f64 = (0..2).map(|k| b[(i, k)] * b[(i, k)]).sum();
            assert_relative_eq!(row_norm, if i < 2 { 1.0 } else { 0.0 }, epsilon = 1e-12);
        }
    }

    #[test]
    fn collinear_columns_have_rank_one() {
        let x = design(3, 2, &[1.0, 2.0, -2.0, -4.0, 1.0, 2.0]);
        let q = orthonormal_basis(&x, &FeatureSet::from([0, 1]), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(q.rank(), 1);
        assert!(q.is_rank_deficient());
    }

    #[test]
    fn sixty_degree_pair_spans_plane() {
        let (c, s) = (60f64.to_radians().cos(), 60f64.to_radians().sin());
        let x = design(3, 2, &[1.0, c, 0.0, s, 0.0, 0.0]);
        let set = FeatureSet::from([0, 1]);
        let q = orthonormal_basis(&x, &set, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(q.rank(), 2);
        assert!(orthonormality_error(q.basis()) <= 1e-10);
        for j in 0..2 {
            let col = x.column(j).into_owned();
            assert!((q.project(&col) - &col).amax() < 1e-12);
        }
    }

    #[test]
    fn coordinates_map_columns_to_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(10, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (q, t) = basis_and_coordinates(&m, DEFAULT_RANK_TOL);
        let t = t.unwrap();
        assert!((&m * &t - &q).amax() < 1e-12);
        let mut dep = m.clone();
        dep.set_column(3, &(m.column(0) * 2.0 - m.column(1)));
        let (q, t) = basis_and_coordinates(&dep, DEFAULT_RANK_TOL);
        assert_eq!(q.ncols(), 3);
        assert!(t.is_none());
    }

    #[test]
    fn empty_set_gives_rank_zero() {
        let x = design(3, 1, &[1.0, 0.0, -1.0]);
        let q = orthonormal_basis(&x, &FeatureSet::empty(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(q.rank(), 0);
        assert!(orthonormal_basis(&x, &FeatureSet::from([3]), DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn trace_inner_examples() {
        let e = |i| unit(3, i);
        let a = span(3, &[e(0), e(1)]);
        assert_relative_eq!(trace_inner(&a, &a).unwrap(), 2.0, epsilon = 1e-12);
        let x = span(3, &[e(0)]);
        let y = span(3, &[e(1)]);
        assert!(trace_inner(&x, &y).unwrap().abs() < 1e-14);
        let r = 60f64.to_radians();
        let z = span(3, &[DVector::from_vec(vec![r.cos(), r.sin(), 0.0])]);
        assert_relative_eq!(trace_inner(&x, &z).unwrap(), 0.25, epsilon = 1e-12);
        assert!(trace_inner(&x, &SubspaceBasis::empty(4)).is_err());
    }

    #[test]
    fn principal_cosine_examples() {
        let e = |i| unit(4, i);
        let a = span(4, &[e(0), e(1)]);
        let ones = principal_cosines(&a, &a).unwrap();
        assert_eq!(ones.len(), 2);
        assert!(ones.iter().all(|c| (c - 1.0).abs() <= 1e-10));
        let b = span(4, &[e(2), e(3)]);
        assert!(principal_cosines(&a, &b)
            .unwrap()
            .iter()
            .all(|c| c.abs() < 1e-12));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = span(4, &[e(0), DVector::from_vec(vec![0.0, h, h, 0.0])]);
        let cos = principal_cosines(&a, &c).unwrap();
        // Closed-form squared singular values of the 2×2 cross-Gram.
        let cross = a.basis().tr_mul(c.basis());
        let t = cross.norm_squared();
        let det = cross.determinant();
        let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
        let direct = [(t + disc) / 2.0, (t - disc) / 2.0];
        assert_relative_eq!(cos[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(cos[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(cos[1], direct[1], epsilon = 1e-12);
    }

    fn two_subsample_projection() -> AvgProjection {
        let e = |i| unit(3, i);
        AvgProjection::new(vec![span(3, &[e(0)]), span(3, &[e(0), e(1)])]).unwrap()
    }

    #[test]
    fn alignment_examples() {
        let p = two_subsample_projection();
        assert_relative_eq!(
            avg_alignment(&unit(3, 0), &p).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            avg_alignment(&unit(3, 2), &p).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            avg_alignment(&unit(3, 1), &p).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(avg_alignment(&DVector::zeros(3), &p).is_err());
    }

    #[test]
    fn smallest_singular_examples() {
        let p = two_subsample_projection();
        let e = |i| unit(3, i);
        let inside = span(3, &[e(0)]);
        assert_relative_eq!(
            smallest_singular_projected(&inside, &p).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let outside = span(3, &[e(2)]);
        assert_relative_eq!(
            smallest_singular_projected(&outside, &p).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let plane = span(3, &[e(0), e(1)]);
        assert_relative_eq!(
            smallest_singular_projected(&plane, &p).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn projection_requires_even_count() {
        let e = unit(3, 0);
        assert!(AvgProjection::new(vec![span(3, &[e.clone()])]).is_err());
        assert!(AvgProjection::new(vec![
            span(3, &[e.clone()]),
            span(3, &[e.clone()]),
            span(3, &[e])
        ])
        .is_err());
    }

    #[test]
    fn eigen_minimum_is_minimum_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 9;
            let bases = (0..4).map(|_| random_basis(&mut rng, n, 3)).collect();
            let p = AvgProjection::new(bases).unwrap();
            let qs = random_basis(&mut rng, n, 2);
            let (lo, w) = smallest_eigenpair_projected(&qs, &p).unwrap();
            let at_min = avg_alignment(&(qs.basis() * &w), &p).unwrap();
            assert_relative_eq!(lo, at_min, epsilon = 1e-8);
            for _ in 0..2000 {
                let w = DVector::from_fn(2, |_, _| rng.sample(StandardNormal));
                assert!(lo <= avg_alignment(&(qs.basis() * &w), &p).unwrap() + 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn trace_inner_bounds_and_symmetry(seed in any::<u64>(), d1 in 1usize..5, d2 in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_basis(&mut rng, 8, d1);
            let b = random_basis(&mut rng, 8, d2);
            let ab = trace_inner(&a, &b).unwrap();
            prop_assert!(ab >= 0.0 && ab <= d1.min(d2) as f64 + 1e-12);
            prop_assert!((ab - trace_inner(&b, &a).unwrap()).abs() <= 1e-12);
            let cos = principal_cosines(&a, &b).unwrap();
            prop_assert_eq!(cos.len(), d1.min(d2));
            prop_assert!(cos.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!((cos.iter().sum::<f64>() - ab).abs() <= 1e-10);
            let own = principal_cosines(&a, &a).unwrap();
            prop_assert!(own.iter().all(|c| (c - 1.0).abs() <= 1e-10));
            prop_assert!(orthonormality_error(a.basis()) <= 1e-10);
        }
    }
}
