//! Lasso by cyclic coordinate descent on the covariance form of
//! `(1/(2n))‖y − Zβ‖² + λ‖β‖₁`, with `Z` the unit-norm standardized design.

use nalgebra::{DMatrix, DVector};

use super::standardize::Standardized;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;

const MAX_SWEEPS: usize = 10_000;
const COEF_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    pub selected: FeatureSet,
    /// No value on the path reached the target size; `selected` is the
    /// active set at the end of the path.
    pub short: bool,
    pub lambda: f64,
}

/// Solution at one penalty value. Coefficients are on the standardized
/// (centered, unit-norm) scale and indexed by original column.
#[derive(Clone, Debug, PartialEq)]
pub struct LassoSolution {
    pub beta: DVector<f64>,
    pub active: FeatureSet,
    pub sweeps: usize,
}

/// Smallest penalty with an all-zero solution: `max_j |Z_jᵀy| / n`.
pub fn lasso_lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let st = Standardized::new(x, y)?;
    Ok(lambda_max(&st))
}

fn lambda_max(st: &Standardized) -> f64 {
    st.xty.amax() / st.n as f64
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Coordinate descent from the given warm start; `q` tracks `Gβ`.
fn descend(
    st: &Standardized,
    lambda: f64,
    beta: &mut DVector<f64>,
    q: &mut DVector<f64>,
    mut on_sweep: impl FnMut(&DVector<f64>),
) -> usize {
    let thresh = st.n as f64 * lambda;
    let p = st.p();
    for sweep in 1..=MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let gjj = st.gram[(j, j)];
            let rho = st.xty[j] - q[j] + gjj * beta[j];
            let new = soft(rho, thresh) / gjj;
            let d = new - beta[j];
            if d != 0.0 {
                q.axpy(d, &st.gram.column(j), 1.0);
                beta[j] = new;
                max_delta = max_delta.max(d.abs());
            }
        }
        on_sweep(beta);
        if max_delta < COEF_TOL {
            return sweep;
        }
    }
    log::warn!("lasso coordinate descent hit the sweep cap at λ = {lambda}");
    MAX_SWEEPS
}

fn solution(st: &Standardized, p_full: usize, beta: &DVector<f64>, sweeps: usize) -> LassoSolution {
    let mut full = DVector::zeros(p_full);
    for (k, &j) in st.keep.iter().enumerate() {
        full[j] = beta[k];
    }
    let active = FeatureSet::new(
        st.keep
            .iter()
            .enumerate()
            .filter(|(k, _)| beta[*k] != 0.0)
            .map(|(_, &j)| j),
    );
    LassoSolution {
        beta: full,
        active,
        sweeps,
    }
}

/// Lasso solution at a single penalty, started from zero.
pub fn fit_lasso_at(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LassoSolution> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "penalty must be non-negative, got {lambda}"
        )));
    }
    let st = Standardized::new(x, y)?;
    let mut beta = DVector::zeros(st.p());
    let mut q = DVector::zeros(st.p());
    let sweeps = descend(&st, lambda, &mut beta, &mut q, |_| {});
    Ok(solution(&st, x.ncols(), &beta, sweeps))
}

/// Walks a log-spaced path from `λ_max` down to `eps_ratio·λ_max` and returns
/// the active set at the first penalty whose support reaches `s0`, cut to
/// the `s0` largest coefficients.
pub fn fit_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    s0: usize,
    path_length: usize,
    eps_ratio: f64,
) -> Result<LassoFit> {
    if s0 == 0 {
        return Err(Error::invalid("s0 must be at least 1"));
    }
    if path_length < 2 || !(eps_ratio > 0.0 && eps_ratio < 1.0) {
        return Err(Error::invalid(
            "lasso path needs at least 2 values and eps ratio in (0, 1)",
        ));
    }
    let st = Standardized::new(x, y)?;
    let lmax = lambda_max(&st);
    let mut beta = DVector::zeros(st.p());
    let mut q = DVector::zeros(st.p());
    let mut lambda = lmax;
    for k in 0..path_length {
        lambda = lmax * eps_ratio.powf(k as f64 / (path_length - 1) as f64);
        descend(&st, lambda, &mut beta, &mut q, |_| {});
        let mut active: Vec<usize> = (0..st.p()).filter(|&j| beta[j] != 0.0).collect();
        if active.len() >= s0 {
            active.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
            active.truncate(s0);
            return Ok(LassoFit {
                selected: FeatureSet::new(active.iter().map(|&k| st.keep[k])),
                short: false,
                lambda,
            });
        }
    }
    Ok(LassoFit {
        selected: FeatureSet::new((0..st.p()).filter(|&j| beta[j] != 0.0).map(|k| st.keep[k])),
        short: true,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::center_columns;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn orthonormal(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        crate::linalg::orthonormal_columns(&center_columns(gaussian(rng, n, p)), 1e-12)
    }

    fn objective(st: &Standardized, beta: &DVector<f64>, lambda: f64) -> f64 {
        let quad = st.yty - 2.0 * st.xty.dot(beta) + beta.dot(&(&st.gram * beta));
        quad / (2.0 * st.n as f64) + lambda * beta.abs().sum()
    }

    #[test]
    fn single_feature_soft_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = orthonormal(&mut rng, 15, 1);
        let y = gaussian(&mut rng, 15, 1).column(0) + x.column(0) * 2.0;
        let n = 15.0;
        let c = x
            .column(0)
            .dot(&crate::design::center_vector(&y.clone_owned()));
        let threshold = c.abs() / n;
        assert_relative_eq!(
            lasso_lambda_max(&x, &y).unwrap(),
            threshold,
            epsilon = 1e-12
        );
        let lambda = threshold * 0.9;
        let sol = fit_lasso_at(&x, &y, lambda).unwrap();
        assert_eq!(sol.active, FeatureSet::from([0]));
        assert_relative_eq!(sol.beta[0], soft(c, n * lambda), epsilon = 1e-12);
        assert!(fit_lasso_at(&x, &y, threshold * 1.0001)
            .unwrap()
            .active
            .is_empty());
    }

    #[test]
    fn path_origin_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(&mut rng, 30, 6);
        let y = gaussian(&mut rng, 30, 1).column(0).into_owned();
        let lmax = lasso_lambda_max(&x, &y).unwrap();
        assert!(fit_lasso_at(&x, &y, lmax).unwrap().active.is_empty());
    }

    #[test]
    fn orthonormal_design_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, p) = (30, 8);
        for _ in 0..100 {
            let x = orthonormal(&mut rng, n, p);
            let y = gaussian(&mut rng, n, 1).column(0).into_owned();
            let yc = crate::design::center_vector(&y);
            let lmax = lasso_lambda_max(&x, &y).unwrap();
            let lambda = rng.random_range(0.0..lmax);
            let sol = fit_lasso_at(&x, &y, lambda).unwrap();
            let expected =
                FeatureSet::new((0..p).filter(|&j| x.column(j).dot(&yc).abs() / n as f64 > lambda));
            assert_eq!(sol.active, expected);
            for j in 0..p {
                let c = x.column(j).dot(&yc);
                assert_relative_eq!(sol.beta[j], soft(c, n as f64 * lambda), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn objective_decreases_and_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(&mut rng, 40, 10);
        let y = x.column(0) * 2.0 - x.column(1) + gaussian(&mut rng, 40, 1).column(0);
        let st = Standardized::new(&x, &y).unwrap();
        let lambda = lambda_max(&st) * 0.05;
        let mut beta = DVector::zeros(st.p());
        let mut q = DVector::zeros(st.p());
        let mut values = vec![objective(&st, &beta, lambda)];
        let mut last = beta.clone();
        let mut last_delta = f64::INFINITY;
        let sweeps = descend(&st, lambda, &mut beta, &mut q, |b| {
            values.push(objective(&st, b, lambda));
            last_delta = (b - &last).amax();
            last = b.clone();
        });
        assert!(sweeps < MAX_SWEEPS);
        assert!(last_delta < 1e-7);
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn path_reaches_target_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(&mut rng, 60, 12);
        let y = x.column(2) * 3.0
            + x.column(7) * 2.0
            + x.column(9)
            + gaussian(&mut rng, 60, 1).column(0) * 0.5;
        let fit = fit_lasso(&x, &y, 3, 100, 1e-3).unwrap();
        assert!(!fit.short);
        assert_eq!(fit.selected, FeatureSet::from([2, 7, 9]));
    }

    #[test]
    fn unreachable_target_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(&mut rng, 20, 3);
        let y = x.column(0).into_owned();
        let fit = fit_lasso(&x, &y, 3, 5, 0.5).unwrap();
        assert!(fit.short);
        assert!(fit.selected.len() < 3);
    }
}
