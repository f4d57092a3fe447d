//! Approximate best-subset regression: forward stepwise selection followed
//! by passes of single-feature swaps. Everything runs on the Gram matrix of
//! the standardized subsample, so one fit costs `O(n·p²)` for the Gram
//! matrix plus `O(s0·p)` per step.

use nalgebra::{DMatrix, DVector};

use super::standardize::Standardized;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;

/// Residual norm² below which a column is treated as already spanned.
const SPAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct L0Fit {
    pub selected: FeatureSet,
    /// Residual sum of squares of the least-squares fit with intercept.
    pub rss: f64,
    /// Set after the forward pass, before any swap.
    pub forward: FeatureSet,
    pub forward_rss: f64,
}

pub fn fit_l0(x: &DMatrix<f64>, y: &DVector<f64>, s0: usize, swap_rounds: usize) -> Result<L0Fit> {
    if s0 == 0 {
        return Err(Error::invalid("s0 must be at least 1"));
    }
    let st = Standardized::new(x, y)?;
    let forward = forward_select(&st, s0);
    let forward_rss = subset_rss(&st, &forward);
    let mut current = forward.clone();
    let mut rss = forward_rss;
    for _ in 0..swap_rounds {
        if !swap_pass(&st, &mut current, &mut rss) {
            break;
        }
    }
    let to_original = |pos: &[usize]| FeatureSet::new(pos.iter().map(|&k| st.keep[k]));
    Ok(L0Fit {
        selected: to_original(&current),
        rss,
        forward: to_original(&forward),
        forward_rss,
    })
}

/// Greedy additions maximizing the RSS drop `c_j² / e_j`, where `c_j` is the
/// residual correlation and `e_j` the residual norm² of column `j`.
fn forward_select(st: &Standardized, s0: usize) -> Vec<usize> {
    let p = st.p();
    let mut c = st.xty.clone();
    let mut e: Vec<f64> = (0..p).map(|j| st.gram[(j, j)]).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(s0);
    // Row k holds the Gram-space Gram–Schmidt coefficients of direction k.
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(s0);
    while chosen.len() < s0 {
        let Some(a) = best_gain(&c, &e, |j| chosen.contains(&j)) else {
            break;
        };
        let scale = e[a].sqrt();
        let mut w: DVector<f64> = st.gram.column(a).into_owned();
        for r in &rows {
            w.axpy(-r[a], r, 1.0);
        }
        w /= scale;
        let coef = c[a] / scale;
        c.axpy(-coef, &w, 1.0);
        for j in 0..p {
            e[j] = (e[j] - w[j] * w[j]).max(0.0);
        }
        e[a] = 0.0;
        chosen.push(a);
        rows.push(w);
    }
    chosen
}

/// Index maximizing `c_j²/e_j` among eligible columns; lowest index on ties.
fn best_gain(c: &DVector<f64>, e: &[f64], excluded: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..e.len() {
        if excluded(j) || e[j] <= SPAN_TOL {
            continue;
        }
        let gain = c[j] * c[j] / e[j];
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((j, gain));
        }
    }
    best.map(|(j, _)| j)
}

fn subset_rss(st: &Standardized, s: &[usize]) -> f64 {
    if s.is_empty() {
        return st.yty;
    }
    let g = st.gram.select_rows(s).select_columns(s);
    let c = DVector::from_iterator(s.len(), s.iter().map(|&j| st.xty[j]));
    match g.cholesky() {
        Some(ch) => (st.yty - c.dot(&ch.solve(&c))).max(0.0),
        None => f64::INFINITY,
    }
}

/// One pass over the current set trying, for each member, the best
/// replacement. Returns whether anything changed.
fn swap_pass(st: &Standardized, current: &mut [usize], rss: &mut f64) -> bool {
    let p = st.p();
    let k = current.len();
    if k == 0 || k == p {
        return false;
    }
    let min_gain = 1e-12 * st.yty.max(f64::MIN_POSITIVE);
    let mut changed = false;
    for pos in 0..k {
        let g_ss = st.gram.select_rows(&*current).select_columns(&*current);
        let Some(ch) = g_ss.cholesky() else {
            return changed;
        };
        let inv = ch.inverse();
        let g_s_all = st.gram.select_rows(&*current);
        let c_s = DVector::from_iterator(k, current.iter().map(|&j| st.xty[j]));
        let beta = &inv * &c_s;
        // W = G_SS⁻¹ G_S,:
        let w = &inv * &g_s_all;
        let c_res = &st.xty - g_s_all.tr_mul(&beta);
        let aii = inv[(pos, pos)];
        let b = beta[pos] / aii.sqrt();
        let rss_without = *rss + b * b;
        let mut c_new = DVector::zeros(p);
        let mut e_new = vec![0.0; p];
        for j in 0..p {
            let resid = st.gram[(j, j)] - g_s_all.column(j).dot(&w.column(j));
            let a = w[(pos, j)] / aii.sqrt();
            c_new[j] = c_res[j] + b * a;
            e_new[j] = resid.max(0.0) + a * a;
        }
        let Some(j) = best_gain(&c_new, &e_new, |j| current.contains(&j)) else {
            continue;
        };
        let candidate = rss_without - c_new[j] * c_new[j] / e_new[j];
        if candidate < *rss - min_gain {
            let old = current[pos];
            current[pos] = j;
            let exact = subset_rss(st, current);
            if exact < *rss {
                *rss = exact;
                changed = true;
            } else {
                // Roundoff disagreed with the update formula; undo.
                current[pos] = old;
            }
        }
    }
    changed
}
