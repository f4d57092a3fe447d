//! Complementary half-sampling, base-procedure fits, and the resulting
//! average projection.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::base::BaseProcedureConfig;
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::linalg::{self, AvgProjection, DEFAULT_RANK_TOL};
use crate::parallel::Workers;
use crate::rng;

/// `B/2` pairs of disjoint row sets, each of size `⌊n/2⌋`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsamplePlan {
    pub seed: u64,
    pub subset_size: usize,
    pub pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

impl SubsamplePlan {
    pub fn num_subsamples(&self) -> usize {
        2 * self.pairs.len()
    }

    /// Rows of subsample `l`: pair `l / 2`, first or second half.
    pub fn rows(&self, l: usize) -> &[usize] {
        let (a, b) = &self.pairs[l / 2];
        if l % 2 == 0 {
            a
        } else {
            b
        }
    }
}

pub fn make_plan(n: usize, num_subsamples: usize, seed: u64) -> Result<SubsamplePlan> {
    make_plan_over(&(0..n).collect::<Vec<_>>(), num_subsamples, seed)
}

/// Plan drawing subsamples from the given rows only.
pub fn make_plan_over(rows: &[usize], num_subsamples: usize, seed: u64) -> Result<SubsamplePlan> {
    if num_subsamples < 2 || num_subsamples % 2 != 0 {
        return Err(Error::invalid(format!(
            "number of subsamples must be even and at least 2, got {num_subsamples}"
        )));
    }
    let n = rows.len();
    if n < 4 {
        return Err(Error::invalid(format!(
            "subsampling needs at least 4 rows, got {n}"
        )));
    }
    let half = n / 2;
    let pairs = (0..num_subsamples / 2)
        .map(|k| {
            let mut perm = rows.to_vec();
            perm.shuffle(&mut rng::stream(seed, rng::PLAN, k as u64));
            let second = perm[half..2 * half].to_vec();
            perm.truncate(half);
            (perm, second)
        })
        .collect();
    Ok(SubsamplePlan {
        seed,
        subset_size: half,
        pairs,
    })
}

/// One base-procedure output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub subsample_index: usize,
    pub rows: Vec<usize>,
    pub selected: FeatureSet,
    /// The procedure returned fewer than `s0` features.
    #[serde(default)]
    pub short: bool,
}

/// Which rows the subsample subspaces live on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubspaceRows {
    /// All rows of the design, the same matrix the metrics use.
    #[default]
    Full,
    /// A random `fraction` of rows is held out for the subspaces and the
    /// subsamples are drawn from the remaining rows.
    Holdout { fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsamplingConfig {
    pub num_subsamples: usize,
    pub base: BaseProcedureConfig,
    pub seed: u64,
    #[serde(default)]
    pub subspace_rows: SubspaceRows,
    pub rank_tol: f64,
}

impl SubsamplingConfig {
    pub fn new(num_subsamples: usize, base: BaseProcedureConfig, seed: u64) -> Self {
        SubsamplingConfig {
            num_subsamples,
            base,
            seed,
            subspace_rows: SubspaceRows::Full,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Everything produced by one subsampling run.
#[derive(Clone, Debug)]
pub struct SubsampleRun {
    pub plan: SubsamplePlan,
    pub records: Vec<SelectionRecord>,
    pub projection: AvgProjection,
    /// Design the subspaces were built on: the input design, or its
    /// held-out rows (re-centered). Stability must be measured on this one.
    pub basis_design: DesignMatrix,
    pub basis_rows: Vec<usize>,
}

/// Fits the base procedure on every subsample of `plan`, in parallel, and
/// returns the records in subsample order.
pub fn fit_subsamples(
    x: &DesignMatrix,
    y: &DVector<f64>,
    plan: &SubsamplePlan,
    base: &BaseProcedureConfig,
    workers: Workers,
) -> Result<Vec<SelectionRecord>> {
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            found: y.len(),
        });
    }
    base.validate(2 * plan.subset_size + 1, x.p())?;
    workers.try_map(plan.num_subsamples(), |l| {
        let rows = plan.rows(l);
        let xs = x.values().select_rows(rows);
        let ys = y.select_rows(rows);
        let fit = base.fit(&xs, &ys).map_err(|e| Error::BaseProcedure {
            index: l,
            reason: e.to_string(),
        })?;
        Ok(SelectionRecord {
            subsample_index: l,
            rows: rows.to_vec(),
            selected: fit.selected,
            short: fit.short,
        })
    })
}

/// `P_avg` over `col(X_Ŝ)` for every record's selected set.
pub fn projection_from_records(
    x: &DesignMatrix,
    records: &[SelectionRecord],
    tol: f64,
    workers: Workers,
) -> Result<AvgProjection> {
    let bases = workers.try_map(records.len(), |l| {
        linalg::orthonormal_basis(x, &records[l].selected, tol)
    })?;
    AvgProjection::new(bases)
}

/// `(1/B) Σ_ℓ 𝟙[j ∈ Ŝ⁽ℓ⁾]` for every feature.
pub fn selection_proportions(records: &[SelectionRecord], p: usize) -> Vec<f64> {
    let mut counts = vec![0usize; p];
    for r in records {
        for j in r.selected.iter() {
            counts[j] += 1;
        }
    }
    let b = records.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / b).collect()
}

/// Plan, fit, and project in one go.
pub fn run_subsampling(
    x: &DesignMatrix,
    y: &DVector<f64>,
    config: &SubsamplingConfig,
    workers: Workers,
) -> Result<SubsampleRun> {
    let n = x.n();
    let (fit_rows, basis_rows) = match config.subspace_rows {
        SubspaceRows::Full => ((0..n).collect::<Vec<_>>(), (0..n).collect::<Vec<_>>()),
        SubspaceRows::Holdout { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::invalid(format!(
                    "holdout fraction must lie in (0, 1), got {fraction}"
                )));
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::stream(config.seed, "holdout", 0));
            let k = ((n as f64) * fraction).round() as usize;
            let mut held: Vec<usize> = perm[..k].to_vec();
            let mut rest: Vec<usize> = perm[k..].to_vec();
            held.sort_unstable();
            rest.sort_unstable();
            (rest, held)
        }
    };
    let plan = make_plan_over(&fit_rows, config.num_subsamples, config.seed)?;
    let records = fit_subsamples(x, y, &plan, &config.base, workers)?;
    let basis_design = match config.subspace_rows {
        SubspaceRows::Full => x.clone(),
        SubspaceRows::Holdout { .. } => x.select_rows(&basis_rows)?,
    };
    let projection = projection_from_records(&basis_design, &records, config.rank_tol, workers)?;
    Ok(SubsampleRun {
        plan,
        records,
        projection,
        basis_design,
        basis_rows,
    })
}
