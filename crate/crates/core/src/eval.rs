//! Experiment harness: fold-based tuning and scoring of SS, CSS and FSSS,
//! stability paths per feature, and pairwise similarity tiles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::base::{BaseKind, BaseProcedureConfig};
use crate::baselines::{self, ClusterAssignment};
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::fsss::{self, FsssConfig};
use crate::linalg::AvgProjection;
use crate::metrics::FeatureSpace;
use crate::parallel::Workers;
use crate::rng;
use crate::subsample::{
    run_subsampling, selection_proportions, SelectionRecord, SubsamplingConfig,
};
use crate::synthetic::{self, FeatureRole, MixedSpec, SyntheticData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The base procedure fitted once on the whole selection fold.
    L0,
    Lasso,
    Ss,
    Css,
    FsssGreedy,
    Fsss,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::L0,
        Method::Lasso,
        Method::Ss,
        Method::Css,
        Method::FsssGreedy,
        Method::Fsss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::L0 => "l0",
            Method::Lasso => "lasso",
            Method::Ss => "ss",
            Method::Css => "css",
            Method::FsssGreedy => "fsss_greedy",
            Method::Fsss => "fsss",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Least-squares fit with an intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub features: FeatureSet,
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::from_element(x.nrows(), self.intercept);
        for (j, &b) in self.features.iter().zip(&self.coefs) {
            out.axpy(b, &x.column(j), 1.0);
        }
        out
    }

    pub fn mse(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        (self.predict(x) - y).norm_squared() / y.len() as f64
    }
}

/// Ordinary least squares of `y` on the columns `s` of `x` plus an intercept.
/// An empty `s` gives the mean predictor; dependent columns fall back to the
/// minimum-norm solution.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>, s: &FeatureSet) -> Result<LinearFit> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    s.check_range(x.ncols())?;
    let n = y.len() as f64;
    let y_mean = y.mean();
    if s.is_empty() {
        return Ok(LinearFit {
            features: s.clone(),
            intercept: y_mean,
            coefs: vec![],
        });
    }
    let mut xs = x.select_columns(s.indices());
    let means: Vec<f64> = xs.column_iter().map(|c| c.sum() / n).collect();
    for (mut c, m) in xs.column_iter_mut().zip(&means) {
        c.add_scalar_mut(-m);
    }
    let yc = y.add_scalar(-y_mean);
    let gram = xs.tr_mul(&xs);
    let rhs = xs.tr_mul(&yc);
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
            gram.svd(true, true)
                .solve(&rhs, 1e-12 * scale)
                .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?
        }
    };
    let intercept = y_mean - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearFit {
        features: s.clone(),
        intercept,
        coefs: beta.iter().copied().collect(),
    })
}

/// True and false positives of `selected` against `truth`, measured on `x`.
fn positives(
    space: &FeatureSpace,
    selected: &FeatureSet,
    truth: &FeatureSet,
) -> Result<(f64, f64)> {
    if selected.is_empty() {
        return Ok((0.0, 0.0));
    }
    space.true_false_positives(selected, truth)
}

/// Row indices of the selection, estimation, validation and test folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Folds {
    pub fit: Vec<usize>,
    pub model: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Folds {
    /// Consecutive blocks of the given sizes.
    pub fn contiguous(fit: usize, model: usize, validation: usize, test: usize) -> Self {
        let mut start = 0;
        let mut block = |k: usize| {
            let r: Vec<usize> = (start..start + k).collect();
            start += k;
            r
        };
        Folds {
            fit: block(fit),
            model: block(model),
            validation: block(validation),
            test: block(test),
        }
    }

    pub fn total(&self) -> usize {
        self.fit.len() + self.model.len() + self.validation.len() + self.test.len()
    }
}

/// A selected set together with the tuning values that produced it.
#[derive(Clone, Debug, PartialEq)]
struct Proposal {
    alpha: Option<f64>,
    h: Option<f64>,
    set: FeatureSet,
}

/// Settings shared by all stability-based methods in one comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub alpha_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    pub num_subsamples: usize,
    /// Models requested from the random-walk search.
    pub k: usize,
}

/// Everything one selection fold produces for a given `s0`.
struct SelectionContext<'a> {
    x: &'a DesignMatrix,
    y: &'a DVector<f64>,
    base: BaseProcedureConfig,
    records: Vec<SelectionRecord>,
    projection: AvgProjection,
    walk_seed: u64,
}

impl<'a> SelectionContext<'a> {
    fn new(
        x: &'a DesignMatrix,
        y: &'a DVector<f64>,
        base: BaseProcedureConfig,
        num_subsamples: usize,
        seed: u64,
        workers: Workers,
    ) -> Result<Self> {
        let config = SubsamplingConfig::new(
            num_subsamples,
            base.clone(),
            rng::derive_seed(seed, rng::PLAN, 0),
        );
        let run = run_subsampling(x, y, &config, workers)?;
        Ok(SelectionContext {
            x,
            y,
            base,
            records: run.records,
            projection: run.projection,
            walk_seed: rng::derive_seed(seed, rng::WALK, 0),
        })
    }

    fn proposals(&self, method: Method, params: &SelectionParams) -> Result<Vec<Proposal>> {
        let p = self.x.p();
        let mut out = Vec::new();
        match method {
            Method::L0 | Method::Lasso => {
                let kind = if method == Method::L0 {
                    BaseKind::L0
                } else {
                    BaseKind::Lasso
                };
                let base = BaseProcedureConfig {
                    kind,
                    ..self.base.clone()
                };
                let set = base.fit(self.x.values(), self.y)?.selected;
                out.push(Proposal {
                    alpha: None,
                    h: None,
                    set,
                });
            }
            Method::Ss => {
                for &alpha in &params.alpha_grid {
                    let set = baselines::stability_selection(&self.records, alpha, p)?;
                    out.push(Proposal {
                        alpha: Some(alpha),
                        h: None,
                        set,
                    });
                }
            }
            Method::Css => {
                for &h in &params.h_grid {
                    let clusters = baselines::hierarchical_clusters(self.x, h)?;
                    for &alpha in &params.alpha_grid {
                        let set = baselines::cluster_stability_selection_sps(
                            &self.records,
                            &clusters,
                            alpha,
                        )?;
                        out.push(Proposal {
                            alpha: Some(alpha),
                            h: Some(h),
                            set,
                        });
                    }
                }
            }
            Method::FsssGreedy => {
                for &alpha in &params.alpha_grid {
                    let result = fsss::fsss(self.x, &self.projection, &FsssConfig::greedy(alpha))?;
                    let set = result
                        .models
                        .into_iter()
                        .next()
                        .map(|m| m.features)
                        .unwrap_or_default();
                    out.push(Proposal {
                        alpha: Some(alpha),
                        h: None,
                        set,
                    });
                }
            }
            Method::Fsss => {
                for &alpha in &params.alpha_grid {
                    let result = fsss::fsss(
                        self.x,
                        &self.projection,
                        &FsssConfig::new(alpha, params.k, self.walk_seed),
                    )?;
                    if result.models.is_empty() {
                        out.push(Proposal {
                            alpha: Some(alpha),
                            h: None,
                            set: FeatureSet::empty(),
                        });
                    }
                    for m in result.models {
                        out.push(Proposal {
                            alpha: Some(alpha),
                            h: None,
                            set: m.features,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One method at one `s0` in one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub method: Method,
    pub s0: usize,
    pub rep: usize,
    pub alpha: Option<f64>,
    pub h: Option<f64>,
    pub selected: FeatureSet,
    pub val_mse: f64,
    pub test_mse: f64,
    pub tp: f64,
    pub fp: f64,
    pub size: usize,
}

/// Means and standard deviations over repetitions for one method and `s0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: Method,
    pub s0: usize,
    pub reps: usize,
    pub mse: f64,
    pub mse_sd: f64,
    pub tp: f64,
    pub tp_sd: f64,
    pub fp: f64,
    pub fp_sd: f64,
    pub model_size: f64,
    pub model_size_sd: f64,
    /// Mean pairwise normalized similarity of the selected sets across
    /// repetitions; `None` with fewer than two repetitions.
    pub os: Option<f64>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by `(method, s0)`; `os` supplies the output stability of each
/// group when known.
pub fn aggregate(rows: &[RepRow], os: &BTreeMap<(Method, usize), f64>) -> Vec<MetricRow> {
    let mut groups: BTreeMap<(Method, usize), Vec<&RepRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.s0)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, s0), rs)| {
            let col = |f: fn(&RepRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (mse, mse_sd) = mean_sd(&col(|r| r.test_mse));
            let (tp, tp_sd) = mean_sd(&col(|r| r.tp));
            let (fp, fp_sd) = mean_sd(&col(|r| r.fp));
            let (model_size, model_size_sd) = mean_sd(&col(|r| r.size as f64));
            MetricRow {
                method,
                s0,
                reps: rs.len(),
                mse,
                mse_sd,
                tp,
                tp_sd,
                fp,
                fp_sd,
                model_size,
                model_size_sd,
                os: os.get(&(method, s0)).copied(),
            }
        })
        .collect()
}

/// For each method, the summary row at the `s0` with the lowest mean test MSE.
pub fn best_per_method(summary: &[MetricRow]) -> Vec<MetricRow> {
    let mut best: BTreeMap<Method, &MetricRow> = BTreeMap::new();
    for row in summary {
        let slot = best.entry(row.method).or_insert(row);
        if row.mse < slot.mse {
            *slot = row;
        }
    }
    best.into_values().cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: MixedSpec,
    pub noise_sigma: f64,
    pub methods: Vec<Method>,
    pub base: BaseKind,
    pub s0_grid: Vec<usize>,
    pub selection: SelectionParams,
    pub fit_size: usize,
    pub model_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Full-size comparison on the 200-feature design: folds of 200, test
    /// set of 500, B = 200, s0 from 2 to 41.
    pub fn benchmark(seed: u64) -> Self {
        ExperimentConfig {
            spec: synthetic::benchmark_spec(),
            noise_sigma: synthetic::BENCHMARK_SIGMA,
            methods: vec![Method::L0, Method::Ss, Method::Css, Method::FsssGreedy],
            base: BaseKind::L0,
            s0_grid: (2..=41).collect(),
            selection: SelectionParams {
                alpha_grid: vec![0.8, 0.85, 0.9, 0.95],
                h_grid: vec![0.1, 0.3, 0.5],
                num_subsamples: 200,
                k: 10,
            },
            fit_size: 200,
            model_size: 200,
            validation_size: 200,
            test_size: synthetic::BENCHMARK_TEST,
            repetitions: 50,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.s0_grid.is_empty() {
            return Err(Error::invalid("methods and s0 grid must be nonempty"));
        }
        let needs_alpha = self
            .methods
            .iter()
            .any(|m| !matches!(m, Method::L0 | Method::Lasso));
        if needs_alpha && self.selection.alpha_grid.is_empty() {
            return Err(Error::invalid("alpha grid must be nonempty"));
        }
        if self.methods.contains(&Method::Css) && self.selection.h_grid.is_empty() {
            return Err(Error::invalid("h grid must be nonempty for css"));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("need at least one repetition"));
        }
        if self.fit_size < 4
            || self.model_size < 2
            || self.validation_size < 1
            || self.test_size < 2
        {
            return Err(Error::invalid("fold sizes are too small"));
        }
        for &s0 in &self.s0_grid {
            BaseProcedureConfig::l0(s0).validate(self.fit_size, self.spec.num_features())?;
        }
        Ok(())
    }

    fn folds(&self) -> Folds {
        Folds::contiguous(
            self.fit_size,
            self.model_size,
            self.validation_size,
            self.test_size,
        )
    }

    fn base_config(&self, s0: usize) -> BaseProcedureConfig {
        match self.base {
            BaseKind::L0 => BaseProcedureConfig::l0(s0),
            BaseKind::Lasso => BaseProcedureConfig::lasso(s0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<RepRow>,
    pub summary: Vec<MetricRow>,
    pub best: Vec<MetricRow>,
}

/// Selects, fits and scores every method for one dataset and `s0`.
fn score_repetition(
    data: &SyntheticData,
    folds: &Folds,
    config: &ExperimentConfig,
    s0: usize,
    rep: usize,
    workers: Workers,
) -> Result<Vec<RepRow>> {
    let fit = data.select_rows(&folds.fit)?;
    let raw = data.x.values();
    let rows_of = |idx: &[usize]| -> (DMatrix<f64>, DVector<f64>) {
        (
            raw.select_rows(idx),
            DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.y[i])),
        )
    };
    let (xm, ym) = rows_of(&folds.model);
    let (xv, yv) = rows_of(&folds.validation);
    let (xt, yt) = rows_of(&folds.test);
    let test_design = data.x.select_rows(&folds.test)?;
    let test_space = FeatureSpace::new(&test_design);

    let seed = rng::derive_seed(config.seed, rng::REPEAT, rep as u64);
    let ctx = SelectionContext::new(
        &fit.x,
        &fit.y,
        config.base_config(s0),
        config.selection.num_subsamples,
        seed,
        workers,
    )?;
    let mut out = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let mut best: Option<(f64, Proposal, LinearFit)> = None;
        for proposal in ctx.proposals(method, &config.selection)? {
            let model = fit_ols(&xm, &ym, &proposal.set)?;
            let val = model.mse(&xv, &yv);
            if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
                best = Some((val, proposal, model));
            }
        }
        let (val_mse, proposal, model) = best.expect("every method proposes at least one set");
        let (tp, fp) = positives(&test_space, &proposal.set, &data.truth.support)?;
        out.push(RepRow {
            method,
            s0,
            rep,
            alpha: proposal.alpha,
            h: proposal.h,
            size: proposal.set.len(),
            selected: proposal.set,
            val_mse,
            test_mse: model.mse(&xt, &yt),
            tp,
            fp,
        });
    }
    Ok(out)
}

/// Runs every repetition of `config`; repetitions are independent draws
/// of the design, scored in parallel.
pub fn run_benchmark(config: &ExperimentConfig, workers: Workers) -> Result<BenchResult> {
    config.validate()?;
    let folds = config.folds();
    let per_rep = workers.try_map(config.repetitions, |rep| {
        let data = synthetic::generate(
            &config.spec,
            folds.total(),
            config.noise_sigma,
            rng::derive_seed(config.seed, rng::DATA, rep as u64),
        )?;
        let mut rows = Vec::new();
        for &s0 in &config.s0_grid {
            rows.extend(score_repetition(&data, &folds, config, s0, rep, workers)?);
        }
        Ok(rows)
    })?;
    let rows: Vec<RepRow> = per_rep.into_iter().flatten().collect();

    // Output stability is measured on one reference draw shared by all
    // repetitions.
    let mut os = BTreeMap::new();
    if config.repetitions >= 2 {
        let reference = synthetic::generate(
            &config.spec,
            config.test_size.max(config.spec.num_features() + 1),
            config.noise_sigma,
            rng::derive_seed(config.seed, "reference", 0),
        )?;
        let space = FeatureSpace::new(&reference.x);
        let mut sets: BTreeMap<(Method, usize), Vec<FeatureSet>> = BTreeMap::new();
        for r in &rows {
            sets.entry((r.method, r.s0))
                .or_default()
                .push(r.selected.clone());
        }
        for (key, group) in sets {
            os.insert(key, space.output_stability(&group)?);
        }
    }
    let summary = aggregate(&rows, &os);
    let best = best_per_method(&summary);
    Ok(BenchResult {
        rows,
        summary,
        best,
    })
}

/// Settings for a single train/test comparison at fixed `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub base: BaseProcedureConfig,
    pub num_subsamples: usize,
    pub alpha: f64,
    pub h: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub selected: FeatureSet,
    pub test_mse: f64,
    pub tp: f64,
    pub fp: f64,
}

/// Selects with SS, CSS and greedy FSSS on `train`, refits by least squares
/// on `train`, and scores on `test`.
pub fn compare_on_split(
    train: &SyntheticData,
    test: &SyntheticData,
    params: &SplitParams,
    workers: Workers,
) -> Result<Vec<MethodOutcome>> {
    let ctx = SelectionContext::new(
        &train.x,
        &train.y,
        params.base.clone(),
        params.num_subsamples,
        params.seed,
        workers,
    )?;
    let selection = SelectionParams {
        alpha_grid: vec![params.alpha],
        h_grid: vec![params.h],
        num_subsamples: params.num_subsamples,
        k: 1,
    };
    let space = FeatureSpace::new(&test.x);
    let mut out = Vec::new();
    for method in [Method::Ss, Method::Css, Method::FsssGreedy] {
        let set = ctx.proposals(method, &selection)?.remove(0).set;
        let model = fit_ols(train.x.values(), &train.y, &set)?;
        let (tp, fp) = positives(&space, &set, &test.truth.support)?;
        out.push(MethodOutcome {
            method,
            test_mse: model.mse(test.x.values(), &test.y),
            selected: set,
            tp,
            fp,
        });
    }
    Ok(out)
}

/// One feature's stability under the three notions at one `s0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub s0: usize,
    pub feature: usize,
    pub name: String,
    pub role: Option<FeatureRole>,
    /// Selection proportion.
    pub ss: f64,
    /// Selection proportion of the feature's cluster.
    pub css: f64,
    /// Subspace stability of the single feature.
    pub subspace: f64,
}

/// Per-feature stability paths over `s0_grid`.
#[allow(clippy::too_many_arguments)]
pub fn stability_paths(
    x: &DesignMatrix,
    y: &DVector<f64>,
    s0_grid: &[usize],
    base: BaseKind,
    num_subsamples: usize,
    h: f64,
    roles: Option<&[FeatureRole]>,
    seed: u64,
    workers: Workers,
) -> Result<Vec<PathRow>> {
    if let Some(r) = roles {
        if r.len() != x.p() {
            return Err(Error::DimensionMismatch {
                expected: x.p(),
                found: r.len(),
            });
        }
    }
    let clusters: ClusterAssignment = baselines::hierarchical_clusters(x, h)?;
    let space = FeatureSpace::new(x);
    let mut out = Vec::with_capacity(s0_grid.len() * x.p());
    for &s0 in s0_grid {
        let base_config = match base {
            BaseKind::L0 => BaseProcedureConfig::l0(s0),
            BaseKind::Lasso => BaseProcedureConfig::lasso(s0),
        };
        let config = SubsamplingConfig::new(num_subsamples, base_config, seed);
        let run = run_subsampling(x, y, &config, workers)?;
        let ss = selection_proportions(&run.records, x.p());
        let css = baselines::cluster_proportions(&run.records, &clusters);
        let subspace = workers.try_map(x.p(), |j| {
            space.stability(&FeatureSet::singleton(j), &run.projection)
        })?;
        for j in 0..x.p() {
            out.push(PathRow {
                s0,
                feature: j,
                name: x.name(j),
                role: roles.map(|r| r[j]),
                ss: ss[j],
                css: css[clusters.labels[j]],
                subspace: subspace[j],
            });
        }
    }
    Ok(out)
}

/// One pair of sets that is not stable together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub i: usize,
    pub j: usize,
    /// Normalized similarity, or the response-aware similarity when a
    /// response was given.
    pub upper: f64,
    /// Conservative similarity.
    pub lower: f64,
}

/// Similarities for every pair `i < j` of `subsets` whose union is not
/// `alpha`-stable; jointly stable pairs are left out.
pub fn tile_similarity(
    x: &DesignMatrix,
    y: Option<&DVector<f64>>,
    subsets: &[FeatureSet],
    p: &AvgProjection,
    alpha: f64,
) -> Result<Vec<TileEntry>> {
    let space = FeatureSpace::new(x);
    let mut out = Vec::new();
    for i in 0..subsets.len() {
        for j in i + 1..subsets.len() {
            let (a, b) = (&subsets[i], &subsets[j]);
            if space.stability(&a.union(b), p)? >= alpha {
                continue;
            }
            let upper = match y {
                Some(y) => space.response_similarity(y, a, b)?,
                None => space.normalized_similarity(a, b)?,
            };
            out.push(TileEntry {
                i,
                j,
                upper,
                lower: space.conservative_similarity(a, b)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subsample::projection_from_records;
    use crate::synthetic::{ClusterDef, ClusterSpec, IndividualSpec};
    use approx::assert_relative_eq;

    fn small_spec() -> MixedSpec {
        MixedSpec {
            clusters: ClusterSpec {
                clusters: vec![
                    ClusterDef {
                        proxies: 1,
                        beta: 2.0,
                    },
                    ClusterDef {
                        proxies: 1,
                        beta: 0.0,
                    },
                ],
                eta1: 0.3,
                normalize_reps: false,
            },
            blocks: vec![],
            individuals: IndividualSpec {
                count: 6,
                weak_count: 1,
                weak_beta: 1.5,
            },
        }
    }

    #[test]
    fn ols_recovers_noiseless_coefficients() {
        let d = synthetic::generate(&small_spec(), 40, 0.0, 1).unwrap();
        let fit = fit_ols(d.x.values(), &d.y, &d.truth.support).unwrap();
        assert_relative_eq!(fit.coefs[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coefs[1], 1.5, epsilon = 1e-10);
        assert!(fit.mse(d.x.values(), &d.y) < 1e-20);
        let fresh = synthetic::generate(&small_spec(), 40, 0.0, 2).unwrap();
        assert!(fit.mse(fresh.x.values(), &fresh.y) < 1e-18);
    }

    #[test]
    fn empty_selection_predicts_the_mean() {
        let d = synthetic::generate(&small_spec(), 30, 1.0, 3).unwrap();
        let fit = fit_ols(d.x.values(), &d.y, &FeatureSet::empty()).unwrap();
        let var = (d.y.add_scalar(-d.y.mean())).norm_squared() / 30.0;
        assert_relative_eq!(fit.mse(d.x.values(), &d.y), var, epsilon = 1e-12);
    }

    #[test]
    fn ols_tolerates_duplicate_columns() {
        let d = synthetic::generate(&small_spec(), 25, 0.5, 4).unwrap();
        let mut m = d.x.values().clone();
        let c0 = m.column(0).into_owned();
        m.set_column(1, &c0);
        let fit = fit_ols(&m, &d.y, &FeatureSet::from([0, 1])).unwrap();
        let single = fit_ols(&m, &d.y, &FeatureSet::from([0])).unwrap();
        assert_relative_eq!(fit.mse(&m, &d.y), single.mse(&m, &d.y), epsilon = 1e-8);
    }

    #[test]
    fn aggregate_is_the_plain_mean() {
        let row = |rep: usize, mse: f64, tp: f64, fp: f64| RepRow {
            method: Method::Ss,
            s0: 3,
            rep,
            alpha: Some(0.8),
            h: None,
            selected: FeatureSet::empty(),
            val_mse: 0.0,
            test_mse: mse,
            tp,
            fp,
            size: (tp + fp).round() as usize,
        };
        let rows = vec![
            row(0, 1.0, 1.0, 1.0),
            row(1, 2.0, 2.0, 0.0),
            row(2, 6.0, 0.5, 0.5),
        ];
        let s = aggregate(&rows, &BTreeMap::new());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mse, 3.0);
        assert_eq!(s[0].tp, 3.5 / 3.0);
        assert_eq!(s[0].fp, 0.5);
        assert_relative_eq!(s[0].mse_sd, (7.0f64).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(s[0].tp + s[0].fp, s[0].model_size, epsilon = 1e-12);
        assert_eq!(s[0].os, None);
    }

    #[test]
    fn best_row_has_lowest_mse() {
        let mk = |method, s0, mse| MetricRow {
            method,
            s0,
            reps: 1,
            mse,
            mse_sd: 0.0,
            tp: 0.0,
            tp_sd: 0.0,
            fp: 0.0,
            fp_sd: 0.0,
            model_size: 0.0,
            model_size_sd: 0.0,
            os: None,
        };
        let rows = vec![
            mk(Method::Ss, 2, 3.0),
            mk(Method::Ss, 4, 1.0),
            mk(Method::Css, 2, 2.0),
            mk(Method::Ss, 6, 1.0),
        ];
        let best = best_per_method(&rows);
        assert_eq!(
            best.iter().map(|r| (r.method, r.s0)).collect::<Vec<_>>(),
            vec![(Method::Ss, 4), (Method::Css, 2)]
        );
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            spec: small_spec(),
            noise_sigma: 0.5,
            methods: Method::ALL.to_vec(),
            base: BaseKind::L0,
            s0_grid: vec![2, 3],
            selection: SelectionParams {
                alpha_grid: vec![0.7, 0.8],
                h_grid: vec![0.2],
                num_subsamples: 20,
                k: 4,
            },
            fit_size: 40,
            model_size: 30,
            validation_size: 30,
            test_size: 40,
            repetitions: 3,
            seed: 5,
        }
    }

    #[test]
    fn benchmark_runs_and_is_worker_independent() {
        let config = tiny_config();
        let a = run_benchmark(&config, Workers::SEQUENTIAL).unwrap();
        let b = run_benchmark(&config, Workers(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3 * 2 * Method::ALL.len());
        for r in &a.rows {
            assert_relative_eq!(r.tp + r.fp, r.size as f64, epsilon = 1e-8);
            if let Some(alpha) = r.alpha {
                assert!(config.selection.alpha_grid.contains(&alpha));
            }
        }
        assert_eq!(a.summary.len(), 2 * Method::ALL.len());
        assert!(a
            .summary
            .iter()
            .all(|m| m.os.is_some_and(|v| (0.0..=1.0).contains(&v))));
        assert_eq!(a.best.len(), Method::ALL.len());
        // the strong signal cluster is always represented
        let fsss_rows = a.rows.iter().filter(|r| r.method == Method::FsssGreedy);
        for r in fsss_rows {
            assert!(
                r.selected.contains(0) || r.selected.contains(1),
                "{}",
                r.selected
            );
        }
    }

    #[test]
    fn paths_on_orthonormal_toy() {
        // noiseless response on two of five orthonormal columns
        let mut rng = rng::stream(0, "toy", 0);
        use rand::Rng;
        let raw = DMatrix::from_fn(30, 5, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let q = crate::design::center_columns(raw).qr().q();
        let x = DesignMatrix::new(q).unwrap();
        let y = x.column(0) * 3.0 + x.column(1) * 2.0;
        let rows = stability_paths(
            &x,
            &y,
            &[2],
            BaseKind::L0,
            10,
            0.1,
            None,
            1,
            Workers::SEQUENTIAL,
        )
        .unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            let expected = if r.feature < 2 { 1.0 } else { 0.0 };
            assert_relative_eq!(r.ss, expected);
            assert_relative_eq!(r.css, expected);
            assert_relative_eq!(r.subspace, expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn tiles_skip_jointly_stable_pairs() {
        let d = synthetic::generate(&small_spec(), 50, 0.5, 6).unwrap();
        let x = &d.x;
        let records: Vec<SelectionRecord> = (0..10)
            .map(|l| SelectionRecord {
                subsample_index: l,
                rows: vec![],
                selected: if l % 2 == 0 {
                    FeatureSet::from([0, 4])
                } else {
                    FeatureSet::from([1, 4])
                },
                short: false,
            })
            .collect();
        let p = projection_from_records(x, &records, 1e-10, Workers::SEQUENTIAL).unwrap();
        let subsets = vec![
            FeatureSet::from([0, 4]),
            FeatureSet::from([1, 4]),
            FeatureSet::from([0, 4]),
            FeatureSet::from([4]),
        ];
        let tiles = tile_similarity(x, None, &subsets, &p, 0.7).unwrap();
        let space = FeatureSpace::new(x);
        // {0,4} with itself and {4} with {0,4} are stable together
        let pairs: Vec<(usize, usize)> = tiles.iter().map(|t| (t.i, t.j)).collect();
        assert!(!pairs.contains(&(0, 2)));
        assert!(!pairs.contains(&(0, 3)));
        assert!(pairs.contains(&(0, 1)));
        let t01 = tiles.iter().find(|t| (t.i, t.j) == (0, 1)).unwrap();
        assert_relative_eq!(
            t01.upper,
            space
                .normalized_similarity(&subsets[0], &subsets[1])
                .unwrap()
        );
        assert_relative_eq!(
            t01.lower,
            space
                .conservative_similarity(&subsets[0], &subsets[1])
                .unwrap()
        );
        let t13 = tiles.iter().find(|t| (t.i, t.j) == (1, 3));
        if let Some(t) = t13 {
            assert_eq!(t.lower, 0.0);
        }
        let with_y = tile_similarity(x, Some(&d.y), &subsets, &p, 0.7).unwrap();
        let t = with_y.iter().find(|t| (t.i, t.j) == (0, 1)).unwrap();
        assert_relative_eq!(
            t.upper,
            space
                .response_similarity(&d.y, &subsets[0], &subsets[1])
                .unwrap()
        );
    }
}
