//! One function per subcommand.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use substab::base::{BaseKind, BaseProcedureConfig};
use substab::baselines;
use substab::eval::{self, ExperimentConfig, MetricRow, RepRow};
use substab::fsss::{FsssConfig, SearchDiagnostics, SearchMode};
use substab::io::{self, load_csv, write_json, write_rows};
use substab::parallel::Workers;
use substab::rng;
use substab::subsample::{run_subsampling, selection_proportions, SubsampleRun, SubsamplingConfig};
use substab::synthetic;
use substab::{DesignMatrix, FeatureSet};

use crate::output::{ensure_dir, names_of, render_table, write_manifest};
use crate::{
    BenchArgs, CssArgs, DataArgs, FsssArgs, GenArgs, PathsArgs, Recipe, SsArgs, SubsampleArgs,
    TilesArgs,
};

pub const MODELS_FILE: &str = "models.json";
pub const MODELS_TABLE: &str = "models.txt";
pub const SELECTION_FILE: &str = "selection.json";
pub const PATHS_FILE: &str = "paths.csv";
pub const TILES_FILE: &str = "tiles.csv";
pub const BENCH_ROWS_FILE: &str = "bench_rows.csv";
pub const BENCH_SUMMARY_FILE: &str = "bench_summary.json";

fn load(data: &DataArgs) -> Result<(DesignMatrix, DVector<f64>)> {
    let loaded = load_csv(&data.input, Some(&data.response))?;
    let y = loaded.y.expect("response column requested");
    log::info!(
        "{}: {} rows, {} features, {} constant columns dropped",
        data.input.display(),
        loaded.x.n(),
        loaded.x.p(),
        loaded.dropped.len()
    );
    Ok((loaded.x, y))
}

fn base_config(kind: BaseKind, s0: usize) -> BaseProcedureConfig {
    match kind {
        BaseKind::L0 => BaseProcedureConfig::l0(s0),
        BaseKind::Lasso => BaseProcedureConfig::lasso(s0),
    }
}

/// Settings that, together with the data, reproduce a subsampling run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub num_subsamples: usize,
    pub s0: usize,
    pub base: BaseKind,
    pub seed: u64,
    pub alpha: f64,
}

impl RunSettings {
    fn new(s: &SubsampleArgs, alpha: f64) -> Self {
        RunSettings {
            num_subsamples: s.num_subsamples,
            s0: s.s0,
            base: s.base.into(),
            seed: s.seed,
            alpha,
        }
    }

    fn subsample(
        &self,
        x: &DesignMatrix,
        y: &DVector<f64>,
        workers: Workers,
    ) -> Result<SubsampleRun> {
        let config = SubsamplingConfig::new(
            self.num_subsamples,
            base_config(self.base, self.s0),
            rng::derive_seed(self.seed, rng::PLAN, 0),
        );
        Ok(run_subsampling(x, y, &config, workers)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelEntry {
    pub rank: usize,
    pub features: FeatureSet,
    pub names: Vec<String>,
    pub size: usize,
    pub stability: f64,
}

/// Contents of `models.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelsFile {
    pub settings: RunSettings,
    pub mode: SearchMode,
    pub k: usize,
    pub corr_guard: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub feature_names: Vec<String>,
    pub models: Vec<ModelEntry>,
    pub exhausted: bool,
    pub diagnostics: SearchDiagnostics,
}

pub fn fsss(a: &FsssArgs, workers: Workers) -> Result<()> {
    let (x, y) = load(&a.data)?;
    let settings = RunSettings::new(&a.subsample, a.alpha);
    let run = settings.subsample(&x, &y, workers)?;
    let mut config = if a.greedy {
        FsssConfig::greedy(a.alpha)
    } else {
        FsssConfig::new(
            a.alpha,
            a.k,
            rng::derive_seed(a.subsample.seed, rng::WALK, 0),
        )
    };
    config.corr_guard = a.corr_guard;
    config.max_restarts = a.max_restarts;
    let result = substab::fsss::fsss(&run.basis_design, &run.projection, &config)?;

    let models: Vec<ModelEntry> = result
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| ModelEntry {
            rank: i + 1,
            names: names_of(&x, &m.features),
            size: m.features.len(),
            features: m.features.clone(),
            stability: m.stability,
        })
        .collect();
    let doc = ModelsFile {
        settings,
        mode: config.mode,
        k: config.k,
        corr_guard: config.corr_guard,
        n: x.n(),
        p: x.p(),
        feature_names: (0..x.p()).map(|j| x.name(j)).collect(),
        models,
        exhausted: result.exhausted,
        diagnostics: result.diagnostics,
    };

    ensure_dir(&a.out)?;
    write_json(&a.out.join(MODELS_FILE), &doc)?;
    let rows: Vec<Vec<String>> = doc
        .models
        .iter()
        .map(|m| {
            vec![
                m.rank.to_string(),
                m.size.to_string(),
                format!("{:.4}", m.stability),
                m.names.join(" "),
            ]
        })
        .collect();
    let table = render_table(&["model", "size", "stability", "features"], &rows);
    fs::write(a.out.join(MODELS_TABLE), &table)
        .with_context(|| format!("writing {}", a.out.join(MODELS_TABLE).display()))?;
    print!("{table}");
    if doc.models.len() < a.k && !a.greedy {
        log::warn!(
            "found {} of the {} requested models{}",
            doc.models.len(),
            a.k,
            if doc.exhausted {
                "; no others exist"
            } else {
                ""
            }
        );
    }
    write_manifest(
        &a.out,
        "fsss",
        a.subsample.seed,
        a,
        &[&a.data.input],
        &[MODELS_FILE.into(), MODELS_TABLE.into()],
    )
}

/// Contents of `selection.json` for `ss` and `css`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionFile {
    pub method: String,
    pub settings: RunSettings,
    pub h: Option<f64>,
    pub selected: FeatureSet,
    pub names: Vec<String>,
    pub feature_names: Vec<String>,
    /// Selection proportion of every feature.
    pub proportions: Vec<f64>,
    /// Cluster label of every feature (css only).
    pub clusters: Option<Vec<usize>>,
    /// Selection proportion of every cluster (css only).
    pub cluster_proportions: Option<Vec<f64>>,
}

fn finish_selection(
    out: &Path,
    input: &Path,
    doc: &SelectionFile,
    args: &impl Serialize,
) -> Result<()> {
    ensure_dir(out)?;
    write_json(&out.join(SELECTION_FILE), doc)?;
    let rows: Vec<Vec<String>> = doc
        .selected
        .iter()
        .zip(&doc.names)
        .map(|(j, name)| {
            vec![
                j.to_string(),
                name.clone(),
                format!("{:.3}", doc.proportions[j]),
            ]
        })
        .collect();
    print!(
        "{}",
        render_table(&["index", "feature", "proportion"], &rows)
    );
    write_manifest(
        out,
        &doc.method,
        doc.settings.seed,
        args,
        &[input],
        &[SELECTION_FILE.into()],
    )
}

pub fn ss(a: &SsArgs, workers: Workers) -> Result<()> {
    let (x, y) = load(&a.data)?;
    let settings = RunSettings::new(&a.subsample, a.alpha);
    let run = settings.subsample(&x, &y, workers)?;
    let selected = baselines::stability_selection(&run.records, a.alpha, x.p())?;
    let doc = SelectionFile {
        method: "ss".into(),
        settings,
        h: None,
        names: names_of(&x, &selected),
        selected,
        feature_names: (0..x.p()).map(|j| x.name(j)).collect(),
        proportions: selection_proportions(&run.records, x.p()),
        clusters: None,
        cluster_proportions: None,
    };
    finish_selection(&a.out, &a.data.input, &doc, a)
}

pub fn css(a: &CssArgs, workers: Workers) -> Result<()> {
    let (x, y) = load(&a.data)?;
    let settings = RunSettings::new(&a.subsample, a.alpha);
    let run = settings.subsample(&x, &y, workers)?;
    let clusters = baselines::hierarchical_clusters(&x, a.h)?;
    let selected = baselines::cluster_stability_selection_sps(&run.records, &clusters, a.alpha)?;
    let doc = SelectionFile {
        method: "css".into(),
        settings,
        h: Some(a.h),
        names: names_of(&x, &selected),
        selected,
        feature_names: (0..x.p()).map(|j| x.name(j)).collect(),
        proportions: selection_proportions(&run.records, x.p()),
        cluster_proportions: Some(baselines::cluster_proportions(&run.records, &clusters)),
        clusters: Some(clusters.labels),
    };
    finish_selection(&a.out, &a.data.input, &doc, a)
}

pub fn paths(a: &PathsArgs, workers: Workers) -> Result<()> {
    let (x, y) = load(&a.data)?;
    let truth = a.truth.as_deref().map(io::read_truth).transpose()?;
    if let Some(t) = &truth {
        if t.p() != x.p() {
            bail!(
                "ground truth describes {} features but the data has {}",
                t.p(),
                x.p()
            );
        }
    }
    let rows = eval::stability_paths(
        &x,
        &y,
        &a.s0,
        a.base.into(),
        a.num_subsamples,
        a.h,
        truth.as_ref().map(|t| t.roles.as_slice()),
        rng::derive_seed(a.seed, rng::PLAN, 0),
        workers,
    )?;
    ensure_dir(&a.out)?;
    write_rows(&a.out.join(PATHS_FILE), &rows)?;
    println!(
        "{} rows written to {}",
        rows.len(),
        a.out.join(PATHS_FILE).display()
    );
    let mut inputs = vec![a.data.input.as_path()];
    inputs.extend(a.truth.as_deref());
    write_manifest(&a.out, "paths", a.seed, a, &inputs, &[PATHS_FILE.into()])
}

#[derive(Debug, Serialize)]
struct TileRow {
    i: usize,
    j: usize,
    model_i: String,
    model_j: String,
    upper: f64,
    lower: f64,
}

pub fn tiles(a: &TilesArgs, workers: Workers) -> Result<()> {
    let (x, y) = load(&a.data)?;
    let models: ModelsFile = io::read_json(&a.models)?;
    if models.p != x.p() || models.n != x.n() {
        bail!(
            "{} was produced on {}x{} data, but the input is {}x{}",
            a.models.display(),
            models.n,
            models.p,
            x.n(),
            x.p()
        );
    }
    let run = models.settings.subsample(&x, &y, workers)?;
    let sets: Vec<FeatureSet> = models.models.iter().map(|m| m.features.clone()).collect();
    let entries = eval::tile_similarity(
        &run.basis_design,
        a.use_response.then_some(&y),
        &sets,
        &run.projection,
        models.settings.alpha,
    )?;
    let rows: Vec<TileRow> = entries
        .into_iter()
        .map(|e| TileRow {
            model_i: models.models[e.i].names.join(";"),
            model_j: models.models[e.j].names.join(";"),
            i: e.i,
            j: e.j,
            upper: e.upper,
            lower: e.lower,
        })
        .collect();
    ensure_dir(&a.out)?;
    write_rows(&a.out.join(TILES_FILE), &rows)?;
    println!(
        "{} pairs written to {}",
        rows.len(),
        a.out.join(TILES_FILE).display()
    );
    write_manifest(
        &a.out,
        "tiles",
        models.settings.seed,
        a,
        &[&a.data.input, &a.models],
        &[TILES_FILE.into()],
    )
}

#[derive(Debug, Serialize)]
struct BenchCsvRow {
    method: String,
    s0: usize,
    rep: usize,
    alpha: Option<f64>,
    h: Option<f64>,
    selected: String,
    size: usize,
    val_mse: f64,
    test_mse: f64,
    tp: f64,
    fp: f64,
}

impl From<&RepRow> for BenchCsvRow {
    fn from(r: &RepRow) -> Self {
        BenchCsvRow {
            method: r.method.to_string(),
            s0: r.s0,
            rep: r.rep,
            alpha: r.alpha,
            h: r.h,
            selected: r
                .selected
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            size: r.size,
            val_mse: r.val_mse,
            test_mse: r.test_mse,
            tp: r.tp,
            fp: r.fp,
        }
    }
}

/// Contents of `bench_summary.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct BenchSummaryFile {
    pub config: ExperimentConfig,
    pub summary: Vec<MetricRow>,
    pub best: Vec<MetricRow>,
}

pub fn bench(a: &BenchArgs, workers: Workers) -> Result<()> {
    let config = match &a.config {
        Some(path) => io::read_json::<ExperimentConfig>(path)?,
        None => {
            let mut c = ExperimentConfig::benchmark(a.seed);
            c.repetitions = a.reps;
            c.s0_grid = a.s0.clone();
            c.methods = a.methods.clone();
            c.selection.num_subsamples = a.num_subsamples;
            c.base = a.base.into();
            c
        }
    };
    config.validate()?;
    let result = eval::run_benchmark(&config, workers)?;
    ensure_dir(&a.out)?;
    let rows: Vec<BenchCsvRow> = result.rows.iter().map(BenchCsvRow::from).collect();
    write_rows(&a.out.join(BENCH_ROWS_FILE), &rows)?;
    let table_rows: Vec<Vec<String>> = result
        .best
        .iter()
        .map(|m| {
            vec![
                m.method.to_string(),
                m.s0.to_string(),
                format!("{:.3} ({:.3})", m.mse, m.mse_sd),
                format!("{:.2}", m.tp),
                format!("{:.2}", m.fp),
                m.os.map_or("-".into(), |v| format!("{v:.3}")),
            ]
        })
        .collect();
    print!(
        "{}",
        render_table(
            &["method", "s0", "test MSE (sd)", "TP", "FP", "OS"],
            &table_rows
        )
    );
    let seed = config.seed;
    write_json(
        &a.out.join(BENCH_SUMMARY_FILE),
        &BenchSummaryFile {
            config,
            summary: result.summary,
            best: result.best,
        },
    )?;
    let inputs: Vec<&Path> = a.config.as_deref().into_iter().collect();
    write_manifest(
        &a.out,
        "bench",
        seed,
        a,
        &inputs,
        &[BENCH_ROWS_FILE.into(), BENCH_SUMMARY_FILE.into()],
    )
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let (spec, n, sigma, name) = match a.recipe {
        Recipe::Figure1 => (
            synthetic::figure1_spec(),
            synthetic::FIGURE1_N,
            synthetic::FIGURE1_SIGMA,
            "figure1",
        ),
        Recipe::Benchmark => (
            synthetic::benchmark_spec(),
            synthetic::BENCHMARK_TRAIN,
            synthetic::BENCHMARK_SIGMA,
            "benchmark",
        ),
    };
    let data = synthetic::generate(&spec, a.n.unwrap_or(n), a.sigma.unwrap_or(sigma), a.seed)?;
    let stem = a.stem.as_deref().unwrap_or(name);
    io::export_synthetic(&a.out, stem, &data)?;
    println!(
        "wrote {} rows and {} features to {}",
        data.x.n(),
        data.x.p(),
        a.out.join(format!("{stem}.csv")).display()
    );
    write_manifest(
        &a.out,
        "gen",
        a.seed,
        a,
        &[],
        &[format!("{stem}.csv"), format!("{stem}.truth.json")],
    )
}
