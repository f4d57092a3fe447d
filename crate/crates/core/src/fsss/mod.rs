//! Search for maximal α-stable feature sets: weighted random walks over the
//! subset lattice with pruning, a deterministic greedy variant, and an
//! exhaustive depth-first enumerator for small problems.

mod enumerate;
mod oracle;
mod search;

pub use enumerate::enumerate_all_maximal;
pub use oracle::{Candidate, Node, StabilityOracle};
pub use search::{fsss, sample_next};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::linalg::DEFAULT_RANK_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    RandomWalk,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsssConfig {
    /// Stability threshold, in `(1/2, 1)`.
    pub alpha: f64,
    /// Number of models wanted; forced to 1 in greedy mode.
    pub k: usize,
    pub seed: u64,
    pub mode: SearchMode,
    /// Reject extensions that would contain a pair with squared
    /// correlation above this value.
    pub corr_guard: Option<f64>,
    /// Restart cap; `None` means `max(50·K, 1000)`.
    pub max_restarts: Option<usize>,
    /// Hard cap on stability evaluations; exceeding it is an error.
    pub max_evaluations: usize,
    pub rank_tol: f64,
    /// Keep every set placed in VISITED as unstable, for auditing.
    #[serde(default)]
    pub keep_trace: bool,
}

impl FsssConfig {
    pub fn new(alpha: f64, k: usize, seed: u64) -> Self {
        FsssConfig {
            alpha,
            k,
            seed,
            mode: SearchMode::RandomWalk,
            corr_guard: None,
            max_restarts: None,
            max_evaluations: 5_000_000,
            rank_tol: DEFAULT_RANK_TOL,
            keep_trace: false,
        }
    }

    pub fn greedy(alpha: f64) -> Self {
        FsssConfig {
            mode: SearchMode::Greedy,
            ..Self::new(alpha, 1, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "stability threshold must lie in (1/2, 1), got {}",
                self.alpha
            )));
        }
        if self.k == 0 {
            return Err(Error::invalid("number of models must be at least 1"));
        }
        if let Some(g) = self.corr_guard {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::invalid(format!(
                    "correlation guard must lie in [0, 1], got {g}"
                )));
            }
        }
        Ok(())
    }

    pub fn restart_budget(&self) -> usize {
        self.max_restarts.unwrap_or((50 * self.k).max(1000))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableModel {
    pub features: FeatureSet,
    pub stability: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub restarts: usize,
    pub stability_evaluations: usize,
    pub cache_hits: usize,
    pub superset_shortcuts: usize,
    pub prescreen_rejections: usize,
    pub guard_rejections: usize,
    pub unstable_extensions: usize,
    pub visited: usize,
    pub restart_budget_hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsssResult {
    pub models: Vec<StableModel>,
    /// The root ran out of candidates, so every maximal set was found.
    pub exhausted: bool,
    pub diagnostics: SearchDiagnostics,
    #[serde(skip)]
    pub unstable_trace: Vec<FeatureSet>,
}

impl FsssResult {
    pub fn feature_sets(&self) -> Vec<FeatureSet> {
        self.models.iter().map(|m| m.features.clone()).collect()
    }
}
