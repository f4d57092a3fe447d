//! Variable-selection procedures applied to each subsample.

mod l0;
mod lasso;
mod standardize;

pub use l0::{fit_l0, L0Fit};
pub use lasso::{fit_lasso, fit_lasso_at, lasso_lambda_max, LassoFit};
pub use standardize::Standardized;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    L0,
    Lasso,
}

impl std::str::FromStr for BaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0" => Ok(BaseKind::L0),
            "lasso" => Ok(BaseKind::Lasso),
            other => Err(Error::invalid(format!("unknown base procedure {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseProcedureConfig {
    pub kind: BaseKind,
    /// Target support size.
    pub s0: usize,
    pub l0_swap_rounds: usize,
    pub lasso_path_length: usize,
    pub lasso_eps_ratio: f64,
}

impl BaseProcedureConfig {
    pub fn l0(s0: usize) -> Self {
        BaseProcedureConfig {
            kind: BaseKind::L0,
            s0,
            l0_swap_rounds: 2,
            lasso_path_length: 100,
            lasso_eps_ratio: 1e-3,
        }
    }

    pub fn lasso(s0: usize) -> Self {
        BaseProcedureConfig {
            kind: BaseKind::Lasso,
            ..Self::l0(s0)
        }
    }

    /// Checks `1 ≤ s0 ≤ min(p, ⌊n/2⌋)` for a design with `n` rows.
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.s0 == 0 {
            return Err(Error::invalid("s0 must be at least 1"));
        }
        if self.s0 > p {
            return Err(Error::invalid(format!("s0 = {} exceeds p = {p}", self.s0)));
        }
        if self.s0 > n / 2 {
            return Err(Error::invalid(format!(
                "s0 = {} cannot be fitted on half-samples of {} rows",
                self.s0,
                n / 2
            )));
        }
        if self.kind == BaseKind::Lasso
            && (self.lasso_path_length < 2
                || !(self.lasso_eps_ratio > 0.0 && self.lasso_eps_ratio < 1.0))
        {
            return Err(Error::invalid(
                "lasso path needs at least 2 values and eps ratio in (0, 1)",
            ));
        }
        Ok(())
    }

    /// Runs the configured procedure on one subsample.
    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Selection> {
        match self.kind {
            BaseKind::L0 => fit_l0(x, y, self.s0, self.l0_swap_rounds).map(|f| Selection {
                selected: f.selected,
                short: false,
            }),
            BaseKind::Lasso => {
                fit_lasso(x, y, self.s0, self.lasso_path_length, self.lasso_eps_ratio).map(|f| {
                    Selection {
                        selected: f.selected,
                        short: f.short,
                    }
                })
            }
        }
    }
}

/// Output of one base-procedure fit.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub selected: FeatureSet,
    /// Set when the procedure could not reach the target size.
    pub short: bool,
}
