//! Seeded generators for clustered and parent/child block designs.
//!
//! Columns are laid out as clusters (representative first, then proxies),
//! then blocks (parents, then children), then individual features. All
//! columns of `X` and the response are centered; nothing is rescaled unless
//! `normalize_reps` asks for it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{center_vector, DesignMatrix};
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterDef {
    pub proxies: usize,
    /// Coefficient on the representative; proxies get zero.
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub clusters: Vec<ClusterDef>,
    /// Per-entry standard deviation of proxy perturbations.
    pub eta1: f64,
    /// Scale representatives to unit norm and perturbations to norm about
    /// `eta1`, as in the theory setup.
    #[serde(default)]
    pub normalize_reps: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub parents: usize,
    /// Per-entry standard deviation of the child perturbation.
    pub child_eta: f64,
    pub parent_betas: Vec<f64>,
    /// Each child is `Σ_i c_i X_{parent i} + δ` for one coefficient vector.
    pub children: Vec<Vec<f64>>,
}

impl BlockSpec {
    /// One child equal to the sum of the parents plus noise.
    pub fn summed(parent_betas: Vec<f64>, child_eta: f64) -> Self {
        let parents = parent_betas.len();
        BlockSpec {
            parents,
            child_eta,
            parent_betas,
            children: vec![vec![1.0; parents]],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.parents < 2 {
            return Err(Error::invalid("a block needs at least two parents"));
        }
        if self.parent_betas.len() != self.parents
            || self.children.iter().any(|c| c.len() != self.parents)
        {
            return Err(Error::invalid(
                "block coefficient vectors must have one entry per parent",
            ));
        }
        if !(self.child_eta >= 0.0) {
            return Err(Error::invalid(
                "child perturbation scale must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndividualSpec {
    pub count: usize,
    /// The first `weak_count` individual features get coefficient `weak_beta`.
    pub weak_count: usize,
    pub weak_beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedSpec {
    pub clusters: ClusterSpec,
    pub blocks: Vec<BlockSpec>,
    pub individuals: IndividualSpec,
}

impl MixedSpec {
    pub fn num_features(&self) -> usize {
        self.clusters
            .clusters
            .iter()
            .map(|c| 1 + c.proxies)
            .sum::<usize>()
            + self
                .blocks
                .iter()
                .map(|b| b.parents + b.children.len())
                .sum::<usize>()
            + self.individuals.count
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    Signal,
    CorrelatedSignal,
    Noise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Group {
    Cluster {
        representative: usize,
        proxies: Vec<usize>,
        signal: bool,
    },
    Block {
        parents: Vec<usize>,
        signal_parents: Vec<usize>,
        children: Vec<usize>,
    },
    Individual {
        index: usize,
        signal: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta_star: Vec<f64>,
    pub support: FeatureSet,
    pub groups: Vec<Group>,
    pub roles: Vec<FeatureRole>,
    pub noise_sigma: f64,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.beta_star.len()
    }

    /// Whether `s` is one of the equally good models: one feature from every
    /// signal cluster and none from other clusters; for a block whose parents
    /// are all signals, as many block features as parents; for a block with
    /// noise parents, exactly its signal parents; every signal individual
    /// feature and no noise one.
    pub fn membership_in_class(&self, s: &FeatureSet) -> bool {
        self.groups.iter().all(|g| match g {
            Group::Cluster {
                representative,
                proxies,
                signal,
            } => {
                let hits = s.contains(*representative) as usize
                    + proxies.iter().filter(|&&j| s.contains(j)).count();
                hits == *signal as usize
            }
            Group::Block {
                parents,
                signal_parents,
                children,
            } => {
                if signal_parents.len() == parents.len() {
                    let hits = parents
                        .iter()
                        .chain(children)
                        .filter(|&&j| s.contains(j))
                        .count();
                    hits == parents.len()
                } else {
                    parents
                        .iter()
                        .all(|&j| s.contains(j) == signal_parents.contains(&j))
                        && children.iter().all(|&j| !s.contains(j))
                }
            }
            Group::Individual { index, signal } => s.contains(*index) == *signal,
        })
    }

    pub fn features_with_role(&self, role: FeatureRole) -> FeatureSet {
        FeatureSet::new(
            self.roles
                .iter()
                .enumerate()
                .filter(|(_, &r)| r == role)
                .map(|(j, _)| j),
        )
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub x: DesignMatrix,
    pub y: DVector<f64>,
    pub truth: GroundTruth,
}

impl SyntheticData {
    /// Rows `rows` as a new, re-centered dataset with the same truth.
    pub fn select_rows(&self, rows: &[usize]) -> Result<SyntheticData> {
        let x = self.x.select_rows(rows)?;
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Ok(SyntheticData {
            x,
            y: center_vector(&y),
            truth: self.truth.clone(),
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Draws `X` and `y = Xβ* + ε` with `ε ~ N(0, noise_sigma² I)`.
pub fn generate(spec: &MixedSpec, n: usize, noise_sigma: f64, seed: u64) -> Result<SyntheticData> {
    if n < 2 {
        return Err(Error::invalid("need at least two rows"));
    }
    if !(spec.clusters.eta1 >= 0.0) {
        return Err(Error::invalid(
            "proxy perturbation scale must be non-negative",
        ));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid("noise level must be non-negative"));
    }
    for b in &spec.blocks {
        b.validate()?;
    }
    let ind = &spec.individuals;
    if ind.weak_count > ind.count {
        return Err(Error::invalid("more weak signals than individual features"));
    }
    let p = spec.num_features();
    if p == 0 {
        return Err(Error::invalid("specification has no features"));
    }
    if n <= p {
        log::warn!("generating {p} features from only {n} rows");
    }

    let mut rng = rng::stream(seed, rng::DATA, 0);
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut beta = Vec::with_capacity(p);
    let mut roles = Vec::with_capacity(p);
    let mut groups = Vec::new();

    let unit = spec.clusters.normalize_reps;
    let perturb_sd = |eta: f64| if unit { eta / (n as f64).sqrt() } else { eta };
    for c in &spec.clusters.clusters {
        let mut rep = gaussian(&mut rng, n, 1.0);
        if unit {
            rep /= rep.norm();
        }
        let signal = c.beta != 0.0;
        let k = columns.len();
        columns.push(rep.clone());
        beta.push(c.beta);
        roles.push(if signal {
            FeatureRole::Signal
        } else {
            FeatureRole::Noise
        });
        for _ in 0..c.proxies {
            columns.push(&rep + gaussian(&mut rng, n, perturb_sd(spec.clusters.eta1)));
            beta.push(0.0);
            roles.push(if signal {
                FeatureRole::CorrelatedSignal
            } else {
                FeatureRole::Noise
            });
        }
        groups.push(Group::Cluster {
            representative: k,
            proxies: (k + 1..=k + c.proxies).collect(),
            signal,
        });
    }

    for b in &spec.blocks {
        let start = columns.len();
        let parents: Vec<DVector<f64>> = (0..b.parents)
            .map(|_| {
                let v = gaussian(&mut rng, n, 1.0);
                if unit {
                    &v / v.norm()
                } else {
                    v
                }
            })
            .collect();
        let any_signal = b.parent_betas.iter().any(|&v| v != 0.0);
        for (v, &bj) in parents.iter().zip(&b.parent_betas) {
            columns.push(v.clone());
            beta.push(bj);
            roles.push(if bj != 0.0 {
                FeatureRole::Signal
            } else {
                FeatureRole::Noise
            });
        }
        for coefs in &b.children {
            let mut child = gaussian(&mut rng, n, perturb_sd(b.child_eta));
            for (v, &c) in parents.iter().zip(coefs) {
                child.axpy(c, v, 1.0);
            }
            columns.push(child);
            beta.push(0.0);
            roles.push(if any_signal {
                FeatureRole::CorrelatedSignal
            } else {
                FeatureRole::Noise
            });
        }
        let parent_idx: Vec<usize> = (start..start + b.parents).collect();
        groups.push(Group::Block {
            signal_parents: parent_idx
                .iter()
                .copied()
                .filter(|&j| beta[j] != 0.0)
                .collect(),
            parents: parent_idx,
            children: (start + b.parents..columns.len()).collect(),
        });
    }

    for i in 0..ind.count {
        let mut v = gaussian(&mut rng, n, 1.0);
        if unit {
            v /= v.norm();
        }
        let bj = if i < ind.weak_count {
            ind.weak_beta
        } else {
            0.0
        };
        groups.push(Group::Individual {
            index: columns.len(),
            signal: bj != 0.0,
        });
        columns.push(v);
        beta.push(bj);
        roles.push(if bj != 0.0 {
            FeatureRole::Signal
        } else {
            FeatureRole::Noise
        });
    }

    let raw = DMatrix::from_columns(&columns);
    let beta_vec = DVector::from_column_slice(&beta);
    let mut noise_rng = rng::stream(seed, rng::DATA, 1);
    let y = &raw * &beta_vec + gaussian(&mut noise_rng, n, noise_sigma);
    let x = DesignMatrix::new(raw)?;
    let support = FeatureSet::new((0..p).filter(|&j| beta[j] != 0.0));
    Ok(SyntheticData {
        x,
        y: center_vector(&y),
        truth: GroundTruth {
            beta_star: beta,
            support,
            groups,
            roles,
            noise_sigma,
        },
    })
}

/// Clusters only.
pub fn gen_cluster_data(
    spec: &ClusterSpec,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticData> {
    let mixed = MixedSpec {
        clusters: spec.clone(),
        blocks: vec![],
        individuals: IndividualSpec::default(),
    };
    generate(&mixed, n, noise_sigma, seed)
}

/// Blocks followed by individual features.
pub fn gen_block_data(
    blocks: &[BlockSpec],
    individuals: &IndividualSpec,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticData> {
    let mixed = MixedSpec {
        clusters: ClusterSpec {
            clusters: vec![],
            eta1: 0.0,
            normalize_reps: false,
        },
        blocks: blocks.to_vec(),
        individuals: individuals.clone(),
    };
    generate(&mixed, n, noise_sigma, seed)
}

/// The 200-feature comparison design: three signal clusters of size three
/// (perturbation 0.5), blocks with 2, 3 and 4 parents (child perturbation
/// 0.01, 0.1, 0.1, parent coefficients alternating ±1), and 179 individual
/// features of which the first five carry coefficient 0.2.
pub fn benchmark_spec() -> MixedSpec {
    let alternating = |k: usize| {
        (0..k)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect::<Vec<_>>()
    };
    MixedSpec {
        clusters: ClusterSpec {
            clusters: vec![
                ClusterDef {
                    proxies: 2,
                    beta: 1.0
                };
                3
            ],
            eta1: 0.5,
            normalize_reps: false,
        },
        blocks: vec![
            BlockSpec::summed(alternating(2), 0.01),
            BlockSpec::summed(alternating(3), 0.1),
            BlockSpec::summed(alternating(4), 0.1),
        ],
        individuals: IndividualSpec {
            count: 179,
            weak_count: 5,
            weak_beta: 0.2,
        },
    }
}

pub const BENCHMARK_SIGMA: f64 = 1.5;
pub const BENCHMARK_TRAIN: usize = 600;
pub const BENCHMARK_TEST: usize = 500;

/// Eight signal clusters of size three (perturbation 0.2), two blocks of two
/// parents with children `X_a + X_b + δ` and `X_a - X_b + δ` (perturbation
/// 0.2, parent coefficients 1.5 and 1), and 50 noise features.
pub fn figure1_spec() -> MixedSpec {
    let block = BlockSpec {
        parents: 2,
        child_eta: 0.2,
        parent_betas: vec![1.5, 1.0],
        children: vec![vec![1.0, 1.0], vec![1.0, -1.0]],
    };
    MixedSpec {
        clusters: ClusterSpec {
            clusters: vec![
                ClusterDef {
                    proxies: 2,
                    beta: 1.0
                };
                8
            ],
            eta1: 0.2,
            normalize_reps: false,
        },
        blocks: vec![block.clone(), block],
        individuals: IndividualSpec {
            count: 50,
            weak_count: 0,
            weak_beta: 0.0,
        },
    }
}

pub const FIGURE1_N: usize = 100;
pub const FIGURE1_SIGMA: f64 = 0.2;

pub fn gen_figure1_data(seed: u64) -> Result<SyntheticData> {
    generate(&figure1_spec(), FIGURE1_N, FIGURE1_SIGMA, seed)
}
