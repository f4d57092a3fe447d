use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::oracle::{Candidate, Node, StabilityOracle};
use super::{FsssConfig, FsssResult, SearchDiagnostics, SearchMode, StableModel};
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::linalg::AvgProjection;
use crate::rng;

/// Draws a candidate with probability proportional to its alignment and
/// returns its position in `candidates`.
pub fn sample_next<R: Rng + ?Sized>(candidates: &[Candidate], rng: &mut R) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::invalid("cannot sample from an empty candidate set"));
    }
    if candidates.len() == 1 {
        return Ok(0);
    }
    let dist = WeightedIndex::new(candidates.iter().map(|c| c.alignment))
        .map_err(|e| Error::invalid(format!("bad candidate weights: {e}")))?;
    Ok(dist.sample(rng))
}

/// Position of the largest alignment; the lowest feature index wins ties.
fn argmax(candidates: &[Candidate]) -> usize {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let b = &candidates[best];
        if c.alignment > b.alignment || (c.alignment == b.alignment && c.feature < b.feature) {
            best = i;
        }
    }
    best
}

enum WalkEnd {
    /// The empty set ran out of candidates.
    Exhausted,
    Finished,
}

struct Search<'o, 'x> {
    oracle: &'o StabilityOracle<'x>,
    config: &'o FsssConfig,
    max_stable: Vec<StableModel>,
    max_index: HashSet<FeatureSet>,
    visited: HashSet<FeatureSet>,
    cache: HashMap<FeatureSet, f64>,
    diag: SearchDiagnostics,
    rng: ChaCha8Rng,
    trace: Vec<FeatureSet>,
}

impl Search<'_, '_> {
    fn has_superset_in_max(&self, s: &FeatureSet) -> bool {
        self.max_stable.iter().any(|m| s.is_subset_of(&m.features))
    }

    fn explored(&self, s: &FeatureSet) -> bool {
        self.max_index.contains(s) || self.visited.contains(s)
    }

    /// Step (2): extensions not yet explored whose new direction is at least
    /// `α`-aligned with `P_avg`.
    fn candidates(&mut self, node: &Node) -> Vec<Candidate> {
        let alpha = self.config.alpha;
        let x = self.oracle.design();
        let mut out = Vec::new();
        for (j, a) in self.oracle.alignments(node).into_iter().enumerate() {
            let Some(a) = a else { continue };
            if a < alpha {
                self.diag.prescreen_rejections += 1;
                continue;
            }
            if self.explored(&node.set.with(j)) {
                continue;
            }
            if let Some(g) = self.config.corr_guard {
                if node.set.iter().any(|i| x.abs_correlation(i, j).powi(2) > g) {
                    self.diag.guard_rejections += 1;
                    continue;
                }
            }
            out.push(Candidate {
                feature: j,
                alignment: a,
            });
        }
        out
    }

    fn stability(&mut self, node: &Node) -> Result<f64> {
        if let Some(&v) = self.cache.get(&node.set) {
            self.diag.cache_hits += 1;
            return Ok(v);
        }
        self.diag.stability_evaluations += 1;
        if self.diag.stability_evaluations > self.config.max_evaluations {
            return Err(Error::SearchBudgetExceeded {
                budget: self.config.max_evaluations,
            });
        }
        let v = self.oracle.stability(node);
        self.cache.insert(node.set.clone(), v);
        Ok(v)
    }

    /// One pass of steps (1)–(4).
    fn walk(&mut self) -> Result<WalkEnd> {
        let alpha = self.config.alpha;
        let mut node = self.oracle.root();
        'expand: loop {
            let mut cands = self.candidates(&node);
            while !cands.is_empty() {
                let pick = match self.config.mode {
                    SearchMode::Greedy => argmax(&cands),
                    SearchMode::RandomWalk => sample_next(&cands, &mut self.rng)?,
                };
                let ext_set = node.set.with(cands[pick].feature);
                let ext = self.oracle.node(&ext_set)?;
                if self.has_superset_in_max(&ext_set) {
                    self.diag.superset_shortcuts += 1;
                    node = ext;
                    continue 'expand;
                }
                if self.stability(&ext)? >= alpha {
                    node = ext;
                    continue 'expand;
                }
                self.diag.unstable_extensions += 1;
                if self.config.keep_trace {
                    self.trace.push(ext_set.clone());
                }
                self.visited.insert(ext_set);
                cands.swap_remove(pick);
                // Keep ascending feature order for deterministic tie-breaks.
                cands.sort_by_key(|c| c.feature);
            }
            if node.set.is_empty() {
                return Ok(WalkEnd::Exhausted);
            }
            if self.has_superset_in_max(&node.set) {
                self.visited.insert(node.set);
            } else {
                let stability = self.stability(&node)?;
                self.max_index.insert(node.set.clone());
                self.max_stable.push(StableModel {
                    features: node.set,
                    stability,
                });
            }
            return Ok(WalkEnd::Finished);
        }
    }
}

/// Maximal `α`-stable sets of the design `x` under the average projection `p`.
///
/// `x` must be the design the subsample subspaces were built on.
pub fn fsss(x: &DesignMatrix, p: &AvgProjection, config: &FsssConfig) -> Result<FsssResult> {
    config.validate()?;
    let oracle = StabilityOracle::new(x, p, config.rank_tol)?;
    let k = match config.mode {
        SearchMode::Greedy => 1,
        SearchMode::RandomWalk => config.k,
    };
    let mut search = Search {
        oracle: &oracle,
        config,
        max_stable: Vec::new(),
        max_index: HashSet::new(),
        visited: HashSet::new(),
        cache: HashMap::new(),
        diag: SearchDiagnostics::default(),
        rng: rng::stream(config.seed, rng::WALK, 0),
        trace: Vec::new(),
    };
    let budget = config.restart_budget();
    let mut exhausted = false;
    loop {
        match search.walk()? {
            WalkEnd::Exhausted => {
                exhausted = true;
                break;
            }
            WalkEnd::Finished => {
                if search.max_stable.len() >= k {
                    break;
                }
                if search.diag.restarts >= budget {
                    search.diag.restart_budget_hit = true;
                    log::warn!(
                        "restart budget of {budget} reached with {} of {k} models",
                        search.max_stable.len()
                    );
                    break;
                }
                search.diag.restarts += 1;
            }
        }
    }
    search.diag.visited = search.visited.len();
    Ok(FsssResult {
        models: search.max_stable,
        exhausted,
        diagnostics: search.diag,
        unstable_trace: search.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsss::enumerate_all_maximal;
    use crate::metrics::FeatureSpace;
    use crate::parallel::Workers;
    use crate::subsample::{projection_from_records, SelectionRecord};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;

    fn records(sets: Vec<FeatureSet>) -> Vec<SelectionRecord> {
        sets.into_iter()
            .enumerate()
            .map(|(l, selected)| SelectionRecord {
                subsample_index: l,
                rows: vec![],
                selected,
                short: false,
            })
            .collect()
    }

    fn orthonormal_design(seed: u64, n: usize, p: usize) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let centered = crate::design::center_columns(raw);
        DesignMatrix::new(centered.qr().q()).unwrap()
    }

    fn check_result(x: &DesignMatrix, p: &AvgProjection, alpha: f64, result: &FsssResult) {
        let space = FeatureSpace::new(x);
        let sets = result.feature_sets();
        for (i, m) in result.models.iter().enumerate() {
            assert!(m.stability >= alpha);
            assert!(
                space.is_maximal_stable(&m.features, p, alpha).unwrap(),
                "{} not maximal",
                m.features
            );
            for (k, other) in sets.iter().enumerate() {
                if k != i {
                    assert!(!m.features.is_subset_of(other));
                }
            }
        }
        for (i, s) in result.unstable_trace.iter().enumerate() {
            if i % 10 == 0 {
                assert!(
                    space.stability(s, p).unwrap() < alpha,
                    "{s} was pruned but is stable"
                );
            }
        }
    }

    #[test]
    fn sampling_follows_normalized_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cands = [
            Candidate {
                feature: 2,
                alignment: 0.9,
            },
            Candidate {
                feature: 5,
                alignment: 0.6,
            },
        ];
        let draws = 100_000;
        let first = (0..draws)
            .filter(|_| sample_next(&cands, &mut rng).unwrap() == 0)
            .count();
        assert!((first as f64 / draws as f64 - 0.6).abs() < 0.01);

        let even = [
            Candidate {
                feature: 0,
                alignment: 0.8,
            },
            Candidate {
                feature: 1,
                alignment: 0.8,
            },
        ];
        let first = (0..draws)
            .filter(|_| sample_next(&even, &mut rng).unwrap() == 0)
            .count();
        assert!((first as f64 / draws as f64 - 0.5).abs() < 0.01);

        let single = [Candidate {
            feature: 7,
            alignment: 0.75,
        }];
        assert_eq!(sample_next(&single, &mut rng).unwrap(), 0);
        assert!(sample_next(&[], &mut rng).is_err());
    }

    #[test]
    fn orthonormal_design_reduces_to_threshold_set() {
        let x = orthonormal_design(4, 20, 6);
        // Proportions 1, 0.9, 0.8, 0.5, 0.2, 0.
        let sets = (0..10)
            .map(|l| {
                FeatureSet::new(
                    [(0, 10), (1, 9), (2, 8), (3, 5), (4, 2), (5, 0)]
                        .into_iter()
                        .filter(|&(_, c)| l < c)
                        .map(|(j, _)| j),
                )
            })
            .collect();
        let recs = records(sets);
        let recs_even: Vec<_> = recs.iter().cloned().chain(recs.iter().cloned()).collect();
        let p = projection_from_records(&x, &recs_even, 1e-10, Workers::SEQUENTIAL).unwrap();
        let expected = FeatureSet::from([0, 1, 2]);
        let greedy = fsss(&x, &p, &FsssConfig::greedy(0.75)).unwrap();
        assert_eq!(greedy.feature_sets(), vec![expected.clone()]);
        let walk = fsss(&x, &p, &FsssConfig::new(0.75, 5, 1)).unwrap();
        assert_eq!(walk.feature_sets(), vec![expected.clone()]);
        assert!(walk.exhausted);
        assert_eq!(enumerate_all_maximal(&x, &p, 0.75).unwrap(), vec![expected]);
    }

    #[test]
    fn nothing_passes_prescreen() {
        let x = orthonormal_design(5, 12, 4);
        let sets = (0..8).map(|l| FeatureSet::singleton(l % 4)).collect();
        let p = projection_from_records(&x, &records(sets), 1e-10, Workers::SEQUENTIAL).unwrap();
        let result = fsss(&x, &p, &FsssConfig::new(0.6, 3, 0)).unwrap();
        assert!(result.models.is_empty());
        assert!(result.exhausted);
        assert_eq!(result.diagnostics.stability_evaluations, 0);
        assert!(enumerate_all_maximal(&x, &p, 0.6).unwrap().is_empty());
    }

    fn interchangeable_pair() -> (DesignMatrix, AvgProjection) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let mut m = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let base = m.column(0).into_owned();
        let noise = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.sample(StandardNormal));
        m.set_column(
            1,
            &(&base * 0.99 + noise.column(0) * (1.0f64 - 0.99 * 0.99).sqrt()),
        );
        let x = DesignMatrix::new(m).unwrap();
        assert!(x.abs_correlation(0, 1) > 0.98);
        let sets = (0..20)
            .map(|l| {
                if l % 2 == 0 {
                    FeatureSet::from([0, 2])
                } else {
                    FeatureSet::from([1, 2])
                }
            })
            .collect();
        let p = projection_from_records(&x, &records(sets), 1e-10, Workers::SEQUENTIAL).unwrap();
        (x, p)
    }

    #[test]
    fn interchangeable_pair_gives_one_model_per_feature() {
        let (x, p) = interchangeable_pair();
        let expected = vec![FeatureSet::from([0, 2]), FeatureSet::from([1, 2])];
        assert_eq!(enumerate_all_maximal(&x, &p, 0.7).unwrap(), expected);
        let mut config = FsssConfig::new(0.7, 10, 2);
        config.keep_trace = true;
        let result = fsss(&x, &p, &config).unwrap();
        let mut found = result.feature_sets();
        found.sort();
        assert_eq!(found, expected);
        assert!(result.exhausted);
        check_result(&x, &p, 0.7, &result);

        // Asking for one model stops after the first.
        let one = fsss(&x, &p, &FsssConfig::new(0.7, 1, 2)).unwrap();
        assert_eq!(one.models.len(), 1);
        assert!(!one.exhausted);
    }

    #[test]
    fn corr_guard_blocks_correlated_extension() {
        let (x, p) = interchangeable_pair();
        // With a permissive threshold the pair itself would be considered;
        // the guard removes any extension pairing 0 with 1.
        let mut config = FsssConfig::new(0.7, 10, 2);
        config.corr_guard = Some(0.5);
        let result = fsss(&x, &p, &config).unwrap();
        for s in result.feature_sets() {
            assert!(!(s.contains(0) && s.contains(1)));
        }
    }

    #[test]
    fn greedy_is_deterministic_and_takes_largest_alignment() {
        let (x, p) = interchangeable_pair();
        let a = fsss(&x, &p, &FsssConfig::greedy(0.7)).unwrap();
        let mut other_seed = FsssConfig::greedy(0.7);
        other_seed.seed = 99;
        let b = fsss(&x, &p, &other_seed).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.models.len(), 1);
        // Feature 2 is in every subspace, so it has the top alignment.
        assert!(a.models[0].features.contains(2));
    }

    #[test]
    fn rejects_bad_threshold() {
        let (x, p) = interchangeable_pair();
        assert!(fsss(&x, &p, &FsssConfig::new(0.5, 1, 0)).is_err());
        assert!(fsss(&x, &p, &FsssConfig::new(1.0, 1, 0)).is_err());
        assert!(fsss(&x, &p, &FsssConfig::new(0.7, 0, 0)).is_err());
    }

    #[test]
    fn evaluation_budget_is_a_hard_failure() {
        let (x, p) = interchangeable_pair();
        let mut config = FsssConfig::new(0.7, 10, 2);
        config.max_evaluations = 1;
        assert!(matches!(
            fsss(&x, &p, &config),
            Err(Error::SearchBudgetExceeded { budget: 1 })
        ));
    }

    /// Random instance with correlated columns and per-feature selection rates.
    pub(crate) fn structured_instance(seed: u64, p: usize) -> (DesignMatrix, AvgProjection) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let latent = DMatrix::from_fn(n, p.div_ceil(2), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let m = DMatrix::from_fn(n, p, |i, j| {
            latent[(i, j / 2)] + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        let x = DesignMatrix::new(m).unwrap();
        let rates: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        let sets = (0..16)
            .map(|_| FeatureSet::new((0..p).filter(|&j| rng.random::<f64>() < rates[j])))
            .collect();
        let proj = projection_from_records(&x, &records(sets), 1e-10, Workers::SEQUENTIAL).unwrap();
        (x, proj)
    }

    #[test]
    fn random_walk_matches_exhaustive_enumeration() {
        for seed in 0..15 {
            let p = 4 + (seed as usize % 7);
            let (x, proj) = structured_instance(seed, p);
            let alpha = 0.6 + 0.02 * (seed % 10) as f64;
            let expected = enumerate_all_maximal(&x, &proj, alpha).unwrap();
            let mut config = FsssConfig::new(alpha, 50, seed);
            config.keep_trace = true;
            let result = fsss(&x, &proj, &config).unwrap();
            check_result(&x, &proj, alpha, &result);
            let mut found = result.feature_sets();
            found.sort();
            assert_eq!(found, expected, "seed {seed}");
            assert!(result.exhausted || found.len() == 50);
        }
    }
}
