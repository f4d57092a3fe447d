//! Stability selection and the SPS flavour of cluster stability selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::subsample::{selection_proportions, SelectionRecord};

fn check_records(records: &[SelectionRecord], p: usize) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no selection records"));
    }
    for r in records {
        r.selected.check_range(p)?;
    }
    Ok(())
}

/// Features selected in at least a fraction `alpha` of the subsamples.
pub fn stability_selection(
    records: &[SelectionRecord],
    alpha: f64,
    p: usize,
) -> Result<FeatureSet> {
    check_records(records, p)?;
    let props = selection_proportions(records, p);
    Ok(FeatureSet::new((0..p).filter(|&j| props[j] >= alpha)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster id per feature, numbered from 0 in order of first appearance.
    pub labels: Vec<usize>,
    pub cutoff_h: f64,
    pub linkage: Linkage,
}

impl ClusterAssignment {
    pub fn singletons(p: usize) -> Self {
        ClusterAssignment {
            labels: (0..p).collect(),
            cutoff_h: 0.0,
            linkage: Linkage::Average,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (j, &c) in self.labels.iter().enumerate() {
            out[c].push(j);
        }
        out
    }
}

/// `1 - |corr|` between every pair of columns.
pub fn correlation_distances(x: &DesignMatrix) -> DMatrix<f64> {
    let gram = x.values().tr_mul(x.values());
    let norms = x.column_norms();
    DMatrix::from_fn(x.p(), x.p(), |i, j| {
        if i == j {
            return 0.0;
        }
        let denom = norms[i] * norms[j];
        let c = if denom == 0.0 {
            0.0
        } else {
            (gram[(i, j)] / denom).abs().min(1.0)
        };
        1.0 - c
    })
}

/// Merge steps `(a, b, height)` of average-linkage clustering, found with the
/// nearest-neighbour chain. Heights are not sorted.
fn average_linkage_merges(mut dist: DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let p = dist.nrows();
    let mut size = vec![1usize; p];
    let mut active = vec![true; p];
    let mut merges = Vec::with_capacity(p.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    for _ in 1..p {
        if chain.is_empty() {
            chain.push(
                active
                    .iter()
                    .position(|&a| a)
                    .expect("an active cluster remains"),
            );
        }
        loop {
            let top = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // Prefer the previous chain element on ties so the chain terminates.
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |q| dist[(top, q)]);
            for k in 0..p {
                if active[k] && k != top && dist[(top, k)] < best_d {
                    best = Some(k);
                    best_d = dist[(top, k)];
                }
            }
            let best = best.expect("at least two active clusters");
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                let (a, b) = (top.min(best), top.max(best));
                merges.push((a, b, best_d));
                let (na, nb) = (size[a] as f64, size[b] as f64);
                for k in 0..p {
                    if active[k] && k != a && k != b {
                        let d = (na * dist[(a, k)] + nb * dist[(b, k)]) / (na + nb);
                        dist[(a, k)] = d;
                        dist[(k, a)] = d;
                    }
                }
                size[a] += size[b];
                active[b] = false;
                break;
            }
            chain.push(best);
        }
    }
    merges
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Average-linkage agglomerative clustering on `1 - |corr|`, cut at height `h`.
pub fn hierarchical_clusters(x: &DesignMatrix, h: f64) -> Result<ClusterAssignment> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!(
            "cutoff height must be finite and non-negative, got {h}"
        )));
    }
    let p = x.p();
    let merges = average_linkage_merges(correlation_distances(x));
    let mut parent: Vec<usize> = (0..p).collect();
    for (a, b, height) in merges {
        if height <= h {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut ids = vec![usize::MAX; p];
    let mut labels = Vec::with_capacity(p);
    let mut next = 0;
    for j in 0..p {
        let r = find(&mut parent, j);
        if ids[r] == usize::MAX {
            ids[r] = next;
            next += 1;
        }
        labels.push(ids[r]);
    }
    Ok(ClusterAssignment {
        labels,
        cutoff_h: h,
        linkage: Linkage::Average,
    })
}

/// Fraction of subsamples selecting at least one member, per cluster.
pub fn cluster_proportions(records: &[SelectionRecord], clusters: &ClusterAssignment) -> Vec<f64> {
    let k = clusters.num_clusters();
    let mut counts = vec![0usize; k];
    let mut hit = vec![false; k];
    for r in records {
        hit.iter_mut().for_each(|h| *h = false);
        for j in r.selected.iter() {
            hit[clusters.labels[j]] = true;
        }
        for (c, &h) in counts.iter_mut().zip(&hit) {
            *c += h as usize;
        }
    }
    let b = records.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / b).collect()
}

/// For each cluster selected in at least a fraction `alpha` of subsamples,
/// output its most frequently selected member (lowest index on ties).
pub fn cluster_stability_selection_sps(
    records: &[SelectionRecord],
    clusters: &ClusterAssignment,
    alpha: f64,
) -> Result<FeatureSet> {
    let p = clusters.labels.len();
    check_records(records, p)?;
    let props = selection_proportions(records, p);
    let cluster_props = cluster_proportions(records, clusters);
    let mut out = Vec::new();
    for (c, members) in clusters.members().into_iter().enumerate() {
        if cluster_props[c] < alpha {
            continue;
        }
        let mut rep = members[0];
        for &j in &members[1..] {
            if props[j] > props[rep] {
                rep = j;
            }
        }
        out.push(rep);
    }
    Ok(FeatureSet::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn recs(sets: &[&[usize]]) -> Vec<SelectionRecord> {
        sets.iter()
            .enumerate()
            .map(|(l, s)| SelectionRecord {
                subsample_index: l,
                rows: vec![],
                selected: FeatureSet::new(s.iter().copied()),
                short: false,
            })
            .collect()
    }

    /// Centered columns with prescribed pairwise inner products.
    fn design_with_gram(g: &DMatrix<f64>, n: usize) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = DMatrix::from_fn(n, g.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = crate::design::center_columns(raw).qr().q();
        let l = g.clone().cholesky().unwrap().l();
        DesignMatrix::new(q * l.transpose()).unwrap()
    }

    #[test]
    fn stability_selection_examples() {
        let r = recs(&[&[0, 1], &[0], &[0, 2], &[0, 1]]);
        assert_eq!(
            stability_selection(&r, 0.8, 3).unwrap(),
            FeatureSet::from([0])
        );
        // vote split between 1 and 2
        let split = recs(&[&[0, 1], &[0, 2], &[0, 1], &[0, 2]]);
        assert_eq!(
            stability_selection(&split, 0.8, 3).unwrap(),
            FeatureSet::from([0])
        );
        let two = recs(&[&[0, 1], &[0]]);
        assert_eq!(selection_proportions(&two, 2), vec![1.0, 0.5]);
        assert!(stability_selection(&[], 0.8, 3).is_err());
        assert!(stability_selection(&r, 0.8, 2).is_err());
    }

    #[test]
    fn duplicated_and_orthogonal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DesignMatrix::new(DMatrix::from_columns(&[v.clone(), w, v])).unwrap();
        let c = hierarchical_clusters(&x, 1e-6).unwrap();
        assert_eq!(c.labels[0], c.labels[2]);
        assert_ne!(c.labels[0], c.labels[1]);
        assert_eq!(c.labels[0], 0);

        let x = design_with_gram(&DMatrix::identity(4, 4), 10);
        let c = hierarchical_clusters(&x, 0.99).unwrap();
        assert_eq!(c.labels, vec![0, 1, 2, 3]);
        assert!(hierarchical_clusters(&x, -0.1).is_err());
    }

    #[test]
    fn chain_merges_under_average_linkage() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.81, 0.9, 1.0, 0.9, 0.81, 0.9, 1.0]);
        let x = design_with_gram(&g, 12);
        // merge heights 0.1 then (0.1 + 0.19) / 2 = 0.145
        assert_eq!(
            hierarchical_clusters(&x, 0.15).unwrap().labels,
            vec![0, 0, 0]
        );
        let split = hierarchical_clusters(&x, 0.14).unwrap();
        assert_eq!(split.num_clusters(), 2);
        assert_eq!(hierarchical_clusters(&x, 0.05).unwrap().num_clusters(), 3);
    }

    /// Cubic-time reference implementation of average linkage.
    fn naive_clusters(x: &DesignMatrix, h: f64) -> Vec<usize> {
        let d = correlation_distances(x);
        let mut clusters: Vec<Vec<usize>> = (0..x.p()).map(|j| vec![j]).collect();
        loop {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut s = 0.0;
                    for &i in &clusters[a] {
                        for &j in &clusters[b] {
                            s += d[(i, j)];
                        }
                    }
                    let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                    if avg < best.0 {
                        best = (avg, a, b);
                    }
                }
            }
            if clusters.len() < 2 || best.0 > h {
                break;
            }
            let merged = clusters.remove(best.2);
            clusters[best.1].extend(merged);
        }
        let mut labels = vec![0; x.p()];
        let mut order: Vec<_> = clusters
            .iter()
            .map(|c| *c.iter().min().unwrap())
            .enumerate()
            .collect();
        order.sort_by_key(|&(_, m)| m);
        for (id, (c, _)) in order.into_iter().enumerate() {
            for &j in &clusters[c] {
                labels[j] = id;
            }
        }
        labels
    }

    #[test]
    fn nn_chain_matches_naive_linkage() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = 3 + seed as usize % 9;
            let latent = DMatrix::from_fn(25, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m = DMatrix::from_fn(25, p, |i, j| {
                latent[(i, j % 3)] + 0.7 * rng.sample::<f64, _>(StandardNormal)
            });
            let x = DesignMatrix::new(m).unwrap();
            let h = rng.random_range(0.05..0.9);
            assert_eq!(
                hierarchical_clusters(&x, h).unwrap().labels,
                naive_clusters(&x, h),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn sps_examples() {
        let clusters = ClusterAssignment {
            labels: vec![0, 1, 1],
            cutoff_h: 0.2,
            linkage: Linkage::Average,
        };
        let split = recs(&[&[0, 1], &[0, 2], &[0, 1], &[0, 2]]);
        assert_eq!(cluster_proportions(&split, &clusters), vec![1.0, 1.0]);
        assert_eq!(
            cluster_stability_selection_sps(&split, &clusters, 0.8).unwrap(),
            FeatureSet::from([0, 1])
        );
        let rare = recs(&[&[1], &[], &[], &[2]]);
        assert!(cluster_stability_selection_sps(&rare, &clusters, 0.8)
            .unwrap()
            .is_empty());
        let favoured = recs(&[&[2], &[2], &[1], &[2]]);
        assert_eq!(
            cluster_stability_selection_sps(&favoured, &clusters, 0.8).unwrap(),
            FeatureSet::from([2])
        );
    }

    fn arb_records(p: usize) -> impl Strategy<Value = Vec<SelectionRecord>> {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), p), 1..12).prop_map(
            |rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(l, mask)| SelectionRecord {
                        subsample_index: l,
                        rows: vec![],
                        selected: FeatureSet::new(
                            mask.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j),
                        ),
                        short: false,
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn singleton_clusters_reduce_to_ss(records in arb_records(6), alpha in 0.5f64..1.0) {
            let single = ClusterAssignment::singletons(6);
            prop_assert_eq!(
                cluster_stability_selection_sps(&records, &single, alpha).unwrap(),
                stability_selection(&records, alpha, 6).unwrap()
            );
        }

        #[test]
        fn cluster_proportion_dominates_members(records in arb_records(6), labels in proptest::collection::vec(0usize..3, 6)) {
            // relabel to contiguous ids
            let mut map = vec![usize::MAX; 3];
            let mut next = 0;
            let labels: Vec<usize> = labels.into_iter().map(|l| {
                if map[l] == usize::MAX { map[l] = next; next += 1; }
                map[l]
            }).collect();
            let clusters = ClusterAssignment { labels: labels.clone(), cutoff_h: 0.5, linkage: Linkage::Average };
            let props = selection_proportions(&records, 6);
            let cprops = cluster_proportions(&records, &clusters);
            for j in 0..6 {
                prop_assert!(cprops[labels[j]] >= props[j]);
            }
        }
    }
}
