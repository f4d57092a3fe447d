use std::collections::HashSet;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::feature_set::FeatureSet;
use crate::linalg::AvgProjection;
use crate::metrics::FeatureSpace;

/// Largest `p` accepted by [`enumerate_all_maximal`].
pub const MAX_ENUMERATION_P: usize = 20;

/// Every maximal `α`-stable set, by depth-first search over the subset tree
/// (children of `S` add one index above `max S`). Unstable nodes are pruned
/// since stability can only drop when features are added. The empty set is
/// never reported.
pub fn enumerate_all_maximal(
    x: &DesignMatrix,
    p: &AvgProjection,
    alpha: f64,
) -> Result<Vec<FeatureSet>> {
    if x.p() > MAX_ENUMERATION_P {
        return Err(Error::invalid(format!(
            "exhaustive enumeration is limited to p ≤ {MAX_ENUMERATION_P}, got {}",
            x.p()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "threshold must lie in (0, 1), got {alpha}"
        )));
    }
    let space = FeatureSpace::new(x);
    let mut stable: HashSet<FeatureSet> = HashSet::new();
    let mut stack = vec![FeatureSet::empty()];
    while let Some(s) = stack.pop() {
        let start = s.indices().last().map_or(0, |&m| m + 1);
        for j in start..x.p() {
            let child = s.with(j);
            if space.stability(&child, p)? >= alpha {
                stable.insert(child.clone());
                stack.push(child);
            }
        }
    }
    let mut maximal: Vec<FeatureSet> = stable
        .iter()
        .filter(|s| (0..x.p()).all(|j| s.contains(j) || !stable.contains(&s.with(j))))
        .cloned()
        .collect();
    maximal.sort();
    Ok(maximal)
}
