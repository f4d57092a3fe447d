use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sorted, duplicate-free set of feature (column) indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSet(Vec<usize>);

impl FeatureSet {
    pub fn empty() -> Self {
        FeatureSet(Vec::new())
    }

    /// Builds a set from arbitrary indices, sorting and removing duplicates.
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        FeatureSet(v)
    }

    pub fn singleton(j: usize) -> Self {
        FeatureSet(vec![j])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn with(&self, j: usize) -> Self {
        match self.0.binary_search(&j) {
            Ok(_) => self.clone(),
            Err(pos) => {
                let mut v = Vec::with_capacity(self.0.len() + 1);
                v.extend_from_slice(&self.0[..pos]);
                v.push(j);
                v.extend_from_slice(&self.0[pos..]);
                FeatureSet(v)
            }
        }
    }

    pub fn without(&self, j: usize) -> Self {
        FeatureSet(self.0.iter().copied().filter(|&k| k != j).collect())
    }

    pub fn union(&self, other: &FeatureSet) -> Self {
        FeatureSet::new(self.iter().chain(other.iter()))
    }

    pub fn intersection_len(&self, other: &FeatureSet) -> usize {
        self.iter().filter(|&j| other.contains(j)).count()
    }

    /// `self ⊆ other`
    pub fn is_subset_of(&self, other: &FeatureSet) -> bool {
        self.len() <= other.len() && self.iter().all(|j| other.contains(j))
    }

    pub fn check_range(&self, p: usize) -> Result<()> {
        match self.0.last() {
            Some(&j) if j >= p => Err(Error::FeatureOutOfRange { index: j, p }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<usize> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        FeatureSet::new(iter)
    }
}

impl From<Vec<usize>> for FeatureSet {
    fn from(v: Vec<usize>) -> Self {
        FeatureSet::new(v)
    }
}

impl<const N: usize> From<[usize; N]> for FeatureSet {
    fn from(v: [usize; N]) -> Self {
        FeatureSet::new(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_input() {
        let s = FeatureSet::new([3, 1, 3, 2]);
        assert_eq!(s.indices(), &[1, 2, 3]);
        assert_eq!(s.to_string(), "{1,2,3}");
    }

    #[test]
    fn range_check() {
        assert!(FeatureSet::new([0, 4]).check_range(5).is_ok());
        assert!(matches!(
            FeatureSet::new([0, 5]).check_range(5),
            Err(Error::FeatureOutOfRange { index: 5, p: 5 })
        ));
        assert!(FeatureSet::empty().check_range(0).is_ok());
    }

    proptest! {
        #[test]
        fn with_keeps_strict_order(v in proptest::collection::vec(0usize..30, 0..12), j in 0usize..30) {
            let s = FeatureSet::new(v).with(j);
            prop_assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.contains(j));
            prop_assert!(s.without(j).is_subset_of(&s));
        }
    }
}
