use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Dataset indices grouped by class (or a single group before grouping).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub groups: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All indices, group by group.
    pub fn indices(&self) -> Vec<usize> {
        self.groups.iter().flatten().copied().collect()
    }

    /// Regroups every index by `key` into `k` groups, keeping relative order.
    /// Indices whose key is `None` are dropped.
    pub fn group_by(&self, k: usize, key: impl Fn(usize) -> Option<usize>) -> SampleSet {
        let mut groups = vec![Vec::new(); k];
        for i in self.indices() {
            if let Some(g) = key(i) {
                groups[g].push(i);
            }
        }
        SampleSet {
            groups,
            seed: self.seed,
        }
    }
}

/// Draws exactly `n_per_class` indices from every class, uniformly without
/// replacement.
pub fn sample_per_class(dataset: &Dataset, n_per_class: usize, seed: u64) -> Result<SampleSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = dataset.class_members();
    let mut groups = Vec::with_capacity(members.len());
    for (class, m) in members.iter().enumerate() {
        if m.len() < n_per_class {
            return Err(Error::InsufficientClassMembers {
                class,
                available: m.len(),
                requested: n_per_class,
            });
        }
        let picked = index::sample(&mut rng, m.len(), n_per_class);
        groups.push(picked.into_iter().map(|p| m[p]).collect());
    }
    Ok(SampleSet { groups, seed })
}

/// Draws `n` indices uniformly without replacement from the whole dataset,
/// returned as a single group.
pub fn sample_uniform(dataset: &Dataset, n: usize, seed: u64) -> Result<SampleSet> {
    if n > dataset.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, dataset.len(), n).into_vec();
    Ok(SampleSet {
        groups: vec![picked],
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::Split;
    use ndarray::Array2;
    use std::collections::HashSet;

    fn toy(n_per_class: usize, k: usize) -> Dataset {
        let n = n_per_class * k;
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        Dataset::new(Array2::zeros((n, 3)), labels, k, Split::Train).unwrap()
    }

    #[test]
    fn per_class_counts_and_disjointness() {
        let ds = toy(50, 10);
        let s = sample_per_class(&ds, 20, 7).unwrap();
        assert_eq!(s.groups.len(), 10);
        assert_eq!(s.len(), 200);
        let mut seen = HashSet::new();
        for (c, g) in s.groups.iter().enumerate() {
            assert_eq!(g.len(), 20);
            for &i in g {
                assert_eq!(ds.label(i), c);
                assert!(seen.insert(i), "index {i} drawn twice");
            }
        }
    }

    #[test]
    fn per_class_is_deterministic() {
        let ds = toy(30, 4);
        assert_eq!(sample_per_class(&ds, 10, 3).unwrap(), sample_per_class(&ds, 10, 3).unwrap());
        assert_ne!(sample_per_class(&ds, 10, 3).unwrap(), sample_per_class(&ds, 10, 4).unwrap());
    }

    #[test]
    fn zero_per_class_is_empty() {
        let s = sample_per_class(&toy(5, 3), 0, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn insufficient_members() {
        let err = sample_per_class(&toy(5, 3), 6, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientClassMembers { requested: 6, available: 5, .. }));
    }

    #[test]
    fn uniform_full_draw_is_a_permutation() {
        let ds = toy(10, 5);
        let s = sample_uniform(&ds, 50, 9).unwrap();
        let mut idx = s.indices();
        idx.sort_unstable();
        assert_eq!(idx, (0..50).collect::<Vec<_>>());
        assert!(matches!(sample_uniform(&ds, 51, 9), Err(Error::SampleTooLarge { .. })));
    }

    #[test]
    fn uniform_overlap_with_per_class_is_near_expectation() {
        // 6000 items, 10 classes. X has 100 per class (1000 total), X' has 1000.
        // Expected overlap = 1000 * 1000 / 6000 ≈ 166.7, sd ≈ 11.
        let ds = toy(600, 10);
        let x = sample_per_class(&ds, 100, 11).unwrap();
        let xp = sample_uniform(&ds, 1000, 12).unwrap();
        let a: HashSet<usize> = x.indices().into_iter().collect();
        let overlap = xp.indices().iter().filter(|i| a.contains(i)).count();
        assert!((110..=225).contains(&overlap), "overlap {overlap}");
    }

    #[test]
    fn group_by_drops_none() {
        let s = SampleSet {
            groups: vec![vec![0, 1, 2, 3, 4]],
            seed: 0,
        };
        let g = s.group_by(2, |i| if i == 2 { None } else { Some(i % 2) });
        assert_eq!(g.groups, vec![vec![0, 4], vec![1, 3]]);
    }
}
