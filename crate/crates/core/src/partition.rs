//! Random partition of `0..n` into `m` disjoint groups of near-equal size.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    groups: Vec<Vec<usize>>,
    n: usize,
}

impl PartitionPlan {
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn total(&self) -> usize {
        self.n
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Collects the rows of `data` belonging to each group.
    pub fn split<T: Clone>(&self, data: &[T]) -> Result<Vec<Vec<T>>> {
        if data.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: data.len(),
            });
        }
        Ok(self
            .groups
            .iter()
            .map(|g| g.iter().map(|&i| data[i].clone()).collect())
            .collect())
    }

    /// Re-checks disjointness, coverage of `0..n` and the `floor(n/m)` size bound.
    pub fn validate(&self) -> Result<()> {
        let m = self.groups.len();
        let floor = self.n / m.max(1);
        let mut seen = vec![false; self.n];
        for g in &self.groups {
            if g.len() < floor {
                return Err(Error::InvalidState(format!(
                    "group of size {} below floor {floor}",
                    g.len()
                )));
            }
            for &i in g {
                if i >= self.n || seen[i] {
                    return Err(Error::InvalidState(format!("index {i} repeated or out of range")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidState("partition does not cover every index".into()));
        }
        Ok(())
    }
}

/// Shuffles `0..n` with `seed` and slices it into `m` contiguous runs; the
/// first `n mod m` runs get one extra element.
pub fn make_partition(n: usize, m: usize, seed: u64) -> Result<PartitionPlan> {
    if m < 1 || 2 * m > n {
        return Err(Error::InvalidGroupCount { n, m });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / m;
    let extra = n % m;
    let mut groups = Vec::with_capacity(m);
    let mut start = 0;
    for j in 0..m {
        let size = base + usize::from(j < extra);
        groups.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(PartitionPlan { groups, n })
}
