//! Valley decompositions `{ℰ¹,…,ℰⁿ, Δ}` of a state space.

use crate::chain::Chain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    valleys: Vec<Vec<usize>>,
    delta: Vec<usize>,
    membership: Vec<Option<usize>>,
}

impl Partition {
    /// Valleys as sorted index sets over `n` states; the separating set is the complement.
    pub fn new(n: usize, valleys: Vec<Vec<usize>>) -> Result<Self> {
        let mut membership = vec![None; n];
        let mut sorted = Vec::with_capacity(valleys.len());
        for (k, v) in valleys.into_iter().enumerate() {
            if v.is_empty() {
                return Err(Error::BadPartition(format!("valley {} is empty", k + 1)));
            }
            let mut v = v;
            v.sort_unstable();
            for &i in &v {
                if i >= n {
                    return Err(Error::BadPartition(format!("state index {i} out of range")));
                }
                if let Some(other) = membership[i] {
                    return Err(Error::BadPartition(format!(
                        "state {i} lies in valleys {} and {}",
                        other + 1,
                        k + 1
                    )));
                }
                membership[i] = Some(k);
            }
            sorted.push(v);
        }
        let delta = (0..n).filter(|&i| membership[i].is_none()).collect();
        Ok(Self {
            valleys: sorted,
            delta,
            membership,
        })
    }

    /// Valleys given by labels. When `delta` is given it must equal the complement.
    pub fn from_labels<S: AsRef<str>>(
        chain: &Chain,
        valleys: &[Vec<S>],
        delta: Option<&[S]>,
    ) -> Result<Self> {
        let sets = valleys
            .iter()
            .map(|v| {
                v.iter()
                    .map(|l| {
                        chain.index_of(l.as_ref()).ok_or_else(|| {
                            Error::BadPartition(format!("unknown state '{}'", l.as_ref()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let p = Self::new(chain.len(), sets)?;
        if let Some(d) = delta {
            let mut given = d
                .iter()
                .map(|l| {
                    chain.index_of(l.as_ref()).ok_or_else(|| {
                        Error::BadPartition(format!("unknown state '{}'", l.as_ref()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            given.sort_unstable();
            given.dedup();
            if given != p.delta {
                return Err(Error::BadPartition(
                    "valleys and separating set do not cover the state space exactly".into(),
                ));
            }
        }
        Ok(p)
    }

    pub fn valley_count(&self) -> usize {
        self.valleys.len()
    }

    pub fn state_count(&self) -> usize {
        self.membership.len()
    }

    pub fn valleys(&self) -> &[Vec<usize>] {
        &self.valleys
    }

    pub fn valley(&self, j: usize) -> &[usize] {
        &self.valleys[j]
    }

    pub fn delta(&self) -> &[usize] {
        &self.delta
    }

    /// Valley index of a state, `None` on the separating set.
    pub fn valley_of(&self, state: usize) -> Option<usize> {
        self.membership[state]
    }

    pub fn in_valleys(&self) -> Vec<bool> {
        self.membership.iter().map(Option::is_some).collect()
    }

    /// Union of all valleys.
    pub fn union(&self) -> Vec<usize> {
        (0..self.state_count())
            .filter(|&i| self.membership[i].is_some())
            .collect()
    }

    /// `ℰ̆ʲ`, the union of the valleys other than `j`.
    pub fn others(&self, j: usize) -> Vec<usize> {
        (0..self.state_count())
            .filter(|&i| matches!(self.membership[i], Some(k) if k != j))
            .collect()
    }

    /// Union of the valleys other than `j` and `k`.
    pub fn others2(&self, j: usize, k: usize) -> Vec<usize> {
        (0..self.state_count())
            .filter(|&i| matches!(self.membership[i], Some(v) if v != j && v != k))
            .collect()
    }

    /// Rejects partitions unusable for reduction.
    pub fn require_reducible(&self) -> Result<()> {
        if self.valleys.len() < 2 {
            return Err(Error::BadPartition(format!(
                "at least two valleys are required, got {}",
                self.valleys.len()
            )));
        }
        Ok(())
    }

    /// The same partition expressed on a subset of states, given the subset's index map.
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        let mut pos = vec![None; self.state_count()];
        for (p, &i) in subset.iter().enumerate() {
            pos[i] = Some(p);
        }
        let valleys = self
            .valleys
            .iter()
            .map(|v| v.iter().filter_map(|&i| pos[i]).collect())
            .collect();
        Self::new(subset.len(), valleys)
    }

    /// Valleys as label lists.
    pub fn valley_labels(&self, chain: &Chain) -> Vec<Vec<String>> {
        self.valleys
            .iter()
            .map(|v| v.iter().map(|&i| chain.label(i).to_string()).collect())
            .collect()
    }

    pub fn delta_labels(&self, chain: &Chain) -> Vec<String> {
        self.delta
            .iter()
            .map(|&i| chain.label(i).to_string())
            .collect()
    }
}
