use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A partition of `L` clients into `G` non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    num_groups: usize,
}

impl ClusterAssignment {
    /// Checks that every label is below `num_groups` and every group is used.
    pub fn new(labels: Vec<usize>, num_groups: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("cluster assignment"));
        }
        let mut sizes = vec![0usize; num_groups];
        for &g in &labels {
            if g >= num_groups {
                return Err(Error::InvalidConfig(alloc::format!(
                    "group id {g} out of range 0..{num_groups}"
                )));
            }
            sizes[g] += 1;
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidConfig(alloc::format!("group {g} is empty")));
        }
        Ok(Self { labels, num_groups })
    }

    /// Relabels arbitrary ids to `0..G` in order of first appearance.
    pub fn from_labels(raw: &[usize]) -> Result<Self> {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let labels = raw
            .iter()
            .map(|&r| match map.iter().find(|(k, _)| *k == r) {
                Some(&(_, v)) => v,
                None => {
                    map.push((r, map.len()));
                    map.len() - 1
                }
            })
            .collect();
        Self::new(labels, map.len())
    }

    pub(crate) fn from_groups(groups: &[Vec<usize>], clients: usize) -> Self {
        let mut labels = vec![0; clients];
        for (g, members) in groups.iter().enumerate() {
            for &i in members {
                labels[i] = g;
            }
        }
        Self {
            labels,
            num_groups: groups.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn group_of(&self, client: usize) -> usize {
        self.labels[client]
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    /// Number of clients.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_groups];
        self.labels.iter().for_each(|&g| sizes[g] += 1);
        sizes
    }

    /// Members of every group, each sorted ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_groups];
        for (i, &g) in self.labels.iter().enumerate() {
            groups[g].push(i);
        }
        groups
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == group)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ClusterAssignment::new(vec![0, 1, 1], 2).is_ok());
        assert!(ClusterAssignment::new(vec![0, 0, 0], 2).is_err());
        assert!(ClusterAssignment::new(vec![0, 2], 2).is_err());
        assert!(ClusterAssignment::new(vec![], 1).is_err());
    }

    #[test]
    fn relabel_and_members() {
        let a = ClusterAssignment::from_labels(&[7, 3, 7, 9]).unwrap();
        assert_eq!(a.labels(), &[0, 1, 0, 2]);
        assert_eq!(a.sizes(), vec![2, 1, 1]);
        assert_eq!(a.members(0), vec![0, 2]);
        assert_eq!(a.groups(), vec![vec![0, 2], vec![1], vec![3]]);
    }
}
