use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::ClusterAssignment;
use crate::{Error, Result};

fn pairs(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index of two labellings of the same items.
///
/// Degenerate cases where the expected and maximal index coincide (for
/// instance both labellings put everything in one group) score 1.
pub fn ari_from_labels(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / pairs(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

pub fn adjusted_rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64> {
    ari_from_labels(a.labels(), b.labels())
}

/// The ideal stratified partition closest to `predicted`.
///
/// When every block of `blocks` has exactly one member in every group, the
/// stratified optimum is not unique. This picks, block by block, the optimum
/// that keeps the largest number of clients in their predicted group: the
/// first member of a block seen in a group keeps it, the remaining members
/// fill the groups this block has not reached yet, in ascending order.
pub fn nearest_stratified_reference(
    predicted: &ClusterAssignment,
    blocks: &[usize],
) -> Result<ClusterAssignment> {
    if blocks.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: blocks.len(),
            right: predicted.len(),
        });
    }
    let groups = predicted.num_groups();
    let mut by_block: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &b) in blocks.iter().enumerate() {
        by_block.entry(b).or_default().push(i);
    }
    let mut labels = vec![0; predicted.len()];
    for members in by_block.values() {
        if members.len() != groups {
            return Err(Error::InvalidConfig(alloc::format!(
                "block of {} clients cannot spread over {groups} groups",
                members.len()
            )));
        }
        let mut taken = vec![false; groups];
        let mut pending = Vec::new();
        for &i in members {
            let g = predicted.group_of(i);
            if taken[g] {
                pending.push(i);
            } else {
                taken[g] = true;
                labels[i] = g;
            }
        }
        let mut free = (0..groups).filter(|&g| !taken[g]);
        for i in pending {
            labels[i] = free.next().expect("as many free groups as pending members");
        }
    }
    ClusterAssignment::new(labels, groups)
}
