//! Per-round client selection.
//!
//! Every strategy returns exactly `K` distinct client ids, sorted ascending,
//! and draws its randomness from the `("select", round)` stream of the run
//! seed.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::rng::{self, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    #[serde(alias = "power-d", alias = "power_d")]
    PowerD,
    SimClust,
    RepClust,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::PowerD,
        Strategy::SimClust,
        Strategy::RepClust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::PowerD => "powerd",
            Strategy::SimClust => "simclust",
            Strategy::RepClust => "repclust",
        }
    }

    pub fn needs_clustering(self) -> bool {
        matches!(self, Strategy::SimClust | Strategy::RepClust)
    }
}

impl core::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Strategy::Random),
            "powerd" | "power-d" | "power_d" => Ok(Strategy::PowerD),
            "simclust" => Ok(Strategy::SimClust),
            "repclust" => Ok(Strategy::RepClust),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown strategy {other:?}"
            ))),
        }
    }
}

impl core::fmt::Display for Strategy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a strategy may look at in one round.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub seed: u64,
    pub round: u32,
    /// Clients per round `K`.
    pub k: usize,
    /// Local training-set sizes `|D_j|`.
    pub sizes: &'a [usize],
    pub assignment: Option<&'a ClusterAssignment>,
    /// PowerD candidate count `d`.
    pub candidates: usize,
}

impl<'a> SelectionContext<'a> {
    pub fn new(seed: u64, round: u32, k: usize, sizes: &'a [usize]) -> Self {
        Self {
            seed,
            round,
            k,
            sizes,
            assignment: None,
            candidates: k,
        }
    }

    pub fn with_assignment(mut self, assignment: &'a ClusterAssignment) -> Self {
        self.assignment = Some(assignment);
        self
    }

    pub fn with_candidates(mut self, d: usize) -> Self {
        self.candidates = d;
        self
    }

    pub fn clients(&self) -> usize {
        self.sizes.len()
    }

    fn rng(&self) -> StreamRng {
        rng::stream(self.seed, "select", u64::from(self.round))
    }

    fn check_k(&self) -> Result<()> {
        if self.k == 0 || self.k > self.clients() {
            return Err(Error::TooManySelected {
                k: self.k,
                clients: self.clients(),
            });
        }
        Ok(())
    }

    fn groups(&self) -> Result<Vec<Vec<usize>>> {
        let a = self.assignment.ok_or(Error::MissingAssignment)?;
        if a.len() != self.clients() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: self.clients(),
            });
        }
        Ok(a.groups())
    }
}

/// Draws `count` distinct clients one at a time, each with probability
/// proportional to its data size among the clients not drawn yet.
fn weighted_without_replacement<R: Rng>(sizes: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..sizes.len()).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = pool.iter().map(|&j| sizes[j] as f64).sum();
        let pos = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            pool.iter()
                .position(|&j| {
                    acc += sizes[j] as f64;
                    sizes[j] > 0 && acc > r
                })
                .unwrap_or_else(|| {
                    pool.iter()
                        .rposition(|&j| sizes[j] > 0)
                        .expect("positive size")
                })
        } else {
            rng.random_range(0..pool.len())
        };
        out.push(pool.remove(pos));
    }
    out
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// `K` clients drawn without replacement with probability `|D_j| / |D|`.
pub fn select_random(ctx: &SelectionContext) -> Result<Vec<usize>> {
    ctx.check_k()?;
    Ok(sorted(weighted_without_replacement(
        ctx.sizes,
        ctx.k,
        &mut ctx.rng(),
    )))
}

/// The `d` PowerD candidates, drawn like [`select_random`].
pub fn powerd_candidates(ctx: &SelectionContext) -> Result<Vec<usize>> {
    ctx.check_k()?;
    if ctx.candidates < ctx.k || ctx.candidates > ctx.clients() {
        return Err(Error::InsufficientCandidates {
            candidates: ctx.candidates,
            k: ctx.k,
        });
    }
    Ok(sorted(weighted_without_replacement(
        ctx.sizes,
        ctx.candidates,
        &mut ctx.rng(),
    )))
}

/// The `K` candidates with the largest losses; equal losses favour the lower
/// client id.
pub fn select_powerd(
    ctx: &SelectionContext,
    candidates: &[usize],
    losses: &[f64],
) -> Result<Vec<usize>> {
    ctx.check_k()?;
    if candidates.len() < ctx.k {
        return Err(Error::InsufficientCandidates {
            candidates: candidates.len(),
            k: ctx.k,
        });
    }
    if candidates.len() != losses.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: losses.len(),
        });
    }
    let mut ranked: Vec<usize> = (0..candidates.len()).collect();
    ranked.sort_by(|&a, &b| {
        losses[b]
            .total_cmp(&losses[a])
            .then(candidates[a].cmp(&candidates[b]))
    });
    Ok(sorted(
        ranked[..ctx.k].iter().map(|&i| candidates[i]).collect(),
    ))
}

/// One client from each of `K` random groups when `G >= K`; otherwise
/// `floor(K / G)` clients per group with the `K mod G` extra slots given to
/// random groups. A group too small for its quota hands the shortfall to the
/// groups with the most unused members.
pub fn select_simclust(ctx: &SelectionContext) -> Result<Vec<usize>> {
    ctx.check_k()?;
    let groups = ctx.groups()?;
    let g = groups.len();
    let mut rng = ctx.rng();
    if g >= ctx.k {
        let chosen = index::sample(&mut rng, g, ctx.k);
        let picks = chosen
            .iter()
            .map(|c| groups[c][rng.random_range(0..groups[c].len())])
            .collect();
        return Ok(sorted(picks));
    }
    let mut quota = vec![ctx.k / g; g];
    for c in index::sample(&mut rng, g, ctx.k % g).iter() {
        quota[c] += 1;
    }
    let mut shortfall = 0;
    for (q, members) in quota.iter_mut().zip(&groups) {
        if *q > members.len() {
            shortfall += *q - members.len();
            *q = members.len();
        }
    }
    while shortfall > 0 {
        let (c, _) = groups
            .iter()
            .enumerate()
            .map(|(c, m)| (c, m.len() - quota[c]))
            .filter(|(_, spare)| *spare > 0)
            .fold(None, |best: Option<(usize, usize)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .expect("K <= L leaves spare members");
        quota[c] += 1;
        shortfall -= 1;
    }
    let mut picks = Vec::with_capacity(ctx.k);
    for (members, &q) in groups.iter().zip(&quota) {
        picks.extend(
            index::sample(&mut rng, members.len(), q)
                .iter()
                .map(|i| members[i]),
        );
    }
    Ok(sorted(picks))
}

/// A whole random group. Larger groups are subsampled to `K`; smaller ones
/// are topped up with further random whole groups and the surplus is then
/// dropped at random.
pub fn select_repclust(ctx: &SelectionContext) -> Result<Vec<usize>> {
    ctx.check_k()?;
    let groups = ctx.groups()?;
    let mut rng = ctx.rng();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);
    let mut gathered: Vec<usize> = Vec::with_capacity(ctx.k);
    for &c in &order {
        gathered.extend_from_slice(&groups[c]);
        if gathered.len() >= ctx.k {
            break;
        }
    }
    if gathered.len() == ctx.k {
        return Ok(sorted(gathered));
    }
    let keep = index::sample(&mut rng, gathered.len(), ctx.k);
    Ok(sorted(keep.iter().map(|i| gathered[i]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignment(labels: &[usize]) -> ClusterAssignment {
        ClusterAssignment::from_labels(labels).unwrap()
    }

    #[test]
    fn random_full_participation() {
        let sizes = [5; 6];
        let ctx = SelectionContext::new(1, 3, 6, &sizes);
        assert_eq!(select_random(&ctx).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(
            select_random(&SelectionContext::new(1, 3, 2, &sizes))
                .unwrap()
                .len(),
            2
        );
        assert!(select_random(&SelectionContext::new(1, 3, 7, &sizes)).is_err());
    }

    #[test]
    fn selection_is_reproducible() {
        let sizes = [3, 9, 4, 1, 7, 7, 2, 5];
        let a = SelectionContext::new(11, 4, 3, &sizes);
        assert_eq!(select_random(&a).unwrap(), select_random(&a).unwrap());
        let b = SelectionContext::new(11, 5, 3, &sizes);
        let differs = (0..20).any(|r| {
            let c = SelectionContext::new(11, r, 3, &sizes);
            select_random(&c).unwrap() != select_random(&b).unwrap()
        });
        assert!(differs);
    }

    #[test]
    fn powerd_picks_highest_losses() {
        let sizes = [1; 6];
        let ctx = SelectionContext::new(0, 1, 2, &sizes).with_candidates(3);
        assert_eq!(
            select_powerd(&ctx, &[1, 2, 4], &[0.9, 0.5, 0.7]).unwrap(),
            vec![1, 4]
        );
        assert_eq!(
            select_powerd(&ctx, &[5, 2, 4], &[0.3, 0.3, 0.3]).unwrap(),
            vec![2, 4]
        );
        let exact = SelectionContext::new(0, 1, 3, &sizes);
        assert_eq!(
            select_powerd(&exact, &[0, 3, 5], &[0.1, 0.0, 9.0]).unwrap(),
            vec![0, 3, 5]
        );
        assert!(select_powerd(&ctx, &[1], &[0.1]).is_err());
        let cands = powerd_candidates(&ctx).unwrap();
        assert_eq!(cands.len(), 3);
        assert!(
            powerd_candidates(&SelectionContext::new(0, 1, 2, &sizes).with_candidates(1)).is_err()
        );
    }

    #[test]
    fn simclust_quota_rules() {
        let sizes = [1; 20];
        // G = 5 groups of 4, K = 10: two per group
        let labels: Vec<usize> = (0..20).map(|i| i % 5).collect();
        let a = assignment(&labels);
        for round in 0..20 {
            let ctx = SelectionContext::new(3, round, 10, &sizes).with_assignment(&a);
            let picks = select_simclust(&ctx).unwrap();
            let mut per = [0; 5];
            picks.iter().for_each(|&i| per[labels[i]] += 1);
            assert_eq!(per, [2; 5]);
        }
        // G = K: one per group
        let ctx = SelectionContext::new(3, 0, 5, &sizes).with_assignment(&a);
        let mut per = [0; 5];
        select_simclust(&ctx)
            .unwrap()
            .iter()
            .for_each(|&i| per[labels[i]] += 1);
        assert_eq!(per, [1; 5]);
        // G = 2, K = 3: quotas {2, 1} or {1, 2}
        let two: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let a2 = assignment(&two);
        for round in 0..10 {
            let ctx = SelectionContext::new(5, round, 3, &sizes).with_assignment(&a2);
            let picks = select_simclust(&ctx).unwrap();
            let first = picks.iter().filter(|&&i| i < 10).count();
            assert!(first == 1 || first == 2);
            assert_eq!(picks.len(), 3);
        }
    }

    #[test]
    fn simclust_reassigns_shortfall() {
        // groups of sizes 1 and 5, K = 4: quota 2 on the singleton is capped
        let labels = [0, 1, 1, 1, 1, 1];
        let a = assignment(&labels);
        let sizes = [1; 6];
        let ctx = SelectionContext::new(0, 0, 4, &sizes).with_assignment(&a);
        let picks = select_simclust(&ctx).unwrap();
        assert_eq!(picks.len(), 4);
        assert!(picks.contains(&0));
    }

    #[test]
    fn simclust_needs_assignment() {
        let sizes = [1; 4];
        let ctx = SelectionContext::new(0, 0, 2, &sizes);
        assert_eq!(select_simclust(&ctx), Err(Error::MissingAssignment));
    }

    #[test]
    fn repclust_group_reconciliation() {
        let sizes = [1; 100];
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let a = assignment(&labels);
        let ctx = SelectionContext::new(2, 7, 10, &sizes).with_assignment(&a);
        let picks = select_repclust(&ctx).unwrap();
        let g = labels[picks[0]];
        assert!(picks.iter().all(|&i| labels[i] == g));

        // s = 5, K = 10: two whole groups
        let sizes = [1; 20];
        let small: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let a = assignment(&small);
        let picks =
            select_repclust(&SelectionContext::new(2, 1, 10, &sizes).with_assignment(&a)).unwrap();
        let mut per = [0; 4];
        picks.iter().for_each(|&i| per[small[i]] += 1);
        let mut seen: Vec<usize> = per.iter().copied().filter(|&c| c > 0).collect();
        seen.sort();
        assert_eq!(seen, vec![5, 5]);

        // s = 20, K = 10: ten members of one group
        let big = vec![0; 20];
        let a = ClusterAssignment::new(big, 1).unwrap();
        let picks =
            select_repclust(&SelectionContext::new(2, 1, 10, &sizes).with_assignment(&a)).unwrap();
        assert_eq!(picks.len(), 10);
    }
}
