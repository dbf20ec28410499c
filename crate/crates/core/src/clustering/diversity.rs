//! Repulsive clustering: groups that are internally diverse and look alike.
//!
//! The quality of a partition has two parts, both in nats: `intra`, the mean
//! over groups of the mean pairwise divergence inside the group (to be
//! maximized), and `inter`, the mean divergence between the label
//! distributions of two groups (to be minimized). They are scalarized as
//! `intra - lambda * inter`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ClusterAssignment;
use crate::distributions::{pairwise_distances, DistanceMatrix, Floored, LabelDistribution};
use crate::energy::CostCounter;
use crate::rng;
use crate::{Error, Result};

/// Largest number of partitions the exhaustive search will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Relative margin a swap must gain to count as an improvement.
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityObjective {
    pub intra: f64,
    pub inter: f64,
    pub lambda: f64,
    pub scalar: f64,
}

impl DiversityObjective {
    fn new(intra: f64, inter: f64, lambda: f64) -> Self {
        Self {
            intra,
            inter,
            lambda,
            scalar: intra - lambda * inter,
        }
    }
}

fn check_inputs(dists: &[LabelDistribution], clients: usize) -> Result<usize> {
    if dists.len() != clients {
        return Err(Error::LengthMismatch {
            left: dists.len(),
            right: clients,
        });
    }
    let m = dists
        .first()
        .ok_or(Error::Empty("no distributions"))?
        .classes();
    if let Some(d) = dists.iter().find(|d| d.classes() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: d.classes(),
        });
    }
    Ok(m)
}

fn group_mean(members: &[usize], dists: &[LabelDistribution], classes: usize) -> Vec<f64> {
    let mut acc = vec![0.0; classes];
    for &i in members {
        for (a, p) in acc.iter_mut().zip(dists[i].as_slice()) {
            *a += p;
        }
    }
    let n = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn floored_mean(members: &[usize], dists: &[LabelDistribution], classes: usize) -> Floored {
    let mean = group_mean(members, dists, classes);
    // sums of simplex points divided by their count stay on the simplex
    Floored::new(
        &LabelDistribution::new(mean).unwrap_or_else(|_| LabelDistribution::uniform(classes)),
    )
}

/// Sum over unordered pairs inside `members`.
fn pair_sum(members: &[usize], d: &DistanceMatrix) -> f64 {
    let mut s = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            s += d.get(i, j);
        }
    }
    s
}

fn mean_intra(pair_sum: f64, size: usize) -> f64 {
    if size < 2 {
        0.0
    } else {
        pair_sum / (size * (size - 1) / 2) as f64
    }
}

/// Evaluates the diversity objective of `assignment`.
pub fn diversity_objective(
    assignment: &ClusterAssignment,
    d: &DistanceMatrix,
    dists: &[LabelDistribution],
    lambda: f64,
) -> Result<DiversityObjective> {
    let m = check_inputs(dists, assignment.len())?;
    if d.len() != assignment.len() {
        return Err(Error::LengthMismatch {
            left: d.len(),
            right: assignment.len(),
        });
    }
    let groups = assignment.groups();
    let g = groups.len();
    let intra = groups
        .iter()
        .map(|c| mean_intra(pair_sum(c, d), c.len()))
        .sum::<f64>()
        / g as f64;
    let means: Vec<Floored> = groups.iter().map(|c| floored_mean(c, dists, m)).collect();
    let mut inter = 0.0;
    for a in 0..g {
        for b in (a + 1)..g {
            inter += means[a].jeffreys(&means[b]);
        }
    }
    if g > 1 {
        inter /= (g * (g - 1) / 2) as f64;
    }
    Ok(DiversityObjective::new(intra, inter, lambda))
}

/// Parameters of the repulsive clustering heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepClustConfig {
    /// Number of groups `G`.
    pub groups: usize,
    /// Search width `S`: how many of the least diverse groups exchange
    /// members in each pass. Zero means `G`.
    pub search_width: usize,
    pub max_iters: usize,
    pub lambda: f64,
    /// When a pass of closest-pair exchanges finds nothing, try every
    /// exchange between members of different groups before stopping.
    pub refine: bool,
}

impl Default for RepClustConfig {
    fn default() -> Self {
        Self {
            groups: 10,
            search_width: 0,
            max_iters: 100,
            lambda: 1.0,
            refine: true,
        }
    }
}

impl RepClustConfig {
    fn width(&self) -> usize {
        if self.search_width == 0 {
            self.groups
        } else {
            self.search_width
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepClustOutcome {
    pub assignment: ClusterAssignment,
    pub initial: DiversityObjective,
    pub objective: DiversityObjective,
    /// Scalar objective after the initialization and after every committed
    /// swap.
    pub trace: Vec<f64>,
    pub passes: usize,
    pub swaps: usize,
}

/// Incrementally maintained objective of a partition.
struct GroupState<'a> {
    d: &'a DistanceMatrix,
    dists: &'a [LabelDistribution],
    classes: usize,
    lambda: f64,
    members: Vec<Vec<usize>>,
    pair_sums: Vec<f64>,
    means: Vec<Floored>,
    /// Divergence between group means, full `G x G`.
    between: Vec<f64>,
}

impl<'a> GroupState<'a> {
    fn new(
        members: Vec<Vec<usize>>,
        d: &'a DistanceMatrix,
        dists: &'a [LabelDistribution],
        classes: usize,
        lambda: f64,
        cost: &mut CostCounter,
    ) -> Self {
        let g = members.len();
        let pair_sums = members.iter().map(|c| pair_sum(c, d)).collect();
        let means: Vec<Floored> = members
            .iter()
            .map(|c| floored_mean(c, dists, classes))
            .collect();
        let mut between = vec![0.0; g * g];
        for a in 0..g {
            for b in (a + 1)..g {
                let v = means[a].jeffreys(&means[b]);
                between[a * g + b] = v;
                between[b * g + a] = v;
            }
        }
        cost.charge_divergences((g * g.saturating_sub(1) / 2) as u64, classes);
        Self {
            d,
            dists,
            classes,
            lambda,
            members,
            pair_sums,
            means,
            between,
        }
    }

    fn groups(&self) -> usize {
        self.members.len()
    }

    fn objective_from(&self, pair_sums: &[f64], between: &[f64]) -> DiversityObjective {
        let g = self.groups();
        let intra = pair_sums
            .iter()
            .zip(&self.members)
            .map(|(&s, c)| mean_intra(s, c.len()))
            .sum::<f64>()
            / g as f64;
        let mut inter = 0.0;
        for a in 0..g {
            for b in (a + 1)..g {
                inter += between[a * g + b];
            }
        }
        if g > 1 {
            inter /= (g * (g - 1) / 2) as f64;
        }
        DiversityObjective::new(intra, inter, self.lambda)
    }

    fn objective(&self) -> DiversityObjective {
        self.objective_from(&self.pair_sums, &self.between)
    }

    /// Closest pair inside group `g` as `(distance, smaller id)`.
    fn closest_pair(&self, g: usize, cost: &mut CostCounter) -> (f64, usize) {
        let c = &self.members[g];
        let mut best = (f64::INFINITY, c[0]);
        for (a, &i) in c.iter().enumerate() {
            for &j in &c[a + 1..] {
                let v = self.d.get(i, j);
                if v < best.0 {
                    best = (v, i);
                }
            }
        }
        cost.charge_flops((c.len() * c.len().saturating_sub(1) / 2) as u64);
        best
    }

    /// Objective after exchanging client `a` of group `ga` with client `b` of
    /// group `gb`, plus the state needed to commit it.
    fn trial(
        &self,
        ga: usize,
        a: usize,
        gb: usize,
        b: usize,
        cost: &mut CostCounter,
    ) -> (DiversityObjective, Trial) {
        let swapped = |g: usize, out: usize, inn: usize| -> Vec<usize> {
            let mut c: Vec<usize> = self.members[g]
                .iter()
                .map(|&x| if x == out { inn } else { x })
                .collect();
            c.sort_unstable();
            c
        };
        let new_a = swapped(ga, a, b);
        let new_b = swapped(gb, b, a);
        let mut pair_sums = self.pair_sums.clone();
        pair_sums[ga] = pair_sum(&new_a, self.d);
        pair_sums[gb] = pair_sum(&new_b, self.d);
        let mean_a = floored_mean(&new_a, self.dists, self.classes);
        let mean_b = floored_mean(&new_b, self.dists, self.classes);
        let g = self.groups();
        let mut between = self.between.clone();
        for h in 0..g {
            for (gx, mean) in [(ga, &mean_a), (gb, &mean_b)] {
                if h == gx {
                    continue;
                }
                let other = if h == ga {
                    &mean_a
                } else if h == gb {
                    &mean_b
                } else {
                    &self.means[h]
                };
                let v = mean.jeffreys(other);
                between[gx * g + h] = v;
                between[h * g + gx] = v;
            }
        }
        cost.charge_flops((new_a.len() * new_a.len() + new_b.len() * new_b.len()) as u64 / 2);
        cost.charge_divergences((2 * g).saturating_sub(2) as u64, self.classes);
        let objective = self.objective_from(&pair_sums, &between);
        (
            objective,
            Trial {
                ga,
                gb,
                new_a,
                new_b,
                mean_a,
                mean_b,
                pair_sums,
                between,
            },
        )
    }

    fn commit(&mut self, t: Trial) {
        self.members[t.ga] = t.new_a;
        self.members[t.gb] = t.new_b;
        self.means[t.ga] = t.mean_a;
        self.means[t.gb] = t.mean_b;
        self.pair_sums = t.pair_sums;
        self.between = t.between;
    }
}

struct Trial {
    ga: usize,
    gb: usize,
    new_a: Vec<usize>,
    new_b: Vec<usize>,
    mean_a: Floored,
    mean_b: Floored,
    pair_sums: Vec<f64>,
    between: Vec<f64>,
}

fn improves(new: f64, old: f64) -> bool {
    new > old + IMPROVEMENT_EPS * old.abs().max(1.0)
}

/// One first-improvement sweep over every exchange of two clients in
/// different groups, visiting group pairs and members in index order.
fn refine_sweep(
    state: &mut GroupState,
    current: &mut DiversityObjective,
    trace: &mut Vec<f64>,
    swaps: &mut usize,
    cost: &mut CostCounter,
) -> bool {
    let g = state.groups();
    let mut improved = false;
    for ga in 0..g {
        for gb in (ga + 1)..g {
            let mut x = 0;
            while x < state.members[ga].len() {
                let mut y = 0;
                while y < state.members[gb].len() {
                    let (a, b) = (state.members[ga][x], state.members[gb][y]);
                    let (objective, trial) = state.trial(ga, a, gb, b, cost);
                    if improves(objective.scalar, current.scalar) {
                        state.commit(trial);
                        *current = objective;
                        trace.push(current.scalar);
                        *swaps += 1;
                        improved = true;
                    }
                    y += 1;
                }
                x += 1;
            }
        }
    }
    improved
}

/// Swap heuristic for repulsive clustering.
///
/// Starts from a random partition with sizes differing by at most one. Each
/// pass finds, in every group, the closest pair of members; sorts the groups by
/// that distance (least diverse first); and for every pair `k < l` among the
/// first `S` groups tries exchanging the first member of the closest pair of
/// group `k` with that of group `l`, keeping the exchange only if the scalar
/// objective strictly increases. With `refine` set, a pass that keeps no
/// exchange falls back to one sweep over all cross-group exchanges. Passes
/// repeat while some exchange was kept, up to `max_iters` passes.
pub fn repclust(
    dists: &[LabelDistribution],
    cfg: &RepClustConfig,
    seed: u64,
    cost: &mut CostCounter,
) -> Result<RepClustOutcome> {
    let n = dists.len();
    let classes = check_inputs(dists, n)?;
    let g = cfg.groups;
    if g < 2 || 2 * g > n {
        return Err(Error::TooManyGroups {
            groups: g,
            clients: n,
        });
    }
    let width = cfg.width();
    if width > g {
        return Err(Error::InvalidConfig(alloc::format!(
            "search width {width} exceeds the number of groups {g}"
        )));
    }
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidConfig("lambda must be non-negative".into()));
    }
    let d = pairwise_distances(dists, cost)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "repclust", 0));
    let mut members = vec![Vec::new(); g];
    for (pos, &i) in order.iter().enumerate() {
        members[pos % g].push(i);
    }
    members.iter_mut().for_each(|c| c.sort_unstable());

    let mut state = GroupState::new(members, &d, dists, classes, cfg.lambda, cost);
    let initial = state.objective();
    let mut current = initial;
    let mut trace = vec![initial.scalar];
    let mut passes = 0;
    let mut swaps = 0;

    while passes < cfg.max_iters {
        passes += 1;
        let mut pick: Vec<(f64, usize)> = (0..g).map(|k| state.closest_pair(k, cost)).collect();
        let mut ranked: Vec<usize> = (0..g).collect();
        ranked.sort_by(|&x, &y| pick[x].0.total_cmp(&pick[y].0).then(x.cmp(&y)));
        cost.charge_flops(libm::ceil(g as f64 * libm::log2(g as f64)) as u64);

        let mut improved = false;
        for k in 0..width {
            for l in (k + 1)..width {
                let (gk, gl) = (ranked[k], ranked[l]);
                let (objective, trial) = state.trial(gk, pick[gk].1, gl, pick[gl].1, cost);
                if improves(objective.scalar, current.scalar) {
                    state.commit(trial);
                    current = objective;
                    trace.push(current.scalar);
                    swaps += 1;
                    improved = true;
                    pick[gk] = state.closest_pair(gk, cost);
                    pick[gl] = state.closest_pair(gl, cost);
                }
            }
        }
        if !improved && cfg.refine {
            improved = refine_sweep(&mut state, &mut current, &mut trace, &mut swaps, cost);
        }
        if !improved {
            break;
        }
    }

    // recompute from scratch so the reported value carries no drift
    let assignment = ClusterAssignment::from_groups(&state.members, n);
    let objective = diversity_objective(&assignment, &d, dists, cfg.lambda)?;
    Ok(RepClustOutcome {
        assignment,
        initial,
        objective,
        trace,
        passes,
        swaps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOutcome {
    pub assignment: ClusterAssignment,
    pub objective: DiversityObjective,
    /// Number of partitions evaluated.
    pub candidates: u64,
}

/// Number of unlabelled partitions of `n` items into `g` groups whose sizes
/// differ by at most one.
fn balanced_partition_count(n: usize, g: usize) -> u128 {
    let q = n / g;
    let r = n % g;
    let ln_fact = |k: usize| libm::lgamma(k as f64 + 1.0);
    let ln = ln_fact(n)
        - r as f64 * ln_fact(q + 1)
        - (g - r) as f64 * ln_fact(q)
        - ln_fact(r)
        - ln_fact(g - r);
    let v = libm::exp(ln);
    if v > 1e30 {
        u128::MAX
    } else {
        libm::round(v) as u128
    }
}

struct Enumerator<'a> {
    n: usize,
    g: usize,
    small: usize,
    big_allowed: usize,
    labels: Vec<usize>,
    sizes: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    candidates: u64,
    eval: &'a mut dyn FnMut(&[usize]) -> f64,
}

impl Enumerator<'_> {
    fn visit(&mut self, i: usize, opened: usize, big: usize) {
        if i == self.n {
            if opened == self.g {
                self.candidates += 1;
                let v = (self.eval)(&self.labels);
                if self.best.as_ref().is_none_or(|(b, _)| v > *b) {
                    self.best = Some((v, self.labels.clone()));
                }
            }
            return;
        }
        let remaining = self.n - i;
        let (small, g) = (self.small, self.g);
        let deficit = move |sizes: &[usize], opened: usize| -> usize {
            sizes[..opened]
                .iter()
                .map(|&s| small.saturating_sub(s))
                .sum::<usize>()
                + (g - opened) * small
        };
        let cap = self.small + usize::from(self.big_allowed > 0);
        let choices = if opened < self.g { opened + 1 } else { opened };
        for c in 0..choices {
            let new_opened = opened.max(c + 1);
            let size = self.sizes[c] + 1;
            if size > cap {
                continue;
            }
            let new_big = big + usize::from(size == self.small + 1);
            if new_big > self.big_allowed {
                continue;
            }
            self.sizes[c] += 1;
            self.labels[i] = c;
            if deficit(&self.sizes, new_opened) < remaining {
                self.visit(i + 1, new_opened, new_big);
            }
            self.sizes[c] -= 1;
        }
    }
}

/// Exhaustive maximizer of the scalar objective over balanced partitions.
/// Ties keep the lexicographically smallest canonical label vector.
pub fn brute_force_diverse_grouping(
    dists: &[LabelDistribution],
    groups: usize,
    lambda: f64,
) -> Result<BruteForceOutcome> {
    let n = dists.len();
    check_inputs(dists, n)?;
    if groups == 0 || groups > n {
        return Err(Error::TooManyGroups { groups, clients: n });
    }
    let count = balanced_partition_count(n, groups);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            candidates: count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let d = pairwise_distances(dists, &mut CostCounter::default())?;
    let mut eval = |labels: &[usize]| -> f64 {
        let a = ClusterAssignment::new(labels.to_vec(), groups)
            .expect("enumerated partitions are valid");
        diversity_objective(&a, &d, dists, lambda)
            .map(|o| o.scalar)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut e = Enumerator {
        n,
        g: groups,
        small: n / groups,
        big_allowed: n % groups,
        labels: vec![0; n],
        sizes: vec![0; groups],
        best: None,
        candidates: 0,
        eval: &mut eval,
    };
    e.visit(0, 0, 0);
    let candidates = e.candidates;
    let (_, labels) = e.best.ok_or(Error::Empty("no balanced partition"))?;
    let assignment = ClusterAssignment::new(labels, groups)?;
    let objective = diversity_objective(&assignment, &d, dists, lambda)?;
    Ok(BruteForceOutcome {
        assignment,
        objective,
        candidates,
    })
}
