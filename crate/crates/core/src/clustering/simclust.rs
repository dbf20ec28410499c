use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::ClusterAssignment;
use crate::distributions::{mean_of, Floored, LabelDistribution};
use crate::energy::CostCounter;
use crate::rng;
use crate::{Error, Result};

/// Upper bound on Lloyd iterations.
pub const SIMCLUST_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SimClustOutcome {
    pub assignment: ClusterAssignment,
    /// Total within-cluster divergence after every assignment and every
    /// centroid step, in order. Never increases.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SimClustOutcome {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

struct Centroid {
    floored: Floored,
}

impl Centroid {
    fn new(dist: &LabelDistribution) -> Self {
        Self {
            floored: Floored::new(dist),
        }
    }
}

/// k-means over label distributions with the symmetrized KL divergence.
///
/// Centroids are seeded k-means++ style (draws proportional to the divergence
/// to the nearest chosen centroid) and updated to the arithmetic mean of their
/// members whenever that does not increase the cluster's total divergence.
/// A client only changes cluster for a strictly closer centroid; among equally
/// close new centroids the lowest index wins. Empty clusters take the client
/// farthest from its centroid among clusters with at least two members.
pub fn simclust(
    dists: &[LabelDistribution],
    groups: usize,
    seed: u64,
    cost: &mut CostCounter,
) -> Result<SimClustOutcome> {
    let n = dists.len();
    if groups == 0 || groups > n {
        return Err(Error::TooManyGroups { groups, clients: n });
    }
    let m = dists[0].classes();
    if let Some(d) = dists.iter().find(|d| d.classes() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: d.classes(),
        });
    }
    let points: Vec<Floored> = dists.iter().map(Floored::new).collect();
    let mut rng = rng::stream(seed, "simclust", 0);

    let mut centroids = seed_centroids(dists, &points, groups, &mut rng, cost);

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut to_centroid = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < SIMCLUST_MAX_ITERS {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let ds: Vec<f64> = centroids
                .iter()
                .map(|c| points[i].jeffreys(&c.floored))
                .collect();
            let min = ds.iter().copied().fold(f64::INFINITY, f64::min);
            let best = match labels[i] {
                Some(c) if ds[c] <= min => c,
                _ => ds
                    .iter()
                    .position(|&d| d == min)
                    .expect("at least one centroid"),
            };
            if labels[i] != Some(best) {
                changed = true;
            }
            labels[i] = Some(best);
            to_centroid[i] = ds[best];
        }
        cost.charge_divergences((n * groups) as u64, m);
        trace.push(to_centroid.iter().sum());
        if !changed && iterations > 1 {
            converged = true;
            break;
        }

        let mut assigned: Vec<usize> = labels.iter().map(|l| l.expect("assigned")).collect();
        repair_empty(
            &mut assigned,
            &mut to_centroid,
            &mut centroids,
            dists,
            groups,
        );
        for i in 0..n {
            labels[i] = Some(assigned[i]);
        }

        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assigned[i] == c).collect();
            let mean = mean_of(members.iter().map(|&i| &dists[i]))?;
            let candidate = Centroid::new(&mean);
            let new_d: Vec<f64> = members
                .iter()
                .map(|&i| points[i].jeffreys(&candidate.floored))
                .collect();
            cost.charge_divergences(members.len() as u64, m);
            let old_total: f64 = members.iter().map(|&i| to_centroid[i]).sum();
            if new_d.iter().sum::<f64>() <= old_total {
                *centroid = candidate;
                for (&i, d) in members.iter().zip(new_d) {
                    to_centroid[i] = d;
                }
            }
        }
        trace.push(to_centroid.iter().sum());
    }

    let labels: Vec<usize> = labels.into_iter().map(|l| l.expect("assigned")).collect();
    Ok(SimClustOutcome {
        assignment: ClusterAssignment::new(labels, groups)?,
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn seed_centroids<R: Rng>(
    dists: &[LabelDistribution],
    points: &[Floored],
    groups: usize,
    rng: &mut R,
    cost: &mut CostCounter,
) -> Vec<Centroid> {
    let n = points.len();
    let m = dists[0].classes();
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = points.iter().map(|p| p.jeffreys(&points[first])).collect();
    cost.charge_divergences(n as u64, m);
    while chosen.len() < groups {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > r && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave r above the final sum
            pick.unwrap_or_else(|| {
                nearest
                    .iter()
                    .rposition(|&d| d > 0.0)
                    .expect("positive mass")
            })
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = p.jeffreys(&points[next]);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
        cost.charge_divergences(n as u64, m);
    }
    chosen
        .into_iter()
        .map(|i| Centroid::new(&dists[i]))
        .collect()
}

fn repair_empty(
    assigned: &mut [usize],
    to_centroid: &mut [f64],
    centroids: &mut [Centroid],
    dists: &[LabelDistribution],
    groups: usize,
) {
    let mut sizes = vec![0usize; groups];
    assigned.iter().for_each(|&c| sizes[c] += 1);
    for c in 0..groups {
        if sizes[c] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..assigned.len() {
            if sizes[assigned[i]] < 2 {
                continue;
            }
            if donor.is_none_or(|d| to_centroid[i] > to_centroid[d]) {
                donor = Some(i);
            }
        }
        let i = donor.expect("groups <= clients leaves a cluster with two members");
        sizes[assigned[i]] -= 1;
        sizes[c] = 1;
        assigned[i] = c;
        to_centroid[i] = 0.0;
        centroids[c] = Centroid::new(&dists[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::adjusted_rand_index;

    fn ld(v: &[f64]) -> LabelDistribution {
        LabelDistribution::new(v.to_vec()).unwrap()
    }

    fn one_hot(m: usize, k: usize) -> LabelDistribution {
        let mut v = vec![0.0; m];
        v[k] = 1.0;
        ld(&v)
    }

    #[test]
    fn recovers_planted_one_hot_patterns() {
        let dists: Vec<_> = (0..10).map(|i| one_hot(5, i % 5)).collect();
        let truth = ClusterAssignment::new((0..10).map(|i| i % 5).collect(), 5).unwrap();
        for seed in 0..10 {
            let out = simclust(&dists, 5, seed, &mut CostCounter::default()).unwrap();
            assert_eq!(adjusted_rand_index(&out.assignment, &truth).unwrap(), 1.0);
            assert!(out.converged);
        }
    }

    #[test]
    fn as_many_groups_as_clients_gives_singletons() {
        let dists = [
            ld(&[0.5, 0.5]),
            ld(&[0.5, 0.5]),
            ld(&[0.9, 0.1]),
            ld(&[0.1, 0.9]),
        ];
        let out = simclust(&dists, 4, 3, &mut CostCounter::default()).unwrap();
        assert_eq!(out.assignment.sizes(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn identical_clients_have_zero_objective() {
        let dists: Vec<_> = (0..6).map(|_| ld(&[0.2, 0.3, 0.5])).collect();
        let out = simclust(&dists, 3, 1, &mut CostCounter::default()).unwrap();
        assert_eq!(out.objective(), 0.0);
        assert!(out.assignment.sizes().iter().all(|&s| s > 0));
        assert!(out.converged);
    }

    #[test]
    fn too_many_groups() {
        let dists = [ld(&[1.0, 0.0])];
        assert!(matches!(
            simclust(&dists, 2, 0, &mut CostCounter::default()),
            Err(Error::TooManyGroups { .. })
        ));
    }

    #[test]
    fn charges_divergence_work() {
        let dists: Vec<_> = (0..8).map(|i| one_hot(4, i % 4)).collect();
        let mut cost = CostCounter::default();
        simclust(&dists, 4, 0, &mut cost).unwrap();
        assert!(cost.divergence_evals() >= 8 * 4);
        assert_eq!(cost.flops(), cost.divergence_evals() * 10 * 4);
    }
}
