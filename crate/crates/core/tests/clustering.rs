use greenfl_core::clustering::{
    adjusted_rand_index, ari_from_labels, brute_force_diverse_grouping, diversity_objective,
    repclust, simclust, ClusterAssignment, RepClustConfig,
};
use greenfl_core::distributions::{pairwise_distances, LabelDistribution};
use greenfl_core::energy::CostCounter;
use greenfl_core::partition::{draw_client_label_distributions, Concentration, PartitionConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Symmetrized KL written out directly: floor, renormalize, sum both KLs.
fn naive_skl(p: &[f64], q: &[f64]) -> f64 {
    let fix = |v: &[f64]| {
        let f: Vec<f64> = v.iter().map(|x| x.max(1e-12)).collect();
        let s: f64 = f.iter().sum();
        f.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let (p, q) = (fix(p), fix(q));
    let kl = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * (x / y).ln()).sum::<f64>();
    kl(&p, &q) + kl(&q, &p)
}

/// Direct evaluation over ordered pairs, independent of the library.
fn naive_objective(labels: &[usize], g: usize, dists: &[Vec<f64>], lambda: f64) -> (f64, f64) {
    let m = dists[0].len();
    let mut intra = 0.0;
    let mut means = vec![vec![0.0; m]; g];
    for c in 0..g {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let k = members.len();
        if k > 1 {
            let mut s = 0.0;
            for &i in &members {
                for &j in &members {
                    if i != j {
                        s += naive_skl(&dists[i], &dists[j]);
                    }
                }
            }
            intra += s / (k * (k - 1)) as f64;
        }
        for &i in &members {
            for x in 0..m {
                means[c][x] += dists[i][x] / k as f64;
            }
        }
    }
    intra /= g as f64;
    let mut inter = 0.0;
    for a in 0..g {
        for b in 0..g {
            if a != b {
                inter += naive_skl(&means[a], &means[b]);
            }
        }
    }
    inter /= (g * (g - 1)) as f64;
    (intra - lambda * inter, inter)
}

fn random_dists(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<LabelDistribution> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let raw = if raw.iter().sum::<f64>() == 0.0 {
                vec![1.0; m]
            } else {
                raw
            };
            let s: f64 = raw.iter().sum();
            LabelDistribution::new(raw.iter().map(|x| x / s).collect()).unwrap()
        })
        .collect()
}

fn balanced_labels(rng: &mut ChaCha8Rng, n: usize, g: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % g).collect();
    labels.shuffle(rng);
    labels
}

#[test]
fn objective_matches_independent_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let n = rng.random_range(4..=8);
        let dists = random_dists(&mut rng, n, 5);
        let raw: Vec<Vec<f64>> = dists.iter().map(|d| d.as_slice().to_vec()).collect();
        let labels = balanced_labels(&mut rng, n, 2);
        let a = ClusterAssignment::new(labels.clone(), 2).unwrap();
        let d = pairwise_distances(&dists, &mut CostCounter::default()).unwrap();
        let got = diversity_objective(&a, &d, &dists, 1.0).unwrap();
        let (scalar, inter) = naive_objective(&labels, 2, &raw, 1.0);
        assert!((got.scalar - scalar).abs() <= 1e-12 * scalar.abs().max(1.0));
        assert!((got.inter - inter).abs() <= 1e-12 * inter.abs().max(1.0));
    }
}

#[test]
fn oracle_dominates_heuristic_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..15u64 {
        let n = 6 + (seed as usize % 3);
        let dists = random_dists(&mut rng, n, 4);
        let oracle = brute_force_diverse_grouping(&dists, 2, 1.0).unwrap();
        let cfg = RepClustConfig {
            groups: 2,
            ..Default::default()
        };
        let heuristic = repclust(&dists, &cfg, seed, &mut CostCounter::default()).unwrap();
        assert!(oracle.objective.scalar >= heuristic.objective.scalar - 1e-12);
        assert!(heuristic.objective.scalar >= heuristic.initial.scalar - 1e-12);
    }
}

#[test]
fn literal_swap_rule_is_monotone_too() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..10u64 {
        let dists = random_dists(&mut rng, 12, 6);
        let cfg = RepClustConfig {
            groups: 3,
            refine: false,
            ..Default::default()
        };
        let out = repclust(&dists, &cfg, seed, &mut CostCounter::default()).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1] > w[0]));
        assert!(out.passes <= cfg.max_iters);
    }
}

#[test]
fn planted_blocks_are_recovered() {
    for seed in 0..5u64 {
        let cfg = PartitionConfig {
            clients: 30,
            classes: 6,
            rho: 3,
            alpha: Concentration::Infinite,
            feature_dim: 6,
            seed,
            ..Default::default()
        };
        let dists = draw_client_label_distributions(&cfg).unwrap();
        let out = simclust(&dists, 3, seed, &mut CostCounter::default()).unwrap();
        assert_eq!(
            ari_from_labels(out.assignment.labels(), &cfg.block_labels()).unwrap(),
            1.0
        );
        let rep = repclust(
            &dists,
            &RepClustConfig {
                groups: 10,
                ..Default::default()
            },
            seed,
            &mut CostCounter::default(),
        )
        .unwrap();
        assert!(rep.objective.inter < 1e-9);
    }
}

fn arb_dists(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<LabelDistribution>> {
    (n, 2usize..6).prop_flat_map(|(n, m)| {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, m), n).prop_map(|rows| {
            rows.into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    if s == 0.0 {
                        LabelDistribution::uniform(r.len())
                    } else {
                        LabelDistribution::new(r.iter().map(|x| x / s).collect()).unwrap()
                    }
                })
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simclust_objective_never_increases(dists in arb_dists(4..=20), g in 2usize..5, seed in any::<u64>()) {
        prop_assume!(g <= dists.len());
        let out = simclust(&dists, g, seed, &mut CostCounter::default()).unwrap();
        prop_assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        prop_assert!(out.iterations <= 100);
        prop_assert_eq!(out.assignment.num_groups(), g);
        prop_assert!(out.assignment.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn repclust_keeps_sizes_and_never_loses(dists in arb_dists(4..=18), g in 2usize..5, seed in any::<u64>()) {
        prop_assume!(2 * g <= dists.len());
        let cfg = RepClustConfig { groups: g, ..Default::default() };
        let out = repclust(&dists, &cfg, seed, &mut CostCounter::default()).unwrap();
        let sizes = out.assignment.sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert!(out.trace.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(out.objective.scalar >= out.initial.scalar - 1e-9);
        prop_assert!(out.objective.intra >= 0.0 && out.objective.inter >= 0.0);
    }

    #[test]
    fn ari_ignores_relabeling(labels in prop::collection::vec(0usize..4, 2..30), other in prop::collection::vec(0usize..4, 30), perm_seed in any::<u64>()) {
        let n = labels.len();
        let other = &other[..n];
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        prop_assert!((ari_from_labels(&labels, &relabeled).unwrap() - 1.0).abs() < 1e-12);
        let x = ari_from_labels(&labels, other).unwrap();
        let y = ari_from_labels(&relabeled, other).unwrap();
        let z = ari_from_labels(other, &relabeled).unwrap();
        prop_assert!((x - y).abs() < 1e-12 && (y - z).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&x));
    }
}

#[test]
fn ari_of_independent_partitions_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mean: f64 = (0..200)
        .map(|_| {
            let a: Vec<usize> = (0..100).map(|_| rng.random_range(0..5)).collect();
            let b: Vec<usize> = (0..100).map(|_| rng.random_range(0..5)).collect();
            adjusted_rand_index(
                &ClusterAssignment::from_labels(&a).unwrap(),
                &ClusterAssignment::from_labels(&b).unwrap(),
            )
            .unwrap()
        })
        .sum::<f64>()
        / 200.0;
    assert!(mean.abs() < 0.01, "{mean}");
}
