//! Gaussian perturbation of label distributions before they leave a client.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::{LabelDistribution, PROB_FLOOR};
use crate::rng;

/// Noise scale `gamma / (M * L) * sum_j ||p_j||_1`.
///
/// Each `p_j` lies on the simplex, so this is `gamma / M` up to rounding.
pub fn dp_sigma(gamma: f64, classes: usize, dists: &[LabelDistribution]) -> f64 {
    if dists.is_empty() || classes == 0 {
        return 0.0;
    }
    let l1: f64 = dists
        .iter()
        .map(|d| d.as_slice().iter().map(|p| p.abs()).sum::<f64>())
        .sum();
    gamma / (classes * dists.len()) as f64 * l1
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every coordinate. The result may
/// leave the simplex.
pub fn perturb<R: Rng + ?Sized>(dist: &LabelDistribution, sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return dist.as_slice().to_vec();
    }
    dist.as_slice()
        .iter()
        .map(|&p| {
            let z: f64 = StandardNormal.sample(rng);
            p + sigma * z
        })
        .collect()
}

/// Projects a noisy vector back onto the simplex: entries below the floor are
/// raised to it and the vector is renormalized. A vector with no positive
/// entry becomes uniform.
pub fn sanitize(raw: &[f64]) -> LabelDistribution {
    let m = raw.len();
    if m == 0 {
        return LabelDistribution::uniform(1);
    }
    if !raw.iter().any(|&v| v > 0.0) {
        return LabelDistribution::uniform(m);
    }
    let clamped: Vec<f64> = raw
        .iter()
        .map(|&v| {
            if v.is_finite() {
                v.max(PROB_FLOOR)
            } else {
                PROB_FLOOR
            }
        })
        .collect();
    let sum: f64 = clamped.iter().sum();
    LabelDistribution::new(clamped.iter().map(|v| v / sum).collect())
        .unwrap_or_else(|_| LabelDistribution::uniform(m))
}

/// What the server receives from every client when privacy level `gamma` is
/// applied. With `gamma = 0` the distributions are returned unchanged.
pub fn privatize(dists: &[LabelDistribution], gamma: f64, seed: u64) -> Vec<LabelDistribution> {
    let classes = dists.first().map_or(0, |d| d.classes());
    let sigma = dp_sigma(gamma, classes, dists);
    if sigma == 0.0 {
        return dists.to_vec();
    }
    dists
        .iter()
        .enumerate()
        .map(|(j, d)| sanitize(&perturb(d, sigma, &mut rng::stream(seed, "dp", j as u64))))
        .collect()
}
