//! Label distributions on the probability simplex and the symmetrized
//! Kullback-Leibler divergence used to compare them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::CostCounter;
use crate::{Error, Result};

/// Entries are floored at this value before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Absolute tolerance on the sum of a distribution.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point on the `M`-class probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    /// Validates `probs`: non-empty, finite, non-negative, summing to one
    /// within [`SIMPLEX_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("label distribution"));
        }
        if let Some((i, v)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidDistribution(format!("entry {i} is {v}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(classes: usize) -> Self {
        Self {
            probs: vec![1.0 / classes as f64; classes],
        }
    }

    /// Empirical distribution of integer label counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("label counts"));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    /// Number of classes `M`.
    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Indices of classes with positive probability.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(m, _)| m)
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.probs
    }
}

/// A distribution after flooring and renormalization, with cached logs.
#[derive(Debug, Clone)]
pub(crate) struct Floored {
    probs: Vec<f64>,
    logs: Vec<f64>,
}

impl Floored {
    pub(crate) fn new(dist: &LabelDistribution) -> Self {
        let floored: Vec<f64> = dist.probs.iter().map(|&p| p.max(PROB_FLOOR)).collect();
        let sum: f64 = floored.iter().sum();
        let probs: Vec<f64> = floored.iter().map(|p| p / sum).collect();
        let logs = probs.iter().map(|&p| libm::log(p)).collect();
        Self { probs, logs }
    }

    /// `KL(p||q) + KL(q||p)`, written as `sum (p - q)(ln p - ln q)`.
    pub(crate) fn jeffreys(&self, other: &Floored) -> f64 {
        self.probs
            .iter()
            .zip(&self.logs)
            .zip(other.probs.iter().zip(&other.logs))
            .map(|((p, lp), (q, lq))| (p - q) * (lp - lq))
            .sum()
    }
}

fn check_classes(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Jeffreys divergence `KL(p||q) + KL(q||p)` in nats, evaluated after
/// flooring every entry at [`PROB_FLOOR`] and renormalizing.
pub fn symmetrized_kl(p: &LabelDistribution, q: &LabelDistribution) -> Result<f64> {
    check_classes(p.classes(), q.classes())?;
    Ok(Floored::new(p).jeffreys(&Floored::new(q)))
}

/// Elementwise arithmetic mean of `members`.
pub fn mean_distribution(members: &[LabelDistribution]) -> Result<LabelDistribution> {
    mean_of(members.iter())
}

pub(crate) fn mean_of<'a>(
    mut members: impl Iterator<Item = &'a LabelDistribution>,
) -> Result<LabelDistribution> {
    let first = members
        .next()
        .ok_or(Error::Empty("mean of no distributions"))?;
    let mut acc = first.probs.clone();
    let mut n = 1usize;
    for d in members {
        check_classes(acc.len(), d.classes())?;
        for (a, p) in acc.iter_mut().zip(&d.probs) {
            *a += p;
        }
        n += 1;
    }
    let inv = n as f64;
    acc.iter_mut().for_each(|a| *a /= inv);
    Ok(LabelDistribution { probs: acc })
}

/// Symmetric matrix of pairwise divergences with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

/// All pairwise [`symmetrized_kl`] values. Charges `n(n-1)/2` divergence
/// evaluations to `cost`.
pub fn pairwise_distances(
    dists: &[LabelDistribution],
    cost: &mut CostCounter,
) -> Result<DistanceMatrix> {
    if dists.len() < 2 {
        return Err(Error::Empty(
            "pairwise distances need at least two distributions",
        ));
    }
    let m = dists[0].classes();
    for d in dists {
        check_classes(m, d.classes())?;
    }
    let floored: Vec<Floored> = dists.iter().map(Floored::new).collect();
    let n = dists.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = floored[i].jeffreys(&floored[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    cost.charge_divergences((n * (n - 1) / 2) as u64, m);
    Ok(DistanceMatrix { n, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ld(v: &[f64]) -> LabelDistribution {
        LabelDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_distributions_have_zero_divergence() {
        let p = ld(&[0.3, 0.7]);
        assert_eq!(symmetrized_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn mirrored_pair_gives_ln3() {
        let v = symmetrized_kl(&ld(&[0.75, 0.25]), &ld(&[0.25, 0.75])).unwrap();
        assert!((v - libm::log(3.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn zero_entries_are_floored() {
        // p floors to [1, e]/(1 + e) with e = 1e-12; q = [0.5, 0.5].
        let e = PROB_FLOOR;
        let p0 = 1.0 / (1.0 + e);
        let p1 = e / (1.0 + e);
        let expected = (p0 - 0.5) * (libm::log(p0) - libm::log(0.5))
            + (p1 - 0.5) * (libm::log(p1) - libm::log(0.5));
        let v = symmetrized_kl(&ld(&[1.0, 0.0]), &ld(&[0.5, 0.5])).unwrap();
        assert!(v.is_finite());
        assert!((v - expected).abs() < 1e-12);
        // 0.5 ln 2 + 0.5 ln(0.5e12) = 0.5 ln(1e12) up to O(1e-12)
        assert!((v - 0.5 * libm::log(1e12)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let err = symmetrized_kl(&ld(&[1.0]), &ld(&[0.5, 0.5])).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 1,
                found: 2
            }
        );
    }

    #[test]
    fn invalid_simplex_points_are_rejected() {
        assert!(LabelDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(LabelDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(LabelDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(LabelDistribution::new(vec![]).is_err());
    }

    #[test]
    fn means() {
        let m = mean_distribution(&[ld(&[1.0, 0.0]), ld(&[0.0, 1.0])]).unwrap();
        assert_eq!(m.as_slice(), &[0.5, 0.5]);
        let m = mean_distribution(&[ld(&[0.2, 0.8])]).unwrap();
        assert_eq!(m.as_slice(), &[0.2, 0.8]);
        let m = mean_distribution(&[ld(&[0.1, 0.9]), ld(&[0.3, 0.7]), ld(&[0.5, 0.5])]).unwrap();
        assert!((m.as_slice()[0] - 0.3).abs() < 1e-15);
        assert!((m.as_slice()[1] - 0.7).abs() < 1e-15);
        assert!(mean_distribution(&[]).is_err());
    }

    #[test]
    fn pairwise_matches_elementwise_and_counts() {
        let ds = [
            ld(&[0.2, 0.3, 0.5]),
            ld(&[0.6, 0.2, 0.2]),
            ld(&[0.0, 0.5, 0.5]),
        ];
        let mut cost = CostCounter::default();
        let d = pairwise_distances(&ds, &mut cost).unwrap();
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(d.get(i, j), d.get(j, i));
                if i != j {
                    assert_eq!(d.get(i, j), symmetrized_kl(&ds[i], &ds[j]).unwrap());
                }
            }
        }
        assert_eq!(cost.divergence_evals(), 3);
        assert_eq!(cost.flops(), 3 * 10 * 3);

        let mut cost = CostCounter::default();
        let same = [ld(&[0.4, 0.6]), ld(&[0.4, 0.6])];
        let d = pairwise_distances(&same, &mut cost).unwrap();
        assert!(d.row(0).iter().chain(d.row(1)).all(|&v| v == 0.0));

        let many: Vec<_> = (0..7).map(|_| LabelDistribution::uniform(4)).collect();
        let mut cost = CostCounter::default();
        pairwise_distances(&many, &mut cost).unwrap();
        assert_eq!(cost.divergence_evals(), 21);

        assert!(pairwise_distances(&ds[..1], &mut cost).is_err());
    }
}
