//! Synthetic, label-skewed client datasets.
//!
//! Classes are split into `rho` disjoint partitions and clients into `rho`
//! contiguous blocks of equal size. A client in block `r` only holds classes
//! of partition `r`, with label ratios drawn from a symmetric Dirichlet with
//! concentration `alpha`. Features of class `m` are Gaussian blobs around
//! `class_separation * e_m` with unit variance.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::distributions::LabelDistribution;
use crate::rng;
use crate::{Error, Result};

/// Dirichlet concentration; `Infinite` makes every client exactly uniform
/// over its partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Concentration {
    Finite(f64),
    Infinite,
}

impl Serialize for Concentration {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Concentration::Finite(a) => s.serialize_f64(*a),
            Concentration::Infinite => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for Concentration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        struct ConcentrationVisitor;

        impl Visitor<'_> for ConcentrationVisitor {
            type Value = Concentration;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or \"infinity\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> core::result::Result<Concentration, E> {
                Ok(if v.is_infinite() && v > 0.0 {
                    Concentration::Infinite
                } else {
                    Concentration::Finite(v)
                })
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> core::result::Result<Concentration, E> {
                Ok(Concentration::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> core::result::Result<Concentration, E> {
                Ok(Concentration::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> core::result::Result<Concentration, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => Ok(Concentration::Infinite),
                    other => match other.parse::<f64>() {
                        Ok(a) => self.visit_f64(a),
                        Err(_) => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                    },
                }
            }
        }

        d.deserialize_any(ConcentrationVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// Number of clients `L`.
    pub clients: usize,
    /// Number of classes `M`.
    pub classes: usize,
    pub alpha: Concentration,
    /// Number of disjoint class partitions; must divide both `classes` and
    /// `clients`.
    pub rho: usize,
    pub samples_per_client: usize,
    pub feature_dim: usize,
    /// Norm of every class mean vector.
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            clients: 100,
            classes: 10,
            alpha: Concentration::Finite(1.0),
            rho: 1,
            samples_per_client: 200,
            feature_dim: 16,
            class_separation: 2.0,
            seed: 0,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.clients == 0 || self.classes == 0 {
            return bad("partition.clients and partition.classes must be positive".into());
        }
        if self.rho == 0 || !self.classes.is_multiple_of(self.rho) {
            return bad(format!(
                "partition.rho = {} must divide partition.classes = {}",
                self.rho, self.classes
            ));
        }
        if !self.clients.is_multiple_of(self.rho) {
            return bad(format!(
                "partition.rho = {} must divide partition.clients = {}",
                self.rho, self.clients
            ));
        }
        if let Concentration::Finite(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return bad(format!("partition.alpha must be positive, got {a}"));
            }
        }
        if self.samples_per_client == 0 {
            return bad("partition.samples_per_client must be positive".into());
        }
        if self.feature_dim < self.classes {
            return bad(format!(
                "partition.feature_dim = {} must be at least partition.classes = {}",
                self.feature_dim, self.classes
            ));
        }
        if !self.class_separation.is_finite() {
            return bad("partition.class_separation must be finite".into());
        }
        Ok(())
    }

    /// Clients per block.
    pub fn block_size(&self) -> usize {
        self.clients / self.rho
    }

    /// Classes per partition.
    pub fn classes_per_partition(&self) -> usize {
        self.classes / self.rho
    }

    /// Partition (block) index of `client`.
    pub fn block_of(&self, client: usize) -> usize {
        client / self.block_size()
    }

    /// The planted block labels, one per client.
    pub fn block_labels(&self) -> Vec<usize> {
        (0..self.clients).map(|j| self.block_of(j)).collect()
    }
}

/// Draws one label distribution per client.
pub fn draw_client_label_distributions(cfg: &PartitionConfig) -> Result<Vec<LabelDistribution>> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, "labels", 0);
    let width = cfg.classes_per_partition();
    let gamma = match cfg.alpha {
        Concentration::Finite(a) => {
            Some(Gamma::new(a, 1.0).map_err(|e| Error::InvalidConfig(format!("alpha: {e}")))?)
        }
        Concentration::Infinite => None,
    };
    let mut out = Vec::with_capacity(cfg.clients);
    for j in 0..cfg.clients {
        let start = cfg.block_of(j) * width;
        let mut probs = vec![0.0; cfg.classes];
        let ratios: Vec<f64> = match (&gamma, width) {
            (_, 1) => vec![1.0],
            (None, _) => vec![1.0 / width as f64; width],
            (Some(g), _) => {
                let draws: Vec<f64> = (0..width).map(|_| g.sample(&mut rng)).collect();
                let sum: f64 = draws.iter().sum();
                if sum > 0.0 && sum.is_finite() {
                    draws.iter().map(|x| x / sum).collect()
                } else {
                    vec![1.0 / width as f64; width]
                }
            }
        };
        probs[start..start + width].copy_from_slice(&ratios);
        out.push(LabelDistribution::new(probs)?);
    }
    Ok(out)
}

/// Splits `total` into integer parts proportional to `weights` using
/// largest-remainder rounding; ties go to the lowest index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - libm::floor(quotas[a]);
        let rb = quotas[b] - libm::floor(quotas[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

/// Labelled samples held by one client (or a union of shards).
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub feature_dim: usize,
    /// Row-major `n_samples x feature_dim`.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub label_counts: Vec<usize>,
}

impl ClientDataset {
    /// Builds a dataset, recomputing the label counts over `classes` classes.
    pub fn new(
        client_id: usize,
        feature_dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if features.len() != labels.len() * feature_dim {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len() * feature_dim,
            });
        }
        let mut label_counts = vec![0; classes];
        for &y in &labels {
            if y >= classes {
                return Err(Error::InvalidConfig(format!(
                    "label {y} out of range 0..{classes}"
                )));
            }
            label_counts[y] += 1;
        }
        Ok(Self {
            client_id,
            feature_dim,
            features,
            labels,
            label_counts,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn classes(&self) -> usize {
        self.label_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Empirical label distribution `label_counts / n_samples`.
    pub fn label_distribution(&self) -> Result<LabelDistribution> {
        LabelDistribution::from_counts(&self.label_counts)
    }

    fn subset(&self, client_id: usize, idx: &[usize]) -> Self {
        let mut features = Vec::with_capacity(idx.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(idx.len());
        let mut label_counts = vec![0; self.classes()];
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            label_counts[self.labels[i]] += 1;
        }
        Self {
            client_id,
            feature_dim: self.feature_dim,
            features,
            labels,
            label_counts,
        }
    }

    /// Concatenates `parts` (which must agree on dimensions) in order.
    pub fn concat(client_id: usize, parts: &[ClientDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or(Error::Empty("no datasets to concatenate"))?;
        let mut out = Self {
            client_id,
            feature_dim: first.feature_dim,
            features: Vec::new(),
            labels: Vec::new(),
            label_counts: vec![0; first.classes()],
        };
        for p in parts {
            if p.feature_dim != out.feature_dim || p.classes() != out.classes() {
                return Err(Error::DimensionMismatch {
                    expected: out.feature_dim,
                    found: p.feature_dim,
                });
            }
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
            for (a, b) in out.label_counts.iter_mut().zip(&p.label_counts) {
                *a += b;
            }
        }
        Ok(out)
    }
}

/// Mean vector of class `class`.
pub fn class_mean(cfg: &PartitionConfig, class: usize) -> Vec<f64> {
    let mut mu = vec![0.0; cfg.feature_dim];
    mu[class] = cfg.class_separation;
    mu
}

/// Turns label distributions into samples: counts by largest-remainder
/// rounding of `samples_per_client * p`, features drawn around the class
/// means.
pub fn materialize_client_datasets(
    cfg: &PartitionConfig,
    dists: &[LabelDistribution],
) -> Result<Vec<ClientDataset>> {
    cfg.validate()?;
    if dists.len() != cfg.clients {
        return Err(Error::LengthMismatch {
            left: dists.len(),
            right: cfg.clients,
        });
    }
    let means: Vec<Vec<f64>> = (0..cfg.classes).map(|m| class_mean(cfg, m)).collect();
    dists
        .iter()
        .enumerate()
        .map(|(j, p)| {
            if p.classes() != cfg.classes {
                return Err(Error::DimensionMismatch {
                    expected: cfg.classes,
                    found: p.classes(),
                });
            }
            let counts = largest_remainder(cfg.samples_per_client, p.as_slice());
            let mut rng = rng::stream(cfg.seed, "features", j as u64);
            let mut features = Vec::with_capacity(cfg.samples_per_client * cfg.feature_dim);
            let mut labels = Vec::with_capacity(cfg.samples_per_client);
            for (m, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    labels.push(m);
                    features.extend(means[m].iter().map(|mu| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mu + z
                    }));
                }
            }
            ClientDataset::new(j, cfg.feature_dim, cfg.classes, features, labels)
        })
        .collect()
}

/// Result of a stratified train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub train: ClientDataset,
    pub test: ClientDataset,
    /// Classes with fewer than two samples; they went entirely to `train`.
    pub train_only_classes: Vec<usize>,
}

/// Splits `ds` per class so that `round(ratio * n)` samples land in the
/// training shard. Sample order inside each class is shuffled from `seed`.
pub fn train_test_split(ds: &ClientDataset, ratio: f64, seed: u64) -> Result<SplitOutcome> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio {ratio} not in (0, 1)"
        )));
    }
    let mut rng = rng::stream(seed, "split", ds.client_id as u64);
    let classes = ds.classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    for idx in by_class.iter_mut() {
        idx.shuffle(&mut rng);
    }
    let n = ds.n_samples();
    let target = libm::round(ratio * n as f64) as usize;
    let mut train_only = Vec::new();
    let mut fixed = 0usize;
    let mut weights = vec![0.0; classes];
    for (m, idx) in by_class.iter().enumerate() {
        match idx.len() {
            0 => {}
            1 => {
                train_only.push(m);
                fixed += 1;
            }
            c => weights[m] = c as f64,
        }
    }
    let rest: usize = weights.iter().map(|w| *w as usize).sum();
    let quota = target.saturating_sub(fixed).min(rest);
    let per_class = largest_remainder(quota, &weights);
    let mut train_idx = Vec::with_capacity(target);
    let mut test_idx = Vec::with_capacity(n - target.min(n));
    for (m, idx) in by_class.iter().enumerate() {
        let take = if train_only.contains(&m) {
            idx.len()
        } else {
            per_class[m].min(idx.len())
        };
        train_idx.extend_from_slice(&idx[..take]);
        test_idx.extend_from_slice(&idx[take..]);
    }
    Ok(SplitOutcome {
        train: ds.subset(ds.client_id, &train_idx),
        test: ds.subset(ds.client_id, &test_idx),
        train_only_classes: train_only,
    })
}

/// Shorthand used by the runner: draw, materialize and return both.
pub fn generate(cfg: &PartitionConfig) -> Result<(Vec<LabelDistribution>, Vec<ClientDataset>)> {
    let dists = draw_client_label_distributions(cfg)?;
    let data = materialize_client_datasets(cfg, &dists)?;
    Ok((dists, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(clients: usize, classes: usize, rho: usize, alpha: Concentration) -> PartitionConfig {
        PartitionConfig {
            clients,
            classes,
            rho,
            alpha,
            samples_per_client: 50,
            feature_dim: classes.max(4),
            ..Default::default()
        }
    }

    #[test]
    fn two_partitions_split_the_label_space() {
        let c = cfg(20, 10, 2, Concentration::Finite(1.0));
        let dists = draw_client_label_distributions(&c).unwrap();
        for (j, d) in dists.iter().enumerate() {
            let (zero, live) = if j < 10 { (5..10, 0..5) } else { (0..5, 5..10) };
            assert!(
                zero.into_iter().all(|m| d.as_slice()[m] == 0.0),
                "client {j}"
            );
            assert!((live.map(|m| d.as_slice()[m]).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_alpha_is_exactly_uniform() {
        let c = cfg(6, 5, 1, Concentration::Infinite);
        for d in draw_client_label_distributions(&c).unwrap() {
            assert_eq!(d.as_slice(), &[0.2; 5]);
        }
    }

    #[test]
    fn rho_equal_to_classes_gives_one_hot() {
        let c = cfg(8, 4, 4, Concentration::Finite(0.5));
        for (j, d) in draw_client_label_distributions(&c)
            .unwrap()
            .iter()
            .enumerate()
        {
            let mut expected = vec![0.0; 4];
            expected[j / 2] = 1.0;
            assert_eq!(d.as_slice(), expected.as_slice());
        }
    }

    #[test]
    fn invalid_rho_is_rejected() {
        assert!(draw_client_label_distributions(&cfg(10, 10, 3, Concentration::Infinite)).is_err());
        assert!(draw_client_label_distributions(&cfg(9, 10, 2, Concentration::Infinite)).is_err());
        assert!(draw_client_label_distributions(&cfg(10, 10, 0, Concentration::Infinite)).is_err());
        let mut bad = cfg(10, 10, 1, Concentration::Finite(0.0));
        assert!(bad.validate().is_err());
        bad.alpha = Concentration::Finite(1.0);
        bad.feature_dim = 3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(10, &[0.5, 0.5]), vec![5, 5]);
        assert_eq!(largest_remainder(10, &[0.33, 0.33, 0.34]), vec![3, 3, 4]);
        // equal remainders: lowest index first
        assert_eq!(largest_remainder(2, &[1.0, 1.0, 1.0]), vec![1, 1, 0]);
        assert_eq!(largest_remainder(0, &[1.0]), vec![0]);
    }

    #[test]
    fn materialized_counts_follow_distributions() {
        let c = PartitionConfig {
            samples_per_client: 10,
            ..cfg(2, 2, 1, Concentration::Infinite)
        };
        let dists = draw_client_label_distributions(&c).unwrap();
        let data = materialize_client_datasets(&c, &dists).unwrap();
        for ds in &data {
            assert_eq!(ds.label_counts, vec![5, 5]);
            assert_eq!(ds.n_samples(), 10);
            assert_eq!(ds.features.len(), 10 * c.feature_dim);
        }
        let again = materialize_client_datasets(&c, &dists).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let features: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = ClientDataset::new(0, 1, 2, features, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]).unwrap();
        let s = train_test_split(&ds, 0.7, 3).unwrap();
        assert_eq!(s.train.n_samples(), 7);
        assert_eq!(s.test.n_samples(), 3);
        let mut all: Vec<i64> = s
            .train
            .features
            .iter()
            .chain(&s.test.features)
            .map(|v| *v as i64)
            .collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let ds = ClientDataset::new(0, 1, 2, vec![0.0; 8], vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let s = train_test_split(&ds, 0.5, 1).unwrap();
        assert_eq!(s.train.label_counts, vec![2, 2]);
        assert_eq!(s.test.label_counts, vec![2, 2]);
        assert!(train_test_split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn singleton_classes_stay_in_train() {
        let ds = ClientDataset::new(0, 1, 3, vec![0.0; 5], vec![0, 0, 0, 0, 2]).unwrap();
        let s = train_test_split(&ds, 0.5, 9).unwrap();
        assert_eq!(s.train_only_classes, vec![2]);
        assert_eq!(s.train.label_counts[2], 1);
        assert_eq!(s.test.label_counts[2], 0);
        assert_eq!(s.train.n_samples() + s.test.n_samples(), 5);
    }
}
