//! One simulated federated training run, start to finish.
//!
//! Every random choice comes from a named stream of the run seed, so two
//! runs that differ only in their selection strategy see the same clients,
//! the same data and the same initial model.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    adjusted_rand_index, ari_from_labels, nearest_stratified_reference, repclust, simclust,
    ClusterAssignment, RepClustConfig,
};
use crate::distributions::LabelDistribution;
use crate::energy::{
    comm_energy_round, CommConfig, ComputeConfig, CostCounter, EnergyBreakdown, EnergyLedger, Party,
};
use crate::model::{
    dataset_loss, evaluate, fedavg_aggregate, init_model, local_train, ModelArch, ModelParams,
    TrainConfig,
};
use crate::partition::{generate, train_test_split, ClientDataset, Concentration, PartitionConfig};
use crate::privacy::privatize;
use crate::rng::stream_seed;
use crate::selection::{
    powerd_candidates, select_powerd, select_random, select_repclust, select_simclust,
    SelectionContext, Strategy,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths; empty for softmax regression.
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    /// Clients per round.
    #[serde(alias = "K")]
    pub k: usize,
    /// Number of groups for the clustering strategies.
    #[serde(alias = "G")]
    pub g: usize,
    /// PowerD candidate count.
    #[serde(alias = "D")]
    pub d: usize,
    pub lambda: f64,
    /// Privacy level of the label distributions sent to the server.
    pub gamma: f64,
    pub search_width: usize,
    pub max_iters: usize,
    /// Full exchange sweep once the closest-pair passes stall.
    pub refine: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Random,
            k: 10,
            g: 10,
            d: 20,
            lambda: 1.0,
            gamma: 0.0,
            search_width: 0,
            max_iters: 100,
            refine: true,
        }
    }
}

impl SelectionConfig {
    pub fn repclust_config(&self) -> RepClustConfig {
        RepClustConfig {
            groups: self.g,
            search_width: self.search_width,
            max_iters: self.max_iters,
            lambda: self.lambda,
            refine: self.refine,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub comm: CommConfig,
    pub compute: ComputeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub accuracy_targets: Vec<f64>,
    pub sustain_window: usize,
    /// Strategy whose total energy is the 100% reference.
    pub baseline: Strategy,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            accuracy_targets: vec![0.5, 0.55, 0.6],
            sustain_window: 20,
            baseline: Strategy::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub energy: EnergyConfig,
    /// Communication rounds `T`.
    pub rounds: u32,
    pub seeds: Vec<u64>,
    /// Share of every client's samples used for training; the rest joins the
    /// global test set.
    pub train_ratio: f64,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            partition: PartitionConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            selection: SelectionConfig::default(),
            energy: EnergyConfig::default(),
            rounds: 100,
            seeds: vec![0, 1, 2, 3, 4],
            train_ratio: 0.7,
            report: ReportConfig::default(),
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

impl RunConfig {
    pub fn arch(&self) -> ModelArch {
        ModelArch::mlp(
            self.partition.feature_dim,
            &self.model.hidden,
            self.partition.classes,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        self.arch().validate()?;
        self.train.validate()?;
        self.energy.comm.validate()?;
        self.energy.compute.validate()?;
        let l = self.partition.clients;
        let s = &self.selection;
        if self.rounds == 0 {
            return Err(invalid("rounds must be >= 1".into()));
        }
        if s.k == 0 || s.k > l {
            return Err(Error::TooManySelected { k: s.k, clients: l });
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(invalid(format!(
                "train_ratio {} not in (0, 1)",
                self.train_ratio
            )));
        }
        if !(s.gamma >= 0.0) || !s.gamma.is_finite() {
            return Err(invalid(format!("selection.gamma {} must be >= 0", s.gamma)));
        }
        match s.strategy {
            Strategy::Random => {}
            Strategy::PowerD => {
                if s.d < s.k || s.d > l {
                    return Err(Error::InsufficientCandidates {
                        candidates: s.d,
                        k: s.k,
                    });
                }
            }
            Strategy::SimClust => {
                if s.g == 0 || s.g > l {
                    return Err(Error::TooManyGroups {
                        groups: s.g,
                        clients: l,
                    });
                }
            }
            Strategy::RepClust => {
                if s.g < 2 || 2 * s.g > l {
                    return Err(Error::TooManyGroups {
                        groups: s.g,
                        clients: l,
                    });
                }
                let width = s.search_width;
                if width > s.g || !(s.lambda >= 0.0) {
                    return Err(invalid(
                        "selection.search_width must be <= G and lambda >= 0".into(),
                    ));
                }
            }
        }
        if let Some(t) = self
            .report
            .accuracy_targets
            .iter()
            .find(|t| !(**t > 0.0 && **t < 1.0))
        {
            return Err(invalid(format!("accuracy target {t} not in (0, 1)")));
        }
        if self.report.sustain_window == 0 {
            return Err(invalid("report.sustain_window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: u32,
    pub selected: Vec<usize>,
    pub accuracy: f64,
    pub loss: f64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub strategy: Strategy,
    pub records: Vec<RoundRecord>,
    pub ledger: EnergyLedger,
    /// Groups used by the clustering strategies.
    pub assignment: Option<ClusterAssignment>,
    /// Counted flops of the one-off clustering step.
    pub clustering_flops: u64,
    pub initial_model: ModelParams,
    pub final_model: ModelParams,
}

impl RunResult {
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.accuracy)
    }
}

/// Client data as the run sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Federation {
    /// True label distributions drawn by the partitioner.
    pub distributions: Vec<LabelDistribution>,
    /// Full per-client datasets before splitting.
    pub datasets: Vec<ClientDataset>,
    pub train: Vec<ClientDataset>,
    /// Union of every client's held-out shard.
    pub test: ClientDataset,
}

impl Federation {
    /// Empirical label distribution of every client's data.
    pub fn empirical_distributions(&self) -> Result<Vec<LabelDistribution>> {
        self.datasets
            .iter()
            .map(ClientDataset::label_distribution)
            .collect()
    }

    pub fn train_sizes(&self) -> Vec<usize> {
        self.train.iter().map(ClientDataset::n_samples).collect()
    }
}

/// Generates and splits the data for `seed`; the partition's own seed field
/// is replaced by the run seed.
pub fn build_federation(cfg: &RunConfig, seed: u64) -> Result<Federation> {
    let part = PartitionConfig {
        seed,
        ..cfg.partition.clone()
    };
    let (distributions, datasets) = generate(&part)?;
    let mut train = Vec::with_capacity(datasets.len());
    let mut tests = Vec::with_capacity(datasets.len());
    for ds in &datasets {
        let split = train_test_split(ds, cfg.train_ratio, seed)?;
        train.push(split.train);
        tests.push(split.test);
    }
    let test = ClientDataset::concat(usize::MAX, &tests)?;
    Ok(Federation {
        distributions,
        datasets,
        train,
        test,
    })
}

/// Groups the (possibly privatized) empirical distributions for the
/// clustering strategies; `None` for the others.
pub fn cluster_clients(
    cfg: &RunConfig,
    fed: &Federation,
    seed: u64,
    cost: &mut CostCounter,
) -> Result<Option<ClusterAssignment>> {
    let s = &cfg.selection;
    if !s.strategy.needs_clustering() {
        return Ok(None);
    }
    let reported = privatize(&fed.empirical_distributions()?, s.gamma, seed);
    let cluster_seed = stream_seed(seed, "cluster", 0);
    let assignment = match s.strategy {
        Strategy::SimClust => simclust(&reported, s.g, cluster_seed, cost)?.assignment,
        Strategy::RepClust => {
            repclust(&reported, &s.repclust_config(), cluster_seed, cost)?.assignment
        }
        Strategy::Random | Strategy::PowerD => unreachable!("strategy without clustering"),
    };
    Ok(Some(assignment))
}

/// Runs `cfg.rounds` rounds of selection, local training, aggregation and
/// evaluation for one seed.
///
/// Energy booking: clustering flops are server pre-processing in round 1;
/// every round the server is charged `K` flops for drawing clients; PowerD
/// candidates pay for their loss evaluation as pre-processing and receive the
/// model on the downlink; selected clients pay training and both directions
/// of communication.
pub fn run_experiment(cfg: &RunConfig, seed: u64) -> Result<RunResult> {
    cfg.validate()?;
    let fed = build_federation(cfg, seed)?;
    let arch = cfg.arch();
    let initial_model = init_model(&arch, stream_seed(seed, "init", 0))?;
    let param_count = arch.param_count();
    let compute = &cfg.energy.compute;
    let sel = &cfg.selection;
    let sizes = fed.train_sizes();
    let clients = sizes.len() as u64;

    let mut ledger = EnergyLedger::new();
    let mut cluster_cost = CostCounter::default();
    let assignment = cluster_clients(cfg, &fed, seed, &mut cluster_cost)?;
    if assignment.is_some() {
        ledger.charge_pre(
            1,
            Party::Server,
            compute.compute_energy(cluster_cost.flops()),
        )?;
    }

    let mut global = initial_model.clone();
    let mut records = Vec::with_capacity(cfg.rounds as usize);
    for round in 1..=cfg.rounds {
        let mut ctx = SelectionContext::new(seed, round, sel.k, &sizes).with_candidates(sel.d);
        if let Some(a) = &assignment {
            ctx = ctx.with_assignment(a);
        }
        ledger.charge_pre(round, Party::Server, compute.compute_energy(sel.k as u64))?;
        let mut downlink = Vec::new();
        let selected = match sel.strategy {
            Strategy::Random => select_random(&ctx)?,
            Strategy::SimClust => select_simclust(&ctx)?,
            Strategy::RepClust => select_repclust(&ctx)?,
            Strategy::PowerD => {
                let candidates = powerd_candidates(&ctx)?;
                let mut losses = Vec::with_capacity(candidates.len());
                for &c in &candidates {
                    let (loss, flops) = dataset_loss(&global, &fed.train[c])?;
                    ledger.charge_pre(round, Party::Client(c), compute.compute_energy(flops))?;
                    losses.push(loss);
                }
                downlink.extend_from_slice(&candidates);
                select_powerd(&ctx, &candidates, &losses)?
            }
        };
        downlink.extend_from_slice(&selected);

        let mut updates = Vec::with_capacity(selected.len());
        for &j in &selected {
            let train_seed = stream_seed(seed, "train", u64::from(round) * clients + j as u64);
            let update = local_train(&global, &fed.train[j], &cfg.train, train_seed)?;
            ledger.charge_train(
                round,
                Party::Client(j),
                compute.compute_energy(update.flops),
            )?;
            updates.push((update.params, fed.train[j].n_samples()));
        }
        for (j, joules) in comm_energy_round(&selected, &downlink, param_count, &cfg.energy.comm) {
            ledger.charge_comm(round, Party::Client(j), joules)?;
        }
        let refs: Vec<(&ModelParams, usize)> = updates.iter().map(|(p, n)| (p, *n)).collect();
        global = fedavg_aggregate(&refs)?;
        let eval = evaluate(&global, &fed.test)?;
        records.push(RoundRecord {
            round,
            selected,
            accuracy: eval.accuracy,
            loss: eval.loss,
            energy: ledger.round_breakdown(round),
        });
    }
    Ok(RunResult {
        seed,
        strategy: sel.strategy,
        records,
        ledger,
        assignment,
        clustering_flops: cluster_cost.flops(),
        initial_model,
        final_model: global,
    })
}

/// Where a target accuracy is first held for a full window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SustainedAccuracy {
    /// First round of the window.
    pub round: u32,
    /// Total energy spent up to and including the window's last round.
    pub joules: f64,
}

/// Earliest round `r` with `accuracy >= target` in every round of
/// `[r, r + window)`, with the cumulative energy through `r + window - 1`.
pub fn energy_to_sustained_accuracy(
    records: &[RoundRecord],
    target: f64,
    window: usize,
) -> Option<SustainedAccuracy> {
    if window == 0 || records.len() < window {
        return None;
    }
    let mut run = 0usize;
    let mut spent = 0.0;
    for (i, r) in records.iter().enumerate() {
        spent += r.energy.total();
        run = if r.accuracy >= target { run + 1 } else { 0 };
        if run == window {
            return Some(SustainedAccuracy {
                round: records[i + 1 - window].round,
                joules: spent,
            });
        }
    }
    None
}

/// Counted clustering cost at one point of the scaling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub clients: usize,
    pub rho: usize,
    pub simclust_groups: usize,
    pub simclust_flops: u64,
    pub simclust_iterations: usize,
    pub repclust_groups: usize,
    pub repclust_flops: u64,
    pub repclust_passes: usize,
}

/// Planted one-hot-block distributions for `clients` clients and `rho`
/// partitions of `classes` labels.
pub fn planted_distributions(
    clients: usize,
    rho: usize,
    classes: usize,
    seed: u64,
) -> Result<Vec<LabelDistribution>> {
    let cfg = PartitionConfig {
        clients,
        classes,
        rho,
        alpha: Concentration::Infinite,
        feature_dim: classes,
        seed,
        ..PartitionConfig::default()
    };
    crate::partition::draw_client_label_distributions(&cfg)
}

/// Runs SimClust with `G = rho` and RepClust with `G = L / rho` on planted
/// data and reports their counted cost.
pub fn scaling_point(
    clients: usize,
    rho: usize,
    classes: usize,
    seed: u64,
) -> Result<ScalingPoint> {
    let dists = planted_distributions(clients, rho, classes, seed)?;
    let mut sim_cost = CostCounter::default();
    let sim = simclust(&dists, rho, stream_seed(seed, "cluster", 0), &mut sim_cost)?;
    let rep_groups = clients / rho;
    let mut rep_cost = CostCounter::default();
    let rep_cfg = RepClustConfig {
        groups: rep_groups,
        ..RepClustConfig::default()
    };
    let rep = repclust(
        &dists,
        &rep_cfg,
        stream_seed(seed, "cluster", 0),
        &mut rep_cost,
    )?;
    Ok(ScalingPoint {
        clients,
        rho,
        simclust_groups: rho,
        simclust_flops: sim_cost.flops(),
        simclust_iterations: sim.iterations,
        repclust_groups: rep_groups,
        repclust_flops: rep_cost.flops(),
        repclust_passes: rep.passes,
    })
}

/// Agreement of both clustering methods with the planted structure after
/// privatization at level `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAri {
    pub gamma: f64,
    pub seed: u64,
    /// SimClust with `G = rho` against the planted blocks.
    pub simclust: f64,
    /// RepClust with `G = L / rho` against the nearest stratified partition.
    pub repclust: f64,
}

/// Clusters privatized planted distributions drawn from `partition` (with
/// its seed replaced by `seed`) and scores both methods.
pub fn privacy_ari(partition: &PartitionConfig, gamma: f64, seed: u64) -> Result<PrivacyAri> {
    let cfg = PartitionConfig {
        seed,
        ..partition.clone()
    };
    let dists = crate::partition::draw_client_label_distributions(&cfg)?;
    let noisy = privatize(&dists, gamma, seed);
    let blocks = cfg.block_labels();
    let cluster_seed = stream_seed(seed, "cluster", 0);
    let sim = simclust(&noisy, cfg.rho, cluster_seed, &mut CostCounter::default())?;
    let rep_cfg = RepClustConfig {
        groups: cfg.clients / cfg.rho,
        ..RepClustConfig::default()
    };
    let rep = repclust(&noisy, &rep_cfg, cluster_seed, &mut CostCounter::default())?;
    let reference = nearest_stratified_reference(&rep.assignment, &blocks)?;
    Ok(PrivacyAri {
        gamma,
        seed,
        simclust: ari_from_labels(sim.assignment.labels(), &blocks)?,
        repclust: adjusted_rand_index(&rep.assignment, &reference)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            partition: PartitionConfig {
                clients: 6,
                classes: 3,
                rho: 1,
                samples_per_client: 30,
                feature_dim: 4,
                ..Default::default()
            },
            train: TrainConfig {
                epochs: 1,
                batch_size: 8,
                ..Default::default()
            },
            selection: SelectionConfig {
                k: 2,
                g: 3,
                d: 4,
                ..Default::default()
            },
            rounds: 3,
            ..Default::default()
        }
    }

    fn record(round: u32, accuracy: f64) -> RoundRecord {
        RoundRecord {
            round,
            selected: vec![],
            accuracy,
            loss: 0.0,
            energy: EnergyBreakdown {
                pre_j: 0.0,
                train_j: 1.0,
                comm_j: 0.5,
            },
        }
    }

    #[test]
    fn sustained_accuracy_windows() {
        let all: Vec<_> = (1..=25).map(|r| record(r, 0.9)).collect();
        let hit = energy_to_sustained_accuracy(&all, 0.8, 20).unwrap();
        assert_eq!(hit.round, 1);
        assert!((hit.joules - 30.0).abs() < 1e-12);
        assert_eq!(energy_to_sustained_accuracy(&all, 0.95, 20), None);
        // a dip at round 6 pushes the window start to round 7
        let dip: Vec<_> = (1..=30)
            .map(|r| record(r, if r == 6 { 0.1 } else { 0.9 }))
            .collect();
        let hit = energy_to_sustained_accuracy(&dip, 0.8, 20).unwrap();
        assert_eq!(hit.round, 7);
        assert!((hit.joules - 26.0 * 1.5).abs() < 1e-12);
        assert_eq!(energy_to_sustained_accuracy(&dip[..25], 0.8, 20), None);
    }

    #[test]
    fn config_validation() {
        assert!(small().validate().is_ok());
        let mut c = small();
        c.rounds = 0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.selection.k = 7;
        assert!(c.validate().is_err());
        let mut c = small();
        c.report.accuracy_targets = vec![1.0];
        assert!(c.validate().is_err());
        let mut c = small();
        c.selection.strategy = Strategy::PowerD;
        c.selection.d = 1;
        assert!(c.validate().is_err());
        let mut c = small();
        c.selection.strategy = Strategy::RepClust;
        c.selection.g = 4;
        assert!(c.validate().is_err());
        assert!(run_experiment(&c, 0).is_err());
    }

    #[test]
    fn every_strategy_runs() {
        for s in Strategy::ALL {
            let mut c = small();
            c.selection.strategy = s;
            let out = run_experiment(&c, 3).unwrap();
            assert_eq!(out.records.len(), 3);
            for r in &out.records {
                assert_eq!(r.selected.len(), 2);
                assert!((0.0..=1.0).contains(&r.accuracy));
            }
            assert_eq!(out.assignment.is_some(), s.needs_clustering());
            let summed: f64 = out.records.iter().map(|r| r.energy.total()).sum();
            assert!((summed - out.ledger.total()).abs() <= 1e-9 * out.ledger.total());
        }
    }

    #[test]
    fn noiseless_planted_clustering_is_perfect() {
        let part = PartitionConfig {
            clients: 20,
            classes: 10,
            rho: 5,
            alpha: Concentration::Infinite,
            feature_dim: 10,
            ..Default::default()
        };
        let p = privacy_ari(&part, 0.0, 1).unwrap();
        assert_eq!((p.simclust, p.repclust), (1.0, 1.0));
    }

    #[test]
    fn scaling_point_counts() {
        let p = scaling_point(20, 2, 10, 0).unwrap();
        assert_eq!(p.repclust_groups, 10);
        assert!(p.simclust_flops > 0 && p.repclust_flops > 0);
    }
}
