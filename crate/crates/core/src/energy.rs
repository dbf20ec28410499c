//! Energy accounting: compute, memory and radio energy, and the ledger that
//! splits every joule into pre-processing, local training and communication.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Flop units charged per class for one divergence evaluation.
pub const DIVERGENCE_FLOPS_PER_CLASS: u64 = 10;

/// Counts abstract compute work so that server-side work can be priced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostCounter {
    flops: u64,
    divergence_evals: u64,
}

impl CostCounter {
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn divergence_evals(&self) -> u64 {
        self.divergence_evals
    }

    /// Charges `count` divergence evaluations over `classes` classes.
    pub fn charge_divergences(&mut self, count: u64, classes: usize) {
        self.divergence_evals += count;
        self.flops += count * DIVERGENCE_FLOPS_PER_CLASS * classes as u64;
    }

    pub fn charge_flops(&mut self, flops: u64) {
        self.flops += flops;
    }

    pub fn merge(&mut self, other: &CostCounter) {
        self.flops += other.flops;
        self.divergence_evals += other.divergence_evals;
    }
}

/// Radio parameters of the uplink and downlink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommConfig {
    pub p_up_dbm: f64,
    pub p_down_dbm: f64,
    /// Physical-layer rate in bits per second.
    pub phy_rate: f64,
    pub bits_per_param: f64,
    /// Control data sent along with every model, in bits.
    pub overhead_bits: f64,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            p_up_dbm: 9.0,
            p_down_dbm: 20.0,
            phy_rate: 150e6,
            bits_per_param: 32.0,
            overhead_bits: 0.0,
        }
    }
}

impl CommConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phy_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "energy.phy_rate must be positive".into(),
            ));
        }
        if !(self.bits_per_param >= 0.0) || !(self.overhead_bits >= 0.0) {
            return Err(Error::InvalidConfig(
                "bit counts must be non-negative".into(),
            ));
        }
        if !self.p_up_dbm.is_finite() || !self.p_down_dbm.is_finite() {
            return Err(Error::InvalidConfig(
                "transmit powers must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Prices compute work and defines the power-trace sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeConfig {
    pub joules_per_flop: f64,
    /// Memory power draw in watts per gigabyte in use.
    pub memory_power_per_gb: f64,
    /// Interval between power samples in a trace, in seconds.
    pub sample_interval_s: f64,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        Self {
            joules_per_flop: 1e-9,
            memory_power_per_gb: 0.375,
            sample_interval_s: 15.0,
        }
    }
}

impl ComputeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.joules_per_flop > 0.0) || !self.joules_per_flop.is_finite() {
            return Err(Error::InvalidConfig(
                "energy.joules_per_flop must be positive".into(),
            ));
        }
        if !(self.sample_interval_s > 0.0) {
            return Err(Error::InvalidConfig(
                "energy.sample_interval_s must be positive".into(),
            ));
        }
        if !(self.memory_power_per_gb >= 0.0) {
            return Err(Error::InvalidConfig(
                "energy.memory_power_per_gb must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Energy of `flops` flops in joules.
    pub fn compute_energy(&self, flops: u64) -> f64 {
        flops as f64 * self.joules_per_flop
    }
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    libm::pow(10.0, p_dbm / 10.0) / 1000.0
}

/// Seconds needed to send a model of `param_count` parameters.
pub fn airtime(param_count: usize, comm: &CommConfig) -> f64 {
    (comm.bits_per_param * param_count as f64 + comm.overhead_bits) / comm.phy_rate
}

/// Radio energy of one round for every client in `up` or `down`, sorted by
/// client id. Clients in neither set are omitted (they spend nothing).
pub fn comm_energy_round(
    up: &[usize],
    down: &[usize],
    param_count: usize,
    comm: &CommConfig,
) -> Vec<(usize, f64)> {
    let slot = airtime(param_count, comm);
    let p_up = dbm_to_watts(comm.p_up_dbm);
    let p_down = dbm_to_watts(comm.p_down_dbm);
    let mut flags: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    for &k in up {
        flags.entry(k).or_default().0 = true;
    }
    for &k in down {
        flags.entry(k).or_default().1 = true;
    }
    flags
        .into_iter()
        .map(|(k, (u, d))| {
            let power = if u { p_up } else { 0.0 } + if d { p_down } else { 0.0 };
            (k, slot * power)
        })
        .collect()
}

/// `flops * joules_per_flop`.
pub fn compute_energy(flops: u64, compute: &ComputeConfig) -> f64 {
    compute.compute_energy(flops)
}

/// One row of a replayed power trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub p_cpu_w: f64,
    pub p_gpu_w: f64,
    pub mem_gb: f64,
}

/// Energy of the processing units: `sum (P_cpu + P_gpu) * dt`.
pub fn trace_energy(samples: &[(f64, f64)], dt: f64) -> Result<f64> {
    check_interval(dt)?;
    let mut total = 0.0;
    for (i, &(cpu, gpu)) in samples.iter().enumerate() {
        for v in [cpu, gpu] {
            if !(v >= 0.0) {
                return Err(Error::NegativeSample { index: i, value: v });
            }
        }
        total += (cpu + gpu) * dt;
    }
    Ok(total)
}

/// Memory energy: `power_per_gb * sum Omega * dt`.
pub fn memory_energy(mem_gb: &[f64], dt: f64, power_per_gb: f64) -> Result<f64> {
    check_interval(dt)?;
    if let Some((i, &v)) = mem_gb.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeSample { index: i, value: v });
    }
    Ok(power_per_gb * mem_gb.iter().sum::<f64>() * dt)
}

fn check_interval(dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(
            "sample interval must be positive".into(),
        ));
    }
    Ok(())
}

/// Total energy (processing units plus memory) of a replayed trace.
pub fn replay_trace(samples: &[PowerSample], compute: &ComputeConfig) -> Result<f64> {
    let units: Vec<(f64, f64)> = samples.iter().map(|s| (s.p_cpu_w, s.p_gpu_w)).collect();
    let mem: Vec<f64> = samples.iter().map(|s| s.mem_gb).collect();
    let dt = compute.sample_interval_s;
    Ok(trace_energy(&units, dt)? + memory_energy(&mem, dt, compute.memory_power_per_gb)?)
}

/// Replaces `joules_per_flop` with the value implied by a trace that was
/// recorded while executing `reference_flops` flops.
pub fn calibrate_from_trace(
    compute: &ComputeConfig,
    samples: &[PowerSample],
    reference_flops: u64,
) -> Result<ComputeConfig> {
    if reference_flops == 0 {
        return Err(Error::InvalidConfig(
            "trace reference flops must be positive".into(),
        ));
    }
    let joules = replay_trace(samples, compute)?;
    if !(joules > 0.0) {
        return Err(Error::InvalidConfig("trace holds no energy".into()));
    }
    Ok(ComputeConfig {
        joules_per_flop: joules / reference_flops as f64,
        ..compute.clone()
    })
}

/// Pre-processing, training and communication energy in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub pre_j: f64,
    pub train_j: f64,
    pub comm_j: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.pre_j + self.train_j + self.comm_j
    }

    fn add(&mut self, other: &EnergyBreakdown) {
        self.pre_j += other.pre_j;
        self.train_j += other.train_j;
        self.comm_j += other.comm_j;
    }
}

/// Who spent the energy: the aggregating server or a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Server,
    Client(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: u32,
    pub party: Party,
    pub energy: EnergyBreakdown,
}

/// Per-round, per-party energy, kept sorted by `(round, party)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    entries: BTreeMap<(u32, Party), EnergyBreakdown>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `energy` to the `(round, party)` cell.
    pub fn charge(&mut self, round: u32, party: Party, energy: EnergyBreakdown) -> Result<()> {
        for (i, v) in [energy.pre_j, energy.train_j, energy.comm_j]
            .into_iter()
            .enumerate()
        {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeSample { index: i, value: v });
            }
        }
        self.entries.entry((round, party)).or_default().add(&energy);
        Ok(())
    }

    pub fn charge_pre(&mut self, round: u32, party: Party, joules: f64) -> Result<()> {
        self.charge(
            round,
            party,
            EnergyBreakdown {
                pre_j: joules,
                ..Default::default()
            },
        )
    }

    pub fn charge_train(&mut self, round: u32, party: Party, joules: f64) -> Result<()> {
        self.charge(
            round,
            party,
            EnergyBreakdown {
                train_j: joules,
                ..Default::default()
            },
        )
    }

    pub fn charge_comm(&mut self, round: u32, party: Party, joules: f64) -> Result<()> {
        self.charge(
            round,
            party,
            EnergyBreakdown {
                comm_j: joules,
                ..Default::default()
            },
        )
    }

    pub fn entries(&self) -> impl Iterator<Item = LedgerEntry> + '_ {
        self.entries
            .iter()
            .map(|(&(round, party), &energy)| LedgerEntry {
                round,
                party,
                energy,
            })
    }

    pub fn round_breakdown(&self, round: u32) -> EnergyBreakdown {
        let mut acc = EnergyBreakdown::default();
        for (_, e) in self
            .entries
            .range((round, Party::Server)..)
            .take_while(|((r, _), _)| *r == round)
        {
            acc.add(e);
        }
        acc
    }

    /// Sum of every component over every entry.
    pub fn breakdown(&self) -> EnergyBreakdown {
        let mut acc = EnergyBreakdown::default();
        self.entries.values().for_each(|e| acc.add(e));
        acc
    }

    pub fn total(&self) -> f64 {
        self.breakdown().total()
    }

    pub fn party_breakdown(&self, party: Party) -> EnergyBreakdown {
        let mut acc = EnergyBreakdown::default();
        self.entries
            .iter()
            .filter(|((_, p), _)| *p == party)
            .for_each(|(_, e)| acc.add(e));
        acc
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `100 * total / baseline_total_j`, in percent.
pub fn relative_energy(total_j: f64, baseline_total_j: f64) -> Result<f64> {
    if !(baseline_total_j > 0.0) {
        return Err(Error::NonPositiveBaseline(baseline_total_j));
    }
    Ok(100.0 * total_j / baseline_total_j)
}
