//! Summary statistics over per-round results.

use std::collections::BTreeMap;

use greenfl_core::energy::{relative_energy, EnergyBreakdown};
use greenfl_core::runner::{energy_to_sustained_accuracy, RoundRecord};
use serde::{Deserialize, Serialize};

use crate::formats::RoundRow;
use crate::{Error, Result};

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Some(Stat {
            mean,
            std: var.sqrt(),
            n,
        })
    }
}

/// Energy needed to hold one accuracy target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub target: f64,
    /// Seeds that sustained the target.
    pub reached: usize,
    pub joules: Option<Stat>,
    pub first_round: Option<Stat>,
    /// Median first round over all seeds; seeds that never got there count
    /// as later than any that did. `None` when at most half reached it.
    pub median_round: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub seeds: Vec<u64>,
    pub rounds: u32,
    pub final_accuracy: Stat,
    pub total_energy_j: Stat,
    pub mean_breakdown: EnergyBreakdown,
    /// Mean total energy relative to the baseline, in percent.
    pub relative_energy_pct: Option<f64>,
    pub targets: Vec<TargetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub baseline: String,
    pub sustain_window: usize,
    pub strategies: Vec<StrategySummary>,
}

/// Rebuilds round records (without selected ids) from CSV rows.
pub fn records_from_rows(rows: &[&RoundRow]) -> Vec<RoundRecord> {
    rows.iter()
        .map(|r| RoundRecord {
            round: r.round,
            selected: Vec::new(),
            accuracy: r.accuracy,
            loss: r.loss,
            energy: EnergyBreakdown {
                pre_j: r.pre_j,
                train_j: r.train_j,
                comm_j: r.comm_j,
            },
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Groups rows by strategy label and seed and summarizes every label.
pub fn summarize(
    rows: &[RoundRow],
    targets: &[f64],
    window: usize,
    baseline: &str,
) -> Result<Summary> {
    if rows.is_empty() {
        return Err(Error::Invalid("no per-round rows to summarize".into()));
    }
    let mut runs: BTreeMap<&str, BTreeMap<u64, Vec<&RoundRow>>> = BTreeMap::new();
    for r in rows {
        runs.entry(&r.strategy)
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r);
    }
    let mut strategies = Vec::new();
    for (label, seeds) in &runs {
        let mut finals = Vec::new();
        let mut totals = Vec::new();
        let mut sum = EnergyBreakdown::default();
        let mut per_seed = Vec::new();
        let mut rounds = 0;
        for rs in seeds.values() {
            let mut rs = rs.clone();
            rs.sort_by_key(|r| r.round);
            let recs = records_from_rows(&rs);
            finals.push(recs.last().map_or(0.0, |r| r.accuracy));
            totals.push(recs.iter().map(|r| r.energy.total()).sum::<f64>());
            for r in &recs {
                sum.pre_j += r.energy.pre_j;
                sum.train_j += r.energy.train_j;
                sum.comm_j += r.energy.comm_j;
            }
            rounds = rounds.max(recs.len() as u32);
            per_seed.push(recs);
        }
        let n = seeds.len() as f64;
        let targets = targets
            .iter()
            .map(|&target| {
                let hits: Vec<_> = per_seed
                    .iter()
                    .map(|recs| energy_to_sustained_accuracy(recs, target, window))
                    .collect();
                let got: Vec<_> = hits.iter().flatten().collect();
                let ranks: Vec<f64> = hits
                    .iter()
                    .map(|h| h.map_or(f64::INFINITY, |h| f64::from(h.round)))
                    .collect();
                let med = median(ranks);
                TargetEntry {
                    target,
                    reached: got.len(),
                    joules: Stat::of(&got.iter().map(|h| h.joules).collect::<Vec<_>>()),
                    first_round: Stat::of(
                        &got.iter().map(|h| f64::from(h.round)).collect::<Vec<_>>(),
                    ),
                    median_round: med.is_finite().then_some(med),
                }
            })
            .collect();
        strategies.push(StrategySummary {
            strategy: label.to_string(),
            seeds: seeds.keys().copied().collect(),
            rounds,
            final_accuracy: Stat::of(&finals).expect("at least one seed"),
            total_energy_j: Stat::of(&totals).expect("at least one seed"),
            mean_breakdown: EnergyBreakdown {
                pre_j: sum.pre_j / n,
                train_j: sum.train_j / n,
                comm_j: sum.comm_j / n,
            },
            relative_energy_pct: None,
            targets,
        });
    }
    let base_total = strategies
        .iter()
        .find(|s| s.strategy == baseline)
        .map(|s| s.total_energy_j.mean);
    match base_total {
        Some(b) => {
            for s in &mut strategies {
                s.relative_energy_pct = Some(relative_energy(s.total_energy_j.mean, b)?);
            }
        }
        None => log::warn!(
            "baseline `{baseline}` not among the summarized runs; relative energy omitted"
        ),
    }
    Ok(Summary {
        baseline: baseline.to_owned(),
        sustain_window: window,
        strategies,
    })
}
