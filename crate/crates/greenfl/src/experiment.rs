//! Multi-seed runs, strategy sweeps and the privacy sweep.

use std::path::Path;

use greenfl_core::energy::{calibrate_from_trace, PowerSample};
use greenfl_core::runner::{privacy_ari, run_experiment, RunConfig, RunResult};
use greenfl_core::selection::Strategy;
use rayon::prelude::*;

use crate::formats::{self, AriRow, RoundRow};
use crate::Result;

/// Runs `cfg` once per seed in parallel; results come back ordered by seed.
pub fn run_seeds(cfg: &RunConfig) -> Result<Vec<RunResult>> {
    let mut out: Vec<RunResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_experiment(cfg, seed))
        .collect::<std::result::Result<_, _>>()?;
    out.sort_by_key(|r| r.seed);
    Ok(out)
}

/// A labelled configuration inside a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub config: RunConfig,
}

/// `name` for strategies without clustering, `name[G=g,gamma=x]` otherwise.
pub fn variant_label(cfg: &RunConfig) -> String {
    let s = &cfg.selection;
    if s.strategy.needs_clustering() {
        format!("{}[G={},gamma={}]", s.strategy, s.g, s.gamma)
    } else {
        s.strategy.to_string()
    }
}

/// Expands strategies x G x gamma; G and gamma only multiply the clustering
/// strategies. Group counts a strategy cannot use on this population are
/// skipped with a warning.
pub fn sweep_variants(
    base: &RunConfig,
    strategies: &[Strategy],
    groups: &[usize],
    gammas: &[f64],
) -> Vec<Variant> {
    let mut out = Vec::new();
    for &strategy in strategies {
        let mut cfg = base.clone();
        cfg.selection.strategy = strategy;
        if !strategy.needs_clustering() {
            out.push(Variant {
                label: variant_label(&cfg),
                config: cfg,
            });
            continue;
        }
        for &g in groups {
            for &gamma in gammas {
                let mut c = cfg.clone();
                c.selection.g = g;
                c.selection.gamma = gamma;
                match c.validate() {
                    Ok(()) => out.push(Variant {
                        label: variant_label(&c),
                        config: c,
                    }),
                    Err(e) => log::warn!("skipping {strategy} with G={g}, gamma={gamma}: {e}"),
                }
            }
        }
    }
    out
}

/// Per-round rows for every result, labelled.
pub fn rows_for(label: &str, results: &[RunResult]) -> Vec<RoundRow> {
    results
        .iter()
        .flat_map(|r| formats::round_rows(label, r.seed, &r.records))
        .collect()
}

/// Writes ledgers and cluster assignments of `results` into `dir`.
pub fn write_run_artifacts(dir: &Path, label: &str, results: &[RunResult]) -> Result<()> {
    let stem: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    for r in results {
        let ledger = dir.join(format!("ledger_{stem}_seed{}.csv", r.seed));
        formats::write_ledger(formats::create(&ledger)?, &r.ledger)?;
        if let Some(a) = &r.assignment {
            let path = dir.join(format!("assignment_{stem}_seed{}.csv", r.seed));
            formats::write_assignment(formats::create(&path)?, a)?;
        }
    }
    Ok(())
}

/// Replaces the analytic joules-per-flop with one calibrated on a measured
/// power trace of a workload of `reference_flops` flops.
pub fn calibrate(cfg: &mut RunConfig, trace: &[PowerSample], reference_flops: u64) -> Result<()> {
    cfg.energy.compute = calibrate_from_trace(&cfg.energy.compute, trace, reference_flops)?;
    Ok(())
}

/// ARI of both clustering methods for every `(gamma, seed)` pair, ordered
/// by gamma then seed.
pub fn privacy_sweep(cfg: &RunConfig, gammas: &[f64]) -> Result<Vec<AriRow>> {
    let jobs: Vec<(f64, u64)> = gammas
        .iter()
        .flat_map(|&g| cfg.seeds.iter().map(move |&s| (g, s)))
        .collect();
    let points = jobs
        .par_iter()
        .map(|&(gamma, seed)| privacy_ari(&cfg.partition, gamma, seed))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(points
        .into_iter()
        .flat_map(|p| {
            [
                AriRow {
                    gamma: p.gamma,
                    seed: p.seed,
                    method: "simclust".into(),
                    ari: p.simclust,
                },
                AriRow {
                    gamma: p.gamma,
                    seed: p.seed,
                    method: "repclust".into(),
                    ari: p.repclust,
                },
            ]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_expansion_skips_unusable_groups() {
        let mut base = RunConfig::default();
        base.partition.clients = 20;
        base.selection.k = 4;
        let v = sweep_variants(&base, &Strategy::ALL, &[2, 5, 20], &[0.0, 1.0]);
        let labels: Vec<&str> = v.iter().map(|x| x.label.as_str()).collect();
        assert!(labels.contains(&"random"));
        assert!(labels.contains(&"powerd"));
        assert!(labels.contains(&"simclust[G=20,gamma=1]"));
        assert!(labels.contains(&"repclust[G=5,gamma=0]"));
        assert!(!labels.contains(&"repclust[G=20,gamma=0]"));
        assert_eq!(v.len(), 2 + 6 + 4);
    }
}
