//! Clustering cost over a grid of population sizes and partition counts.

use std::time::Instant;

use greenfl_core::clustering::{repclust, simclust, RepClustConfig};
use greenfl_core::energy::CostCounter;
use greenfl_core::rng::stream_seed;
use greenfl_core::runner::planted_distributions;
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub clients: usize,
    pub rho: usize,
    pub method: String,
    pub groups: usize,
    pub flops: u64,
    pub divergence_evals: u64,
    pub iterations: usize,
    pub wall_s: f64,
    /// Empty for measured rows, the reason otherwise.
    pub note: String,
}

fn skipped(clients: usize, rho: usize, method: &str, note: String) -> BenchRow {
    log::warn!("bench L={clients} rho={rho} {method}: {note}");
    BenchRow {
        clients,
        rho,
        method: method.into(),
        groups: 0,
        flops: 0,
        divergence_evals: 0,
        iterations: 0,
        wall_s: 0.0,
        note,
    }
}

/// SimClust with `G = rho` and RepClust with `G = L / rho` on planted data
/// for every `(L, rho)` pair. Pairs where `rho` does not divide `L` or
/// `classes` produce a skipped row per method instead of an error.
pub fn scaling_bench(
    clients: &[usize],
    rhos: &[usize],
    classes: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &l in clients {
        for &rho in rhos {
            if rho == 0 || l % rho != 0 || !classes.is_multiple_of(rho) {
                let note = format!("skipped: rho={rho} does not divide L={l} and M={classes}");
                rows.push(skipped(l, rho, "simclust", note.clone()));
                rows.push(skipped(l, rho, "repclust", note));
                continue;
            }
            let dists = planted_distributions(l, rho, classes, seed)?;
            let cluster_seed = stream_seed(seed, "cluster", 0);

            let mut cost = CostCounter::default();
            let t = Instant::now();
            let out = simclust(&dists, rho, cluster_seed, &mut cost)?;
            rows.push(BenchRow {
                clients: l,
                rho,
                method: "simclust".into(),
                groups: rho,
                flops: cost.flops(),
                divergence_evals: cost.divergence_evals(),
                iterations: out.iterations,
                wall_s: t.elapsed().as_secs_f64(),
                note: String::new(),
            });

            let g = l / rho;
            if 2 * g > l {
                rows.push(skipped(
                    l,
                    rho,
                    "repclust",
                    format!("skipped: G={g} leaves groups smaller than 2"),
                ));
                continue;
            }
            let mut cost = CostCounter::default();
            let t = Instant::now();
            let out = repclust(
                &dists,
                &RepClustConfig {
                    groups: g,
                    ..Default::default()
                },
                cluster_seed,
                &mut cost,
            )?;
            rows.push(BenchRow {
                clients: l,
                rho,
                method: "repclust".into(),
                groups: g,
                flops: cost.flops(),
                divergence_evals: cost.divergence_evals(),
                iterations: out.passes,
                wall_s: t.elapsed().as_secs_f64(),
                note: String::new(),
            });
        }
    }
    Ok(rows)
}
