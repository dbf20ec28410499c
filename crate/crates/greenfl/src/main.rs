use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use greenfl::bench::scaling_bench;
use greenfl::config::{load_config, split_override};
use greenfl::experiment::{
    calibrate, privacy_sweep, rows_for, run_seeds, sweep_variants, variant_label,
    write_run_artifacts,
};
use greenfl::formats::{self, RoundRow};
use greenfl::report::summarize;
use greenfl_core::runner::{build_federation, RunConfig};
use greenfl_core::selection::Strategy;

/// Energy-accounting federated learning simulator.
///
/// Any config key can be overridden with `--section.key=value` (or
/// `--rounds=N`, `--seeds=[..]`, `--train_ratio=x`).
#[derive(Parser)]
#[command(name = "greenfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over all its seeds.
    Run {
        #[command(flatten)]
        common: Common,
        /// Power trace CSV used to calibrate joules per flop.
        #[arg(long, requires = "trace_reference_flops")]
        power_trace: Option<PathBuf>,
        /// Flops executed while the power trace was recorded.
        #[arg(long)]
        trace_reference_flops: Option<u64>,
        /// Also write every client's dataset.
        #[arg(long)]
        export_data: bool,
    },
    /// Grid over strategies, group counts and privacy levels.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "random,powerd,simclust,repclust"
        )]
        strategies: Vec<Strategy>,
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,25,50")]
        groups: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        gammas: Vec<f64>,
    },
    /// Clustering agreement with the planted partition under label noise.
    DpAri {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4")]
        gammas: Vec<f64>,
    },
    /// Counted cost and wall time of both clustering methods.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
        clients: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,5,10")]
        rhos: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, default_value = "out/bench.csv")]
        out: PathBuf,
    },
    /// Re-summarize existing per-round CSVs.
    Report {
        /// Per-round CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long, default_value = "out/summary.json")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.55,0.6")]
        targets: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value = "random")]
        baseline: String,
    },
}

const TOP_LEVEL_KEYS: [&str; 3] = ["rounds", "seeds", "train_ratio"];

/// Pulls `--a.b=v` / `--a.b v` config overrides out of the argument list.
fn extract_overrides(args: Vec<String>) -> anyhow::Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let key = body.split('=').next().unwrap_or_default();
        if !key.contains('.') && !TOP_LEVEL_KEYS.contains(&key) {
            rest.push(arg);
            continue;
        }
        if body.contains('=') {
            let (k, v) = split_override(body)?;
            overrides.push((k.to_owned(), v.to_owned()));
        } else {
            let Some(v) = it.next() else {
                bail!("override --{key} needs a value")
            };
            overrides.push((key.to_owned(), v));
        }
    }
    Ok((rest, overrides))
}

fn write_summary(
    path: &Path,
    rows: &[RoundRow],
    cfg: &RunConfig,
    baseline: &str,
) -> anyhow::Result<()> {
    let summary = summarize(
        rows,
        &cfg.report.accuracy_targets,
        cfg.report.sustain_window,
        baseline,
    )?;
    serde_json::to_writer_pretty(formats::create(path)?, &summary)?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = extract_overrides(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::Run {
            common,
            power_trace,
            trace_reference_flops,
            export_data,
        } => {
            let mut cfg = load_config(common.config.as_deref(), &overrides)?;
            if let (Some(path), Some(flops)) = (power_trace, trace_reference_flops) {
                let trace = formats::read_power_trace(formats::open(&path)?)?;
                calibrate(&mut cfg, &trace, flops).context("calibrating from power trace")?;
                log::info!(
                    "calibrated {} J/flop from {}",
                    cfg.energy.compute.joules_per_flop,
                    path.display()
                );
            }
            let label = variant_label(&cfg);
            log::info!("running {label} over {} seeds", cfg.seeds.len());
            let results = run_seeds(&cfg)?;
            let rows = rows_for(&label, &results);
            formats::write_rounds(formats::create(&common.out.join("per_round.csv"))?, &rows)?;
            write_run_artifacts(&common.out, &label, &results)?;
            if export_data {
                for &seed in &cfg.seeds {
                    let fed = build_federation(&cfg, seed)?;
                    let path = common.out.join(format!("datasets_seed{seed}.csv"));
                    formats::write_datasets(formats::create(&path)?, &fed.datasets)?;
                }
            }
            write_summary(
                &common.out.join("summary.json"),
                &rows,
                &cfg,
                cfg.report.baseline.name(),
            )?;
            for r in &results {
                log::info!(
                    "seed {}: final accuracy {:.4}, total {:.6e} J",
                    r.seed,
                    r.final_accuracy(),
                    r.ledger.total()
                );
            }
        }
        Command::Sweep {
            common,
            strategies,
            groups,
            gammas,
        } => {
            let base = load_config(common.config.as_deref(), &overrides)?;
            let mut rows = Vec::new();
            for v in sweep_variants(&base, &strategies, &groups, &gammas) {
                log::info!("running {}", v.label);
                let results = run_seeds(&v.config)?;
                write_run_artifacts(&common.out, &v.label, &results)?;
                rows.extend(rows_for(&v.label, &results));
            }
            formats::write_rounds(formats::create(&common.out.join("per_round.csv"))?, &rows)?;
            write_summary(
                &common.out.join("summary.json"),
                &rows,
                &base,
                base.report.baseline.name(),
            )?;
        }
        Command::DpAri { common, gammas } => {
            let cfg = load_config(common.config.as_deref(), &overrides)?;
            let rows = privacy_sweep(&cfg, &gammas)?;
            formats::write_csv(formats::create(&common.out.join("ari.csv"))?, &rows)?;
            for g in &gammas {
                for method in ["simclust", "repclust"] {
                    let v: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.gamma == *g && r.method == method)
                        .map(|r| r.ari)
                        .collect();
                    log::info!(
                        "gamma {g} {method}: mean ARI {:.4}",
                        v.iter().sum::<f64>() / v.len().max(1) as f64
                    );
                }
            }
        }
        Command::Bench {
            clients,
            rhos,
            classes,
            seed,
            out,
        } => {
            let rows = scaling_bench(&clients, &rhos, classes, seed)?;
            formats::write_csv(formats::create(&out)?, &rows)?;
        }
        Command::Report {
            inputs,
            out,
            targets,
            window,
            baseline,
        } => {
            let mut rows = Vec::new();
            for p in &inputs {
                rows.extend(
                    formats::read_rounds(formats::open(p)?)
                        .with_context(|| format!("reading {}", p.display()))?,
                );
            }
            let summary = summarize(&rows, &targets, window, &baseline)?;
            serde_json::to_writer_pretty(formats::create(&out)?, &summary)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_are_separated_from_flags() {
        let (rest, ov) = extract_overrides(strings(&[
            "greenfl",
            "run",
            "--config",
            "a.toml",
            "--selection.k=4",
            "--rounds",
            "7",
            "--out",
            "x",
        ]))
        .unwrap();
        assert_eq!(
            rest,
            strings(&["greenfl", "run", "--config", "a.toml", "--out", "x"])
        );
        assert_eq!(
            ov,
            vec![
                ("selection.k".into(), "4".into()),
                ("rounds".into(), "7".into())
            ]
        );
        assert!(extract_overrides(strings(&["greenfl", "--rounds"])).is_err());
    }
}
