use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "rounds = 6\nseeds = [0, 1]\n[partition]\nclients = 10\nrho = 2\nsamples_per_client = 50\n[train]\nepochs = 1\n[selection]\nK = 2\nG = 5\n";

fn greenfl(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_greenfl"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = setup();
    greenfl(
        dir.path(),
        &[
            "run",
            "-c",
            "small.toml",
            "-o",
            "out",
            "--export-data",
            "--selection.strategy=simclust",
            "--rounds",
            "4",
        ],
    );
    let out = dir.path().join("out");
    let rows = lines(&out.join("per_round.csv"));
    assert_eq!(
        rows[0],
        "seed,round,strategy,accuracy,loss,pre_j,train_j,comm_j,cum_total_j"
    );
    assert_eq!(rows.len(), 1 + 2 * 4);
    assert!(rows[1].contains(",\"simclust[G=5,gamma=0]\","));
    for seed in 0..2 {
        assert!(out.join(format!("datasets_seed{seed}.csv")).exists());
        assert!(out
            .join(format!("ledger_simclust_G_5_gamma_0__seed{seed}.csv"))
            .exists());
        assert!(out
            .join(format!("assignment_simclust_G_5_gamma_0__seed{seed}.csv"))
            .exists());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["baseline"], "random");
}

#[test]
fn invalid_override_is_rejected() {
    let dir = setup();
    let out = Command::new(env!("CARGO_BIN_EXE_greenfl"))
        .current_dir(dir.path())
        .args(["run", "-c", "small.toml", "--selection.k=50"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn sweep_then_report_reproduces_baseline() {
    let dir = setup();
    greenfl(
        dir.path(),
        &[
            "sweep",
            "-c",
            "small.toml",
            "-o",
            "sw",
            "--strategies",
            "random,repclust",
            "--groups",
            "2,5",
        ],
    );
    let rows = lines(&dir.path().join("sw/per_round.csv"));
    for label in [
        "random",
        "\"repclust[G=2,gamma=0]\"",
        "\"repclust[G=5,gamma=0]\"",
    ] {
        assert_eq!(
            rows.iter()
                .filter(|r| r.contains(&format!(",{label},")))
                .count(),
            12,
            "{label}"
        );
    }
    greenfl(
        dir.path(),
        &[
            "report",
            "sw/per_round.csv",
            "-o",
            "sw/again.json",
            "--targets",
            "0.3",
        ],
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sw/again.json")).unwrap())
            .unwrap();
    let random = v["strategies"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["strategy"] == "random")
        .unwrap();
    assert_eq!(random["relative_energy_pct"], 100.0);
}

#[test]
fn dp_ari_and_bench_write_tables() {
    let dir = setup();
    std::fs::write(
        dir.path().join("planted.toml"),
        "seeds = [0, 1, 2]\n[partition]\nclients = 20\nrho = 5\nalpha = \"inf\"\n",
    )
    .unwrap();
    greenfl(
        dir.path(),
        &[
            "dp-ari",
            "-c",
            "planted.toml",
            "-o",
            "dp",
            "--gammas",
            "0,1",
        ],
    );
    let ari = lines(&dir.path().join("dp/ari.csv"));
    assert_eq!(ari[0], "gamma,seed,method,ari");
    assert_eq!(ari.len(), 1 + 2 * 3 * 2);
    assert!(ari[1..]
        .iter()
        .filter(|r| r.starts_with("0,"))
        .all(|r| r.ends_with(",1")));

    greenfl(
        dir.path(),
        &[
            "bench",
            "--clients",
            "20,40",
            "--rhos",
            "2,3",
            "-o",
            "b.csv",
        ],
    );
    let bench = lines(&dir.path().join("b.csv"));
    assert!(bench[0].starts_with("clients,rho,method"));
    assert_eq!(bench.len(), 1 + 2 * 2 * 2);
    assert!(bench
        .iter()
        .filter(|r| r.starts_with("20,2,"))
        .all(|r| r.ends_with(',')));
    assert!(bench
        .iter()
        .filter(|r| r.starts_with("20,3,"))
        .all(|r| r.contains("skipped")));
}
