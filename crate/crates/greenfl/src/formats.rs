//! CSV layouts.
//!
//! | file | columns |
//! |------|---------|
//! | datasets | `client_id,label,feature_0..feature_{d-1}` |
//! | assignments | `client_id,group_id` |
//! | power trace (input) | `t_index,p_cpu_w,p_gpu_w,mem_gb` |
//! | ledger | `round,client_id,pre_j,train_j,comm_j` (`client_id` is `server` for the server) |
//! | per-round | `seed,round,strategy,accuracy,loss,pre_j,train_j,comm_j,cum_total_j` |
//! | privacy sweep | `gamma,seed,method,ari` |

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use greenfl_core::clustering::ClusterAssignment;
use greenfl_core::energy::{EnergyLedger, Party, PowerSample};
use greenfl_core::partition::ClientDataset;
use greenfl_core::runner::RoundRecord;
use serde::{Deserialize, Serialize};

use crate::{io_err, Error, Result};

pub fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map_err(io_err(path))
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(io_err(path))
}

pub fn write_datasets<W: Write>(out: W, data: &[ClientDataset]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = data.first().map_or(0, |d| d.feature_dim);
    let mut header = vec!["client_id".to_owned(), "label".to_owned()];
    header.extend((0..dim).map(|i| format!("feature_{i}")));
    w.write_record(&header)?;
    for ds in data {
        for i in 0..ds.n_samples() {
            let mut rec = vec![ds.client_id.to_string(), ds.labels[i].to_string()];
            rec.extend(ds.row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(io_err("<datasets>"))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct AssignmentRow {
    client_id: usize,
    group_id: usize,
}

pub fn write_assignment<W: Write>(out: W, a: &ClusterAssignment) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (client_id, &group_id) in a.labels().iter().enumerate() {
        w.serialize(AssignmentRow {
            client_id,
            group_id,
        })?;
    }
    w.flush().map_err(io_err("<assignment>"))?;
    Ok(())
}

/// Rows may come in any order but must cover clients `0..L` exactly once.
pub fn read_assignment<R: Read>(input: R) -> Result<ClusterAssignment> {
    let mut rows: Vec<AssignmentRow> = csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    rows.sort_by_key(|r| r.client_id);
    if rows.iter().enumerate().any(|(i, r)| r.client_id != i) {
        return Err(Error::Invalid(
            "assignment must list clients 0..L exactly once".into(),
        ));
    }
    let groups = rows.iter().map(|r| r.group_id + 1).max().unwrap_or(0);
    Ok(ClusterAssignment::new(
        rows.into_iter().map(|r| r.group_id).collect(),
        groups,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TraceRow {
    t_index: u64,
    p_cpu_w: f64,
    p_gpu_w: f64,
    mem_gb: f64,
}

/// Power samples ordered by `t_index`.
pub fn read_power_trace<R: Read>(input: R) -> Result<Vec<PowerSample>> {
    let mut rows: Vec<TraceRow> = csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    rows.sort_by_key(|r| r.t_index);
    Ok(rows
        .into_iter()
        .map(|r| PowerSample {
            p_cpu_w: r.p_cpu_w,
            p_gpu_w: r.p_gpu_w,
            mem_gb: r.mem_gb,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LedgerRow {
    round: u32,
    client_id: String,
    pre_j: f64,
    train_j: f64,
    comm_j: f64,
}

pub fn write_ledger<W: Write>(out: W, ledger: &EnergyLedger) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in ledger.entries() {
        let client_id = match e.party {
            Party::Server => "server".to_owned(),
            Party::Client(j) => j.to_string(),
        };
        w.serialize(LedgerRow {
            round: e.round,
            client_id,
            pre_j: e.energy.pre_j,
            train_j: e.energy.train_j,
            comm_j: e.energy.comm_j,
        })?;
    }
    w.flush().map_err(io_err("<ledger>"))?;
    Ok(())
}

/// One line of the per-round CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub seed: u64,
    pub round: u32,
    pub strategy: String,
    pub accuracy: f64,
    pub loss: f64,
    pub pre_j: f64,
    pub train_j: f64,
    pub comm_j: f64,
    pub cum_total_j: f64,
}

pub fn round_rows(label: &str, seed: u64, records: &[RoundRecord]) -> Vec<RoundRow> {
    let mut cum = 0.0;
    records
        .iter()
        .map(|r| {
            cum += r.energy.total();
            RoundRow {
                seed,
                round: r.round,
                strategy: label.to_owned(),
                accuracy: r.accuracy,
                loss: r.loss,
                pre_j: r.energy.pre_j,
                train_j: r.energy.train_j,
                comm_j: r.energy.comm_j,
                cum_total_j: cum,
            }
        })
        .collect()
}

pub fn write_rounds<W: Write>(out: W, rows: &[RoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err("<rounds>"))?;
    Ok(())
}

pub fn read_rounds<R: Read>(input: R) -> Result<Vec<RoundRow>> {
    Ok(csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AriRow {
    pub gamma: f64,
    pub seed: u64,
    pub method: String,
    pub ari: f64,
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err("<csv>"))?;
    Ok(())
}
