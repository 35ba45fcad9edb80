//! Output files of a simulation run: `jobs.csv`, `rounds.csv`, `summary.json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::classifier::class_label;
use crate::error::{Error, Result};
use crate::sim::{SimResult, Summary};

pub const JOBS_HEADER: [&str; 11] = [
    "job_id",
    "placement",
    "arrival_time_s",
    "start_time_s",
    "finish_time_s",
    "jct_s",
    "wait_s",
    "gpu_demand",
    "class",
    "migrations",
    "gpus",
];

pub const ROUNDS_HEADER: [&str; 6] = ["placement", "round", "time_s", "gpus_in_use", "running_jobs", "queued_jobs"];

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).expect("in-memory csv write");
    w.into_inner().expect("in-memory csv flush")
}

pub fn jobs_csv(result: &SimResult, placement: &str) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(JOBS_HEADER)?;
        for j in &result.jobs {
            let gpus = j.final_gpus.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" ");
            w.write_record([
                j.job_id.to_string(),
                placement.to_string(),
                j.arrival_time.to_string(),
                j.start_time.to_string(),
                j.finish_time.to_string(),
                j.jct.to_string(),
                j.wait.to_string(),
                j.gpu_demand.to_string(),
                class_label(j.class),
                j.migrations.to_string(),
                gpus,
            ])?;
        }
        Ok(())
    })
}

pub fn rounds_csv(result: &SimResult, placement: &str) -> Vec<u8> {
    csv_bytes(|w| {
        w.write_record(ROUNDS_HEADER)?;
        for r in &result.rounds {
            w.write_record([
                placement.to_string(),
                r.round.to_string(),
                r.time.to_string(),
                r.gpus_in_use.to_string(),
                r.running_jobs.to_string(),
                r.queued_jobs.to_string(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct SummaryFile<'a, C: Serialize> {
    seed: u64,
    config: &'a C,
    metrics: &'a Summary,
}

/// Pretty JSON with the resolved configuration, seed and metrics.
pub fn summary_json<C: Serialize>(config: &C, seed: u64, metrics: &Summary) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&SummaryFile { seed, config, metrics }).expect("summary serializes");
    out.push(b'\n');
    out
}

/// Writes the three run outputs into `dir`, creating it if needed.
pub fn write_run<C: Serialize>(dir: &Path, result: &SimResult, placement: &str, config: &C, seed: u64, metrics: &Summary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("jobs.csv"), &jobs_csv(result, placement))?;
    write_atomic(&dir.join("rounds.csv"), &rounds_csv(result, placement))?;
    write_atomic(&dir.join("summary.json"), &summary_json(config, seed, metrics))
}
