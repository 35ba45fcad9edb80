//! Cross-product sweeps over configuration axes.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use palsim::report::write_atomic;
use palsim::sim::SliceMetrics;
use palsim::variability::VariabilityProfile;
use palsim::Summary;

use crate::config::{parse_placement, parse_scheduler, score_mode_name, Resolved, TraceSource};
use crate::error::CliError;
use crate::run_one;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    LAcross,
    JobLoad,
    Placement,
    Scheduler,
    Seed,
}

impl Axis {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "l_across" => Ok(Axis::LAcross),
            "job_load" => Ok(Axis::JobLoad),
            "placement" => Ok(Axis::Placement),
            "scheduler" => Ok(Axis::Scheduler),
            "seed" => Ok(Axis::Seed),
            other => Err(CliError::Input(format!(
                "unknown sweep axis '{other}' (l_across, job_load, placement, scheduler, seed)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::LAcross => "l_across",
            Axis::JobLoad => "job_load",
            Axis::Placement => "placement",
            Axis::Scheduler => "scheduler",
            Axis::Seed => "seed",
        }
    }

    /// Applies one value to a copy of `base`.
    fn apply(self, base: &mut Resolved, value: &str) -> Result<(), CliError> {
        let bad = |what: &str| CliError::Input(format!("sweep {}: bad {what} '{value}'", self.name()));
        match self {
            Axis::LAcross => base.sim.l_across = value.parse().map_err(|_| bad("number"))?,
            Axis::JobLoad => match &mut base.trace {
                TraceSource::Spec(_, spec) => spec.arrival_rate = value.parse().map_err(|_| bad("number"))?,
                TraceSource::File(_) => {
                    return Err(CliError::Input("sweep job_load needs --trace-spec, not a trace file".into()))
                }
            },
            Axis::Placement => base.sim.placement = parse_placement(value)?,
            Axis::Scheduler => base.sim.scheduler = parse_scheduler(value, base.las_threshold)?,
            Axis::Seed => base.sim.seed = value.parse().map_err(|_| bad("seed"))?,
        }
        base.sim.validate()?;
        if let TraceSource::Spec(_, spec) = &base.trace {
            spec.validate()?;
        }
        Ok(())
    }
}

pub struct Cell {
    pub index: usize,
    pub label: String,
    pub config: Resolved,
}

/// Expands the axes into cells, first axis outermost.
pub fn expand(base: &Resolved, axes: &[(String, String)]) -> Result<Vec<Cell>, CliError> {
    let mut cells = vec![(Vec::<String>::new(), base.clone())];
    for (axis, values) in axes {
        let axis = Axis::parse(axis)?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(CliError::Input(format!("sweep {}: no values", axis.name())));
        }
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for (label, cfg) in &cells {
            for v in &values {
                let mut c = cfg.clone();
                axis.apply(&mut c, v)?;
                let mut l = label.clone();
                l.push(format!("{}={v}", axis.name()));
                next.push((l, c));
            }
        }
        cells = next;
    }
    Ok(cells
        .into_iter()
        .enumerate()
        .map(|(index, (label, config))| Cell {
            index,
            label: label.join(","),
            config,
        })
        .collect())
}

fn cell_dir(root: &Path, cell: &Cell) -> PathBuf {
    let slug: String = cell
        .label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    root.join("cells").join(format!("{:04}_{slug}", cell.index))
}

#[derive(Debug, Serialize)]
struct Row {
    cell: usize,
    label: String,
    status: &'static str,
    error: String,
    dir: String,
    scheduler: &'static str,
    las_threshold: Option<f64>,
    placement: &'static str,
    l_across: f64,
    round_duration: f64,
    seed: u64,
    score_mode: &'static str,
    nodes: usize,
    gpus_per_node: usize,
    arrival_rate: Option<f64>,
    num_jobs: Option<usize>,
    avg_jct: Option<f64>,
    geomean_jct: Option<f64>,
    p99_jct: Option<f64>,
    avg_wait: Option<f64>,
    multi_gpu_jobs: Option<usize>,
    multi_gpu_avg_jct: Option<f64>,
    multi_gpu_geomean_jct: Option<f64>,
    multi_gpu_p99_jct: Option<f64>,
    multi_gpu_avg_wait: Option<f64>,
    makespan: Option<f64>,
    mean_gpus_in_use: Option<f64>,
    mean_utilization: Option<f64>,
    peak_gpus_in_use: Option<usize>,
    total_migrations: Option<u64>,
}

fn row(cell: &Cell, dir: &Path, outcome: &Result<Summary, CliError>) -> Row {
    let cfg = &cell.config;
    let las_threshold = match cfg.sim.scheduler {
        palsim::SchedulerPolicy::Las { threshold } => Some(threshold),
        _ => None,
    };
    let arrival_rate = match &cfg.trace {
        TraceSource::Spec(_, s) => Some(s.arrival_rate),
        TraceSource::File(_) => None,
    };
    let (status, error, m) = match outcome {
        Ok(m) => ("ok", String::new(), Some(m)),
        Err(e) => ("error", e.to_string(), None),
    };
    let all = m.map(|m| &m.all);
    let multi = m.map(|m| &m.multi_gpu);
    let f = |s: Option<&SliceMetrics>, g: fn(&SliceMetrics) -> Option<f64>| s.and_then(g);
    Row {
        cell: cell.index,
        label: cell.label.clone(),
        status,
        error,
        dir: dir.display().to_string(),
        scheduler: cfg.sim.scheduler.name(),
        las_threshold,
        placement: cfg.sim.placement.name(),
        l_across: cfg.sim.l_across,
        round_duration: cfg.sim.round_duration,
        seed: cfg.sim.seed,
        score_mode: score_mode_name(cfg.sim.score_mode),
        nodes: cfg.sim.nodes,
        gpus_per_node: cfg.sim.gpus_per_node,
        arrival_rate,
        num_jobs: all.map(|s| s.num_jobs),
        avg_jct: f(all, |s| s.avg_jct),
        geomean_jct: f(all, |s| s.geomean_jct),
        p99_jct: f(all, |s| s.p99_jct),
        avg_wait: f(all, |s| s.avg_wait),
        multi_gpu_jobs: multi.map(|s| s.num_jobs),
        multi_gpu_avg_jct: f(multi, |s| s.avg_jct),
        multi_gpu_geomean_jct: f(multi, |s| s.geomean_jct),
        multi_gpu_p99_jct: f(multi, |s| s.p99_jct),
        multi_gpu_avg_wait: f(multi, |s| s.avg_wait),
        makespan: m.map(|m| m.makespan),
        mean_gpus_in_use: m.map(|m| m.mean_gpus_in_use),
        mean_utilization: m.map(|m| m.mean_utilization),
        peak_gpus_in_use: m.map(|m| m.peak_gpus_in_use),
        total_migrations: m.map(|m| m.total_migrations),
    }
}

/// Runs every cell, writes per-cell outputs and `sweep.csv`. Failed cells
/// are recorded and the sweep carries on.
pub fn run_sweep(
    base: &Resolved,
    axes: &[(String, String)],
    jobs: Option<usize>,
    profile: &VariabilityProfile<f64>,
) -> Result<usize, CliError> {
    let root = base.out_dir()?.to_path_buf();
    let cells = expand(base, axes)?;
    std::fs::create_dir_all(&root).map_err(|e| CliError::Input(format!("{}: {e}", root.display())))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    let outcomes: Vec<(PathBuf, Result<Summary, CliError>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let dir = cell_dir(&root, cell);
                let outcome = run_one(&cell.config, profile, &dir);
                (dir, outcome)
            })
            .collect()
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    for (cell, (dir, outcome)) in cells.iter().zip(&outcomes) {
        let rel = dir.strip_prefix(&root).unwrap_or(dir);
        w.serialize(row(cell, rel, outcome))
            .map_err(|e| CliError::Input(format!("sweep.csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(format!("sweep.csv: {e}")))?;
    write_atomic(&root.join("sweep.csv"), &bytes)?;

    let failures: Vec<CliError> = outcomes.into_iter().filter_map(|(_, o)| o.err()).collect();
    let n = failures.len();
    // An invariant violation outranks input errors when choosing the exit code.
    let worst = failures.into_iter().reduce(CliError::max_severity);
    match worst {
        None => Ok(cells.len()),
        Some(CliError::Input(m)) => Err(CliError::Input(format!("{n} sweep cell(s) failed; {m}"))),
        Some(CliError::Invariant(m)) => Err(CliError::Invariant(format!("{n} sweep cell(s) failed; {m}"))),
    }
}
