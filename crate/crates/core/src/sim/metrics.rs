use serde::Serialize;

use super::{JobRecord, SimResult};
use crate::placement::JobId;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SliceMetrics {
    pub num_jobs: usize,
    pub avg_jct: Option<f64>,
    pub geomean_jct: Option<f64>,
    pub p99_jct: Option<f64>,
    pub avg_wait: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub all: SliceMetrics,
    pub multi_gpu: SliceMetrics,
    pub makespan: f64,
    /// Time-averaged GPUs in use between the first and last simulated round.
    pub mean_gpus_in_use: f64,
    pub mean_utilization: f64,
    pub peak_gpus_in_use: usize,
    pub total_migrations: u64,
}

/// Geometric mean over the strictly positive values; `None` if there are none.
pub fn geomean(values: &[f64]) -> Option<f64> {
    let logs: Vec<f64> = values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
    if logs.is_empty() {
        return None;
    }
    Some((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// 99th percentile, nearest-rank definition.
pub fn p99_nearest_rank(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (0.99 * v.len() as f64).ceil() as usize;
    Some(v[rank.max(1) - 1])
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn slice<'a>(jobs: impl Iterator<Item = &'a JobRecord>) -> SliceMetrics {
    let (jct, wait): (Vec<f64>, Vec<f64>) = jobs.map(|j| (j.jct, j.wait)).unzip();
    SliceMetrics {
        num_jobs: jct.len(),
        avg_jct: mean(&jct),
        geomean_jct: geomean(&jct),
        p99_jct: p99_nearest_rank(&jct),
        avg_wait: mean(&wait),
    }
}

/// Aggregates a finished run. `window` restricts the job slices to ids in
/// `[lo, hi]`; cluster-level numbers always cover the whole run.
pub fn compute_metrics(result: &SimResult, window: Option<(JobId, JobId)>) -> Summary {
    let in_window = |j: &&JobRecord| window.is_none_or(|(lo, hi)| (lo..=hi).contains(&j.job_id));
    let all = slice(result.jobs.iter().filter(in_window));
    let multi_gpu = slice(result.jobs.iter().filter(in_window).filter(|j| j.gpu_demand > 1));

    let (mean_gpus_in_use, peak) = match (result.rounds.first(), result.rounds.last()) {
        (Some(first), Some(last)) => {
            let span = (last.round - first.round + 1) as f64;
            let busy: usize = result.rounds.iter().map(|r| r.gpus_in_use).sum();
            let peak = result.rounds.iter().map(|r| r.gpus_in_use).max().unwrap_or(0);
            (busy as f64 / span, peak)
        }
        _ => (0.0, 0),
    };
    Summary {
        all,
        multi_gpu,
        makespan: result.makespan,
        mean_gpus_in_use,
        mean_utilization: if result.cluster_gpus > 0 {
            mean_gpus_in_use / result.cluster_gpus as f64
        } else {
            0.0
        },
        peak_gpus_in_use: peak,
        total_migrations: result.jobs.iter().map(|j| j.migrations as u64).sum(),
    }
}
