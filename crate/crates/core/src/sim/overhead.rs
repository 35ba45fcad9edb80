use serde::Serialize;

use super::{run_sim, SimConfig};
use crate::error::Result;
use crate::trace::JobTemplate;
use crate::variability::VariabilityProfile;

/// Distribution of per-round placement wall-clock time for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadReport {
    pub cluster_gpus: usize,
    pub placement: String,
    pub rounds: usize,
    pub min_s: f64,
    pub median_s: f64,
    pub max_s: f64,
    #[serde(skip)]
    pub samples_s: Vec<f64>,
}

/// Runs each configuration and times only the placement step of every round.
pub fn measure_policy_overhead(
    trace: &[JobTemplate],
    profile: &VariabilityProfile<f64>,
    configs: &[SimConfig],
) -> Result<Vec<OverheadReport>> {
    configs
        .iter()
        .map(|config| {
            let result = run_sim(trace, profile, config)?;
            let mut samples: Vec<f64> = result.placement_times.iter().map(|d| d.as_secs_f64()).collect();
            samples.sort_by(f64::total_cmp);
            let n = samples.len();
            let median = match n {
                0 => 0.0,
                _ if n % 2 == 1 => samples[n / 2],
                _ => 0.5 * (samples[n / 2 - 1] + samples[n / 2]),
            };
            Ok(OverheadReport {
                cluster_gpus: config.cluster_gpus(),
                placement: config.placement.name().to_string(),
                rounds: n,
                min_s: samples.first().copied().unwrap_or(0.0),
                median_s: median,
                max_s: samples.last().copied().unwrap_or(0.0),
                samples_s: samples,
            })
        })
        .collect()
}
