//! Scheduling policies: decide the order in which active jobs are served
//! each round.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::{JobId, PlacementItem};

/// Default LAS demotion threshold, in GPU-seconds of attained service.
pub const DEFAULT_LAS_THRESHOLD: f64 = 3200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Suspended,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Job {
    pub job_id: JobId,
    pub arrival_time: f64,
    pub gpu_demand: usize,
    pub class: usize,
    pub total_iterations: u64,
    /// Iteration time on a median GPU with no locality penalty, in seconds.
    pub base_iter_time: f64,
    /// GPU-seconds of service received so far.
    pub attained_service: f64,
    pub completed_iterations: f64,
    pub state: JobState,
    pub allocation: Option<Vec<usize>>,
    pub start_time: Option<f64>,
    pub finish_time: Option<f64>,
    pub migrations: u32,
}

impl Job {
    pub fn new(job_id: JobId, arrival_time: f64, gpu_demand: usize, class: usize, total_iterations: u64, base_iter_time: f64) -> Self {
        Job {
            job_id,
            arrival_time,
            gpu_demand,
            class,
            total_iterations,
            base_iter_time,
            attained_service: 0.0,
            completed_iterations: 0.0,
            state: JobState::Queued,
            allocation: None,
            start_time: None,
            finish_time: None,
            migrations: 0,
        }
    }

    pub fn remaining_iterations(&self) -> f64 {
        (self.total_iterations as f64 - self.completed_iterations).max(0.0)
    }

    /// Remaining time at the base iteration time (the trace knows job lengths).
    pub fn remaining_time(&self) -> f64 {
        self.remaining_iterations() * self.base_iter_time
    }

    pub fn is_finished(&self) -> bool {
        self.state == JobState::Finished
    }
}

impl PlacementItem for Job {
    fn gpu_demand(&self) -> usize {
        self.gpu_demand
    }

    fn class(&self) -> usize {
        self.class
    }
}

fn by_arrival(a: &Job, b: &Job) -> std::cmp::Ordering {
    a.arrival_time
        .total_cmp(&b.arrival_time)
        .then(a.job_id.cmp(&b.job_id))
}

/// Arrival order, ties by job id.
pub fn fifo_order<'a>(jobs: &[&'a Job]) -> Vec<&'a Job> {
    let mut v = jobs.to_vec();
    v.sort_by(|a, b| by_arrival(a, b));
    v
}

/// Two-level least-attained-service: jobs below `threshold` GPU-seconds come
/// first; each level is FIFO.
pub fn las_order<'a>(jobs: &[&'a Job], threshold: f64) -> Vec<&'a Job> {
    let mut v = jobs.to_vec();
    v.sort_by(|a, b| {
        let level = |j: &Job| !(j.attained_service < threshold);
        level(a).cmp(&level(b)).then(by_arrival(a, b))
    });
    v
}

/// Shortest remaining time first; ties by arrival, then job id.
pub fn srtf_order<'a>(jobs: &[&'a Job]) -> Vec<&'a Job> {
    let mut v = jobs.to_vec();
    v.sort_by(|a, b| {
        a.remaining_time()
            .total_cmp(&b.remaining_time())
            .then(by_arrival(a, b))
    });
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SchedulerPolicy {
    Fifo,
    Las { threshold: f64 },
    Srtf,
}

impl SchedulerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerPolicy::Fifo => "fifo",
            SchedulerPolicy::Las { .. } => "las",
            SchedulerPolicy::Srtf => "srtf",
        }
    }

    pub fn from_name(name: &str, las_threshold: f64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "fifo" => Ok(SchedulerPolicy::Fifo),
            "las" | "tiresias" => {
                if !(las_threshold > 0.0) {
                    return Err(Error::invalid("LAS threshold must be positive"));
                }
                Ok(SchedulerPolicy::Las {
                    threshold: las_threshold,
                })
            }
            "srtf" => Ok(SchedulerPolicy::Srtf),
            other => Err(Error::invalid(format!("unknown scheduler '{other}'"))),
        }
    }

    pub fn order<'a>(&self, jobs: &[&'a Job]) -> Vec<&'a Job> {
        match *self {
            SchedulerPolicy::Fifo => fifo_order(jobs),
            SchedulerPolicy::Las { threshold } => las_order(jobs, threshold),
            SchedulerPolicy::Srtf => srtf_order(jobs),
        }
    }
}

impl fmt::Display for SchedulerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerPolicy::from_name(s, DEFAULT_LAS_THRESHOLD)
    }
}
