//! Round-based cluster simulation.

mod metrics;
mod overhead;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, geomean, p99_nearest_rank, SliceMetrics, Summary};
pub use overhead::{measure_policy_overhead, OverheadReport};

use crate::error::{Error, Result};
use crate::placement::{
    apply_stickiness, guaranteed_prefix_len, reorder_for_placement, ClusterState, JobId, LvMatrix,
    PlacementPolicy, PlacementRequest, Stickiness, StickyDecision,
};
use crate::scheduler::{Job, JobState, SchedulerPolicy, DEFAULT_LAS_THRESHOLD};
use crate::trace::JobTemplate;
use crate::variability::{bin_pm_scores, sample_profile, PMBinning, VariabilityProfile};

pub const DEFAULT_ROUND_DURATION: f64 = 300.0;
pub const DEFAULT_L_ACROSS: f64 = 1.5;

/// What the placement policy sees as the per-GPU score. The engine always
/// charges raw penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Binned,
    Raw,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binned" => Ok(ScoreMode::Binned),
            "raw" => Ok(ScoreMode::Raw),
            other => Err(Error::invalid(format!("unknown score mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub nodes: usize,
    pub gpus_per_node: usize,
    pub round_duration: f64,
    pub l_across: f64,
    /// Optional per-class locality penalty overriding `l_across`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_across_per_class: Option<Vec<f64>>,
    pub scheduler: SchedulerPolicy,
    pub placement: PlacementPolicy,
    pub seed: u64,
    pub score_mode: ScoreMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nodes: 16,
            gpus_per_node: 4,
            round_duration: DEFAULT_ROUND_DURATION,
            l_across: DEFAULT_L_ACROSS,
            l_across_per_class: None,
            scheduler: SchedulerPolicy::Las {
                threshold: DEFAULT_LAS_THRESHOLD,
            },
            placement: PlacementPolicy::Pal,
            seed: 0,
            score_mode: ScoreMode::Binned,
        }
    }
}

impl SimConfig {
    pub fn cluster_gpus(&self) -> usize {
        self.nodes * self.gpus_per_node
    }

    pub fn l_across_for(&self, class: usize) -> f64 {
        self.l_across_per_class
            .as_ref()
            .and_then(|v| v.get(class).copied())
            .unwrap_or(self.l_across)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.gpus_per_node == 0 {
            return Err(Error::invalid("cluster must have at least one node and one GPU per node"));
        }
        if !(self.round_duration > 0.0) || !self.round_duration.is_finite() {
            return Err(Error::invalid("round_duration must be positive"));
        }
        let check_l = |l: f64| {
            if l >= 1.0 && l.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("l_across must be >= 1, got {l}")))
            }
        };
        check_l(self.l_across)?;
        for &l in self.l_across_per_class.iter().flatten() {
            check_l(l)?;
        }
        if let SchedulerPolicy::Las { threshold } = self.scheduler {
            if !(threshold > 0.0) {
                return Err(Error::invalid("LAS threshold must be positive"));
            }
        }
        Ok(())
    }
}

/// Iteration time under the straggler model: the slowest allocated GPU sets
/// the pace, multiplied by the locality penalty if the job spans nodes.
pub fn effective_iter_time(base_iter_time: f64, penalties: &[f64], spans_nodes: bool, l_across: f64) -> f64 {
    let worst = penalties.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l = if spans_nodes { l_across } else { 1.0 };
    l * worst * base_iter_time
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobRecord {
    pub job_id: JobId,
    pub arrival_time: f64,
    pub start_time: f64,
    pub finish_time: f64,
    pub jct: f64,
    pub wait: f64,
    pub gpu_demand: usize,
    pub class: usize,
    pub migrations: u32,
    pub total_iterations: u64,
    pub base_iter_time: f64,
    /// GPUs held in the job's final round.
    pub final_gpus: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub time: f64,
    pub gpus_in_use: usize,
    pub running_jobs: usize,
    pub queued_jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub cluster_gpus: usize,
    pub round_duration: f64,
    /// Sorted by job id.
    pub jobs: Vec<JobRecord>,
    /// Only rounds with at least one active job are recorded.
    pub rounds: Vec<RoundRecord>,
    pub makespan: f64,
    /// Wall-clock placement time of each recorded round. Not part of the
    /// deterministic output.
    #[serde(skip)]
    pub placement_times: Vec<Duration>,
}

/// Mixes the run seed with the round and job so each placement draw is
/// independent and reproducible.
fn placement_seed(seed: u64, round: u64, job: JobId) -> u64 {
    let mut z = seed ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ job.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-threaded simulation state.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    cluster: ClusterState,
    /// Ground truth charged to jobs.
    truth: VariabilityProfile<f64>,
    /// Scores the placement policy sees, per class and GPU.
    view: PMBinning<f64>,
    lv: LvMatrix<f64>,
    jobs: Vec<Job>,
    index: HashMap<JobId, usize>,
    /// Jobs `[..admitted]` have arrived.
    admitted: usize,
    round: u64,
    rounds: Vec<RoundRecord>,
    placement_times: Vec<Duration>,
    final_gpus: Vec<Vec<usize>>,
}

impl Simulation {
    /// `profile` must have at least as many GPUs as the cluster; larger
    /// profiles are sampled down with the run seed.
    pub fn new(trace: &[JobTemplate], profile: &VariabilityProfile<f64>, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let n = config.cluster_gpus();
        if profile.num_gpus() < n {
            return Err(Error::invalid(format!(
                "profile covers {} GPUs but the cluster has {n}",
                profile.num_gpus()
            )));
        }
        let truth = if profile.num_gpus() == n {
            profile.clone()
        } else {
            sample_profile(profile, n, config.seed)?
        };
        let view = match config.score_mode {
            ScoreMode::Binned => bin_pm_scores(&truth, config.seed)?,
            ScoreMode::Raw => PMBinning::identity(&truth),
        };
        let l: Vec<f64> = (0..truth.num_classes()).map(|c| config.l_across_for(c)).collect();
        let lv = LvMatrix::from_binning(&view, &l)?;

        let mut jobs: Vec<Job> = Vec::with_capacity(trace.len());
        let mut index = HashMap::with_capacity(trace.len());
        let mut sorted: Vec<&JobTemplate> = trace.iter().collect();
        sorted.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time).then(a.job_id.cmp(&b.job_id)));
        for t in sorted {
            if t.gpu_demand == 0 || t.gpu_demand > n {
                return Err(Error::invalid(format!(
                    "job {} demands {} GPUs; the cluster has {n}",
                    t.job_id, t.gpu_demand
                )));
            }
            if t.class >= truth.num_classes() {
                return Err(Error::invalid(format!(
                    "job {} has class {} but the profile has {} classes",
                    t.job_id,
                    t.class,
                    truth.num_classes()
                )));
            }
            if !(t.base_iter_time > 0.0) || t.total_iterations == 0 || !(t.arrival_time >= 0.0) {
                return Err(Error::invalid(format!("job {} has invalid timing fields", t.job_id)));
            }
            if index.insert(t.job_id, jobs.len()).is_some() {
                return Err(Error::invalid(format!("duplicate job id {}", t.job_id)));
            }
            jobs.push(t.to_job());
        }
        let final_gpus = vec![Vec::new(); jobs.len()];
        Ok(Simulation {
            cluster: ClusterState::new(config.nodes, config.gpus_per_node)?,
            config,
            truth,
            view,
            lv,
            jobs,
            index,
            admitted: 0,
            round: 0,
            rounds: Vec::new(),
            placement_times: Vec::new(),
            final_gpus,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn truth(&self) -> &VariabilityProfile<f64> {
        &self.truth
    }

    pub fn view(&self) -> &PMBinning<f64> {
        &self.view
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_done(&self) -> bool {
        self.jobs.iter().all(Job::is_finished)
    }

    fn now(&self) -> f64 {
        self.round as f64 * self.config.round_duration
    }

    /// Round at which a job arriving at `t` becomes active.
    fn arrival_round(&self, t: f64) -> u64 {
        (t / self.config.round_duration).ceil() as u64
    }

    /// Jumps over rounds in which nothing can happen.
    fn skip_idle(&mut self) {
        let any_active = self.jobs[..self.admitted].iter().any(|j| !j.is_finished());
        if !any_active && self.admitted < self.jobs.len() {
            let next = self.arrival_round(self.jobs[self.admitted].arrival_time);
            self.round = self.round.max(next);
        }
    }

    /// Runs one scheduling round and advances the clock.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let now = self.now();
        let rd = self.config.round_duration;
        let cluster_size = self.config.cluster_gpus();
        let policy = self.config.placement;

        // 1. admit arrivals
        while self.admitted < self.jobs.len() && self.arrival_round(self.jobs[self.admitted].arrival_time) <= self.round {
            self.admitted += 1;
        }
        let active: Vec<usize> = (0..self.admitted).filter(|&i| !self.jobs[i].is_finished()).collect();

        // 2-3. scheduling order, guaranteed prefix, placement order
        let (order, prefix_len, placement_order) = {
            let refs: Vec<&Job> = active.iter().map(|&i| &self.jobs[i]).collect();
            let ordered = self.config.scheduler.order(&refs);
            let prefix_len = guaranteed_prefix_len(&ordered, cluster_size);
            let order: Vec<usize> = ordered.iter().map(|j| self.index[&j.job_id]).collect();
            let placement: Vec<usize> = reorder_for_placement(ordered, cluster_size)
                .into_iter()
                .map(|j| self.index[&j.job_id])
                .collect();
            (order, prefix_len, placement)
        };
        let in_prefix: Vec<bool> = {
            let mut v = vec![false; self.jobs.len()];
            for &i in &order[..prefix_len] {
                v[i] = true;
            }
            v
        };

        // 4. stickiness pass
        let mut previous: Vec<Option<Vec<usize>>> = vec![None; self.jobs.len()];
        for &i in &active {
            let job = &self.jobs[i];
            let running = job.state == JobState::Running && in_prefix[i];
            if apply_stickiness(policy.stickiness(), running, job.allocation.is_some()) == StickyDecision::RePlace {
                if let Some(gpus) = self.jobs[i].allocation.take() {
                    self.cluster.release(self.jobs[i].job_id, &gpus)?;
                    previous[i] = Some(gpus);
                }
            }
        }

        // 5. placement
        let started = Instant::now();
        for &i in &placement_order {
            if self.jobs[i].allocation.is_some() {
                continue;
            }
            let job = &self.jobs[i];
            let was_running = job.state == JobState::Running;
            if job.gpu_demand > self.cluster.free_count() {
                continue;
            }
            // A sticky job that lost its guarantee but still fits on its old
            // GPUs was never suspended.
            if let (Stickiness::Sticky, true, Some(prev)) = (policy.stickiness(), was_running, &previous[i]) {
                if prev.iter().all(|&g| self.cluster.is_free(g)) {
                    self.cluster.mark_in_use(job.job_id, prev)?;
                    self.jobs[i].allocation = previous[i].take();
                    continue;
                }
            }
            let req = PlacementRequest {
                job_id: job.job_id,
                class: job.class,
                demand: job.gpu_demand,
            };
            let scores = &self.view.class(job.class).gpu_to_score;
            let seed = placement_seed(self.config.seed, self.round, job.job_id);
            match policy.place(&mut self.cluster, req, scores, self.lv.class(job.class), seed) {
                Ok(alloc) => {
                    let job = &mut self.jobs[i];
                    if was_running && previous[i].as_ref() != Some(&alloc.gpu_ids) {
                        job.migrations += 1;
                    }
                    job.allocation = Some(alloc.gpu_ids);
                }
                Err(Error::InsufficientCapacity { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let placement_time = started.elapsed();

        // 6-8. progress, service, state
        let mut gpus_in_use = 0;
        let mut running_jobs = 0;
        for &i in &active {
            let l_across = self.config.l_across_for(self.jobs[i].class);
            let job = &mut self.jobs[i];
            let Some(gpus) = job.allocation.as_ref() else {
                if job.state == JobState::Running {
                    job.state = JobState::Suspended;
                }
                continue;
            };
            gpus_in_use += gpus.len();
            running_jobs += 1;
            let penalties: Vec<f64> = gpus.iter().map(|&g| self.truth.value(g, job.class)).collect();
            let spans = self.cluster.spans_nodes(gpus);
            let t_iter = effective_iter_time(job.base_iter_time, &penalties, spans, l_across);
            job.start_time.get_or_insert(now);
            job.state = JobState::Running;
            let remaining = job.remaining_iterations();
            let progress = rd / t_iter;
            if progress >= remaining {
                let run = remaining * t_iter;
                job.completed_iterations = job.total_iterations as f64;
                job.attained_service += run * job.gpu_demand as f64;
                job.finish_time = Some(now + run);
                job.state = JobState::Finished;
            } else {
                job.completed_iterations += progress;
                job.attained_service += rd * job.gpu_demand as f64;
            }
        }

        // conservation
        if gpus_in_use != self.cluster.in_use_count() || gpus_in_use > cluster_size {
            return Err(Error::Invariant(format!(
                "round {}: jobs hold {gpus_in_use} GPUs, cluster reports {} of {cluster_size} in use",
                self.round,
                self.cluster.in_use_count()
            )));
        }

        // release finished jobs at the round boundary
        for &i in &active {
            if self.jobs[i].is_finished() {
                if let Some(gpus) = self.jobs[i].allocation.take() {
                    self.cluster.release(self.jobs[i].job_id, &gpus)?;
                    self.final_gpus[i] = gpus;
                }
            }
        }

        let record = RoundRecord {
            round: self.round,
            time: now,
            gpus_in_use,
            running_jobs,
            queued_jobs: active.len() - running_jobs,
        };
        self.rounds.push(record.clone());
        self.placement_times.push(placement_time);
        self.round += 1;
        Ok(record)
    }

    /// Skips idle time and runs the next round; `None` once every job has
    /// finished.
    pub fn step(&mut self) -> Result<Option<RoundRecord>> {
        self.skip_idle();
        if self.is_done() {
            return Ok(None);
        }
        let record = self.run_round()?;
        if record.running_jobs == 0 && record.queued_jobs > 0 && self.cluster.in_use_count() == 0 {
            return Err(Error::Invariant(format!(
                "round {}: {} jobs queued on an idle cluster",
                record.round, record.queued_jobs
            )));
        }
        Ok(Some(record))
    }

    /// Runs until every job has finished.
    pub fn run(mut self) -> Result<SimResult> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }

    fn finish(self) -> SimResult {
        let mut jobs: Vec<JobRecord> = self
            .jobs
            .iter()
            .zip(self.final_gpus)
            .map(|(j, final_gpus)| {
                let start = j.start_time.unwrap_or(j.arrival_time);
                let finish = j.finish_time.unwrap_or(start);
                JobRecord {
                    job_id: j.job_id,
                    arrival_time: j.arrival_time,
                    start_time: start,
                    finish_time: finish,
                    jct: finish - j.arrival_time,
                    wait: start - j.arrival_time,
                    gpu_demand: j.gpu_demand,
                    class: j.class,
                    migrations: j.migrations,
                    total_iterations: j.total_iterations,
                    base_iter_time: j.base_iter_time,
                    final_gpus,
                }
            })
            .collect();
        jobs.sort_by_key(|j| j.job_id);
        let makespan = match (
            jobs.iter().map(|j| j.arrival_time).reduce(f64::min),
            jobs.iter().map(|j| j.finish_time).reduce(f64::max),
        ) {
            (Some(first), Some(last)) => last - first,
            _ => 0.0,
        };
        SimResult {
            cluster_gpus: self.config.cluster_gpus(),
            round_duration: self.config.round_duration,
            jobs,
            rounds: self.rounds,
            makespan,
            placement_times: self.placement_times,
        }
    }
}

/// Simulates `trace` to completion. Deterministic for fixed inputs.
pub fn run_sim(trace: &[JobTemplate], profile: &VariabilityProfile<f64>, config: &SimConfig) -> Result<SimResult> {
    Simulation::new(trace, profile, config.clone())?.run()
}
