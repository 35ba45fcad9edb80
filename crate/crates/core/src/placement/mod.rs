//! GPU placement policies.
//!
//! Every policy picks `demand` GPUs from the cluster's free list for one job.
//! Policies see one score per GPU (the PM-Score of the job's class); the
//! baselines ignore the scores when choosing but still report them on the
//! resulting [`Allocation`].

mod cluster;
mod lv_matrix;

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cluster::{ClusterState, GpuDescriptor, JobId};
pub use lv_matrix::{ClassLvMatrix, Locality, LvMatrix, TraversalStep};

use crate::error::{Error, Result};
use crate::scalar::{cmp_scalar, max_scalar, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementRequest {
    pub job_id: JobId,
    pub class: usize,
    pub demand: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation<T> {
    pub job_id: JobId,
    /// Ascending GPU ids.
    pub gpu_ids: Vec<usize>,
    pub spans_nodes: bool,
    pub max_pm_score: T,
    pub locality_factor: T,
    pub lv_product: T,
}

impl<T: Scalar> Allocation<T> {
    /// Derives spanning, worst score and combined slowdown for a GPU set.
    pub fn describe(job_id: JobId, mut gpu_ids: Vec<usize>, state: &ClusterState, scores: &[T], l_across: T) -> Self {
        gpu_ids.sort_unstable();
        let spans_nodes = state.spans_nodes(&gpu_ids);
        let max_pm_score = max_scalar(gpu_ids.iter().map(|&g| scores[g])).unwrap_or_else(T::zero);
        let locality_factor = if spans_nodes { l_across } else { T::one() };
        Allocation {
            job_id,
            gpu_ids,
            spans_nodes,
            max_pm_score,
            locality_factor,
            lv_product: locality_factor * max_pm_score,
        }
    }
}

fn check_request<T>(state: &ClusterState, req: &PlacementRequest, scores: &[T]) -> Result<()> {
    if req.demand == 0 {
        return Err(Error::invalid(format!("job {}: demand must be >= 1", req.job_id)));
    }
    if scores.len() != state.num_gpus() {
        return Err(Error::invalid(format!(
            "{} scores for a {}-GPU cluster",
            scores.len(),
            state.num_gpus()
        )));
    }
    if state.free_count() < req.demand {
        return Err(Error::InsufficientCapacity {
            demand: req.demand,
            free: state.free_count(),
        });
    }
    Ok(())
}

fn commit<T: Scalar>(state: &mut ClusterState, req: &PlacementRequest, gpus: Vec<usize>, scores: &[T], l_across: T) -> Result<Allocation<T>> {
    let alloc = Allocation::describe(req.job_id, gpus, state, scores, l_across);
    if alloc.gpu_ids.len() != req.demand {
        return Err(Error::Invariant(format!(
            "job {}: policy chose {} GPUs for demand {}",
            req.job_id,
            alloc.gpu_ids.len(),
            req.demand
        )));
    }
    state.mark_in_use(req.job_id, &alloc.gpu_ids)?;
    Ok(alloc)
}

/// Free GPUs sorted best-first (ascending score, then gpu id).
fn free_by_score<T: Scalar>(state: &ClusterState, scores: &[T]) -> Vec<usize> {
    let mut free = state.free_gpus();
    free.sort_by(|&a, &b| cmp_scalar(&scores[a], &scores[b]).then(a.cmp(&b)));
    free
}

/// The `demand` lowest-score free GPUs, regardless of node boundaries.
pub fn choose_pm_first<T: Scalar>(state: &ClusterState, scores: &[T], demand: usize) -> Option<Vec<usize>> {
    let free = free_by_score(state, scores);
    (free.len() >= demand).then(|| free[..demand].to_vec())
}

pub fn pm_first<T: Scalar>(state: &mut ClusterState, req: PlacementRequest, scores: &[T], l_across: T) -> Result<Allocation<T>> {
    check_request(state, &req, scores)?;
    let gpus = choose_pm_first(state, scores, req.demand).expect("capacity checked");
    commit(state, &req, gpus, scores, l_across)
}

/// Best packed set on one node among GPUs scoring at most `limit`: lowest
/// worst-case score, then lexicographically smallest id set.
fn best_packed_set<T: Scalar>(state: &ClusterState, scores: &[T], demand: usize, limit: T) -> Option<Vec<usize>> {
    let mut best: Option<(T, Vec<usize>)> = None;
    for node in 0..state.nodes() {
        let candidates: Vec<usize> = state.free_on_node(node).filter(|&g| scores[g] <= limit).collect();
        if candidates.len() < demand {
            continue;
        }
        for combo in candidates.into_iter().combinations(demand) {
            let worst = max_scalar(combo.iter().map(|&g| scores[g])).expect("demand >= 1");
            let better = match &best {
                None => true,
                Some((w, ids)) => worst < *w || (worst == *w && combo < *ids),
            };
            if better {
                best = Some((worst, combo));
            }
        }
    }
    best.map(|(_, ids)| ids)
}

/// PAL selection: walk the L×V traversal and return the first feasible set.
/// Jobs larger than a node fall back to PM-First.
pub fn choose_pal<T: Scalar>(state: &ClusterState, scores: &[T], demand: usize, lv: &ClassLvMatrix<T>) -> Option<Vec<usize>> {
    if state.free_count() < demand {
        return None;
    }
    if demand > state.gpus_per_node() {
        return choose_pm_first(state, scores, demand);
    }
    for step in &lv.traversal {
        match step.locality {
            Locality::Within => {
                if let Some(ids) = best_packed_set(state, scores, demand, step.score) {
                    return Some(ids);
                }
            }
            Locality::Across => {
                let filtered: Vec<usize> = free_by_score(state, scores)
                    .into_iter()
                    .filter(|&g| scores[g] <= step.score)
                    .collect();
                if filtered.len() >= demand {
                    return Some(filtered[..demand].to_vec());
                }
            }
        }
    }
    None
}

pub fn pal<T: Scalar>(state: &mut ClusterState, req: PlacementRequest, scores: &[T], lv: &ClassLvMatrix<T>) -> Result<Allocation<T>> {
    check_request(state, &req, scores)?;
    match choose_pal(state, scores, req.demand, lv) {
        // The locality factor is recomputed from the chosen set, so an
        // across-node step that lands on one node is charged 1.0.
        Some(gpus) => commit(state, &req, gpus, scores, lv.l_across),
        None => Err(Error::InsufficientCapacity {
            demand: req.demand,
            free: state.free_count(),
        }),
    }
}

/// Minimum-span placement. A single node is used when one fits, choosing the
/// node left with the fewest free GPUs (then lowest node id). Otherwise the
/// fullest nodes are taken and the remainder goes to the tightest node that
/// can hold it. Lowest GPU ids are used within each node.
pub fn choose_packed(state: &ClusterState, demand: usize) -> Option<Vec<usize>> {
    if state.free_count() < demand {
        return None;
    }
    let free = state.free_per_node();
    let tightest = |need: usize, exclude: &[usize]| {
        (0..state.nodes())
            .filter(|n| free[*n] >= need && !exclude.contains(n))
            .min_by_key(|&n| (free[n], n))
    };
    if let Some(node) = tightest(demand, &[]) {
        return Some(state.free_on_node(node).take(demand).collect());
    }
    let mut by_free: Vec<usize> = (0..state.nodes()).filter(|&n| free[n] > 0).collect();
    by_free.sort_by_key(|&n| (std::cmp::Reverse(free[n]), n));
    // Number of nodes a greedy fullest-first cover needs; this is minimal.
    let mut covered = 0;
    let mut span = 0;
    while covered < demand {
        covered += free[by_free[span]];
        span += 1;
    }
    let full: Vec<usize> = by_free[..span - 1].to_vec();
    let taken: usize = full.iter().map(|&n| free[n]).sum();
    let last = tightest(demand - taken, &full).expect("greedy cover guarantees a fit");
    let mut gpus: Vec<usize> = full.iter().flat_map(|&n| state.free_on_node(n)).collect();
    gpus.extend(state.free_on_node(last).take(demand - taken));
    gpus.sort_unstable();
    Some(gpus)
}

pub fn packed<T: Scalar>(state: &mut ClusterState, req: PlacementRequest, scores: &[T], l_across: T) -> Result<Allocation<T>> {
    check_request(state, &req, scores)?;
    let gpus = choose_packed(state, req.demand).expect("capacity checked");
    commit(state, &req, gpus, scores, l_across)
}

/// Uniform random subset of the free list; deterministic per seed.
pub fn choose_random(state: &ClusterState, demand: usize, seed: u64) -> Option<Vec<usize>> {
    let free = state.free_gpus();
    if free.len() < demand {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, free.len(), demand);
    Some(picked.into_iter().map(|i| free[i]).collect())
}

pub fn random_place<T: Scalar>(state: &mut ClusterState, req: PlacementRequest, scores: &[T], l_across: T, seed: u64) -> Result<Allocation<T>> {
    check_request(state, &req, scores)?;
    let gpus = choose_random(state, req.demand, seed).expect("capacity checked");
    commit(state, &req, gpus, scores, l_across)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementPolicy {
    /// Tiresias-style consolidation; running jobs keep their GPUs.
    #[serde(rename = "packed-sticky")]
    PackedSticky,
    /// Gandiva-style consolidation, re-placed every round.
    #[serde(rename = "packed-nonsticky")]
    PackedNonSticky,
    #[serde(rename = "random-sticky")]
    RandomSticky,
    #[serde(rename = "random-nonsticky")]
    RandomNonSticky,
    #[serde(rename = "pm-first")]
    PmFirst,
    #[serde(rename = "pal")]
    Pal,
}

impl PlacementPolicy {
    pub const ALL: [PlacementPolicy; 6] = [
        PlacementPolicy::PackedSticky,
        PlacementPolicy::PackedNonSticky,
        PlacementPolicy::RandomSticky,
        PlacementPolicy::RandomNonSticky,
        PlacementPolicy::PmFirst,
        PlacementPolicy::Pal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlacementPolicy::PackedSticky => "packed-sticky",
            PlacementPolicy::PackedNonSticky => "packed-nonsticky",
            PlacementPolicy::RandomSticky => "random-sticky",
            PlacementPolicy::RandomNonSticky => "random-nonsticky",
            PlacementPolicy::PmFirst => "pm-first",
            PlacementPolicy::Pal => "pal",
        }
    }

    pub fn stickiness(self) -> Stickiness {
        match self {
            PlacementPolicy::PackedSticky | PlacementPolicy::RandomSticky => Stickiness::Sticky,
            _ => Stickiness::NonSticky,
        }
    }

    /// Chooses GPUs without mutating the cluster.
    pub fn choose<T: Scalar>(self, state: &ClusterState, req: &PlacementRequest, scores: &[T], lv: &ClassLvMatrix<T>, seed: u64) -> Option<Vec<usize>> {
        match self {
            PlacementPolicy::PackedSticky | PlacementPolicy::PackedNonSticky => choose_packed(state, req.demand),
            PlacementPolicy::RandomSticky | PlacementPolicy::RandomNonSticky => choose_random(state, req.demand, seed),
            PlacementPolicy::PmFirst => choose_pm_first(state, scores, req.demand),
            PlacementPolicy::Pal => choose_pal(state, scores, req.demand, lv),
        }
    }

    pub fn place<T: Scalar>(self, state: &mut ClusterState, req: PlacementRequest, scores: &[T], lv: &ClassLvMatrix<T>, seed: u64) -> Result<Allocation<T>> {
        match self {
            PlacementPolicy::PackedSticky | PlacementPolicy::PackedNonSticky => packed(state, req, scores, lv.l_across),
            PlacementPolicy::RandomSticky | PlacementPolicy::RandomNonSticky => random_place(state, req, scores, lv.l_across, seed),
            PlacementPolicy::PmFirst => pm_first(state, req, scores, lv.l_across),
            PlacementPolicy::Pal => pal(state, req, scores, lv),
        }
    }
}

impl fmt::Display for PlacementPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlacementPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        PlacementPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .or(match s.as_str() {
                "tiresias" => Some(PlacementPolicy::PackedSticky),
                "gandiva" => Some(PlacementPolicy::PackedNonSticky),
                "pmfirst" | "pm_first" => Some(PlacementPolicy::PmFirst),
                _ => None,
            })
            .ok_or_else(|| Error::invalid(format!("unknown placement policy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stickiness {
    Sticky,
    NonSticky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StickyDecision {
    KeepAllocation,
    RePlace,
}

/// Sticky jobs keep their GPUs while they stay running; everything else is
/// placed afresh. Preempted jobs are passed in as not running.
pub fn apply_stickiness(mode: Stickiness, running: bool, has_allocation: bool) -> StickyDecision {
    match (mode, running && has_allocation) {
        (Stickiness::Sticky, true) => StickyDecision::KeepAllocation,
        _ => StickyDecision::RePlace,
    }
}

/// What the placement reorder needs to know about a queued job.
pub trait PlacementItem {
    fn gpu_demand(&self) -> usize;
    fn class(&self) -> usize;
}

impl PlacementItem for PlacementRequest {
    fn gpu_demand(&self) -> usize {
        self.demand
    }

    fn class(&self) -> usize {
        self.class
    }
}

impl<P: PlacementItem> PlacementItem for &P {
    fn gpu_demand(&self) -> usize {
        (**self).gpu_demand()
    }

    fn class(&self) -> usize {
        (**self).class()
    }
}

/// Length of the queue prefix whose cumulative demand fits in the cluster:
/// the index of the first job at which the running sum exceeds `cluster_size`.
pub fn guaranteed_prefix_len<P: PlacementItem>(queue: &[P], cluster_size: usize) -> usize {
    let mut total = 0usize;
    for (i, job) in queue.iter().enumerate() {
        total += job.gpu_demand();
        if total > cluster_size {
            return i;
        }
    }
    queue.len()
}

/// Stably sorts the guaranteed prefix by class (A first); the rest of the
/// queue keeps its scheduling order.
pub fn reorder_for_placement<P: PlacementItem>(mut queue: Vec<P>, cluster_size: usize) -> Vec<P> {
    let cut = guaranteed_prefix_len(&queue, cluster_size);
    queue[..cut].sort_by_key(|j| j.class());
    queue
}
