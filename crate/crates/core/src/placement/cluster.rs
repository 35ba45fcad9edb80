use serde::Serialize;

use crate::error::{Error, Result};

pub type JobId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GpuDescriptor {
    pub gpu_id: usize,
    pub node_id: usize,
    pub in_use: bool,
    pub owner: Option<JobId>,
}

/// GPUs laid out node-major: gpu `g` lives on node `g / gpus_per_node`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterState {
    nodes: usize,
    gpus_per_node: usize,
    gpus: Vec<GpuDescriptor>,
    free: usize,
}

impl ClusterState {
    pub fn new(nodes: usize, gpus_per_node: usize) -> Result<Self> {
        if nodes == 0 || gpus_per_node == 0 {
            return Err(Error::invalid("cluster needs at least one node and one GPU per node"));
        }
        let gpus = (0..nodes * gpus_per_node)
            .map(|g| GpuDescriptor {
                gpu_id: g,
                node_id: g / gpus_per_node,
                in_use: false,
                owner: None,
            })
            .collect();
        Ok(ClusterState {
            nodes,
            gpus_per_node,
            gpus,
            free: nodes * gpus_per_node,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn gpus_per_node(&self) -> usize {
        self.gpus_per_node
    }

    pub fn num_gpus(&self) -> usize {
        self.gpus.len()
    }

    pub fn gpus(&self) -> &[GpuDescriptor] {
        &self.gpus
    }

    pub fn node_of(&self, gpu: usize) -> usize {
        self.gpus[gpu].node_id
    }

    pub fn is_free(&self, gpu: usize) -> bool {
        !self.gpus[gpu].in_use
    }

    pub fn free_count(&self) -> usize {
        self.free
    }

    pub fn in_use_count(&self) -> usize {
        self.gpus.len() - self.free
    }

    /// Free GPU ids in ascending order.
    pub fn free_gpus(&self) -> Vec<usize> {
        self.gpus.iter().filter(|g| !g.in_use).map(|g| g.gpu_id).collect()
    }

    /// Free GPU ids on one node, ascending.
    pub fn free_on_node(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let start = node * self.gpus_per_node;
        self.gpus[start..start + self.gpus_per_node]
            .iter()
            .filter(|g| !g.in_use)
            .map(|g| g.gpu_id)
    }

    pub fn free_per_node(&self) -> Vec<usize> {
        let mut counts = vec![0; self.nodes];
        for g in self.gpus.iter().filter(|g| !g.in_use) {
            counts[g.node_id] += 1;
        }
        counts
    }

    pub fn spans_nodes(&self, gpu_ids: &[usize]) -> bool {
        gpu_ids
            .split_first()
            .is_some_and(|(first, rest)| rest.iter().any(|&g| self.node_of(g) != self.node_of(*first)))
    }

    /// Marks GPUs as used by `job`. Fails without side effects if any GPU is
    /// unknown, repeated, or already in use.
    pub fn mark_in_use(&mut self, job: JobId, gpu_ids: &[usize]) -> Result<()> {
        for (i, &g) in gpu_ids.iter().enumerate() {
            let Some(desc) = self.gpus.get(g) else {
                return Err(Error::Invariant(format!("job {job}: unknown gpu {g}")));
            };
            if desc.in_use || gpu_ids[..i].contains(&g) {
                return Err(Error::Invariant(format!(
                    "job {job}: gpu {g} is already allocated (owner {:?})",
                    desc.owner
                )));
            }
        }
        for &g in gpu_ids {
            self.gpus[g].in_use = true;
            self.gpus[g].owner = Some(job);
        }
        self.free -= gpu_ids.len();
        Ok(())
    }

    /// Releases GPUs held by `job`.
    pub fn release(&mut self, job: JobId, gpu_ids: &[usize]) -> Result<()> {
        for &g in gpu_ids {
            match self.gpus.get(g) {
                Some(d) if d.owner == Some(job) => {}
                _ => {
                    return Err(Error::Invariant(format!(
                        "job {job} releasing gpu {g} it does not hold"
                    )))
                }
            }
        }
        for &g in gpu_ids {
            self.gpus[g].in_use = false;
            self.gpus[g].owner = None;
        }
        self.free += gpu_ids.len();
        Ok(())
    }
}
