//! Node pool: live per-node resource accounting.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::SystemConfig;
use crate::resources::ResourceVector;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("job {job_id}: allocation oversubscribes node {node} (free {free}, requested {requested})")]
    Oversubscribed {
        job_id: u64,
        node: String,
        free: ResourceVector,
        requested: ResourceVector,
    },
    #[error("job {job_id}: releasing {requested} from node {node} which only has {used} in use")]
    OverRelease {
        job_id: u64,
        node: String,
        used: ResourceVector,
        requested: ResourceVector,
    },
    #[error("job {job_id}: node index {index} out of range")]
    UnknownNode { job_id: u64, index: usize },
    #[error("job {job_id}: allocation is malformed ({reason})")]
    Malformed { job_id: u64, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    /// `"<group>_<index>"`, e.g. `g0_17`.
    pub id: String,
    pub group: String,
    pub capacity: ResourceVector,
    pub used: ResourceVector,
}

impl NodeState {
    pub fn free(&self) -> ResourceVector {
        self.capacity.saturating_sub(&self.used)
    }

    /// Mean `used/capacity` over the resource kinds in `kinds` that this node
    /// actually has.
    pub fn load_over<'a>(&self, kinds: impl Iterator<Item = &'a str>) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for kind in kinds {
            let cap = self.capacity.get(kind);
            if cap > 0 {
                sum += self.used.get(kind) as f64 / cap as f64;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Placement of one job: the same per-node request on each of `nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub job_id: u64,
    /// Distinct indices into the pool's node list.
    pub nodes: Vec<usize>,
    pub per_node: ResourceVector,
}

impl Allocation {
    pub fn entries(&self) -> impl Iterator<Item = (usize, &ResourceVector)> {
        self.nodes.iter().map(move |&n| (n, &self.per_node))
    }

    fn validate(&self) -> Result<(), PoolError> {
        if self.nodes.is_empty() {
            return Err(PoolError::Malformed {
                job_id: self.job_id,
                reason: "no nodes",
            });
        }
        let mut seen = self.nodes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.nodes.len() {
            return Err(PoolError::Malformed {
                job_id: self.job_id,
                reason: "duplicate nodes",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePool {
    nodes: Vec<NodeState>,
}

/// Aggregate usage of one resource kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usage {
    pub used: u64,
    pub capacity: u64,
    pub ratio: f64,
}

impl NodePool {
    /// Nodes in group-declaration order, then by index within the group.
    pub fn build(cfg: &SystemConfig) -> Self {
        let mut nodes = Vec::with_capacity(cfg.node_count() as usize);
        for g in &cfg.groups {
            for i in 0..g.count {
                nodes.push(NodeState {
                    id: format!("{}_{}", g.name, i),
                    group: g.name.clone(),
                    capacity: g.capacity.clone(),
                    used: ResourceVector::new(),
                });
            }
        }
        NodePool { nodes }
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids<'a>(&'a self, alloc: &'a Allocation) -> impl Iterator<Item = &'a str> + 'a {
        alloc.nodes.iter().map(move |&n| self.nodes[n].id.as_str())
    }

    /// Applies `alloc`, or leaves the pool untouched and reports the first
    /// node that cannot hold its share.
    pub fn allocate(&mut self, alloc: &Allocation) -> Result<(), PoolError> {
        alloc.validate()?;
        for &n in &alloc.nodes {
            let node = self.nodes.get(n).ok_or(PoolError::UnknownNode {
                job_id: alloc.job_id,
                index: n,
            })?;
            if !alloc.per_node.fits_within(&node.free()) {
                return Err(PoolError::Oversubscribed {
                    job_id: alloc.job_id,
                    node: node.id.clone(),
                    free: node.free(),
                    requested: alloc.per_node.clone(),
                });
            }
        }
        for &n in &alloc.nodes {
            let node = &mut self.nodes[n];
            node.used = node
                .used
                .checked_add(&alloc.per_node)
                .expect("bounded by capacity");
        }
        Ok(())
    }

    pub fn release(&mut self, alloc: &Allocation) -> Result<(), PoolError> {
        alloc.validate()?;
        for &n in &alloc.nodes {
            let node = self.nodes.get(n).ok_or(PoolError::UnknownNode {
                job_id: alloc.job_id,
                index: n,
            })?;
            if !alloc.per_node.fits_within(&node.used) {
                return Err(PoolError::OverRelease {
                    job_id: alloc.job_id,
                    node: node.id.clone(),
                    used: node.used.clone(),
                    requested: alloc.per_node.clone(),
                });
            }
        }
        for &n in &alloc.nodes {
            let node = &mut self.nodes[n];
            node.used = node.used.checked_sub(&alloc.per_node).expect("checked above");
        }
        Ok(())
    }

    /// `true` when `0 <= used <= capacity` on every node.
    pub fn is_consistent(&self) -> bool {
        self.nodes.iter().all(|n| n.used.fits_within(&n.capacity))
    }

    pub fn total_used(&self) -> ResourceVector {
        self.nodes.iter().fold(ResourceVector::new(), |acc, n| {
            acc.checked_add(&n.used).expect("usage overflow")
        })
    }

    /// Per resource kind: used total, capacity total and their ratio.
    pub fn utilization(&self) -> BTreeMap<String, Usage> {
        let mut out: BTreeMap<String, Usage> = BTreeMap::new();
        for node in &self.nodes {
            for (kind, cap) in node.capacity.iter() {
                let u = out.entry(kind.to_string()).or_insert(Usage {
                    used: 0,
                    capacity: 0,
                    ratio: 0.0,
                });
                u.capacity += cap;
                u.used += node.used.get(kind);
            }
        }
        for u in out.values_mut() {
            u.ratio = if u.capacity == 0 {
                0.0
            } else {
                u.used as f64 / u.capacity as f64
            };
        }
        out
    }
}
