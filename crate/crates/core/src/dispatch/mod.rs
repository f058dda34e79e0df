//! Dispatching: which queued jobs start now (scheduling) and where
//! (allocation).
//!
//! A [`Dispatcher`] is usually a [`Scheduler`] paired with an [`Allocator`]
//! through [`compose`]. The scheduler decides the order in which queued jobs
//! are considered and when to stop; the allocator picks nodes for a single
//! job against a [`FreeView`] that the scheduler updates as it goes, so the
//! decisions in one [`DispatchDecision`] are jointly feasible.

mod allocators;
mod ebf;
mod registry;
mod schedulers;

pub use allocators::{BestFit, FirstFit};
pub use ebf::{EasyBackfilling, Reservation};
pub use registry::{DispatchOptions, Registry, UnknownDispatcher};
pub use schedulers::{Fifo, Ljf, Sjf};

use crate::pool::{Allocation, NodeState};
use crate::resources::ResourceVector;
use crate::sim::{QueuedJob, SystemView};

/// Jobs to start at the current time, with their placements, in the order
/// they should be applied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DispatchDecision {
    pub starts: Vec<Allocation>,
}

impl DispatchDecision {
    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn job_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.starts.iter().map(|a| a.job_id)
    }
}

/// Places a single job.
pub trait Allocator: Send {
    fn name(&self) -> &str;

    /// Returns an allocation with exactly `job.requested_nodes` distinct
    /// nodes, each able to hold `job.per_node_request` in `free`, or `None`.
    fn allocate(&self, job: &QueuedJob, free: &FreeView<'_>) -> Option<Allocation>;
}

/// Orders and selects queued jobs.
pub trait Scheduler: Send {
    fn name(&self) -> &str;

    fn schedule(&mut self, view: &SystemView<'_>, allocator: &dyn Allocator) -> DispatchDecision;
}

/// Anything that turns a system snapshot into a dispatch decision.
pub trait Dispatcher: Send {
    fn name(&self) -> &str;

    fn dispatch(&mut self, view: &SystemView<'_>) -> DispatchDecision;
}

/// A scheduler and an allocator acting as one dispatcher named
/// `"<SCHED>-<ALLOC>"`.
pub struct Composed {
    name: String,
    scheduler: Box<dyn Scheduler>,
    allocator: Box<dyn Allocator>,
}

impl Dispatcher for Composed {
    fn name(&self) -> &str {
        &self.name
    }

    fn dispatch(&mut self, view: &SystemView<'_>) -> DispatchDecision {
        self.scheduler.schedule(view, self.allocator.as_ref())
    }
}

pub fn compose(scheduler: Box<dyn Scheduler>, allocator: Box<dyn Allocator>) -> Composed {
    Composed {
        name: format!("{}-{}", scheduler.name(), allocator.name()),
        scheduler,
        allocator,
    }
}

#[derive(Debug, Clone, Default)]
struct Adjust {
    add: ResourceVector,
    sub: ResourceVector,
}

/// Free capacity of every node as seen while building a decision.
///
/// Wraps the pool snapshot with a sparse overlay of tentative allocations
/// (and, for reservation planning, projected releases) so that nothing is
/// copied up front.
#[derive(Debug, Clone)]
pub struct FreeView<'a> {
    nodes: &'a [NodeState],
    adjust: Vec<Option<Adjust>>,
    masked: Vec<bool>,
}

impl<'a> FreeView<'a> {
    pub fn new(nodes: &'a [NodeState]) -> Self {
        FreeView {
            nodes,
            adjust: vec![None; nodes.len()],
            masked: vec![false; nodes.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &NodeState {
        &self.nodes[i]
    }

    /// Effective usage of `kind` on node `i`.
    pub fn used(&self, i: usize, kind: &str) -> u64 {
        let base = self.nodes[i].used.get(kind);
        match &self.adjust[i] {
            Some(a) => (base + a.add.get(kind)).saturating_sub(a.sub.get(kind)),
            None => base,
        }
    }

    pub fn free(&self, i: usize, kind: &str) -> u64 {
        self.nodes[i].capacity.get(kind).saturating_sub(self.used(i, kind))
    }

    /// `true` if node `i` is usable and can hold `request`.
    pub fn fits(&self, i: usize, request: &ResourceVector) -> bool {
        !self.masked[i] && request.iter().all(|(k, v)| v <= self.free(i, k))
    }

    /// Mean used/capacity ratio over the kinds in `request` that node `i` has.
    pub fn load(&self, i: usize, request: &ResourceVector) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (kind, _) in request.iter() {
            let cap = self.nodes[i].capacity.get(kind);
            if cap > 0 {
                sum += self.used(i, kind) as f64 / cap as f64;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Number of usable nodes that can hold `request`.
    pub fn count_fitting(&self, request: &ResourceVector) -> usize {
        (0..self.len()).filter(|&i| self.fits(i, request)).count()
    }

    /// Records a tentative allocation.
    pub fn take(&mut self, alloc: &Allocation) {
        for &n in &alloc.nodes {
            let a = self.adjust[n].get_or_insert_with(Adjust::default);
            a.add = a.add.checked_add(&alloc.per_node).expect("quantity overflow");
        }
    }

    /// Records a projected release.
    pub fn give_back(&mut self, alloc: &Allocation) {
        for &n in &alloc.nodes {
            let a = self.adjust[n].get_or_insert_with(Adjust::default);
            a.sub = a.sub.checked_add(&alloc.per_node).expect("quantity overflow");
        }
    }

    /// Makes node `i` unavailable to allocators using this view.
    pub fn mask(&mut self, i: usize) {
        self.masked[i] = true;
    }
}

/// Remembers request shapes that failed to fit while a view only shrinks,
/// so that a long queue of identical jobs is not re-scanned node by node.
#[derive(Debug, Default)]
pub(crate) struct FitCache {
    failed: Vec<(u32, ResourceVector)>,
}

impl FitCache {
    pub(crate) fn known_unfit(&self, job: &QueuedJob) -> bool {
        self.failed.iter().any(|(nodes, req)| {
            job.requested_nodes >= *nodes && req.fits_within(&job.per_node_request)
        })
    }

    pub(crate) fn record_unfit(&mut self, job: &QueuedJob) {
        self.failed
            .push((job.requested_nodes, job.per_node_request.clone()));
    }
}
