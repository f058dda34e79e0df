use super::{Allocator, FreeView};
use crate::pool::Allocation;
use crate::sim::QueuedJob;

/// Takes the first nodes, in pool order, that can hold the request.
#[derive(Debug, Clone, Copy, Default)]
pub struct FirstFit;

/// Prefers the busiest nodes: nodes are ordered by load (mean used/capacity
/// over the requested resource kinds), highest first, ties in pool order,
/// and then scanned first-fit.
#[derive(Debug, Clone, Copy, Default)]
pub struct BestFit;

fn place<I: Iterator<Item = usize>>(job: &QueuedJob, free: &FreeView<'_>, order: I) -> Option<Allocation> {
    let want = job.requested_nodes as usize;
    if want == 0 {
        return None;
    }
    let mut nodes = Vec::with_capacity(want);
    for i in order {
        if free.fits(i, &job.per_node_request) {
            nodes.push(i);
            if nodes.len() == want {
                return Some(Allocation {
                    job_id: job.job_id,
                    nodes,
                    per_node: job.per_node_request.clone(),
                });
            }
        }
    }
    None
}

impl Allocator for FirstFit {
    fn name(&self) -> &str {
        "FF"
    }

    fn allocate(&self, job: &QueuedJob, free: &FreeView<'_>) -> Option<Allocation> {
        place(job, free, 0..free.len())
    }
}

impl Allocator for BestFit {
    fn name(&self) -> &str {
        "BF"
    }

    fn allocate(&self, job: &QueuedJob, free: &FreeView<'_>) -> Option<Allocation> {
        let mut order: Vec<(f64, usize)> = (0..free.len())
            .filter(|&i| free.fits(i, &job.per_node_request))
            .map(|i| (free.load(i, &job.per_node_request), i))
            .collect();
        if order.len() < job.requested_nodes as usize {
            return None;
        }
        // stable: equal loads keep pool order
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        place(job, free, order.into_iter().map(|(_, i)| i))
    }
}
