use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{Allocator, DispatchDecision, FitCache, FreeView, Scheduler};
use crate::sim::{QueuedJob, SystemView};

/// Starts jobs in `order` while they can be placed.
///
/// Without `skip`, the first job that cannot be placed blocks everything
/// behind it. With `skip`, it is passed over and the scan continues.
pub(crate) fn start_in_order<'v>(
    order: impl Iterator<Item = &'v QueuedJob>,
    free: &mut FreeView<'_>,
    allocator: &dyn Allocator,
    skip: bool,
) -> DispatchDecision {
    let mut decision = DispatchDecision::default();
    let mut cache = FitCache::default();
    for job in order {
        if skip && cache.known_unfit(job) {
            continue;
        }
        match allocator.allocate(job, free) {
            Some(alloc) => {
                free.take(&alloc);
                decision.starts.push(alloc);
            }
            None if skip => cache.record_unfit(job),
            None => break,
        }
    }
    decision
}

/// Queue entries in ascending `key` order, ties by queue position.
///
/// The heap is built in linear time and drained lazily, so a scan that
/// blocks early does not pay for ordering the whole queue.
fn by_key<K: Ord>(queued: &[QueuedJob], key: impl Fn(&QueuedJob) -> K) -> impl Iterator<Item = &QueuedJob> {
    let mut heap: BinaryHeap<Reverse<(K, usize)>> =
        queued.iter().enumerate().map(|(i, j)| Reverse((key(j), i))).collect();
    std::iter::from_fn(move || heap.pop().map(|Reverse((_, i))| &queued[i]))
}

/// First in, first out: queue order is arrival order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fifo {
    pub skip_unplaceable: bool,
}

/// Shortest job first, by wall-time estimate.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sjf {
    pub skip_unplaceable: bool,
}

/// Longest job first, by wall-time estimate.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ljf {
    pub skip_unplaceable: bool,
}

impl Scheduler for Fifo {
    fn name(&self) -> &str {
        "FIFO"
    }

    fn schedule(&mut self, view: &SystemView<'_>, allocator: &dyn Allocator) -> DispatchDecision {
        let mut free = FreeView::new(view.nodes);
        start_in_order(view.queued.iter(), &mut free, allocator, self.skip_unplaceable)
    }
}

impl Scheduler for Sjf {
    fn name(&self) -> &str {
        "SJF"
    }

    fn schedule(&mut self, view: &SystemView<'_>, allocator: &dyn Allocator) -> DispatchDecision {
        let order = by_key(view.queued, |j| j.wall_time_estimate);
        let mut free = FreeView::new(view.nodes);
        start_in_order(order, &mut free, allocator, self.skip_unplaceable)
    }
}

impl Scheduler for Ljf {
    fn name(&self) -> &str {
        "LJF"
    }

    fn schedule(&mut self, view: &SystemView<'_>, allocator: &dyn Allocator) -> DispatchDecision {
        let order = by_key(view.queued, |j| Reverse(j.wall_time_estimate));
        let mut free = FreeView::new(view.nodes);
        start_in_order(order, &mut free, allocator, self.skip_unplaceable)
    }
}
