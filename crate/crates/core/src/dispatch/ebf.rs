//! EASY backfilling with FIFO priority.
//!
//! Jobs start in arrival order until the first one, the *head*, does not
//! fit. The head then gets a reservation: the earliest time at which it
//! would fit if every running job ended at its estimated end
//! (`start + wall_time_estimate`), together with the concrete nodes the
//! allocator would give it at that moment. Later jobs may jump ahead
//! (backfill) only if they fit now and either finish, by their estimate,
//! before the reservation time, or stay off the reserved node resources.
//! Only the head holds a reservation.

use super::{Allocator, DispatchDecision, FitCache, FreeView, Scheduler};
use crate::pool::Allocation;
use crate::sim::{QueuedJob, SystemView};

/// Resources promised to the blocked head job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservation {
    pub job_id: u64,
    /// Earliest projected start of the head job.
    pub time: u64,
    pub allocation: Allocation,
}

impl Reservation {
    /// `true` if `alloc` uses a resource kind the reservation also uses on a
    /// shared node.
    pub fn conflicts_with(&self, alloc: &Allocation) -> bool {
        alloc.per_node.overlaps(&self.allocation.per_node)
            && alloc
                .nodes
                .iter()
                .any(|n| self.allocation.nodes.contains(n))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EasyBackfilling;

impl EasyBackfilling {
    /// Builds a decision and returns the head reservation it respected, if
    /// some job was blocked.
    pub fn plan(
        &self,
        view: &SystemView<'_>,
        allocator: &dyn Allocator,
    ) -> (DispatchDecision, Option<Reservation>) {
        let mut free = FreeView::new(view.nodes);
        let mut decision = DispatchDecision::default();
        let mut started_estimates = Vec::new();
        let mut queue = view.queued.iter();

        let mut head = None;
        for job in queue.by_ref() {
            match allocator.allocate(job, &free) {
                Some(alloc) => {
                    free.take(&alloc);
                    started_estimates.push(job.wall_time_estimate);
                    decision.starts.push(alloc);
                }
                None => {
                    head = Some(job);
                    break;
                }
            }
        }
        let Some(head) = head else {
            return (decision, None);
        };

        let reservation = reserve(view, &free, &decision, &started_estimates, head, allocator);

        let mut cache = FitCache::default();
        for job in queue {
            if cache.known_unfit(job) {
                continue;
            }
            let Some(alloc) = allocator.allocate(job, &free) else {
                cache.record_unfit(job);
                continue;
            };
            let chosen = match &reservation {
                None => Some(alloc),
                Some(r) if view.now + job.wall_time_estimate <= r.time => Some(alloc),
                Some(r) if !r.conflicts_with(&alloc) => Some(alloc),
                Some(r) => {
                    // look for a placement clear of the reservation
                    let mut clear = free.clone();
                    if job.per_node_request.overlaps(&r.allocation.per_node) {
                        for &n in &r.allocation.nodes {
                            clear.mask(n);
                        }
                    }
                    allocator.allocate(job, &clear)
                }
            };
            if let Some(alloc) = chosen {
                free.take(&alloc);
                decision.starts.push(alloc);
            }
        }
        (decision, reservation)
    }
}

/// Earliest projected time `head` fits, replaying estimated ends of the
/// running jobs (including those started in `decision`) in time order.
fn reserve(
    view: &SystemView<'_>,
    free: &FreeView<'_>,
    decision: &DispatchDecision,
    started_estimates: &[u64],
    head: &QueuedJob,
    allocator: &dyn Allocator,
) -> Option<Reservation> {
    let now = view.now;
    let mut ends: Vec<(u64, u64, &Allocation)> = view
        .running
        .iter()
        .map(|r| (r.estimated_end().max(now), r.job_id, &r.allocation))
        .chain(
            decision
                .starts
                .iter()
                .zip(started_estimates)
                .map(|(a, est)| (now + est, a.job_id, a)),
        )
        .collect();
    ends.sort_unstable_by_key(|&(t, id, _)| (t, id));

    let need = head.requested_nodes as usize;
    let mut projected = free.clone();
    let mut fitting: Vec<bool> = (0..projected.len())
        .map(|i| projected.fits(i, &head.per_node_request))
        .collect();
    let mut count = fitting.iter().filter(|&&f| f).count();

    let try_at = |t: u64, projected: &FreeView<'_>| {
        allocator.allocate(head, projected).map(|allocation| Reservation {
            job_id: head.job_id,
            time: t,
            allocation,
        })
    };

    if count >= need {
        if let Some(r) = try_at(now, &projected) {
            return Some(r);
        }
    }
    let mut i = 0;
    while i < ends.len() {
        let t = ends[i].0;
        while i < ends.len() && ends[i].0 == t {
            let alloc = ends[i].2;
            projected.give_back(alloc);
            for &n in &alloc.nodes {
                let fits = projected.fits(n, &head.per_node_request);
                if fits != fitting[n] {
                    fitting[n] = fits;
                    if fits {
                        count += 1;
                    } else {
                        count -= 1;
                    }
                }
            }
            i += 1;
        }
        if count >= need {
            if let Some(r) = try_at(t, &projected) {
                return Some(r);
            }
        }
    }
    None
}

impl Scheduler for EasyBackfilling {
    fn name(&self) -> &str {
        "EBF"
    }

    fn schedule(&mut self, view: &SystemView<'_>, allocator: &dyn Allocator) -> DispatchDecision {
        self.plan(view, allocator).0
    }
}
