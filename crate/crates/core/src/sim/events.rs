use std::collections::BTreeMap;

/// Everything that happens at one time point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventBatch {
    pub completions: Vec<u64>,
    pub submissions: Vec<u64>,
}

/// Time-ordered submission and completion events.
#[derive(Debug, Default)]
pub struct EventQueue {
    slots: BTreeMap<u64, EventBatch>,
    len: usize,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Number of pending events.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn next_time(&self) -> Option<u64> {
        self.slots.keys().next().copied()
    }

    pub fn push_submission(&mut self, time: u64, job_id: u64) {
        self.slots.entry(time).or_default().submissions.push(job_id);
        self.len += 1;
    }

    pub fn push_completion(&mut self, time: u64, job_id: u64) {
        self.slots.entry(time).or_default().completions.push(job_id);
        self.len += 1;
    }

    /// Removes the earliest batch, with both lists sorted by job id.
    pub fn pop(&mut self) -> Option<(u64, EventBatch)> {
        let (t, mut batch) = self.slots.pop_first()?;
        self.len -= batch.completions.len() + batch.submissions.len();
        batch.completions.sort_unstable();
        batch.submissions.sort_unstable();
        Some((t, batch))
    }
}
