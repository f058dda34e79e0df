//! The event manager.
//!
//! Simulated time jumps from event to event. At each event time `t` the
//! simulator, in this order:
//!
//! 1. completes the jobs ending at `t`, releasing their nodes, writing their
//!    result rows and dropping their records;
//! 2. queues the jobs submitted at `t` (ties broken by job id);
//! 3. runs the additional-data hooks;
//! 4. calls the dispatcher once, if the queue is non-empty;
//! 5. starts the jobs the dispatcher chose, scheduling each completion at
//!    `t + duration`.
//!
//! Jobs are pulled from the input stream only a bounded distance ahead of
//! the clock, so the number of resident job records stays small no matter
//! how long the trace is.

mod events;
mod status;
mod view;

pub use events::{EventBatch, EventQueue};
pub use status::StatusReporter;
pub use view::{QueuedJob, RunningJob, SystemView};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use thiserror::Error;

use crate::config::SystemConfig;
use crate::dispatch::{DispatchDecision, Dispatcher};
use crate::job::JobRecord;
use crate::metrics::{JobResult, Recorder, RunFooter, StepBenchmark, SummaryBuilder, SummaryReport};
use crate::pool::{Allocation, NodePool, PoolError};
use crate::swf::SwfError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("workload: {0}")]
    Workload(#[from] SwfError),
    #[error("job {job_id}: {reason}")]
    InvalidJob { job_id: u64, reason: &'static str },
    #[error("job {job_id} submitted at {submit} arrives after job submitted at {previous}")]
    Unordered { job_id: u64, submit: u64, previous: u64 },
    #[error("duplicate job id {0}")]
    DuplicateJob(u64),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("dispatcher {dispatcher} at t={time}: {reason}")]
    InvalidDecision {
        dispatcher: String,
        time: u64,
        reason: String,
    },
    #[error("simulation stalled at t={time}: {queued} queued jobs can never start")]
    Stalled { time: u64, queued: usize },
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Lifecycle of a job inside the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JobState {
    Loaded,
    Queued,
    Running,
    Completed,
}

#[derive(Debug, Clone)]
pub struct JobRuntime {
    pub record: JobRecord,
    pub state: JobState,
    pub start_time: Option<u64>,
    pub completion_time: Option<u64>,
    pub allocation: Option<Allocation>,
}

/// How far ahead of the clock jobs are read from the input stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadHorizon {
    /// Keep at most this many loaded-but-unsubmitted jobs.
    Jobs(usize),
    /// Load every job submitted within this many seconds of the clock.
    Seconds(u64),
}

impl Default for LoadHorizon {
    fn default() -> Self {
        LoadHorizon::Jobs(1000)
    }
}

/// Whether host timings are measured. Disabled timings are reported as
/// zero, which makes every output byte-for-byte reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Timing {
    #[default]
    Measured,
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub load: LoadHorizon,
    pub seed: u64,
    pub timing: Timing,
    /// Assert the pool and lifecycle invariants after every step.
    pub check_invariants: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            load: LoadHorizon::default(),
            seed: 0,
            timing: Timing::Measured,
            check_invariants: true,
        }
    }
}

/// External data published to dispatchers, such as power readings or node
/// health. Hooks run before every dispatch.
pub trait AdditionalData: Send {
    fn name(&self) -> &str;

    /// Returns key/value pairs merged into [`SystemView::additional`].
    fn update(&mut self, view: &SystemView<'_>) -> Vec<(String, String)>;
}

/// Job counts per lifecycle state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Lifecycle {
    pub read: u64,
    pub loaded: u64,
    pub queued: u64,
    pub running: u64,
    pub completed: u64,
}

impl Lifecycle {
    pub fn is_conserved(&self) -> bool {
        self.loaded + self.queued + self.running + self.completed == self.read
    }

    /// Jobs whose submission time has been reached.
    pub fn submitted(&self) -> u64 {
        self.queued + self.running + self.completed
    }
}

/// What happened at one event time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub time: u64,
    pub completed: Vec<u64>,
    pub submitted: Vec<u64>,
    /// `None` when the queue was empty and the dispatcher was not called.
    pub decision: Option<DispatchDecision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub dispatcher: String,
    pub jobs_read: u64,
    pub jobs_completed: u64,
    /// Unix time of simulated second zero, from the system configuration.
    pub start_time: i64,
    /// Seconds since `start_time` at which the last event was processed.
    pub final_time: u64,
    pub steps: u64,
    pub peak_loaded: u64,
    pub report: SummaryReport,
}

impl SimulationSummary {
    /// Unix time of the last processed event.
    pub fn final_timestamp(&self) -> i64 {
        self.start_time + self.final_time as i64
    }
}

type JobStream<'a> = Box<dyn Iterator<Item = Result<JobRecord, SwfError>> + 'a>;

/// A single simulation. Built once, then driven by [`Simulator::run`] or
/// step by step with [`Simulator::advance`].
pub struct Simulator<'a> {
    stream: std::iter::Peekable<JobStream<'a>>,
    last_read_submit: Option<u64>,
    seen_ids: HashSet<u64>,
    pool: NodePool,
    clock: u64,
    events: EventQueue,
    jobs: HashMap<u64, JobRuntime>,
    queue: Vec<QueuedJob>,
    running: Vec<RunningJob>,
    additional: BTreeMap<String, String>,
    counts: Lifecycle,
    dispatcher: &'a mut dyn Dispatcher,
    recorder: &'a mut dyn Recorder,
    hooks: Vec<Box<dyn AdditionalData + 'a>>,
    status: Option<StatusReporter>,
    opts: SimOptions,
    config_hash: String,
    start_time: i64,
    summary: SummaryBuilder,
    steps: u64,
    peak_loaded: u64,
    started: Instant,
}

impl<'a> Simulator<'a> {
    pub fn new<I>(
        jobs: I,
        cfg: &SystemConfig,
        dispatcher: &'a mut dyn Dispatcher,
        recorder: &'a mut dyn Recorder,
        opts: SimOptions,
    ) -> Self
    where
        I: IntoIterator<Item = Result<JobRecord, SwfError>>,
        I::IntoIter: 'a,
    {
        let stream: JobStream<'a> = Box::new(jobs.into_iter());
        Simulator {
            stream: stream.peekable(),
            last_read_submit: None,
            seen_ids: HashSet::new(),
            pool: NodePool::build(cfg),
            clock: 0,
            events: EventQueue::new(),
            jobs: HashMap::new(),
            queue: Vec::new(),
            running: Vec::new(),
            additional: BTreeMap::new(),
            counts: Lifecycle::default(),
            dispatcher,
            recorder,
            hooks: Vec::new(),
            status: None,
            opts,
            config_hash: cfg.fingerprint(),
            start_time: cfg.start_time,
            summary: SummaryBuilder::default(),
            steps: 0,
            peak_loaded: 0,
            started: Instant::now(),
        }
    }

    pub fn with_hook(mut self, hook: Box<dyn AdditionalData + 'a>) -> Self {
        self.hooks.push(hook);
        self
    }

    pub fn with_status(mut self, status: StatusReporter) -> Self {
        self.status = Some(status);
        self
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn pool(&self) -> &NodePool {
        &self.pool
    }

    pub fn lifecycle(&self) -> Lifecycle {
        self.counts
    }

    /// Job records currently held: loaded, queued and running.
    pub fn retained(&self) -> usize {
        self.jobs.len()
    }

    pub fn peak_loaded(&self) -> u64 {
        self.peak_loaded
    }

    pub fn job(&self, job_id: u64) -> Option<&JobRuntime> {
        self.jobs.get(&job_id)
    }

    /// Snapshot for dispatchers and hooks. Carries estimates, never true
    /// durations.
    pub fn system_view(&self) -> SystemView<'_> {
        SystemView {
            now: self.clock,
            queued: &self.queue,
            running: &self.running,
            nodes: self.pool.nodes(),
            additional: &self.additional,
        }
    }

    fn footer(&self) -> RunFooter {
        RunFooter {
            seed: self.opts.seed,
            dispatcher: self.dispatcher.name().to_string(),
            config_hash: self.config_hash.clone(),
            wall_ms: self.elapsed_ms(),
        }
    }

    fn elapsed_ms(&self) -> u64 {
        match self.opts.timing {
            Timing::Measured => self.started.elapsed().as_millis() as u64,
            Timing::Disabled => 0,
        }
    }

    fn micros_since(&self, t0: Instant) -> u64 {
        match self.opts.timing {
            Timing::Measured => t0.elapsed().as_micros() as u64,
            Timing::Disabled => 0,
        }
    }

    fn load_one(&mut self) -> Result<bool, SimError> {
        let Some(next) = self.stream.next() else {
            return Ok(false);
        };
        let record = next?;
        record.check().map_err(|reason| SimError::InvalidJob {
            job_id: record.job_id,
            reason,
        })?;
        if let Some(prev) = self.last_read_submit {
            if record.submit_time < prev {
                return Err(SimError::Unordered {
                    job_id: record.job_id,
                    submit: record.submit_time,
                    previous: prev,
                });
            }
        }
        if !self.seen_ids.insert(record.job_id) {
            return Err(SimError::DuplicateJob(record.job_id));
        }
        if record.submit_time < self.clock {
            return Err(SimError::Internal(format!(
                "job {} loaded after its submission time",
                record.job_id
            )));
        }
        self.last_read_submit = Some(record.submit_time);
        self.events.push_submission(record.submit_time, record.job_id);
        self.jobs.insert(
            record.job_id,
            JobRuntime {
                record,
                state: JobState::Loaded,
                start_time: None,
                completion_time: None,
                allocation: None,
            },
        );
        self.counts.read += 1;
        self.counts.loaded += 1;
        Ok(true)
    }

    /// Reads jobs from the stream up to the load horizon. At least one
    /// unsubmitted job is kept loaded while the stream has any, so the next
    /// event time is always known, and jobs sharing a submit second are
    /// loaded together, so a `Jobs(w)` window can exceed `w` by the size of
    /// one such group. Returns the number of jobs loaded.
    pub fn load_window(&mut self) -> Result<usize, SimError> {
        let mut n = 0;
        match self.opts.load {
            LoadHorizon::Jobs(window) => {
                while (self.counts.loaded as usize) < window.max(1) && self.load_one()? {
                    n += 1;
                }
            }
            LoadHorizon::Seconds(h) => {
                let limit = self.clock.saturating_add(h);
                loop {
                    match self.stream.peek() {
                        Some(Ok(r)) if r.submit_time <= limit => {}
                        Some(Err(_)) => {
                            self.load_one()?;
                        }
                        _ => break,
                    }
                    self.load_one()?;
                    n += 1;
                }
            }
        }
        if self.counts.loaded == 0 && self.load_one()? {
            n += 1;
        }
        // Never split a submit second: its jobs must reach the queue in the
        // same step.
        while let Some(last) = self.last_read_submit {
            match self.stream.peek() {
                Some(Ok(r)) if r.submit_time == last => {}
                Some(Err(_)) => {
                    self.load_one()?;
                }
                _ => break,
            }
            self.load_one()?;
            n += 1;
        }
        let retained = self.jobs.len() as u64;
        self.peak_loaded = self.peak_loaded.max(retained);
        Ok(n)
    }

    /// Drops the record of a completed job.
    pub fn evict_completed(&mut self, job_id: u64) -> Result<(), SimError> {
        match self.jobs.get(&job_id) {
            Some(j) if j.state == JobState::Completed => {
                self.jobs.remove(&job_id);
                Ok(())
            }
            Some(j) => Err(SimError::Internal(format!(
                "evicting job {job_id} in state {:?}",
                j.state
            ))),
            None => Err(SimError::Internal(format!("evicting unknown job {job_id}"))),
        }
    }

    fn complete(&mut self, job_id: u64, t: u64) -> Result<(), SimError> {
        let job = self
            .jobs
            .get_mut(&job_id)
            .ok_or_else(|| SimError::Internal(format!("completion for unknown job {job_id}")))?;
        if job.state != JobState::Running || job.completion_time != Some(t) {
            return Err(SimError::Internal(format!(
                "job {job_id} completing at {t} in state {:?}",
                job.state
            )));
        }
        let alloc = job.allocation.clone().expect("running jobs hold an allocation");
        self.pool.release(&alloc)?;
        job.state = JobState::Completed;
        let start = job.start_time.expect("running jobs have started");
        let row = JobResult::new(
            job_id,
            job.record.submit_time,
            start,
            job.record.duration,
            self.pool.node_ids(&alloc).map(str::to_string).collect(),
            job.record.per_node_request.clone(),
        );
        self.running.retain(|r| r.job_id != job_id);
        self.counts.running -= 1;
        self.counts.completed += 1;
        self.recorder.record_job(&row)?;
        self.summary.add_job(&row);
        self.evict_completed(job_id)
    }

    fn check_decision(&self, decision: &DispatchDecision) -> Result<(), SimError> {
        let invalid = |reason: String| SimError::InvalidDecision {
            dispatcher: self.dispatcher.name().to_string(),
            time: self.clock,
            reason,
        };
        let mut seen = HashSet::new();
        for alloc in &decision.starts {
            if !seen.insert(alloc.job_id) {
                return Err(invalid(format!("job {} started twice", alloc.job_id)));
            }
            let job = match self.jobs.get(&alloc.job_id) {
                Some(j) if j.state == JobState::Queued => j,
                _ => return Err(invalid(format!("job {} is not queued", alloc.job_id))),
            };
            if alloc.nodes.len() != job.record.requested_nodes as usize {
                return Err(invalid(format!(
                    "job {} needs {} nodes, got {}",
                    alloc.job_id,
                    job.record.requested_nodes,
                    alloc.nodes.len()
                )));
            }
            if alloc.per_node != job.record.per_node_request {
                return Err(invalid(format!(
                    "job {} placed with {} per node instead of {}",
                    alloc.job_id, alloc.per_node, job.record.per_node_request
                )));
            }
        }
        Ok(())
    }

    fn start(&mut self, alloc: Allocation, t: u64) -> Result<(), SimError> {
        self.pool.allocate(&alloc)?;
        let job = self.jobs.get_mut(&alloc.job_id).expect("checked");
        job.state = JobState::Running;
        job.start_time = Some(t);
        let end = t + job.record.duration;
        job.completion_time = Some(end);
        self.running.push(RunningJob {
            job_id: alloc.job_id,
            submit_time: job.record.submit_time,
            start_time: t,
            wall_time_estimate: job.record.wall_time_estimate,
            allocation: alloc.clone(),
        });
        job.allocation = Some(alloc);
        self.events.push_completion(end, job.record.job_id);
        self.counts.queued -= 1;
        self.counts.running += 1;
        Ok(())
    }

    /// Processes the next event time. Returns `None` when nothing is left.
    pub fn advance(&mut self) -> Result<Option<StepOutcome>, SimError> {
        self.load_window()?;
        let retained = self.jobs.len() as u64;
        let Some((t, batch)) = self.events.pop() else {
            if !self.queue.is_empty() {
                return Err(SimError::Stalled {
                    time: self.clock,
                    queued: self.queue.len(),
                });
            }
            return Ok(None);
        };
        let step_start = Instant::now();
        if t < self.clock {
            return Err(SimError::Internal(format!(
                "event at {t} is earlier than the clock {}",
                self.clock
            )));
        }
        self.clock = t;

        for &id in &batch.completions {
            self.complete(id, t)?;
        }

        for &id in &batch.submissions {
            let job = self
                .jobs
                .get_mut(&id)
                .ok_or_else(|| SimError::Internal(format!("submission for unknown job {id}")))?;
            job.state = JobState::Queued;
            self.queue.push(QueuedJob::from(&job.record));
            self.counts.loaded -= 1;
            self.counts.queued += 1;
        }

        if !self.hooks.is_empty() {
            let mut hooks = std::mem::take(&mut self.hooks);
            for hook in hooks.iter_mut() {
                let updates = hook.update(&self.system_view());
                self.additional.extend(updates);
            }
            self.hooks = hooks;
        }

        let mut queued_at_dispatch = 0;
        let mut dispatch_us = 0;
        let mut decision = None;
        if !self.queue.is_empty() {
            queued_at_dispatch = self.queue.len() as u64;
            let t0 = Instant::now();
            let view = SystemView {
                now: t,
                queued: &self.queue,
                running: &self.running,
                nodes: self.pool.nodes(),
                additional: &self.additional,
            };
            let d = self.dispatcher.dispatch(&view);
            dispatch_us = self.micros_since(t0);
            self.check_decision(&d)?;
            for alloc in &d.starts {
                self.start(alloc.clone(), t)?;
            }
            if !d.starts.is_empty() {
                let started: HashSet<u64> = d.job_ids().collect();
                self.queue.retain(|q| !started.contains(&q.job_id));
            }
            decision = Some(d);
        }

        if self.opts.check_invariants {
            if !self.counts.is_conserved() {
                return Err(SimError::Internal(format!(
                    "lifecycle counts not conserved: {:?}",
                    self.counts
                )));
            }
            if !self.pool.is_consistent() {
                return Err(SimError::Internal("node usage exceeds capacity".into()));
            }
        }

        self.steps += 1;
        if let Some(status) = self.status.as_mut() {
            status.maybe_emit(t, &self.counts, &self.pool)?;
        }
        let row = StepBenchmark {
            time: t,
            queued: queued_at_dispatch,
            running: self.running.len() as u64,
            dispatch_us,
            step_us: self.micros_since(step_start).max(dispatch_us),
            loaded: retained,
        };
        self.recorder.record_step(&row)?;
        self.summary.add_step(&row);

        Ok(Some(StepOutcome {
            time: t,
            completed: batch.completions,
            submitted: batch.submissions,
            decision,
        }))
    }

    fn drive(&mut self) -> Result<(), SimError> {
        while self.advance()?.is_some() {}
        Ok(())
    }

    /// Runs to completion and finalizes the outputs.
    pub fn run(mut self) -> Result<SimulationSummary, SimError> {
        if let Some(status) = self.status.as_mut() {
            status.maybe_emit(self.clock, &self.counts, &self.pool)?;
        }
        if let Err(e) = self.drive() {
            let footer = self.footer();
            let _ = self.recorder.abort(&footer, &e.to_string());
            return Err(e);
        }
        let footer = self.footer();
        if let Some(status) = self.status.as_mut() {
            status.emit(self.clock, &self.counts, &self.pool)?;
        }
        self.recorder.finish(&footer)?;
        Ok(SimulationSummary {
            dispatcher: footer.dispatcher,
            jobs_read: self.counts.read,
            jobs_completed: self.counts.completed,
            start_time: self.start_time,
            final_time: self.clock,
            steps: self.steps,
            peak_loaded: self.peak_loaded,
            report: self.summary.finish(footer.wall_ms),
        })
    }
}

/// Runs `jobs` on the machine described by `cfg` with `dispatcher`.
///
/// An empty stream yields an empty summary whose final timestamp is the
/// configured start time.
pub fn run<'a, I>(
    jobs: I,
    cfg: &SystemConfig,
    dispatcher: &'a mut dyn Dispatcher,
    recorder: &'a mut dyn Recorder,
    opts: SimOptions,
) -> Result<SimulationSummary, SimError>
where
    I: IntoIterator<Item = Result<JobRecord, SwfError>>,
    I::IntoIter: 'a,
{
    Simulator::new(jobs, cfg, dispatcher, recorder, opts).run()
}
