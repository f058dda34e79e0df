//! Dispatch-quality and simulator-performance metrics.
//!
//! Two row types are produced during a run: a [`JobResult`] whenever a job
//! completes and a [`StepBenchmark`] at every simulated time point. A
//! [`Recorder`] receives both; [`tsv::TsvRecorder`] writes them to the
//! results and bench files, and [`SummaryBuilder`] folds them into a
//! [`SummaryReport`].

pub mod tsv;

use std::collections::BTreeMap;
use std::io;

use crate::resources::ResourceVector;

/// Normalized response time: `(wait + run) / run`.
///
/// `run` is at least one second for every ingested job.
pub fn slowdown(wait: u64, run: u64) -> f64 {
    debug_assert!(run >= 1);
    (wait + run) as f64 / run as f64
}

/// Outcome of one completed job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub job_id: u64,
    pub submit: u64,
    pub start: u64,
    pub end: u64,
    pub wait: u64,
    pub duration: u64,
    pub slowdown: f64,
    pub nodes: Vec<String>,
    pub per_node_request: ResourceVector,
}

impl JobResult {
    pub fn new(
        job_id: u64,
        submit: u64,
        start: u64,
        duration: u64,
        nodes: Vec<String>,
        per_node_request: ResourceVector,
    ) -> Self {
        let wait = start - submit;
        JobResult {
            job_id,
            submit,
            start,
            end: start + duration,
            wait,
            duration,
            slowdown: slowdown(wait, duration),
            nodes,
            per_node_request,
        }
    }
}

/// Simulator bookkeeping for one simulated time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepBenchmark {
    pub time: u64,
    /// Queue length when the dispatcher was called (0 if it was not).
    pub queued: u64,
    pub running: u64,
    pub dispatch_us: u64,
    pub step_us: u64,
    /// Job records resident in the simulator (loaded, queued or running).
    pub loaded: u64,
}

/// Provenance written at the end of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFooter {
    pub seed: u64,
    pub dispatcher: String,
    pub config_hash: String,
    pub wall_ms: u64,
}

/// Sink for per-job and per-step rows.
pub trait Recorder {
    fn record_job(&mut self, row: &JobResult) -> io::Result<()>;

    fn record_step(&mut self, row: &StepBenchmark) -> io::Result<()>;

    fn finish(&mut self, footer: &RunFooter) -> io::Result<()>;

    /// Called instead of `finish` when the run stops on an error.
    fn abort(&mut self, footer: &RunFooter, reason: &str) -> io::Result<()> {
        let _ = (footer, reason);
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullRecorder;

impl Recorder for NullRecorder {
    fn record_job(&mut self, _: &JobResult) -> io::Result<()> {
        Ok(())
    }
    fn record_step(&mut self, _: &StepBenchmark) -> io::Result<()> {
        Ok(())
    }
    fn finish(&mut self, _: &RunFooter) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps every row in memory. Meant for tests and small runs.
#[derive(Debug, Default, Clone)]
pub struct MemoryRecorder {
    pub jobs: Vec<JobResult>,
    pub steps: Vec<StepBenchmark>,
    pub footer: Option<RunFooter>,
}

impl Recorder for MemoryRecorder {
    fn record_job(&mut self, row: &JobResult) -> io::Result<()> {
        self.jobs.push(row.clone());
        Ok(())
    }
    fn record_step(&mut self, row: &StepBenchmark) -> io::Result<()> {
        self.steps.push(*row);
        Ok(())
    }
    fn finish(&mut self, footer: &RunFooter) -> io::Result<()> {
        self.footer = Some(footer.clone());
        Ok(())
    }
}

impl<R: Recorder + ?Sized> Recorder for &mut R {
    fn record_job(&mut self, row: &JobResult) -> io::Result<()> {
        (**self).record_job(row)
    }
    fn record_step(&mut self, row: &StepBenchmark) -> io::Result<()> {
        (**self).record_step(row)
    }
    fn finish(&mut self, footer: &RunFooter) -> io::Result<()> {
        (**self).finish(footer)
    }
    fn abort(&mut self, footer: &RunFooter, reason: &str) -> io::Result<()> {
        (**self).abort(footer, reason)
    }
}

/// Value at nearest rank `ceil(p * n)` of an ascending slice (`p = 0` gives
/// the minimum).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Five-number summary plus mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Distribution {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Distribution> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let sum: f64 = values.iter().sum();
        Some(Distribution {
            count: values.len(),
            mean: sum / values.len() as f64,
            min: sorted[0],
            q1: nearest_rank(&sorted, 0.25),
            median: nearest_rank(&sorted, 0.5),
            q3: nearest_rank(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Box-plot statistics with whiskers at the most extreme samples within
/// 1.5 IQR of the quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub dist: Distribution,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<BoxStats> {
        let dist = Distribution::of(values)?;
        let lo_fence = dist.q1 - 1.5 * dist.iqr();
        let hi_fence = dist.q3 + 1.5 * dist.iqr();
        let whisker_low = values
            .iter()
            .copied()
            .filter(|&v| v >= lo_fence)
            .fold(f64::INFINITY, f64::min);
        let whisker_high = values
            .iter()
            .copied()
            .filter(|&v| v <= hi_fence)
            .fold(f64::NEG_INFINITY, f64::max);
        Some(BoxStats {
            dist,
            whisker_low,
            whisker_high,
        })
    }
}

pub const QUEUE_BIN_WIDTH: u64 = 10;

/// Mean dispatch time for the steps whose queue size fell in one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueBin {
    pub samples: u64,
    pub total_dispatch_us: u64,
}

impl QueueBin {
    pub fn mean_us(&self) -> f64 {
        self.total_dispatch_us as f64 / self.samples as f64
    }
}

/// Aggregates of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub jobs: usize,
    pub slowdown: Option<Distribution>,
    /// Queue size at each dispatcher invocation.
    pub queue_size: Option<Distribution>,
    pub steps: u64,
    pub dispatch_invocations: u64,
    pub total_dispatch_us: u64,
    pub total_step_us: u64,
    pub mean_dispatch_us: f64,
    pub mean_step_us: f64,
    /// Keyed by the lower edge of each queue-size bin.
    pub dispatch_by_queue: BTreeMap<u64, QueueBin>,
    pub peak_loaded: u64,
    pub mean_loaded: f64,
    pub wall_ms: u64,
}

/// Incremental version of [`summarize`], fed row by row.
#[derive(Debug, Default, Clone)]
pub struct SummaryBuilder {
    slowdowns: Vec<f64>,
    queue_samples: Vec<f64>,
    steps: u64,
    total_dispatch_us: u64,
    total_step_us: u64,
    bins: BTreeMap<u64, QueueBin>,
    peak_loaded: u64,
    total_loaded: u64,
}

impl SummaryBuilder {
    pub fn add_job(&mut self, row: &JobResult) {
        self.slowdowns.push(row.slowdown);
    }

    pub fn add_step(&mut self, row: &StepBenchmark) {
        self.steps += 1;
        self.total_dispatch_us += row.dispatch_us;
        self.total_step_us += row.step_us;
        self.peak_loaded = self.peak_loaded.max(row.loaded);
        self.total_loaded += row.loaded;
        // the dispatcher runs exactly when the queue is non-empty
        if row.queued > 0 {
            self.queue_samples.push(row.queued as f64);
            let bin = self
                .bins
                .entry(row.queued / QUEUE_BIN_WIDTH * QUEUE_BIN_WIDTH)
                .or_insert(QueueBin {
                    samples: 0,
                    total_dispatch_us: 0,
                });
            bin.samples += 1;
            bin.total_dispatch_us += row.dispatch_us;
        }
    }

    pub fn finish(self, wall_ms: u64) -> SummaryReport {
        let per_step = |total: u64| {
            if self.steps == 0 {
                0.0
            } else {
                total as f64 / self.steps as f64
            }
        };
        SummaryReport {
            jobs: self.slowdowns.len(),
            slowdown: Distribution::of(&self.slowdowns),
            queue_size: Distribution::of(&self.queue_samples),
            steps: self.steps,
            dispatch_invocations: self.queue_samples.len() as u64,
            total_dispatch_us: self.total_dispatch_us,
            total_step_us: self.total_step_us,
            mean_dispatch_us: per_step(self.total_dispatch_us),
            mean_step_us: per_step(self.total_step_us),
            dispatch_by_queue: self.bins,
            peak_loaded: self.peak_loaded,
            mean_loaded: per_step(self.total_loaded),
            wall_ms,
        }
    }
}

impl Recorder for SummaryBuilder {
    fn record_job(&mut self, row: &JobResult) -> io::Result<()> {
        self.add_job(row);
        Ok(())
    }
    fn record_step(&mut self, row: &StepBenchmark) -> io::Result<()> {
        self.add_step(row);
        Ok(())
    }
    fn finish(&mut self, _: &RunFooter) -> io::Result<()> {
        Ok(())
    }
}

/// Aggregates completed-run outputs.
pub fn summarize(results: &[JobResult], benchmarks: &[StepBenchmark], wall_ms: u64) -> SummaryReport {
    let mut b = SummaryBuilder::default();
    for r in results {
        b.add_job(r);
    }
    for s in benchmarks {
        b.add_step(s);
    }
    b.finish(wall_ms)
}
