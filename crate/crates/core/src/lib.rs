//! A discrete-event simulator for HPC workload management.
//!
//! A run replays a job stream (a Standard Workload Format trace or a
//! synthetic workload) on a configured machine. At every event time the
//! simulator hands a [`sim::SystemView`] to a [`dispatch::Dispatcher`],
//! applies its decision and records per-job results and per-step
//! benchmarks.
//!
//! ```
//! use batchsim::config::SystemConfig;
//! use batchsim::dispatch::{DispatchOptions, Registry};
//! use batchsim::job::JobRecord;
//! use batchsim::metrics::MemoryRecorder;
//! use batchsim::resources::ResourceVector;
//! use batchsim::sim::{self, SimOptions};
//!
//! let cfg = SystemConfig::from_json(r#"{
//!     "system_name": "tiny", "start_time": 0, "equivalence": {},
//!     "groups": {"g0": {"core": 4}}, "resources": {"g0": 2}
//! }"#).unwrap();
//! let per_node = ResourceVector::new().with("core", 4);
//! let jobs = vec![
//!     JobRecord::new(1, 0, 100, 2, per_node.clone()),
//!     JobRecord::new(2, 10, 50, 1, per_node),
//! ];
//! let mut dispatcher = Registry::builtin()
//!     .build("FIFO-FF", &DispatchOptions::default())
//!     .unwrap();
//! let mut rec = MemoryRecorder::default();
//! let summary = sim::run(
//!     jobs.into_iter().map(Ok),
//!     &cfg,
//!     dispatcher.as_mut(),
//!     &mut rec,
//!     SimOptions::default(),
//! ).unwrap();
//! assert_eq!(summary.jobs_completed, 2);
//! assert_eq!(rec.jobs[1].start, 100);
//! ```

pub mod config;
pub mod dispatch;
pub mod experiment;
pub mod generator;
pub mod job;
pub mod metrics;
pub mod pool;
pub mod resources;
pub mod sim;
pub mod swf;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/concepts.md")]
    mod concepts {}
    #[doc = include_str!("../../../book/src/system.md")]
    mod system {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    mod workloads {}
    #[doc = include_str!("../../../book/src/dispatchers.md")]
    mod dispatchers {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/generator.md")]
    mod generator {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
