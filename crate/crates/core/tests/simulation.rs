mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use batchsim::config::seth_config;
use batchsim::dispatch::{DispatchDecision, Dispatcher, FirstFit, Scheduler, Fifo};
use batchsim::job::JobRecord;
use batchsim::metrics::{MemoryRecorder, NullRecorder};
use batchsim::sim::{
    AdditionalData, LoadHorizon, SimError, SimOptions, Simulator, StatusReporter, SystemView,
};
use common::*;
use proptest::prelude::*;

#[test]
fn empty_trace_ends_at_start_time() {
    let cfg = seth_config();
    let (summary, rec) = simulate(&[], &cfg, "FIFO-FF");
    assert_eq!(summary.jobs_read, 0);
    assert_eq!(summary.jobs_completed, 0);
    assert_eq!(summary.final_timestamp(), cfg.start_time);
    assert!(rec.jobs.is_empty() && rec.steps.is_empty());
    assert!(summary.report.slowdown.is_none());
}

#[test]
fn single_job_on_seth() {
    let (summary, rec) = simulate(&[job(1, 0, 10, 1, cores(1))], &seth_config(), "FIFO-FF");
    let r = &rec.jobs[0];
    assert_eq!((r.start, r.end, r.slowdown), (0, 10, 1.0));
    assert_eq!(r.nodes, vec!["g0_0"]);
    assert_eq!(summary.final_time, 10);
}

/// Records what the dispatcher sees at every call.
#[derive(Default)]
struct Spy {
    calls: Vec<(u64, Vec<u64>, BTreeMap<String, u64>, String)>,
}

impl Dispatcher for Spy {
    fn name(&self) -> &str {
        "spy"
    }

    fn dispatch(&mut self, view: &SystemView<'_>) -> DispatchDecision {
        let free: BTreeMap<String, u64> = view
            .nodes
            .iter()
            .map(|n| (n.id.clone(), n.capacity.get("core") - n.used.get("core")))
            .collect();
        self.calls.push((
            view.now,
            view.queued.iter().map(|q| q.job_id).collect(),
            free,
            format!("{:?} {:?} {:?} {:?}", view.queued, view.running, view.nodes, view.additional),
        ));
        Fifo::default().schedule(view, &FirstFit)
    }
}

#[test]
fn completions_free_resources_before_dispatch() {
    let cfg = cores_config(1, 4);
    let jobs = [job(1, 0, 5, 1, cores(4)), job(2, 5, 5, 1, cores(4))];
    let mut spy = Spy::default();
    let (_, rec) = simulate_with(&jobs, &cfg, &mut spy, quiet_opts());
    let at5 = spy.calls.iter().find(|c| c.0 == 5).unwrap();
    assert_eq!(at5.1, vec![2]);
    assert_eq!(at5.2["g0_0"], 4);
    assert_eq!(starts(&rec)[&2], 5);
}

#[test]
fn equal_submissions_queue_by_job_id() {
    let cfg = cores_config(1, 1);
    let jobs = [
        job(7, 0, 10, 1, cores(1)),
        job(3, 4, 1, 1, cores(1)),
        job(9, 4, 1, 1, cores(1)),
        job(5, 4, 1, 1, cores(1)),
    ];
    let mut spy = Spy::default();
    simulate_with(&jobs, &cfg, &mut spy, quiet_opts());
    let at4 = spy.calls.iter().find(|c| c.0 == 4).unwrap();
    assert_eq!(at4.1, vec![3, 5, 9]);
}

#[test]
fn idle_dispatch_leaves_queue_and_moves_on() {
    struct Lazy;
    impl Dispatcher for Lazy {
        fn name(&self) -> &str {
            "lazy"
        }
        fn dispatch(&mut self, _: &SystemView<'_>) -> DispatchDecision {
            DispatchDecision::default()
        }
    }
    let cfg = cores_config(1, 1);
    let jobs = [job(1, 0, 1, 1, cores(1)), job(2, 3, 1, 1, cores(1))];
    let mut lazy = Lazy;
    let mut rec = NullRecorder;
    let mut sim = Simulator::new(jobs.iter().cloned().map(Ok), &cfg, &mut lazy, &mut rec, quiet_opts());
    let first = sim.advance().unwrap().unwrap();
    assert_eq!(first.time, 0);
    assert!(first.decision.unwrap().is_empty());
    assert_eq!(sim.lifecycle().queued, 1);
    let second = sim.advance().unwrap().unwrap();
    assert_eq!(second.time, 3);
    assert_eq!(sim.lifecycle().queued, 2);
    // Nothing left but a queue that will never move.
    assert!(matches!(sim.advance(), Err(SimError::Stalled { queued: 2, .. })));
}

#[test]
fn dispatcher_never_sees_true_durations() {
    let cfg = cores_config(2, 2);
    let secret = 987_654_321;
    let jobs = [
        job(1, 0, secret, 1, cores(2)).with_estimate(1_000_000_000),
        job(2, 0, 5, 2, cores(2)).with_estimate(17),
        job(3, 1, secret, 1, cores(1)).with_estimate(1_000_000_000),
    ];
    let mut spy = Spy::default();
    simulate_with(&jobs, &cfg, &mut spy, quiet_opts());
    assert!(!spy.calls.is_empty());
    for (_, _, _, dump) in &spy.calls {
        assert!(!dump.contains(&secret.to_string()), "duration leaked: {dump}");
        assert!(!dump.contains("duration"), "duration field in view: {dump}");
    }
    assert!(spy.calls.iter().any(|c| c.3.contains("1000000000")));
}

#[test]
fn hooks_run_after_submissions_and_before_dispatch() {
    struct Counter;
    impl AdditionalData for Counter {
        fn name(&self) -> &str {
            "counter"
        }
        fn update(&mut self, view: &SystemView<'_>) -> Vec<(String, String)> {
            vec![("queued_seen".into(), view.queued.len().to_string())]
        }
    }
    #[derive(Default)]
    struct Reader(Vec<(u64, usize, String)>);
    impl Dispatcher for Reader {
        fn name(&self) -> &str {
            "reader"
        }
        fn dispatch(&mut self, view: &SystemView<'_>) -> DispatchDecision {
            self.0.push((view.now, view.queued.len(), view.additional["queued_seen"].clone()));
            Fifo::default().schedule(view, &FirstFit)
        }
    }
    let cfg = cores_config(1, 1);
    let jobs = [job(1, 0, 3, 1, cores(1)), job(2, 0, 3, 1, cores(1)), job(3, 2, 1, 1, cores(1))];
    let mut d = Reader::default();
    let mut rec = NullRecorder;
    Simulator::new(jobs.iter().cloned().map(Ok), &cfg, &mut d, &mut rec, quiet_opts())
        .with_hook(Box::new(Counter))
        .run()
        .unwrap();
    for (t, queued, seen) in &d.0 {
        assert_eq!(queued.to_string(), *seen, "at t={t}");
    }
    assert_eq!(d.0[0], (0, 2, "2".into()));
}

#[derive(Clone, Default)]
struct SharedSink(Arc<Mutex<Vec<u8>>>);

impl Write for SharedSink {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn status_stream() {
    let cfg = cores_config(2, 4);
    let mut r = rng(3);
    let jobs = random_jobs(&mut r, &cfg, 300, 0.9);
    let sink = SharedSink::default();
    let mut d = dispatcher("EBF-FF");
    let mut rec = NullRecorder;
    Simulator::new(jobs.iter().cloned().map(Ok), &cfg, d.as_mut(), &mut rec, quiet_opts())
        .with_status(StatusReporter::new(500, Box::new(sink.clone())))
        .run()
        .unwrap();
    let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert!(lines.len() > 3);
    assert_eq!(&lines[0][..4], &["0", "0", "0", "0"]);
    let last = lines.last().unwrap();
    assert_eq!(last[3], "300");
    assert_eq!((last[1], last[2]), ("0", "0"));
    let mut prev_t = 0;
    for l in &lines {
        assert_eq!(l.len(), 6, "{l:?}");
        let t: u64 = l[0].parse().unwrap();
        assert!(t >= prev_t);
        prev_t = t;
        let (q, run, done): (u64, u64, u64) = (l[1].parse().unwrap(), l[2].parse().unwrap(), l[3].parse().unwrap());
        let submitted = jobs.iter().filter(|j| j.submit_time <= t).count() as u64;
        assert_eq!(q + run + done, submitted, "{l:?}");
        assert!(l[4].starts_with("core="));
    }
}

#[test]
fn load_window_bounds_unsubmitted_jobs() {
    let cfg = cores_config(4, 4);
    let mut r = rng(11);
    let jobs = random_jobs(&mut r, &cfg, 5000, 0.7);
    let mut d = dispatcher("FIFO-FF");
    let mut rec = NullRecorder;
    let opts = SimOptions {
        load: LoadHorizon::Jobs(50),
        ..quiet_opts()
    };
    let mut sim = Simulator::new(jobs.iter().cloned().map(Ok), &cfg, d.as_mut(), &mut rec, opts);
    let mut peak_unsubmitted = 0;
    while sim.advance().unwrap().is_some() {
        let c = sim.lifecycle();
        peak_unsubmitted = peak_unsubmitted.max(c.loaded);
        assert_eq!(sim.retained() as u64, c.loaded + c.queued + c.running);
    }
    let widest_second = jobs
        .chunk_by(|a, b| a.submit_time == b.submit_time)
        .map(|g| g.len() as u64)
        .max()
        .unwrap();
    assert!(peak_unsubmitted <= 50 + widest_second, "{peak_unsubmitted}");
    assert_eq!(sim.retained(), 0);
    assert_eq!(sim.lifecycle().completed, 5000);
}

#[test]
fn idle_gap_forces_one_job() {
    let cfg = cores_config(1, 1);
    let jobs = [job(1, 0, 1, 1, cores(1)), job(2, 10_000, 1, 1, cores(1)), job(3, 10_001, 1, 1, cores(1))];
    let mut d = dispatcher("FIFO-FF");
    let mut rec = NullRecorder;
    let opts = SimOptions {
        load: LoadHorizon::Seconds(60),
        ..quiet_opts()
    };
    let mut sim = Simulator::new(jobs.iter().cloned().map(Ok), &cfg, d.as_mut(), &mut rec, opts);
    sim.advance().unwrap();
    assert_eq!(sim.lifecycle().read, 1);
    // Job 2 is far outside the horizon but is loaded to fix the next
    // event; job 3 is not.
    assert_eq!(sim.load_window().unwrap(), 1);
    assert_eq!(sim.lifecycle().read, 2);
    let done = sim.advance().unwrap().unwrap();
    assert_eq!((done.time, done.completed.as_slice()), (1, &[1][..]));
    assert_eq!(sim.lifecycle().read, 2);
    let next = sim.advance().unwrap().unwrap();
    assert_eq!(next.time, 10_000);
    assert_eq!(next.submitted, vec![2]);
}

#[test]
fn bulk_horizon_loads_everything() {
    let cfg = cores_config(1, 1);
    let jobs: Vec<JobRecord> = (1..=20).map(|i| job(i, i * 100, 1, 1, cores(1))).collect();
    let mut d = dispatcher("FIFO-FF");
    let mut rec = NullRecorder;
    let opts = SimOptions {
        load: bulk_load(),
        ..quiet_opts()
    };
    let mut sim = Simulator::new(jobs.iter().cloned().map(Ok), &cfg, d.as_mut(), &mut rec, opts);
    sim.load_window().unwrap();
    assert_eq!(sim.lifecycle().loaded, 20);
}

#[test]
fn unordered_and_duplicate_streams_are_rejected() {
    let cfg = cores_config(1, 1);
    let mut d = dispatcher("FIFO-FF");
    let mut rec = NullRecorder;
    let bad = [job(1, 10, 1, 1, cores(1)), job(2, 5, 1, 1, cores(1))];
    let err = batchsim::sim::run(bad.iter().cloned().map(Ok), &cfg, d.as_mut(), &mut rec, quiet_opts());
    assert!(matches!(err, Err(SimError::Unordered { job_id: 2, .. })));
    let dup = [job(1, 0, 1, 1, cores(1)), job(1, 5, 1, 1, cores(1))];
    let err = batchsim::sim::run(dup.iter().cloned().map(Ok), &cfg, d.as_mut(), &mut rec, quiet_opts());
    assert!(matches!(err, Err(SimError::DuplicateJob(1))));
}

#[test]
fn infeasible_decision_aborts() {
    struct Greedy;
    impl Dispatcher for Greedy {
        fn name(&self) -> &str {
            "greedy"
        }
        fn dispatch(&mut self, view: &SystemView<'_>) -> DispatchDecision {
            DispatchDecision {
                starts: view
                    .queued
                    .iter()
                    .map(|q| batchsim::pool::Allocation {
                        job_id: q.job_id,
                        nodes: vec![0],
                        per_node: q.per_node_request.clone(),
                    })
                    .collect(),
            }
        }
    }
    let cfg = cores_config(1, 2);
    let jobs = [job(1, 0, 5, 1, cores(2)), job(2, 0, 5, 1, cores(2))];
    let mut rec = MemoryRecorder::default();
    let err = batchsim::sim::run(jobs.iter().cloned().map(Ok), &cfg, &mut Greedy, &mut rec, quiet_opts());
    assert!(matches!(err, Err(SimError::InvalidDecision { .. }) | Err(SimError::Pool(_))), "{err:?}");
}

fn small_instance(seed: u64) -> (batchsim::config::SystemConfig, Vec<JobRecord>) {
    use rand::Rng;
    let mut r = rng(seed);
    let nodes = r.gen_range(1..=3);
    let cap = r.gen_range(1..=4);
    let cfg = cores_config(nodes, cap);
    let n = r.gen_range(1..=8);
    let mut submit = 0;
    let jobs = (1..=n)
        .map(|id| {
            submit += r.gen_range(0..=4);
            job(id, submit, r.gen_range(1..=12), r.gen_range(1..=nodes) as u32, cores(r.gen_range(1..=cap)))
        })
        .collect();
    (cfg, jobs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conservation_and_timing(seed in any::<u64>(), which in 0usize..8) {
        let mut r = rng(seed);
        let cfg = random_config(&mut r);
        let jobs = random_jobs(&mut r, &cfg, 400, 0.9);
        let name = DISPATCHERS[which];
        let mut d = dispatcher(name);
        let mut rec = MemoryRecorder::default();
        let mut sim = Simulator::new(jobs.iter().cloned().map(Ok), &cfg, d.as_mut(), &mut rec, quiet_opts());
        while let Some(step) = sim.advance().unwrap() {
            let c = sim.lifecycle();
            prop_assert!(c.is_conserved());
            let submitted = jobs.iter().filter(|j| j.submit_time <= step.time).count() as u64;
            prop_assert_eq!(c.queued + c.running + c.completed, submitted);
        }
        drop(sim);
        prop_assert_eq!(audit(&cfg, &jobs, &rec), Ok(()));
        let times: Vec<u64> = rec.steps.iter().map(|s| s.time).collect();
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rec.steps.iter().all(|s| s.dispatch_us <= s.step_us));
    }

    #[test]
    fn per_second_reference_agrees(seed in any::<u64>()) {
        let (cfg, jobs) = small_instance(seed);
        let (_, rec) = simulate(&jobs, &cfg, "FIFO-FF");
        let got: BTreeMap<u64, (u64, Vec<String>)> =
            rec.jobs.iter().map(|r| (r.job_id, (r.start, r.nodes.clone()))).collect();
        prop_assert_eq!(got, reference_fifo_ff(&cfg, &jobs));
    }

    #[test]
    fn identical_inputs_identical_rows(seed in any::<u64>(), which in 0usize..8) {
        let mut r = rng(seed);
        let cfg = random_config(&mut r);
        let jobs = random_jobs(&mut r, &cfg, 300, 1.0);
        let (_, a) = simulate(&jobs, &cfg, DISPATCHERS[which]);
        let (_, b) = simulate(&jobs, &cfg, DISPATCHERS[which]);
        prop_assert_eq!(a.jobs, b.jobs);
        prop_assert_eq!(a.steps, b.steps);
        prop_assert_eq!(a.footer, b.footer);
    }

    #[test]
    fn load_window_does_not_change_the_schedule(seed in any::<u64>(), window in 1usize..20) {
        let mut r = rng(seed);
        let cfg = random_config(&mut r);
        let jobs = random_jobs(&mut r, &cfg, 200, 0.8);
        let (_, bulk) = simulate_with(&jobs, &cfg, dispatcher("EBF-BF").as_mut(), SimOptions { load: bulk_load(), ..quiet_opts() });
        let (_, windowed) = simulate_with(&jobs, &cfg, dispatcher("EBF-BF").as_mut(), SimOptions { load: LoadHorizon::Jobs(window), ..quiet_opts() });
        prop_assert_eq!(bulk.jobs, windowed.jobs);
    }
}

#[test]
fn a_submit_second_is_never_split() {
    let cfg = cores_config(1, 1);
    let jobs = [job(1, 0, 1, 1, cores(1)), job(2, 5, 1, 1, cores(1)), job(3, 5, 1, 1, cores(1)), job(4, 5, 1, 1, cores(1))];
    let mut spy = Spy::default();
    let opts = SimOptions {
        load: LoadHorizon::Jobs(1),
        ..quiet_opts()
    };
    simulate_with(&jobs, &cfg, &mut spy, opts);
    let at5: Vec<_> = spy.calls.iter().filter(|c| c.0 == 5).collect();
    assert_eq!(at5.len(), 1);
    assert_eq!(at5[0].1, vec![2, 3, 4]);
}
