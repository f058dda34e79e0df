mod common;

use std::collections::BTreeMap;

use batchsim::dispatch::{
    Allocator, BestFit, DispatchDecision, DispatchOptions, Dispatcher, EasyBackfilling, Fifo, FirstFit, FreeView,
    Ljf, Registry, Scheduler, Sjf,
};
use batchsim::job::JobRecord;
use batchsim::pool::{Allocation, NodePool};
use batchsim::resources::ResourceVector;
use batchsim::sim::{QueuedJob, SystemView};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn queued(id: u64, submit: u64, estimate: u64, nodes: u32, per_node: ResourceVector) -> QueuedJob {
    QueuedJob {
        job_id: id,
        submit_time: submit,
        wall_time_estimate: estimate,
        requested_nodes: nodes,
        per_node_request: per_node,
    }
}

fn view<'a>(queue: &'a [QueuedJob], pool: &'a NodePool, extra: &'a BTreeMap<String, String>) -> SystemView<'a> {
    SystemView {
        now: 0,
        queued: queue,
        running: &[],
        nodes: pool.nodes(),
        additional: extra,
    }
}

fn ids(d: &DispatchDecision) -> Vec<u64> {
    d.job_ids().collect()
}

#[test]
fn eight_builtin_dispatchers() {
    let reg = Registry::builtin();
    let names = reg.names();
    assert_eq!(names.len(), 8);
    for n in DISPATCHERS {
        assert!(names.contains(&n.to_string()), "{n}");
        assert_eq!(reg.build(n, &DispatchOptions::default()).unwrap().name(), n);
    }
    let err = reg.build("RANDOM-FF", &DispatchOptions::default()).err().unwrap();
    assert_eq!(err.known.len(), 8);
}

#[test]
fn blocked_head_stops_fifo_but_not_ebf() {
    // One 4-core node with 2 cores busy until 100.
    let cfg = cores_config(1, 4);
    let jobs = [job(1, 0, 100, 1, cores(2)), job(2, 1, 10, 1, cores(4)), job(3, 2, 10, 1, cores(1))];
    let (_, fifo) = simulate(&jobs, &cfg, "FIFO-FF");
    let (_, ebf) = simulate(&jobs, &cfg, "EBF-FF");
    assert_eq!(starts(&fifo), BTreeMap::from([(1, 0), (2, 100), (3, 110)]));
    assert_eq!(starts(&ebf), BTreeMap::from([(1, 0), (2, 100), (3, 2)]));
}

#[test]
fn both_small_jobs_fit() {
    let cfg = cores_config(1, 4);
    let pool = NodePool::build(&cfg);
    let q = [queued(1, 0, 5, 1, cores(2)), queued(2, 0, 5, 1, cores(2))];
    let extra = BTreeMap::new();
    assert_eq!(ids(&Fifo::default().schedule(&view(&q, &pool, &extra), &FirstFit)), vec![1, 2]);
}

#[test]
fn sjf_and_ljf_orders() {
    let cfg = cores_config(3, 1);
    let pool = NodePool::build(&cfg);
    let q = [queued(1, 0, 100, 1, cores(1)), queued(2, 1, 10, 1, cores(1)), queued(3, 2, 50, 1, cores(1))];
    let extra = BTreeMap::new();
    let v = view(&q, &pool, &extra);
    assert_eq!(ids(&Sjf::default().schedule(&v, &FirstFit)), vec![2, 3, 1]);
    assert_eq!(ids(&Ljf::default().schedule(&v, &FirstFit)), vec![1, 3, 2]);
    let same = [queued(4, 0, 7, 1, cores(1)), queued(5, 0, 7, 1, cores(1)), queued(6, 1, 7, 1, cores(1))];
    let v = view(&same, &pool, &extra);
    let fifo = ids(&Fifo::default().schedule(&v, &FirstFit));
    assert_eq!(ids(&Sjf::default().schedule(&v, &FirstFit)), fifo);
    assert_eq!(ids(&Ljf::default().schedule(&v, &FirstFit)), fifo);
}

#[test]
fn sjf_reaches_the_best_order_on_one_core() {
    let cfg = cores_config(1, 1);
    let jobs = [job(1, 0, 30, 1, cores(1)), job(2, 0, 10, 1, cores(1)), job(3, 0, 20, 1, cores(1))];
    // Every serial order on one core, by brute force.
    let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = orders
        .iter()
        .map(|o| {
            let mut t = 0;
            let mut total = 0.0;
            for &i in o {
                total += (t + jobs[i].duration) as f64 / jobs[i].duration as f64;
                t += jobs[i].duration;
            }
            total / 3.0
        })
        .fold(f64::INFINITY, f64::min);
    let mean = |name| {
        let (_, rec) = simulate(&jobs, &cfg, name);
        rec.jobs.iter().map(|r| r.slowdown).sum::<f64>() / 3.0
    };
    assert_eq!(mean("SJF-FF"), best);
    assert!(mean("SJF-FF") <= mean("FIFO-FF"));
}

#[test]
fn first_fit_examples() {
    let pool = NodePool::build(&cores_config(2, 4));
    let free = FreeView::new(pool.nodes());
    let a = FirstFit.allocate(&queued(1, 0, 1, 1, cores(2)), &free).unwrap();
    assert_eq!(a.nodes, vec![0]);

    let mut pool = NodePool::build(&cores_config(2, 4));
    pool.allocate(&Allocation { job_id: 9, nodes: vec![1], per_node: cores(1) }).unwrap();
    let free = FreeView::new(pool.nodes());
    assert!(FirstFit.allocate(&queued(1, 0, 1, 2, cores(4)), &free).is_none());

    let cfg = config(&[(2, &[("core", 4), ("mem", 2000)])]);
    let mut pool = NodePool::build(&cfg);
    pool.allocate(&Allocation {
        job_id: 9,
        nodes: vec![0],
        per_node: ResourceVector::new().with("mem", 1500),
    })
    .unwrap();
    let free = FreeView::new(pool.nodes());
    let req = ResourceVector::new().with("core", 2).with("mem", 1000);
    assert_eq!(FirstFit.allocate(&queued(1, 0, 1, 1, req), &free).unwrap().nodes, vec![1]);
}

#[test]
fn best_fit_examples() {
    let mut pool = NodePool::build(&cores_config(2, 4));
    let free = FreeView::new(pool.nodes());
    let req = queued(1, 0, 1, 1, cores(2));
    assert_eq!(BestFit.allocate(&req, &free), FirstFit.allocate(&req, &free));
    pool.allocate(&Allocation { job_id: 9, nodes: vec![1], per_node: cores(2) }).unwrap();
    let free = FreeView::new(pool.nodes());
    assert_eq!(BestFit.allocate(&req, &free).unwrap().nodes, vec![1]);

    // Loads 0, 0.25, 0.75; a 3-core request fits only the first two.
    let mut pool = NodePool::build(&cores_config(3, 4));
    pool.allocate(&Allocation { job_id: 8, nodes: vec![1], per_node: cores(1) }).unwrap();
    pool.allocate(&Allocation { job_id: 9, nodes: vec![2], per_node: cores(3) }).unwrap();
    let free = FreeView::new(pool.nodes());
    assert_eq!(BestFit.allocate(&queued(1, 0, 1, 1, cores(3)), &free).unwrap().nodes, vec![1]);
}

#[test]
fn user_dispatchers_register_by_name() {
    struct Nothing;
    impl Dispatcher for Nothing {
        fn name(&self) -> &str {
            "NOTHING"
        }
        fn dispatch(&mut self, _: &SystemView<'_>) -> DispatchDecision {
            DispatchDecision::default()
        }
    }
    let mut reg = Registry::builtin();
    reg.register_dispatcher("NOTHING", |_| Box::new(Nothing));
    reg.register_scheduler("REVERSE", |_| Box::new(Ljf::default()));
    assert!(reg.contains("NOTHING"));
    assert!(reg.contains("REVERSE-BF"));
    assert_eq!(reg.build("REVERSE-FF", &DispatchOptions::default()).unwrap().name(), "REVERSE-FF");
    assert_eq!(reg.build("NOTHING", &DispatchOptions::default()).unwrap().name(), "NOTHING");
}

#[test]
fn skip_flag_lets_fifo_pass_a_blocked_head() {
    let cfg = cores_config(1, 4);
    let jobs = [job(1, 0, 100, 1, cores(2)), job(2, 1, 10, 1, cores(4)), job(3, 2, 10, 1, cores(1))];
    let mut d = Registry::builtin()
        .build("FIFO-FF", &DispatchOptions { skip_unplaceable: true, seed: 0 })
        .unwrap();
    let (_, rec) = simulate_with(&jobs, &cfg, d.as_mut(), quiet_opts());
    assert_eq!(starts(&rec)[&3], 2);
}

/// A pool with some random usage and a random queue.
fn random_snapshot(seed: u64) -> (NodePool, Vec<QueuedJob>) {
    let mut r = rng(seed);
    let cfg = random_config(&mut r);
    let mut pool = NodePool::build(&cfg);
    for i in 0..pool.len() {
        if r.gen_bool(0.5) {
            let cap = pool.nodes()[i].capacity.get("core");
            let used = r.gen_range(0..=cap);
            if used > 0 {
                pool.allocate(&Allocation { job_id: 1_000 + i as u64, nodes: vec![i], per_node: cores(used) })
                    .unwrap();
            }
        }
    }
    let n = r.gen_range(1..30);
    let jobs: Vec<JobRecord> = random_jobs(&mut r, &cfg, n, 1.0);
    let queue = jobs.iter().map(QueuedJob::from).collect();
    (pool, queue)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sjf_and_ljf_are_mirror_images(seed in any::<u64>(), bf in any::<bool>()) {
        let (pool, queue) = random_snapshot(seed);
        let top = queue.iter().map(|q| q.wall_time_estimate).max().unwrap() + 1;
        let mirrored: Vec<QueuedJob> = queue
            .iter()
            .map(|q| QueuedJob { wall_time_estimate: top - q.wall_time_estimate, ..q.clone() })
            .collect();
        let extra = BTreeMap::new();
        let alloc: &dyn Allocator = if bf { &BestFit } else { &FirstFit };
        let sjf = Sjf::default().schedule(&view(&queue, &pool, &extra), alloc);
        let ljf = Ljf::default().schedule(&view(&mirrored, &pool, &extra), alloc);
        prop_assert_eq!(sjf, ljf);
    }

    #[test]
    fn fifo_never_overtakes(seed in any::<u64>(), bf in any::<bool>()) {
        let mut r = rng(seed);
        let cfg = random_config(&mut r);
        let jobs = random_jobs(&mut r, &cfg, 300, 1.2);
        let (_, rec) = simulate(&jobs, &cfg, if bf { "FIFO-BF" } else { "FIFO-FF" });
        let start = starts(&rec);
        for w in jobs.windows(2) {
            prop_assert!(start[&w[0].job_id] <= start[&w[1].job_id]);
        }
    }

    #[test]
    fn decisions_are_jointly_feasible(seed in any::<u64>(), which in 0usize..8) {
        let (pool, queue) = random_snapshot(seed);
        let extra = BTreeMap::new();
        let mut d = dispatcher(DISPATCHERS[which]);
        let decision = d.dispatch(&view(&queue, &pool, &extra));
        let mut after = pool.clone();
        let mut seen = std::collections::BTreeSet::new();
        for a in &decision.starts {
            prop_assert!(seen.insert(a.job_id));
            let q = queue.iter().find(|q| q.job_id == a.job_id).unwrap();
            prop_assert_eq!(a.nodes.len(), q.requested_nodes as usize);
            prop_assert_eq!(&a.per_node, &q.per_node_request);
            prop_assert!(after.allocate(a).is_ok());
        }
    }

    #[test]
    fn ebf_without_a_blocked_head_is_fifo(seed in any::<u64>()) {
        let (pool, queue) = random_snapshot(seed);
        let extra = BTreeMap::new();
        let v = view(&queue, &pool, &extra);
        let fifo = Fifo::default().schedule(&v, &FirstFit);
        if fifo.starts.len() == queue.len() {
            let (decision, reservation) = EasyBackfilling.plan(&v, &FirstFit);
            prop_assert!(reservation.is_none());
            prop_assert_eq!(decision, fifo);
        }
    }

    #[test]
    fn best_fit_prefers_the_busier_of_two_nodes(used0 in 0u64..=8, used1 in 0u64..=8, want in 1u64..=8) {
        let mut pool = NodePool::build(&cores_config(2, 8));
        for (i, used) in [used0, used1].into_iter().enumerate() {
            if used > 0 {
                pool.allocate(&Allocation { job_id: 10 + i as u64, nodes: vec![i], per_node: cores(used) }).unwrap();
            }
        }
        let free = FreeView::new(pool.nodes());
        let got = BestFit.allocate(&queued(1, 0, 1, 1, cores(want)), &free).map(|a| a.nodes[0]);
        let fits = |u: u64| u + want <= 8;
        let expected = match (fits(used0), fits(used1)) {
            (true, true) => Some(if used1 > used0 { 1 } else { 0 }),
            (true, false) => Some(0),
            (false, true) => Some(1),
            (false, false) => None,
        };
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn ebf_head_is_never_later_than_its_reservation(seed in any::<u64>()) {
        struct Probe(Vec<(u64, u64)>);
        impl Dispatcher for Probe {
            fn name(&self) -> &str { "probe" }
            fn dispatch(&mut self, view: &SystemView<'_>) -> DispatchDecision {
                let (d, r) = EasyBackfilling.plan(view, &FirstFit);
                if let Some(r) = r {
                    self.0.push((r.job_id, r.time));
                }
                d
            }
        }
        let mut r = rng(seed);
        let cfg = cores_config(r.gen_range(1..=4), r.gen_range(1..=4));
        let cap = cfg.groups[0].capacity.get("core");
        let nodes = cfg.groups[0].count;
        let mut submit = 0;
        let jobs: Vec<JobRecord> = (1..=r.gen_range(2..=12))
            .map(|id| {
                submit += r.gen_range(0..=5);
                job(id, submit, r.gen_range(1..=30), r.gen_range(1..=nodes) as u32, cores(r.gen_range(1..=cap)))
            })
            .collect();
        let mut probe = Probe(Vec::new());
        let (_, rec) = simulate_with(&jobs, &cfg, &mut probe, quiet_opts());
        let start = starts(&rec);
        for (id, t_res) in probe.0 {
            prop_assert!(start[&id] <= t_res, "job {} reserved {} started {}", id, t_res, start[&id]);
        }
    }
}
