use std::sync::Arc;

use thiserror::Error;

use super::{
    compose, Allocator, BestFit, Dispatcher, EasyBackfilling, Fifo, FirstFit, Ljf, Scheduler, Sjf,
};

/// Options every factory receives when a dispatcher is instantiated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DispatchOptions {
    /// Let FIFO, SJF and LJF pass over jobs that cannot be placed instead of
    /// blocking behind them.
    pub skip_unplaceable: bool,
    /// Seed for dispatchers that use randomness.
    pub seed: u64,
}

pub type SchedulerFactory = Arc<dyn Fn(&DispatchOptions) -> Box<dyn Scheduler> + Send + Sync>;
pub type AllocatorFactory = Arc<dyn Fn(&DispatchOptions) -> Box<dyn Allocator> + Send + Sync>;
pub type DispatcherFactory = Arc<dyn Fn(&DispatchOptions) -> Box<dyn Dispatcher> + Send + Sync>;

#[derive(Debug, Error)]
#[error("unknown dispatcher {name:?}; registered: {}", known.join(", "))]
pub struct UnknownDispatcher {
    pub name: String,
    pub known: Vec<String>,
}

/// Named schedulers, allocators and stand-alone dispatchers.
///
/// Every scheduler/allocator pair is reachable as `"SCHED-ALLOC"`.
/// Registration order is preserved in listings.
#[derive(Clone, Default)]
pub struct Registry {
    schedulers: Vec<(String, SchedulerFactory)>,
    allocators: Vec<(String, AllocatorFactory)>,
    dispatchers: Vec<(String, DispatcherFactory)>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// FIFO, SJF, LJF and EBF schedulers with FF and BF allocators.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register_scheduler("FIFO", |o| {
            Box::new(Fifo {
                skip_unplaceable: o.skip_unplaceable,
            })
        });
        r.register_scheduler("SJF", |o| {
            Box::new(Sjf {
                skip_unplaceable: o.skip_unplaceable,
            })
        });
        r.register_scheduler("LJF", |o| {
            Box::new(Ljf {
                skip_unplaceable: o.skip_unplaceable,
            })
        });
        r.register_scheduler("EBF", |_| Box::new(EasyBackfilling));
        r.register_allocator("FF", |_| Box::new(FirstFit));
        r.register_allocator("BF", |_| Box::new(BestFit));
        r
    }

    fn upsert<T>(list: &mut Vec<(String, T)>, name: &str, value: T) {
        match list.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => list.push((name.to_string(), value)),
        }
    }

    pub fn register_scheduler<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&DispatchOptions) -> Box<dyn Scheduler> + Send + Sync + 'static,
    {
        Self::upsert(&mut self.schedulers, name, Arc::new(factory));
    }

    pub fn register_allocator<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&DispatchOptions) -> Box<dyn Allocator> + Send + Sync + 'static,
    {
        Self::upsert(&mut self.allocators, name, Arc::new(factory));
    }

    /// Registers a complete dispatcher under `name`. Takes precedence over a
    /// scheduler/allocator pair of the same name.
    pub fn register_dispatcher<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&DispatchOptions) -> Box<dyn Dispatcher> + Send + Sync + 'static,
    {
        Self::upsert(&mut self.dispatchers, name, Arc::new(factory));
    }

    pub fn scheduler_names(&self) -> impl Iterator<Item = &str> {
        self.schedulers.iter().map(|(n, _)| n.as_str())
    }

    pub fn allocator_names(&self) -> impl Iterator<Item = &str> {
        self.allocators.iter().map(|(n, _)| n.as_str())
    }

    /// All reachable dispatcher names: scheduler-major pairs, then custom
    /// dispatchers.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (s, _) in &self.schedulers {
            for (a, _) in &self.allocators {
                out.push(format!("{s}-{a}"));
            }
        }
        for (d, _) in &self.dispatchers {
            if !out.contains(d) {
                out.push(d.clone());
            }
        }
        out
    }

    fn find<'a, T>(list: &'a [(String, T)], name: &str) -> Option<&'a T> {
        list.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resolve(name).is_some()
    }

    fn resolve(&self, name: &str) -> Option<Resolved<'_>> {
        if let Some(f) = Self::find(&self.dispatchers, name) {
            return Some(Resolved::Custom(f));
        }
        // names may themselves contain '-', so try every split point
        for (i, _) in name.match_indices('-') {
            let (s, a) = (&name[..i], &name[i + 1..]);
            if let (Some(sf), Some(af)) = (Self::find(&self.schedulers, s), Self::find(&self.allocators, a)) {
                return Some(Resolved::Pair(sf, af));
            }
        }
        None
    }

    pub fn build(&self, name: &str, opts: &DispatchOptions) -> Result<Box<dyn Dispatcher>, UnknownDispatcher> {
        match self.resolve(name) {
            Some(Resolved::Custom(f)) => Ok(f(opts)),
            Some(Resolved::Pair(s, a)) => {
                // The registered names win over whatever the parts call
                // themselves.
                let mut d = compose(s(opts), a(opts));
                d.name = name.to_string();
                Ok(Box::new(d))
            }
            None => Err(UnknownDispatcher {
                name: name.to_string(),
                known: self.names(),
            }),
        }
    }

    /// Builds the pair of a named scheduler and allocator.
    pub fn build_pair(
        &self,
        scheduler: &str,
        allocator: &str,
        opts: &DispatchOptions,
    ) -> Result<Box<dyn Dispatcher>, UnknownDispatcher> {
        self.build(&format!("{scheduler}-{allocator}"), opts)
    }
}

enum Resolved<'a> {
    Custom(&'a DispatcherFactory),
    Pair(&'a SchedulerFactory, &'a AllocatorFactory),
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("names", &self.names()).finish()
    }
}
