//! Thread-pool implementation of the core `ParallelMap`.

use hypdamp_core::exec::ParallelMap;
use rayon::prelude::*;

/// Environment fallback for `--jobs`.
pub const JOBS_ENV: &str = "HYPDAMP_JOBS";

pub struct Pool {
    inner: rayon::ThreadPool,
}

impl Pool {
    /// `jobs = None` or `Some(0)` uses one worker per core.
    pub fn new(jobs: Option<usize>) -> anyhow::Result<Pool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = jobs.filter(|&n| n > 0) {
            b = b.num_threads(n);
        }
        Ok(Pool { inner: b.build()? })
    }

    pub fn workers(&self) -> usize {
        self.inner.current_num_threads()
    }
}

/// `flag`, else `HYPDAMP_JOBS`, else unset.
pub fn resolve_jobs(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(JOBS_ENV).ok()?.trim().parse().ok())
}

impl ParallelMap for Pool {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.inner.install(|| items.par_iter().map(f).collect())
    }
}
