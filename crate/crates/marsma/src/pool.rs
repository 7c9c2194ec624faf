//! Rayon-backed [`BatchExecutor`].

use marsma_core::exec::BatchExecutor;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable that sets the worker count.
pub const WORKERS_ENV: &str = "MARSMA_WORKERS";

/// A bounded worker pool. Results come back in input order, so the
/// number of workers never changes an outcome.
pub struct RayonExecutor {
    pool: ThreadPool,
}

impl RayonExecutor {
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
        Ok(Self { pool })
    }

    /// Worker count from `MARSMA_WORKERS`, else the available parallelism.
    pub fn from_env() -> Result<Self, rayon::ThreadPoolBuildError> {
        Self::new(workers_from_env())
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

impl BatchExecutor for RayonExecutor {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(f).collect())
    }
}
