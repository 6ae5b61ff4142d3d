//! Parallel execution over corpus pairs.

use mccdic_core::learn::PairExecutor;
use rayon::prelude::*;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MCCDIC_THREADS";

/// Runs pairs on a rayon pool. Results come back in index order, so the
/// outcome does not depend on the thread count.
#[derive(Debug)]
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads = 0` lets rayon pick (one per core).
    pub fn new(threads: usize) -> crate::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Thread count from `MCCDIC_THREADS`, defaulting to all cores.
    pub fn from_env() -> crate::Result<Self> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| crate::Error::Config(format!("{THREADS_ENV}={v:?} is not a count")))?,
            Err(_) => 0,
        };
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl PairExecutor for RayonExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> mccdic_core::Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> mccdic_core::Result<T> + Sync + Send,
    {
        self.pool
            .install(|| (0..n).into_par_iter().map(f).collect())
    }
}
