use rayon::prelude::*;
use symlab_core::exec::Executor;

use crate::Result;

/// Executor backed by rayon, optionally on a dedicated pool.
#[derive(Debug, Default)]
pub struct Parallel {
    pool: Option<rayon::ThreadPool>,
}

impl Parallel {
    /// `None` uses the global pool.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let pool = match threads {
            Some(n) => Some(rayon::ThreadPoolBuilder::new().num_threads(n).build()?),
            None => None,
        };
        Ok(Parallel { pool })
    }

    pub fn threads(&self) -> usize {
        match &self.pool {
            Some(p) => p.current_num_threads(),
            None => rayon::current_num_threads(),
        }
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let run = || (0..n).into_par_iter().map(|i| f(i)).collect();
        match &self.pool {
            Some(p) => p.install(run),
            None => run(),
        }
    }
}
