//! Pluggable execution of independent jobs.

use alloc::vec::Vec;

/// Runs `n` independent jobs and returns their results in index order.
///
/// Implementations may evaluate jobs in any order or concurrently, but must
/// return `f(0), f(1), …` so downstream reductions are schedule independent.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Evaluates jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}

/// Collect a vector of results, stopping at the first error in index order.
pub fn collect_results<T, E>(items: Vec<Result<T, E>>) -> Result<Vec<T>, E> {
    items.into_iter().collect()
}
