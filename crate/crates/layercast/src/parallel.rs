//! Sweep parallelism. Results are always collected in input order, so the
//! thread count never changes the output.

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::CliError;

pub const THREADS_VAR: &str = "LAYERCAST_THREADS";

/// Pool sized by `LAYERCAST_THREADS` (unset or 0: one per core).
pub fn pool() -> Result<ThreadPool, CliError> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::usage(format!("{THREADS_VAR} must be a nonnegative integer, got {s:?}")))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::io(format!("cannot start thread pool: {e}")))
}

/// Maps `f` over `items` in parallel; the first error in input order wins.
pub fn try_map<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    let results: Vec<Result<U, E>> = items.par_iter().map(f).collect();
    results.into_iter().collect()
}
