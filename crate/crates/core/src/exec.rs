//! Per-point map helpers with a rayon backend and a sequential fallback.
//!
//! Every data-parallel loop in the crate goes through [`map_range`] or
//! [`try_map_range`], so the same code path runs sequentially when the
//! `parallel` feature is disabled or when [`Parallelism::Sequential`] is
//! requested at runtime. Results are always collected in index order, so the
//! output does not depend on the schedule.

/// Runtime execution mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_range`]. On failure the error for the lowest
/// failing index is returned, in both modes.
pub fn try_map_range<T, E, F>(n: usize, mode: Parallelism, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        let results: Vec<Result<T, E>> = (0..n).into_par_iter().map(f).collect();
        return results.into_iter().collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Runs `f` inside a pool capped at `threads` workers (0 means the default pool).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}
