//! Data-parallel helpers with a sequential fallback.
//!
//! Hot loops (exhaustive vector scans, per-query evaluation, experiment
//! sweeps) go through these helpers. With the `parallel` feature they run on
//! the rayon pool unless the caller asks for [`Execution::Sequential`];
//! without the feature everything runs on the calling thread. Output order is
//! identical in both modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Order-preserving filter-map over `0..n`, processed in contiguous chunks so
/// the parallel path does not allocate per item.
pub fn filter_map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> Option<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && n >= PARALLEL_THRESHOLD {
        return (0..n).into_par_iter().with_min_len(1024).filter_map(f).collect();
    }
    let _ = exec;
    (0..n).filter_map(f).collect()
}

/// Below this many items a scan is cheaper on one thread.
#[cfg(feature = "parallel")]
const PARALLEL_THRESHOLD: usize = 4096;
