//! Data-parallel map helpers with a sequential fallback.
//!
//! Independent jobs (sweep points, scenario blocks, per-seed experiment
//! runs) go through [`map_collect`]. With the default `parallel` feature
//! the work is spread over the rayon pool; without it the same closure
//! runs sequentially, which keeps single-threaded profiling and
//! benchmarking comparisons honest.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every item and collects results in input order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

/// Applies `f` to every item and collects results in input order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// True when this build fans work out over rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
