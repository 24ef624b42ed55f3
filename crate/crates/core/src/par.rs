//! Data-parallel map with a sequential fallback.
//!
//! With the default `parallel` feature the suites fan out over rayon; built
//! with `--no-default-features` the same call sites run sequentially.
//! Output order matches input order in both modes, so aggregation is
//! deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn par_map_idx<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map_idx<R, F>(count: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..count).map(f).collect()
}

/// True when this build fans suites out over rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
