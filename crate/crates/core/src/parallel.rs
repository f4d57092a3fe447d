//! Data-parallel map over independent work items.
//!
//! Results are always returned in index order, so anything aggregated from
//! them is identical for every worker count. With the `parallel` feature off,
//! or with one worker, the map runs sequentially on the calling thread.

use crate::error::{Error, Result};

/// Environment variable consulted when no explicit worker count is given.
pub const WORKERS_ENV: &str = "SUBSTAB_WORKERS";

/// Degree of parallelism: `0` means all available cores, `1` sequential.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Workers(pub usize);

impl Workers {
    pub const SEQUENTIAL: Workers = Workers(1);
    pub const ALL: Workers = Workers(0);

    /// Explicit value, else `SUBSTAB_WORKERS`, else all cores.
    pub fn resolve(explicit: Option<usize>) -> Result<Workers> {
        if let Some(w) = explicit {
            return Ok(Workers(w));
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => v.trim().parse().map(Workers).map_err(|_| {
                Error::invalid(format!(
                    "{WORKERS_ENV} must be a non-negative integer, got {v:?}"
                ))
            }),
            Err(_) => Ok(Workers::ALL),
        }
    }

    pub fn is_sequential(self) -> bool {
        self.0 == 1 || !cfg!(feature = "parallel")
    }

    /// `(0..n).map(f)`, possibly in parallel, in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.is_sequential() || n <= 1 {
            return (0..n).map(f).collect();
        }
        par_map(self.0, n, f)
    }

    /// Like [`map`](Self::map) but stops at the lowest-index error.
    pub fn try_map<T, F>(self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(threads: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect();
    if threads == 0 || threads == rayon::current_num_threads() {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            run()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(_threads: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
