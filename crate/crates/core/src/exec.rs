//! Execution mode for the data-parallel inner loops.
//!
//! Every parallel site in the crate goes through [`Exec`], so the same code
//! path runs sequentially or on the rayon pool. Results are always collected
//! in input order and reduced sequentially afterwards, which keeps outputs
//! bitwise identical between the two modes.
//!
//! Without the `parallel` feature, [`Exec::Parallel`] silently runs
//! sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Maps `f` over `0..len`, returning results in index order.
    pub fn map_indices<R, F>(self, len: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Maps `f` over a slice, returning results in slice order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Applies `f` to every element mutably, returning per-element results in order.
    pub fn map_mut<T, R, F>(self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
            }
            _ => items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect(),
        }
    }
}

/// Configures the global rayon pool from `UACER_WORKERS`, if set.
///
/// Returns the worker count that was requested, if any.
pub fn init_workers_from_env() -> Option<usize> {
    let workers = std::env::var("UACER_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)?;
    #[cfg(feature = "parallel")]
    {
        // Fails only if the pool was already built; the existing pool is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    Some(workers)
}
