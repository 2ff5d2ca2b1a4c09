//! Sequential or data-parallel mapping over documents. Results always come
//! back in input order, so reductions over them are deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    #[default]
    Sequential,
    /// Rayon work stealing; sequential when built without `parallel`.
    Parallel,
}

impl Exec {
    /// One thread maps to [`Exec::Sequential`].
    pub fn from_threads(threads: usize) -> Self {
        if threads <= 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
            Exec::Parallel => par_map(items, f),
        }
    }

    /// Like [`Exec::map`], stopping at the first error in input order.
    pub fn try_map<T, R, F>(self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> Result<R> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Sizes the global rayon pool. A pool that is already initialized with
/// another size is left alone and reported as a warning.
pub fn init_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        if rayon::current_num_threads() != threads {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if threads > 1 {
        log::warn!("built without the `parallel` feature; running on one thread");
    }
    Ok(())
}
