//! Ordered map helpers backing the data-parallel code paths.
//!
//! Results are always collected in index order and errors are reported for
//! the smallest failing index, so the parallel and sequential paths return
//! identical values.

use crate::error::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn try_map_seq<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn try_map_par<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

/// Maps over `0..n`, in parallel when the `parallel` feature is enabled.
pub(crate) fn try_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        try_map_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        try_map_seq(n, f)
    }
}

pub(crate) fn map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn map_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
