//! Data-parallel plumbing.
//!
//! With the `parallel` feature the helpers here fan out over rayon's pool;
//! without it they run the same closures in a plain loop. Work is always split
//! at fixed chunk boundaries, so every reduction sees its partials in the same
//! order no matter how many threads ran.

use crate::{Error, Result};

/// Buffers shorter than this are processed on the calling thread.
pub const MIN_PARALLEL_LEN: usize = 1 << 15;

/// Granule for elementwise maps.
pub const MAP_CHUNK: usize = 1 << 13;

/// Environment variable capping internal parallelism. `0` means automatic.
pub const THREADS_ENV: &str = "QUAKE_THREADS";

/// Applies `f` to matching chunks of `src` and `dst`.
pub fn map_chunks<F>(src: &[f32], dst: &mut [f32], f: F)
where
    F: Fn(&[f32], &mut [f32]) + Sync + Send,
{
    assert_eq!(src.len(), dst.len());
    #[cfg(feature = "parallel")]
    if src.len() >= MIN_PARALLEL_LEN {
        use rayon::prelude::*;
        src.par_chunks(MAP_CHUNK)
            .zip(dst.par_chunks_mut(MAP_CHUNK))
            .for_each(|(s, d)| f(s, d));
        return;
    }
    f(src, dst)
}

/// Applies `f` to every row of a row-major matrix, writing the matching row of
/// `dst`. The first failing row (lowest index) decides the error.
pub fn map_rows<F>(src: &[f32], dst: &mut [f32], cols: usize, f: F) -> Result<()>
where
    F: Fn(&[f32], &mut [f32]) -> Result<()> + Sync + Send,
{
    assert_eq!(src.len(), dst.len());
    if cols == 0 || !src.len().is_multiple_of(cols) {
        return Err(Error::ShapeMismatch {
            len: src.len(),
            cols,
        });
    }
    #[cfg(feature = "parallel")]
    if src.len() >= MIN_PARALLEL_LEN && src.len() / cols > 1 {
        use rayon::prelude::*;
        let results: Vec<Result<()>> = src
            .par_chunks(cols)
            .zip(dst.par_chunks_mut(cols))
            .map(|(s, d)| f(s, d))
            .collect();
        return results.into_iter().collect();
    }
    src.chunks(cols)
        .zip(dst.chunks_mut(cols))
        .try_for_each(|(s, d)| f(s, d))
}

/// Evaluates `f` over `[0, n)` split into fixed `chunk`-sized ranges and
/// returns the partial results in index order.
pub fn chunked<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    let range = move |i: usize| i * chunk..((i + 1) * chunk).min(n);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(|i| f(range(i))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(|i| f(range(i))).collect()
    }
}

/// Sizes the global pool. `0` leaves the choice to rayon. Calling this after
/// the pool was built (explicitly or by first use) is an error.
pub fn configure_threads(threads: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// Reads [`THREADS_ENV`] and sizes the pool accordingly. Returns the requested
/// count (`0` when unset).
pub fn configure_from_env() -> Result<usize> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    configure_threads(threads)?;
    Ok(threads)
}

/// Number of worker threads a parallel helper would use right now.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` with parallel helpers restricted to the calling thread.
pub fn sequential<T: Send, F: FnOnce() -> T + Send>(f: F) -> T {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}
