//! Data-parallel helpers. With the `parallel` feature the loops run on the
//! rayon pool; without it they fall back to plain iterators. Every helper
//! preserves index order in its output so reductions stay deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed chunk width for reductions over paths. Results never depend on the
/// thread count because partial sums are formed per chunk and combined in
/// chunk order.
pub const REDUCTION_CHUNK: usize = 32;

pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Number of reduction chunks covering `n` items.
pub fn chunk_count(n: usize) -> usize {
    n.div_ceil(REDUCTION_CHUNK)
}

pub fn chunk_bounds(chunk: usize, n: usize) -> std::ops::Range<usize> {
    let start = chunk * REDUCTION_CHUNK;
    start..(start + REDUCTION_CHUNK).min(n)
}

/// Chunked map-reduce over `0..n` into a `len`-sized accumulator. Each chunk
/// accumulates sequentially in index order, then partials are summed in chunk
/// order.
pub fn try_reduce_chunks<E, F>(n: usize, len: usize, f: F) -> Result<Vec<f64>, E>
where
    E: Send,
    F: Fn(std::ops::Range<usize>, &mut [f64]) -> Result<(), E> + Sync + Send,
{
    let partials = try_map_range(chunk_count(n), |c| {
        let mut acc = vec![0.0; len];
        f(chunk_bounds(c, n), &mut acc)?;
        Ok(acc)
    })?;
    let mut total = vec![0.0; len];
    for p in &partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    Ok(total)
}

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
