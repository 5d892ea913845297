//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over rayon's pool;
//! without it the same code runs on the calling thread. Work is always split
//! into fixed-size chunks that are merged in chunk order, so floating-point
//! results do not depend on the number of workers.

/// Trajectories per reduction chunk. Part of the numerical contract: changing
/// it changes the last bits of Monte Carlo sums.
pub const CHUNK: usize = 1024;

/// Evaluates `f(i)` for `i in 0..n`, preserving order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps each element of `items`, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Deterministic chunked reduction over `0..n`.
///
/// Each chunk of [`CHUNK`] indices is folded sequentially with `step`
/// starting from `init()`, and the chunk accumulators are merged left to
/// right.
pub fn fold_chunks<A, I, S, M>(n: usize, init: I, step: S, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials = map_indexed(n_chunks, |c| {
        let mut acc = init();
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        for i in lo..hi {
            step(&mut acc, i);
        }
        acc
    });
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    total
}
