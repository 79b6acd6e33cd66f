//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the `map_*` functions fan out over
//! rayon's pool; without it they run on the calling thread. Results are always
//! collected in index order, and every job carries its own derived seed, so the
//! output is identical either way.

/// Sequential index map.
pub fn map_indices_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Rayon index map.
#[cfg(feature = "parallel")]
pub fn map_indices_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Index map using the build's default execution mode.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indices_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indices_seq(n, f)
    }
}

/// Slice map using the build's default execution mode.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_indices(items.len(), |i| f(&items[i]))
}

/// Runs `f` with at most `threads` workers for every `map_*` call inside it.
/// Without the `parallel` feature this is a plain call.
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
