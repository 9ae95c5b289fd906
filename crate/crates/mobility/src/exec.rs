//! Data-parallel map helpers. With the default `parallel` feature the indexed
//! maps fan out over a rayon pool; without it they run sequentially. The
//! sequential variants are always compiled so benchmarks can compare both.
//!
//! Results come back as a `Vec` in index order and every reduction in the
//! crate consumes them sequentially, so the parallel and serial paths produce
//! bitwise-identical numbers.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
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

/// Sequential reference implementation of [`map_indices`].
pub fn map_indices_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Runs `f` inside a worker pool bounded to `jobs` threads (0 = default).
/// Without the `parallel` feature the bound is ignored and `f` runs inline.
pub fn with_worker_bound<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        if jobs == 0 {
            f()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .expect("worker pool")
                .install(f)
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        f()
    }
}
