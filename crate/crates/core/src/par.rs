//! Sequential / data-parallel execution switch.
//!
//! Every parallel loop in the crate goes through [`Exec`], and reductions are
//! always performed over a fixed chunking of the work in chunk order. The
//! number of worker threads therefore never changes a result bit.

/// How to execute an embarrassingly parallel loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses the global rayon pool when the `parallel` feature is enabled and
    /// silently degrades to sequential execution otherwise.
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Maps `f` over `0..len`, returning results in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..len).map(f).collect(),
            Exec::Parallel => {
                #[cfg(feature = "parallel")]
                {
                    use rayon::prelude::*;
                    (0..len).into_par_iter().map(f).collect()
                }
                #[cfg(not(feature = "parallel"))]
                {
                    (0..len).map(f).collect()
                }
            }
        }
    }

    /// Applies `f` to each mutable chunk of `data` (chunks of `chunk` items, index given).
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            Exec::Sequential => data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
            Exec::Parallel => {
                #[cfg(feature = "parallel")]
                {
                    use rayon::prelude::*;
                    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
                }
                #[cfg(not(feature = "parallel"))]
                {
                    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
                }
            }
        }
    }
}

impl Exec {
    /// Applies `f` to every element of `items` (with its index).
    pub fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        self.for_each_chunk_mut(items, 1, |i, c| f(i, &mut c[0]));
    }
}

/// Runs `f` inside a dedicated pool with `threads` workers (no-op without the
/// `parallel` feature). Used by tests and the CLI `--threads` flag.
pub fn with_threads<R: Send, F: FnOnce() -> R + Send>(threads: usize, f: F) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("failed to build thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
