//! Sample-level data parallelism with a sequential fallback.
//!
//! Forward/backward for one sample is single-threaded (a tape is confined to
//! its thread); batches, evaluation sweeps, and per-video graph builds fan
//! out across samples. Results come back in input order and all reductions
//! happen sequentially afterwards, so parallel and sequential runs are
//! bit-identical. Without the `parallel` feature both modes run sequentially.

/// Execution strategy for embarrassingly parallel sample maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

#[cfg(feature = "parallel")]
pub fn map_items<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    use rayon::prelude::*;
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        ExecMode::Parallel => items.par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_items<T, R, F>(_mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    items.iter().map(f).collect()
}

/// Caps the global worker pool. Call once at startup; later calls are
/// ignored by the pool builder. No-op without the `parallel` feature.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}
