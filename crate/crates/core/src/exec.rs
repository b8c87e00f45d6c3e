//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel code path is written as a map over fixed-size blocks whose
//! partial results are combined in block order, so the output does not depend
//! on the policy or on the number of worker threads.

/// Segments per work block. Fixed so that RNG substreams and partial sums
/// are identical for any worker count.
pub const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl ExecPolicy {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Maps `f` over `0..n_blocks` and returns the results in block order.
pub fn map_blocks<T, F>(policy: ExecPolicy, n_blocks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        return (0..n_blocks).into_par_iter().map(f).collect();
    }
    let _ = policy;
    (0..n_blocks).map(f).collect()
}

/// Applies `f(block_index, chunk)` to consecutive `chunk_len`-sized chunks of
/// `data` in place.
pub fn for_each_chunk_mut<T, F>(policy: ExecPolicy, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = policy;
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Caps the worker pool used by the parallel policy. Must run before any
/// parallel work; a no-op without the `parallel` feature.
pub fn set_worker_count(jobs: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        Ok(())
    }
}
