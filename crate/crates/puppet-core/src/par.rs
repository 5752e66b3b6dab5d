//! Kernel parallelism switch.
//!
//! Heavy kernels split work across output chunks; every output element is
//! reduced by exactly one task in a fixed order, so the parallel and
//! sequential paths produce bitwise-identical results. The global switch
//! exists for the CLI's `--deterministic` mode, which forces the sequential
//! path outright.

use core::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force all kernels onto the single-threaded path.
pub fn set_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::Relaxed);
}

pub fn sequential_forced() -> bool {
    FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Minimum per-call work (in elements touched) before spawning tasks pays.
pub const PAR_THRESHOLD: usize = 16 * 1024;

/// Run `body(chunk_index, chunk)` over equal `chunk_len` pieces of `data`,
/// in parallel when the feature is on and the workload is large enough.
#[inline]
pub fn for_each_chunk_mut<T: Send, F>(data: &mut [T], chunk_len: usize, work: usize, body: F)
where
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if !sequential_forced() && work >= PAR_THRESHOLD && data.len() > chunk_len {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| body(i, c));
            return;
        }
    }
    let _ = work;
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        body(i, c);
    }
}
