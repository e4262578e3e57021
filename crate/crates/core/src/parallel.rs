//! Worker pool for the Monte-Carlo estimators.
//!
//! Samples are cut into fixed-size chunks; chunk `i` draws from random
//! stream `i` and chunk results are merged in index order. Results are
//! therefore identical for every worker count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

/// Samples per chunk.
pub const CHUNK: usize = 1 << 18;

static WORKERS: AtomicUsize = AtomicUsize::new(0);

/// Sets the number of worker threads; `0` means one per available core.
pub fn set_workers(n: usize) {
    WORKERS.store(n, Ordering::Relaxed);
}

/// Effective number of worker threads.
pub fn workers() -> usize {
    match WORKERS.load(Ordering::Relaxed) {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
}

/// Runs `work(acc, chunk_index, len)` over `n` samples and merges the chunk
/// accumulators in index order.
pub(crate) fn fold_chunks<A, M, W, G>(n: usize, make: M, work: W, mut merge: G) -> A
where
    A: Send,
    M: Fn() -> A + Sync,
    W: Fn(&mut A, u64, usize) + Sync,
    G: FnMut(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK).max(1);
    let len = |i: usize| CHUNK.min(n - i * CHUNK);
    let run = |i: usize| {
        let mut a = make();
        work(&mut a, i as u64, len(i));
        a
    };
    let mut total = run(0);
    let w = workers().min(chunks - 1).max(1);
    let mut next = 1;
    while next < chunks {
        let end = (next + w).min(chunks);
        let parts: Vec<A> = if w == 1 {
            vec![run(next)]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = (next..end).map(|i| s.spawn(move || run(i))).collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        };
        for p in parts {
            merge(&mut total, p);
        }
        next = end;
    }
    total
}
