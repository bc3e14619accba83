//! Worker-thread cap for the convolution kernels.
//!
//! Work is split per batch sample and partial results are always reduced in
//! sample order, so outputs are bit-identical for every thread count.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Environment variable read by [`threads_from_env`].
pub const THREADS_ENV: &str = "ODCS_THREADS";

pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// Parses `ODCS_THREADS`, defaulting to 1 when unset or invalid.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs `work(i)` for `i in 0..count` and hands results to `sink` in index
/// order. At most [`threads()`] samples are in flight at once.
pub(crate) fn map_ordered<T, W, S>(count: usize, work: W, mut sink: S)
where
    T: Send,
    W: Fn(usize) -> T + Sync,
    S: FnMut(usize, T),
{
    let threads = threads().min(count.max(1));
    if threads <= 1 {
        for i in 0..count {
            sink(i, work(i));
        }
        return;
    }
    let mut start = 0;
    while start < count {
        let end = (start + threads).min(count);
        let results: Vec<T> = std::thread::scope(|scope| {
            let handles: Vec<_> = (start..end)
                .map(|i| {
                    let work = &work;
                    scope.spawn(move || work(i))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .collect()
        });
        for (offset, r) in results.into_iter().enumerate() {
            sink(start + offset, r);
        }
        start = end;
    }
}
