//! Fixed-size worker pool for independent runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Environment variable holding the maximum number of concurrent runs.
pub const WORKERS_ENV: &str = "PRLAB_WORKERS";

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
/// Unparsable or zero values fall back to 1.
pub fn worker_count() -> usize {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).unwrap_or(1),
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Applies `f` to every item on up to `workers` threads and returns the
/// results in input order. Jobs are claimed in order; nothing is shared
/// between them, so results do not depend on scheduling.
pub fn map_parallel<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every job ran"))
        .collect()
}
