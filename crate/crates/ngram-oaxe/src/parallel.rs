//! Scoped-thread fan-out over independent per-sentence computations.
//!
//! The `NGRAM_OAXE_THREADS` environment variable caps the worker count
//! (0 or unset = auto). Results are returned in index order, so callers see
//! identical output regardless of the cap.

use std::sync::OnceLock;

fn auto_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Worker cap resolved from `NGRAM_OAXE_THREADS`, cached for the process
/// lifetime. Unparseable values fall back to 1.
pub fn thread_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| match std::env::var("NGRAM_OAXE_THREADS") {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(0) => auto_threads(),
            Ok(n) => n,
            Err(_) => 1,
        },
        Err(_) => auto_threads(),
    })
}

/// Applies `f` to every index in `0..n`, splitting the range into contiguous
/// chunks across at most `thread_cap()` scoped threads. The output order is
/// always `0..n`.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    // One worker per 32 items: spawning threads costs more than a handful of
    // small solves, so small batches stay on the calling thread.
    let workers = thread_cap().min(n / 32).max(1);
    if workers == 1 || n < 2 {
        return (0..n).map(f).collect();
    }

    let chunk = n.div_ceil(workers);
    let mut out: Vec<Vec<T>> = Vec::with_capacity(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(n);
                scope.spawn(move || (lo..hi).map(f).collect::<Vec<T>>())
            })
            .collect();
        for h in handles {
            out.push(h.join().expect("worker panicked"));
        }
    });
    out.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let squares = par_map(100, |i| i * i);
        assert_eq!(squares, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn empty_range() {
        let v: Vec<usize> = par_map(0, |i| i);
        assert!(v.is_empty());
    }
}
