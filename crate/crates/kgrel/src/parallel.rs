//! Data-parallel helpers. With the `parallel` feature (default) work is
//! spread over a rayon pool; without it the same entry points run
//! sequentially. Results are collected in input order either way, so both
//! paths produce identical output.

/// Applies `f` to every item, in order. Parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Sequential reference path, always available (used by the benches to
/// compare against the parallel path).
pub fn map_ordered_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Caps the rayon worker count from `KGREL_THREADS` when set. Call once at
/// process start, before any parallel work.
pub fn init_thread_cap() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(val) = std::env::var("KGREL_THREADS") {
            if let Ok(n) = val.trim().parse::<usize>() {
                if n >= 1 {
                    // Errors only if a global pool already exists; keep that one.
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    }
}
