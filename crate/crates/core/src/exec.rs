//! Data-parallel execution helpers.
//!
//! Every fan-out in the crate (grid evaluation, Monte-Carlo trials, subset
//! scoring) goes through [`map_indexed`]. With the `parallel` feature the work
//! is spread over the rayon pool, otherwise it runs on the calling thread.
//! Results are always returned in index order, so the two back-ends produce
//! identical output.

/// Sequential back-end, always available.
pub mod sequential {
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Rayon back-end.
#[cfg(feature = "parallel")]
pub mod parallel {
    use rayon::prelude::*;

    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Maps `f` over `0..n` with the back-end selected at build time.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        parallel::map_indexed(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sequential::map_indexed(n, f)
    }
}

/// Configures the global worker count. A no-op without the `parallel` feature.
pub fn set_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Index of the smallest key, ties resolved towards the lowest index.
/// NaN keys are never selected.
pub fn argmin_by_key(keys: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &k) in keys.iter().enumerate() {
        if k.is_nan() {
            continue;
        }
        match best {
            Some(b) if keys[b] <= k => {}
            _ => best = Some(i),
        }
    }
    best
}
