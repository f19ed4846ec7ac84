//! Thin switch between rayon and plain iterators.
//!
//! Only order-preserving maps are parallelized. Reductions stay sequential so
//! that floating-point results do not depend on the thread schedule.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the rayon overhead dominates.
#[cfg(feature = "parallel")]
const MIN_LEN: usize = 2048;

/// `(0..n).map(f).collect()`, in parallel when the feature is on.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= MIN_LEN {
            return (0..n).into_par_iter().with_min_len(MIN_LEN / 4).map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Applies `f` to independent jobs, each owning its own state. Used for
/// parameter sweeps and multi-scheme comparisons.
pub fn map_jobs<J, T, F>(jobs: Vec<J>, f: F) -> Vec<T>
where
    J: Send,
    T: Send,
    F: Fn(J) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        jobs.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.into_iter().map(f).collect()
    }
}

/// True when the crate was built with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
