//! Data-parallel map helpers.
//!
//! With the default `parallel` feature, independent work items (scan rows,
//! drive amplitudes, Monte-Carlo trials) run on the rayon pool; without it the
//! same closure runs sequentially. Each item derives its own RNG seed, so the
//! output is identical either way and independent of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, used as the benchmark reference.
pub fn map_indexed_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        assert_eq!(map_indexed(100, f), map_indexed_seq(100, f));
    }
}
