//! Data-parallel map helpers.
//!
//! All parallelism in the crate is over independent items (batch samples,
//! gallery encodes, generated scenes). Results are collected in input order
//! and reduced sequentially, so output bytes do not depend on thread count,
//! and the `parallel` feature can be disabled for a fully sequential build.

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled.
/// Output order always matches index order.
#[cfg(feature = "parallel")]
pub fn par_map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync,
{
    seq_map_indices(n, f)
}

/// Sequential reference path; the benchmark suite compares against this.
pub fn seq_map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Map `f` over a slice, in parallel when enabled, preserving order.
#[cfg(feature = "parallel")]
pub fn par_map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_matches_indices() {
        let out = par_map_indices(100, |i| i * i);
        let seq = seq_map_indices(100, |i| i * i);
        assert_eq!(out, seq);
    }
}
