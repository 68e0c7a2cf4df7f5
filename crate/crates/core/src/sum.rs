//! Fixed-order pairwise summation.

const BLOCK: usize = 32;

/// Pairwise (cascade) sum in a fixed tree order; identical inputs give
/// bitwise-identical results.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(x)` over a slice.
pub fn pairwise_sum_by<T>(xs: &[T], f: impl Fn(&T) -> f64) -> f64 {
    let terms: Vec<f64> = xs.iter().map(f).collect();
    pairwise_sum(&terms)
}

/// Sum of `f(i)` for `i < len`, parallel over fixed blocks; the result does
/// not depend on the number of worker threads.
pub fn par_sum(len: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    use rayon::prelude::*;
    const CHUNK: usize = 4096;
    let blocks: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|b| {
            let end = ((b + 1) * CHUNK).min(len);
            let terms: Vec<f64> = (b * CHUNK..end).map(&f).collect();
            pairwise_sum(&terms)
        })
        .collect();
    pairwise_sum(&blocks)
}
