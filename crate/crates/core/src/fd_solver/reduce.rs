//! Reductions with a fixed summation order, independent of the thread count.

use rayon::prelude::*;
use std::ops::Range;

const CHUNK: usize = 4096;

/// `Σ f(chunk)` over fixed chunks of `0..n`, added sequentially in chunk order.
pub(crate) fn par_sum(n: usize, f: impl Fn(Range<usize>) -> f64 + Sync) -> f64 {
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect();
    parts.into_iter().sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    par_sum(a.len(), |r| a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum())
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
