//! Dynamic time warping distance between two sequences.

use crate::error::{Error, Result};

/// Unconstrained DTW with absolute-difference local cost.
///
/// Classic O(m*n) dynamic program over match / insert / delete moves, no
/// warping window, no normalization; returns the accumulated cost of the
/// cheapest monotone alignment. Symmetric in its arguments, and zero when
/// both sequences are identical.
///
/// Errors when either sequence is empty.
///
/// ```
/// let cost = depts::kernels::dtw(&[1.0, 2.0, 3.0], &[2.0, 3.0]).unwrap();
/// assert_eq!(cost, 1.0);
/// ```
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("dtw: empty sequence".into()));
    }
    // One rolling row of the (m+1) x (n+1) cost table; the borders start at
    // infinity so alignments must begin at the (0, 0) cell.
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut cur = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for &ai in a {
        cur[0] = f64::INFINITY;
        for (j, &bj) in b.iter().enumerate() {
            let step = prev[j].min(prev[j + 1]).min(cur[j]);
            cur[j + 1] = (ai - bj).abs() + step;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[b.len()])
}
