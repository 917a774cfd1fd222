//! Type-II discrete cosine transform and its reading as cosine atoms.
//!
//! The convention is unnormalized:
//!
//! ```text
//! C_k = sum_{n=0}^{N-1} x_n * cos(pi * k * (2n + 1) / (2N))
//! ```
//!
//! Each bin is a sampled cosine: `cos(pi*k*(2n+1)/(2N))` rewrites as
//! `cos(2*pi*(k/(2N))*n + pi*k/(2N))`, so bin `k` corresponds to frequency
//! `k/(2N)` with the fixed basis phase `pi*k/(2N)`, and [`coeffs_to_atoms`]
//! turns a full transform into an exact cosine-series reconstruction of the
//! input.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::CosineAtom;
use crate::error::{Error, Result};

/// Unnormalized DCT-II of `x`, in O(N log N).
///
/// Uses the even-odd permutation that turns a length-N DCT into one
/// length-N complex FFT: reorder the input as
/// `v = [x_0, x_2, x_4, ..., x_5, x_3, x_1]`, transform, then rotate each
/// bin by `exp(-i*pi*k/(2N))` and keep the real part.
///
/// Errors on empty or non-finite input.
pub fn dct2(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Data("dct2: empty input".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("dct2: non-finite input".into()));
    }

    let mut buf: Vec<Complex<f64>> = vec![Complex::default(); n];
    for m in 0..n.div_ceil(2) {
        buf[m] = Complex::new(x[2 * m], 0.0);
    }
    for m in 0..n / 2 {
        buf[n - 1 - m] = Complex::new(x[2 * m + 1], 0.0);
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let scale = std::f64::consts::PI / (2 * n) as f64;
    Ok(buf
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (sin, cos) = (k as f64 * scale).sin_cos();
            v.re * cos + v.im * sin
        })
        .collect())
}

/// Reads a full DCT-II as a constant plus cosine atoms.
///
/// Returns `(a0, atoms)` with `a0 = C_0 / N` and, for each `k >= 1`, an atom
/// of amplitude `|2*C_k/N|`, frequency `k/(2N)`, and phase `pi*k/(2N)`
/// (plus `pi` when `C_k` is negative, folding the sign into the phase).
/// Atoms stay in bin order; summing all of them on `t = 0..N-1` plays back
/// the inverse transform, reproducing the original input exactly.
pub fn coeffs_to_atoms(coeffs: &[f64]) -> Result<(f64, Vec<CosineAtom>)> {
    let n = coeffs.len();
    if n == 0 {
        return Err(Error::Data("coeffs_to_atoms: empty transform".into()));
    }
    let nf = n as f64;
    let a0 = coeffs[0] / nf;
    let atoms = coeffs[1..]
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let k = (i + 1) as f64;
            let base_phase = std::f64::consts::PI * k / (2.0 * nf);
            CosineAtom {
                amplitude: (2.0 * c / nf).abs(),
                frequency: k / (2.0 * nf),
                phase: base_phase + if c < 0.0 { std::f64::consts::PI } else { 0.0 },
            }
        })
        .collect();
    Ok((a0, atoms))
}
