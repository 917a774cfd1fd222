//! Numeric kernels underneath period initialization: cosine transforms and
//! dynamic time warping.

mod dct;
mod dtw;
mod spectrum;

pub use dct::{coeffs_to_atoms, dct2};
pub use dtw::dtw;
pub use spectrum::cosine_spectrum;

/// One cosine component of the periodicity function:
/// `amplitude * cos(2*pi*frequency*t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CosineAtom {
    /// Non-negative peak magnitude.
    pub amplitude: f64,
    /// Cycles per time step, in `[0, 0.5]`.
    pub frequency: f64,
    /// Offset in radians.
    pub phase: f64,
}

impl CosineAtom {
    /// The atom's value at (possibly fractional) time `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (std::f64::consts::TAU * self.frequency * t + self.phase).cos()
    }
}
