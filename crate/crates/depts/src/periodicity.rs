//! The global periodicity function and its initialization.
//!
//! Periodic context is modelled per series as a trainable cosine series
//!
//! ```text
//! g(t) = A0 + sum_k M_k * A_k * cos(2*pi*F_k*t + P_k)
//! ```
//!
//! evaluated at absolute time indices, where `M` is a frozen binary mask
//! selecting at most `J` of the `K` candidate atoms. Initialization is a
//! two-stage fit: a spectral estimate of the training split proposes the
//! `K` largest-amplitude atoms, then a greedy pass enables one candidate at
//! a time, keeping it only when the dynamic-time-warping cost of `g` against
//! the validation split strictly decreases. Warping cost, unlike pointwise
//! error, stays small under slight frequency mismatch, which is exactly the
//! defect a grid-limited spectral estimate has.
//!
//! Masked atoms are carried through checkpoints untouched: they receive no
//! gradient and never change bit-wise, so re-enabling them later remains
//! possible.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Series;
use crate::error::{Error, Result};
use crate::kernels::{cosine_spectrum, dtw, CosineAtom};

/// Trainable parameters of one series' periodicity function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCoefficients {
    /// Constant level; always active, never masked.
    pub a0: f64,
    /// Candidate atoms in amplitude-descending order at initialization.
    pub atoms: Vec<CosineAtom>,
}

/// Frozen atom-selection mask, one bit per atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodMask {
    pub bits: Vec<bool>,
}

impl PeriodMask {
    /// All-disabled mask for `len` atoms.
    pub fn none(len: usize) -> Self {
        PeriodMask { bits: vec![false; len] }
    }

    /// All-enabled mask for `len` atoms.
    pub fn all(len: usize) -> Self {
        PeriodMask { bits: vec![true; len] }
    }

    /// Number of enabled atoms.
    pub fn enabled_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Gradient accumulator mirroring [`PeriodicCoefficients`].
///
/// Masked atoms keep exact zeros in all three component vectors, so an
/// optimizer step leaves them bit-wise unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGradient {
    pub a0: f64,
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PeriodicGradient {
    /// Zero gradient shaped like `coeffs`.
    pub fn zeros_like(coeffs: &PeriodicCoefficients) -> Self {
        let n = coeffs.atoms.len();
        PeriodicGradient {
            a0: 0.0,
            amplitude: vec![0.0; n],
            frequency: vec![0.0; n],
            phase: vec![0.0; n],
        }
    }
}

impl PeriodicCoefficients {
    fn check_mask(&self, mask: &PeriodMask) -> Result<()> {
        if mask.bits.len() != self.atoms.len() {
            return Err(Error::Data(format!(
                "mask covers {} atoms but coefficients hold {}",
                mask.bits.len(),
                self.atoms.len()
            )));
        }
        Ok(())
    }

    /// Evaluates the masked cosine series at absolute time indices.
    pub fn evaluate(&self, mask: &PeriodMask, times: &[i64]) -> Result<Vec<f64>> {
        self.check_mask(mask)?;
        let mut out = vec![self.a0; times.len()];
        for (atom, _) in self.atoms.iter().zip(&mask.bits).filter(|(_, on)| **on) {
            for (o, &t) in out.iter_mut().zip(times) {
                *o += atom.eval(t as f64);
            }
        }
        Ok(out)
    }

    /// Chains an upstream gradient through the evaluation at `times`.
    ///
    /// Adds into `grad`: for each enabled atom with angle
    /// `theta = 2*pi*F*t + P`, the contributions are `cos(theta)` toward the
    /// amplitude, `-A*2*pi*t*sin(theta)` toward the frequency, and
    /// `-A*sin(theta)` toward the phase; the constant level sums the
    /// upstream directly. Masked atoms receive exactly zero.
    pub fn accumulate_gradient(
        &self,
        mask: &PeriodMask,
        times: &[i64],
        upstream: &[f64],
        grad: &mut PeriodicGradient,
    ) -> Result<()> {
        self.check_mask(mask)?;
        if upstream.len() != times.len() {
            return Err(Error::Data(format!(
                "upstream gradient covers {} points but {} times were given",
                upstream.len(),
                times.len()
            )));
        }
        grad.a0 += upstream.iter().sum::<f64>();
        for (i, (atom, _)) in
            self.atoms.iter().zip(&mask.bits).enumerate().filter(|(_, (_, on))| **on)
        {
            let (mut da, mut df, mut dp) = (0.0, 0.0, 0.0);
            for (&u, &t) in upstream.iter().zip(times) {
                let t = t as f64;
                let (sin, cos) =
                    (std::f64::consts::TAU * atom.frequency * t + atom.phase).sin_cos();
                da += u * cos;
                let common = -atom.amplitude * sin * u;
                df += common * std::f64::consts::TAU * t;
                dp += common;
            }
            grad.amplitude[i] += da;
            grad.frequency[i] += df;
            grad.phase[i] += dp;
        }
        Ok(())
    }
}

/// Diagnostics of one greedy initialization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitReport {
    /// Warping cost of the constant-level-only function against validation.
    pub initial_cost: f64,
    /// Cost of each tried candidate, in greedy (amplitude-descending) order.
    pub step_costs: Vec<f64>,
    /// Positions (into the atom vector) that were enabled, in acceptance order.
    pub selected_indices: Vec<usize>,
    /// Wall-clock duration of the whole initialization.
    pub wall_time_secs: f64,
}

/// Two-stage period initialization against a train/validation split.
///
/// Proposes the `k` largest-amplitude cosine atoms of the training values
/// (phases estimated jointly with amplitudes, then shifted so atoms are
/// anchored to the global time axis), and greedily enables candidates in
/// amplitude order while the validation warping cost strictly decreases,
/// stopping once `j` atoms are enabled. Numerically-zero candidates are
/// dropped up front, so an all-constant training split yields the constant
/// level with an empty selection.
pub fn init_periods(
    train: &Series,
    val: &Series,
    k: usize,
    j: usize,
) -> Result<(PeriodicCoefficients, PeriodMask, InitReport)> {
    let started = Instant::now();
    if val.is_empty() {
        return Err(Error::Data("init_periods: empty validation split".into()));
    }
    let (a0, mut candidates) = cosine_spectrum(&train.values)?;

    // The spectral phases are relative to the first training observation;
    // rebase them onto the global axis so g(t) takes absolute indices.
    for atom in &mut candidates {
        atom.phase = rewrap(atom.phase - std::f64::consts::TAU * atom.frequency * train.t0 as f64);
    }

    // Drop numerically-zero amplitudes (spectral round-off of flat input),
    // then keep the k strongest. The tie-break on frequency pins the order.
    let peak = candidates.iter().fold(0.0f64, |m, a| m.max(a.amplitude));
    let noise_floor = 1e-9 * (a0.abs() + peak);
    candidates.retain(|a| a.amplitude > noise_floor);
    candidates.sort_by(|a, b| {
        b.amplitude
            .partial_cmp(&a.amplitude)
            .expect("amplitudes are finite")
            .then(a.frequency.partial_cmp(&b.frequency).expect("frequencies are finite"))
    });
    candidates.truncate(k);

    let coeffs = PeriodicCoefficients { a0, atoms: candidates };
    let mut mask = PeriodMask::none(coeffs.atoms.len());

    let val_times: Vec<i64> = (val.t0..val.end()).collect();
    let mut current: Vec<f64> = vec![a0; val.len()];
    let mut best = dtw(&current, &val.values)?;
    let initial_cost = best;

    let mut report = InitReport {
        initial_cost,
        step_costs: Vec::new(),
        selected_indices: Vec::new(),
        wall_time_secs: 0.0,
    };
    for (i, atom) in coeffs.atoms.iter().enumerate() {
        if report.selected_indices.len() == j {
            break;
        }
        let trial: Vec<f64> =
            current.iter().zip(&val_times).map(|(c, &t)| c + atom.eval(t as f64)).collect();
        let cost = dtw(&trial, &val.values)?;
        report.step_costs.push(cost);
        if cost < best {
            best = cost;
            current = trial;
            mask.bits[i] = true;
            report.selected_indices.push(i);
        }
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((coeffs, mask, report))
}

fn rewrap(phase: f64) -> f64 {
    let mut p = phase % std::f64::consts::TAU;
    if p > std::f64::consts::PI {
        p -= std::f64::consts::TAU;
    } else if p < -std::f64::consts::PI {
        p += std::f64::consts::TAU;
    }
    p
}

// --- coefficients document -------------------------------------------------
//
// The interchange file between `init-periods` and `train`: one record per
// series, atoms flattened with their mask bit.

/// One atom as stored in the coefficients document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub enabled: bool,
}

/// Periodicity of one series as stored in the coefficients document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPeriodicity {
    pub series_id: String,
    pub a0: f64,
    pub atoms: Vec<AtomRecord>,
}

impl SeriesPeriodicity {
    /// Flattens in-memory coefficients and mask into document form.
    pub fn from_parts(series_id: &str, coeffs: &PeriodicCoefficients, mask: &PeriodMask) -> Self {
        SeriesPeriodicity {
            series_id: series_id.to_string(),
            a0: coeffs.a0,
            atoms: coeffs
                .atoms
                .iter()
                .zip(&mask.bits)
                .map(|(a, &enabled)| AtomRecord {
                    amplitude: a.amplitude,
                    frequency: a.frequency,
                    phase: a.phase,
                    enabled,
                })
                .collect(),
        }
    }

    /// Splits document form back into coefficients and mask.
    pub fn into_parts(&self) -> (PeriodicCoefficients, PeriodMask) {
        let coeffs = PeriodicCoefficients {
            a0: self.a0,
            atoms: self
                .atoms
                .iter()
                .map(|r| CosineAtom {
                    amplitude: r.amplitude,
                    frequency: r.frequency,
                    phase: r.phase,
                })
                .collect(),
        };
        let mask = PeriodMask { bits: self.atoms.iter().map(|r| r.enabled).collect() };
        (coeffs, mask)
    }
}

/// On-disk coefficients document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientsDoc {
    pub version: u32,
    pub series: Vec<SeriesPeriodicity>,
}

/// Format version written by this crate.
pub const COEFFICIENTS_VERSION: u32 = 1;

/// Parses and validates a coefficients document from raw bytes.
///
/// The single entry point for untrusted bytes (also the fuzz harness):
/// rejects unknown versions and non-finite numbers, never panics.
pub fn parse_coefficients_doc(bytes: &[u8]) -> Result<CoefficientsDoc> {
    let doc: CoefficientsDoc = serde_json::from_slice(bytes)
        .map_err(|e| Error::Data(format!("malformed coefficients document: {e}")))?;
    if doc.version != COEFFICIENTS_VERSION {
        return Err(Error::Data(format!(
            "coefficients document version {} unsupported (expected {COEFFICIENTS_VERSION})",
            doc.version
        )));
    }
    for s in &doc.series {
        let finite = s.a0.is_finite()
            && s.atoms
                .iter()
                .all(|a| a.amplitude.is_finite() && a.frequency.is_finite() && a.phase.is_finite());
        if !finite {
            return Err(Error::Data(format!(
                "coefficients for series '{}' contain non-finite values",
                s.series_id
            )));
        }
    }
    Ok(doc)
}

/// Serializes a coefficients document.
pub fn coefficients_doc_bytes(doc: &CoefficientsDoc) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(doc)
        .map_err(|e| Error::Data(format!("cannot encode coefficients document: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Loads a coefficients document from disk.
pub fn load_coefficients_doc(path: impl AsRef<Path>) -> Result<CoefficientsDoc> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_coefficients_doc(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn atom(amplitude: f64, frequency: f64, phase: f64) -> CosineAtom {
        CosineAtom { amplitude, frequency, phase }
    }

    #[test]
    fn evaluate_matches_hand_computation() {
        // 30 + 8*cos(2*pi*t/50 + 4*pi/50) at t = 0.
        let coeffs =
            PeriodicCoefficients { a0: 30.0, atoms: vec![atom(8.0, 1.0 / 50.0, 2.0 * TAU / 50.0)] };
        let g = coeffs.evaluate(&PeriodMask::all(1), &[0]).unwrap();
        assert!((g[0] - 37.748_665_28).abs() < 1e-6, "{}", g[0]);
    }

    #[test]
    fn masked_atom_contributes_nothing() {
        let coeffs = PeriodicCoefficients { a0: 2.0, atoms: vec![atom(100.0, 0.1, 0.0)] };
        let g = coeffs.evaluate(&PeriodMask::none(1), &[0, 5, 9]).unwrap();
        assert_eq!(g, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn empty_atom_list_is_the_constant_function() {
        let coeffs = PeriodicCoefficients { a0: -1.5, atoms: vec![] };
        let g = coeffs.evaluate(&PeriodMask::none(0), &[7, 8]).unwrap();
        assert_eq!(g, vec![-1.5, -1.5]);
    }

    #[test]
    fn mask_length_mismatch_is_rejected() {
        let coeffs = PeriodicCoefficients { a0: 0.0, atoms: vec![atom(1.0, 0.1, 0.0)] };
        assert!(coeffs.evaluate(&PeriodMask::none(2), &[0]).is_err());
        let mut grad = PeriodicGradient::zeros_like(&coeffs);
        assert!(coeffs.accumulate_gradient(&PeriodMask::none(2), &[0], &[1.0], &mut grad).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let coeffs = PeriodicCoefficients {
            a0: 3.0,
            atoms: vec![atom(2.0, 0.07, 0.4), atom(0.5, 0.21, -1.0), atom(4.0, 0.011, 2.2)],
        };
        let mask = PeriodMask { bits: vec![true, false, true] };
        let times: Vec<i64> = vec![0, 3, 17, 60, 155];
        let upstream: Vec<f64> = vec![0.3, -1.1, 0.7, 0.05, -0.6];

        let mut grad = PeriodicGradient::zeros_like(&coeffs);
        coeffs.accumulate_gradient(&mask, &times, &upstream, &mut grad).unwrap();

        // Scalar objective sum(upstream * g(times)) probed one parameter at
        // a time with central differences.
        let objective = |c: &PeriodicCoefficients| -> f64 {
            let g = c.evaluate(&mask, &times).unwrap();
            g.iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        let check = |analytic: f64, mutate: &dyn Fn(&mut PeriodicCoefficients, f64)| {
            let mut plus = coeffs.clone();
            mutate(&mut plus, h);
            let mut minus = coeffs.clone();
            mutate(&mut minus, -h);
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let tol = 1e-4 * analytic.abs().max(1e-6);
            assert!((analytic - fd).abs() <= tol, "analytic {analytic} vs fd {fd}");
        };
        check(grad.a0, &|c, h| c.a0 += h);
        for i in 0..3 {
            check(grad.amplitude[i], &move |c, h| c.atoms[i].amplitude += h);
            check(grad.frequency[i], &move |c, h| c.atoms[i].frequency += h);
            check(grad.phase[i], &move |c, h| c.atoms[i].phase += h);
        }
        // The disabled atom must have exactly zero gradient.
        assert_eq!((grad.amplitude[1], grad.frequency[1], grad.phase[1]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn init_recovers_a_planted_cosine() {
        // Pure 30 + 8*cos(2*pi*t/50 + phase) over 4000 training points: the
        // first accepted atom must nail frequency and amplitude.
        let n = 4000;
        let gen = |t: i64| 30.0 + 8.0 * (TAU * (t as f64 + 2.0) / 50.0).cos();
        let train = Series::new("s", 0, (0..n).map(gen).collect()).unwrap();
        let val = Series::new("s", n, (n..n + 100).map(gen).collect()).unwrap();
        let (coeffs, mask, report) = init_periods(&train, &val, 16, 4).unwrap();

        assert!(!report.selected_indices.is_empty());
        let first = report.selected_indices[0];
        assert!(mask.bits[first]);
        let a = &coeffs.atoms[first];
        assert!((a.frequency - 0.02).abs() / 0.02 < 0.02, "freq {}", a.frequency);
        assert!((a.amplitude - 8.0).abs() / 8.0 < 0.05, "amp {}", a.amplitude);
        // Costs at accepted steps never increase.
        let mut last = report.initial_cost;
        for &i in &report.selected_indices {
            let cost = report.step_costs[i];
            assert!(cost <= last, "cost {cost} after {last}");
            last = cost;
        }
    }

    #[test]
    fn constant_training_split_selects_nothing() {
        let train = Series::new("s", 0, vec![5.0; 1000]).unwrap();
        let val = Series::new("s", 1000, vec![5.0; 50]).unwrap();
        let (coeffs, mask, report) = init_periods(&train, &val, 8, 4).unwrap();
        assert_eq!(coeffs.a0, 5.0);
        assert_eq!(mask.enabled_count(), 0);
        assert!(report.selected_indices.is_empty());
    }

    #[test]
    fn selection_stops_at_the_budget() {
        // A rich signal with many strong atoms: selection must stop at j.
        let gen = |t: i64| {
            let t = t as f64;
            10.0 + (TAU * t / 40.0).cos() * 4.0
                + (TAU * t / 8.0).cos() * 3.0
                + (TAU * t / 5.0).cos() * 2.0
                + (TAU * t / 16.0).cos() * 1.5
        };
        let train = Series::new("s", 0, (0..2000).map(gen).collect()).unwrap();
        let val = Series::new("s", 2000, (2000..2080).map(gen).collect()).unwrap();
        let (_, mask, _) = init_periods(&train, &val, 32, 2).unwrap();
        assert_eq!(mask.enabled_count(), 2);
    }

    #[test]
    fn phase_rebasing_handles_nonzero_train_start() {
        // Same signal, train split starting at t0 = 137: evaluating the
        // initialized function at absolute times must still track it.
        let gen = |t: i64| 4.0 + 2.0 * (TAU * t as f64 / 20.0 + 0.9).cos();
        let train = Series::new("s", 137, (137..2137).map(gen).collect()).unwrap();
        let val = Series::new("s", 2137, (2137..2237).map(gen).collect()).unwrap();
        let (coeffs, mask, _) = init_periods(&train, &val, 8, 2).unwrap();
        let times: Vec<i64> = (2137..2237).collect();
        let g = coeffs.evaluate(&mask, &times).unwrap();
        for (got, &t) in g.iter().zip(&times) {
            assert!((got - gen(t)).abs() < 0.05, "t={t}: {got} vs {}", gen(t));
        }
    }

    #[test]
    fn coefficients_doc_round_trips() {
        let coeffs = PeriodicCoefficients { a0: 1.25, atoms: vec![atom(2.0, 0.125, -0.75)] };
        let mask = PeriodMask { bits: vec![true] };
        let doc = CoefficientsDoc {
            version: COEFFICIENTS_VERSION,
            series: vec![SeriesPeriodicity::from_parts("a", &coeffs, &mask)],
        };
        let bytes = serde_json::to_vec(&doc).unwrap();
        let parsed = parse_coefficients_doc(&bytes).unwrap();
        let (c2, m2) = parsed.series[0].into_parts();
        assert_eq!(c2, coeffs);
        assert_eq!(m2, mask);
    }

    #[test]
    fn coefficients_doc_rejects_bad_input() {
        assert!(parse_coefficients_doc(b"not json").is_err());
        assert!(parse_coefficients_doc(b"{\"version\":99,\"series\":[]}").is_err());
        let nan = b"{\"version\":1,\"series\":[{\"series_id\":\"a\",\"a0\":null,\"atoms\":[]}]}";
        assert!(parse_coefficients_doc(nan).is_err());
    }
}
