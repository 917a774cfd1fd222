//! Training: losses, the Adam optimizer, variants, and the fitting loop.
//!
//! Training minimizes a forecast loss over randomly sampled windows with
//! hand-rolled reverse-mode gradients. Two parameter groups update under
//! separate learning rates: the network weights (including the per-series
//! periodic scales), and the periodicity coefficients, whose fine-tuning
//! rate is orders of magnitude smaller so the initialized periods drift
//! only gently. Masked atoms receive no gradient and are skipped by the
//! optimizer, so they stay bit-wise frozen.
//!
//! Runs are deterministic per seed: one stream seeds weight initialization
//! and then batch sampling, windows are processed in draw order, and
//! gradient accumulation is single-threaded.

use serde::{Deserialize, Serialize};

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{anchor_range, split, window_at, Series, SplitSpec};
use crate::error::{Error, Result};
use crate::kernels::CosineAtom;
use crate::network::{network_backward, network_forward_cached, NetworkParams, VariantFlags};
use crate::periodicity::{PeriodMask, PeriodicCoefficients, PeriodicGradient, SeriesPeriodicity};

// --- losses -----------------------------------------------------------------

/// Symmetric mean absolute percentage error, in percent:
/// `(200/H) * sum |f - a| / (|f| + |a|)`, with zero-denominator terms
/// contributing zero.
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    check_same_len(forecast, actual)?;
    let sum: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(&f, &a)| {
            let denom = f.abs() + a.abs();
            if denom == 0.0 {
                0.0
            } else {
                (f - a).abs() / denom
            }
        })
        .sum();
    Ok(200.0 * sum / forecast.len() as f64)
}

/// Gradient of [`smape`] with respect to the forecast.
pub fn smape_gradient(forecast: &[f64], actual: &[f64]) -> Result<Vec<f64>> {
    check_same_len(forecast, actual)?;
    let scale = 200.0 / forecast.len() as f64;
    Ok(forecast
        .iter()
        .zip(actual)
        .map(|(&f, &a)| {
            let denom = f.abs() + a.abs();
            if denom == 0.0 {
                0.0
            } else {
                scale * (sgn(f - a) * denom - (f - a).abs() * sgn(f)) / (denom * denom)
            }
        })
        .collect())
}

/// Mean absolute scaled error: mean absolute forecast error divided by the
/// mean absolute seasonal-naive error of the insample window at the given
/// lag.
///
/// Errors when the insample window is no longer than the lag, or when the
/// seasonal-naive denominator is zero.
pub fn mase(
    forecast: &[f64],
    actual: &[f64],
    insample: &[f64],
    seasonal_lag: usize,
) -> Result<f64> {
    let q = mase_denominator(insample, seasonal_lag)?;
    check_same_len(forecast, actual)?;
    let err: f64 = forecast.iter().zip(actual).map(|(f, a)| (f - a).abs()).sum::<f64>()
        / forecast.len() as f64;
    Ok(err / q)
}

/// Gradient of [`mase`] with respect to the forecast.
pub fn mase_gradient(
    forecast: &[f64],
    actual: &[f64],
    insample: &[f64],
    seasonal_lag: usize,
) -> Result<Vec<f64>> {
    let q = mase_denominator(insample, seasonal_lag)?;
    check_same_len(forecast, actual)?;
    let scale = 1.0 / (q * forecast.len() as f64);
    Ok(forecast.iter().zip(actual).map(|(&f, &a)| scale * sgn(f - a)).collect())
}

fn mase_denominator(insample: &[f64], seasonal_lag: usize) -> Result<f64> {
    if seasonal_lag == 0 || insample.len() <= seasonal_lag {
        return Err(Error::Data(format!(
            "mase: seasonal lag {seasonal_lag} needs an insample window longer than itself, got {}",
            insample.len()
        )));
    }
    let q = insample.windows(seasonal_lag + 1).map(|w| (w[seasonal_lag] - w[0]).abs()).sum::<f64>()
        / (insample.len() - seasonal_lag) as f64;
    if q == 0.0 {
        return Err(Error::Numeric("mase: seasonal-naive denominator is zero".into()));
    }
    Ok(q)
}

fn check_same_len(forecast: &[f64], actual: &[f64]) -> Result<()> {
    if forecast.len() != actual.len() || forecast.is_empty() {
        return Err(Error::Data(format!(
            "forecast and actual lengths differ or are empty: {} vs {}",
            forecast.len(),
            actual.len()
        )));
    }
    Ok(())
}

/// Sign with the subgradient convention `sgn(0) = 0`.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// --- optimizer ---------------------------------------------------------------

/// Adam hyper-parameters; everything but the learning rate normally stays at
/// the defaults.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    /// Standard settings at the given learning rate.
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second-moment state for a list of parameter arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed state for arrays of the given lengths.
    pub fn for_shapes(shapes: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = shapes.into_iter().map(|n| vec![0.0; n]).collect();
        let v = m.clone();
        AdamState { step: 0, m, v }
    }
}

/// One bias-corrected Adam step over parallel lists of parameter and
/// gradient arrays.
///
/// A zero gradient entry leaves its parameter (and moments) exactly
/// unchanged, which is what keeps masked atoms bit-frozen.
pub fn adam_step(
    hyper: &AdamHyper,
    state: &mut AdamState,
    params: &mut [&mut Vec<f64>],
    grads: &[&Vec<f64>],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Data(format!(
            "adam: {} parameter arrays, {} gradient arrays, state holds {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let (c1, c2) = bias_corrections(hyper, state.step);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Data(format!(
                "adam: array length mismatch: param {}, grad {}, state {}",
                p.len(),
                g.len(),
                m.len()
            )));
        }
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            adam_scalar(hyper, c1, c2, p, g, m, v);
        }
    }
    Ok(())
}

fn bias_corrections(hyper: &AdamHyper, step: u64) -> (f64, f64) {
    (1.0 - hyper.beta1.powi(step as i32), 1.0 - hyper.beta2.powi(step as i32))
}

#[inline]
fn adam_scalar(hyper: &AdamHyper, c1: f64, c2: f64, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
    if g == 0.0 && *m == 0.0 && *v == 0.0 {
        return;
    }
    *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
    *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
}

/// Adam over the periodicity group: one moment pair per series, shaped like
/// the gradients, plus the shared step counter.
#[derive(Debug, Clone)]
pub struct PhiAdam {
    pub step: u64,
    pub m: Vec<PeriodicGradient>,
    pub v: Vec<PeriodicGradient>,
}

impl PhiAdam {
    fn new(phi: &[(PeriodicCoefficients, PeriodMask)]) -> Self {
        let zeros: Vec<PeriodicGradient> =
            phi.iter().map(|(c, _)| PeriodicGradient::zeros_like(c)).collect();
        PhiAdam { step: 0, m: zeros.clone(), v: zeros }
    }

    /// Steps every enabled atom (and the constant level) of every series.
    fn step(
        &mut self,
        hyper: &AdamHyper,
        phi: &mut [(PeriodicCoefficients, PeriodMask)],
        grads: &[PeriodicGradient],
    ) {
        self.step += 1;
        let (c1, c2) = bias_corrections(hyper, self.step);
        for (si, (coeffs, mask)) in phi.iter_mut().enumerate() {
            let (g, m, v) = (&grads[si], &mut self.m[si], &mut self.v[si]);
            adam_scalar(hyper, c1, c2, &mut coeffs.a0, g.a0, &mut m.a0, &mut v.a0);
            for (i, atom) in coeffs.atoms.iter_mut().enumerate() {
                if !mask.bits[i] {
                    continue;
                }
                adam_scalar(
                    hyper,
                    c1,
                    c2,
                    &mut atom.amplitude,
                    g.amplitude[i],
                    &mut m.amplitude[i],
                    &mut v.amplitude[i],
                );
                adam_scalar(
                    hyper,
                    c1,
                    c2,
                    &mut atom.frequency,
                    g.frequency[i],
                    &mut m.frequency[i],
                    &mut v.frequency[i],
                );
                adam_scalar(
                    hyper,
                    c1,
                    c2,
                    &mut atom.phase,
                    g.phase[i],
                    &mut m.phase[i],
                    &mut v.phase[i],
                );
            }
        }
    }
}

// --- configuration -----------------------------------------------------------

/// Which model to train: the full architecture, one of the single-cut
/// ablations, the lookback-only reference, or the periodicity-initialization
/// controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Full model.
    #[serde(rename = "depts")]
    Depts,
    /// Local blocks see the raw lookback instead of the reduced residue.
    #[serde(rename = "depts-1")]
    Depts1,
    /// Periodic forecasts are not added to the output.
    #[serde(rename = "depts-2")]
    Depts2,
    /// Every layer sees the initial periodic state (no z residuals).
    #[serde(rename = "depts-3")]
    Depts3,
    /// No periodic blocks; the network sees `x - z_back` once. The
    /// periodicity stays frozen.
    #[serde(rename = "no-period")]
    NoPeriod,
    /// Full model, but the periodicity starts from random coefficients
    /// instead of the spectral initialization.
    #[serde(rename = "rand-init")]
    RandInit,
    /// Full model, but the periodicity is frozen after initialization.
    #[serde(rename = "fix-period")]
    FixPeriod,
}

impl Variant {
    /// Residual-connection switches this variant runs with.
    pub fn flags(&self) -> VariantFlags {
        match self {
            Variant::Depts | Variant::RandInit | Variant::FixPeriod => VariantFlags::default(),
            Variant::Depts1 => VariantFlags { raw_local_input: true, ..Default::default() },
            Variant::Depts2 => VariantFlags { drop_periodic_forecast: true, ..Default::default() },
            Variant::Depts3 => VariantFlags { shared_z: true, ..Default::default() },
            Variant::NoPeriod => VariantFlags { local_only: true, ..Default::default() },
        }
    }

    /// Whether the periodicity coefficients receive gradient updates.
    pub fn trains_periodicity(&self) -> bool {
        !matches!(self, Variant::FixPeriod | Variant::NoPeriod)
    }
}

/// Training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Smape,
    Mase,
}

/// Everything one training run needs beyond the data itself.
///
/// Defaults are desk-scale so the examples run in seconds; the reference
/// configuration from the original evaluation (30 layers of width 512,
/// 1024-window batches, tens of thousands of iterations) is documented in
/// the README and reachable by overriding fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub loss: Loss,
    /// Seasonal-naive lag used by the `mase` loss denominator.
    pub mase_seasonal_lag: usize,
    pub lr_theta: f64,
    pub lr_phi: f64,
    /// Lookback length as a multiple of the horizon: `L = multiplier * H`.
    pub lookback_multiplier: usize,
    /// Forecast horizon `H`.
    pub horizon: usize,
    /// Restricts training anchors to this many trailing positions of the
    /// training region; absent means the whole region.
    pub training_horizon: Option<usize>,
    pub seed: u64,
    pub variant: Variant,
    /// Number of expansion layers `N`.
    pub layers: usize,
    /// Hidden width `W` shared by both block kinds.
    pub width: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            iterations: 2000,
            batch_size: 64,
            loss: Loss::Smape,
            mase_seasonal_lag: 24,
            lr_theta: 1e-3,
            lr_phi: 5e-7,
            lookback_multiplier: 3,
            horizon: 24,
            training_horizon: None,
            seed: 0,
            variant: Variant::Depts,
            layers: 6,
            width: 64,
        }
    }
}

impl TrainingConfig {
    /// Lookback length `L`.
    pub fn lookback(&self) -> usize {
        self.lookback_multiplier * self.horizon
    }

    /// Rejects zero-sized dimensions and incoherent loss settings; run on
    /// every config that crosses a file boundary.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("lookback_multiplier", self.lookback_multiplier),
            ("horizon", self.horizon),
            ("layers", self.layers),
            ("width", self.width),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Usage(format!("{name} must be positive")));
            }
        }
        if self.loss == Loss::Mase
            && (self.mase_seasonal_lag == 0 || self.mase_seasonal_lag >= self.lookback())
        {
            return Err(Error::Usage(format!(
                "mase seasonal lag {} must be positive and smaller than the lookback {}",
                self.mase_seasonal_lag,
                self.lookback()
            )));
        }
        Ok(())
    }
}

// --- training ----------------------------------------------------------------

/// A fitted model: everything a forecast needs, and what checkpoints store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub series_ids: Vec<String>,
    pub config: TrainingConfig,
    pub params: NetworkParams,
    /// Per-series periodicity, parallel to `series_ids`.
    pub periodicity: Vec<SeriesPeriodicity>,
    /// Batch loss of the first iteration; absent when `iterations = 0`.
    pub initial_loss: Option<f64>,
    /// Mean batch loss over the trailing hundred iterations; absent when
    /// `iterations = 0`.
    pub final_loss: Option<f64>,
}

/// Per-iteration batch losses of one run.
#[derive(Debug, Clone)]
pub struct TrainingTrace {
    pub losses: Vec<f64>,
}

/// Fits one model on the training region of every series.
///
/// `series` carries full series on the global axis; `split` marks the
/// training region; `init` supplies per-series periodicity (parallel to
/// `series`). Deterministic: same inputs, same model, bit for bit.
pub fn train(
    series: &[Series],
    spec: &SplitSpec,
    init: &[(PeriodicCoefficients, PeriodMask)],
    config: &TrainingConfig,
) -> Result<(TrainedModel, TrainingTrace)> {
    config.validate()?;
    if series.is_empty() {
        return Err(Error::Data("train: no series".into()));
    }
    if init.len() != series.len() {
        return Err(Error::Data(format!(
            "train: {} series but {} periodicity entries",
            series.len(),
            init.len()
        )));
    }
    let (l, h) = (config.lookback(), config.horizon);

    let mut regions = Vec::with_capacity(series.len());
    for s in series {
        let (train_region, _, _) = split(s, spec)?;
        regions.push(train_region);
    }
    // Series whose training region cannot host a full window are skipped by
    // the sampler; at least one must remain.
    let mut ranges = Vec::with_capacity(regions.len());
    let mut sampleable = Vec::new();
    for (i, region) in regions.iter().enumerate() {
        let horizon_len = config.training_horizon.unwrap_or(region.len());
        let range = anchor_range(region, l, h, horizon_len);
        if range.is_some() {
            sampleable.push(i);
        }
        ranges.push(range);
    }
    if sampleable.is_empty() {
        return Err(Error::Data(format!(
            "train: no series admits a window of lookback {l} plus horizon {h}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = NetworkParams::init(series.len(), l, h, config.width, config.layers, &mut rng);
    let mut phi: Vec<(PeriodicCoefficients, PeriodMask)> = if config.variant == Variant::RandInit {
        init.iter()
            .zip(&regions)
            .map(|((_, mask), region)| random_periodicity(region, mask.enabled_count(), &mut rng))
            .collect()
    } else {
        init.to_vec()
    };

    let theta_hyper = AdamHyper::with_lr(config.lr_theta);
    let phi_hyper = AdamHyper::with_lr(config.lr_phi);
    let mut theta_state = AdamState::for_shapes(params.arrays().iter().map(|a| a.len()));
    let mut phi_state = PhiAdam::new(&phi);
    let flags = config.variant.flags();
    let fine_tune_phi = config.variant.trains_periodicity();

    let mut losses = Vec::with_capacity(config.iterations);
    let mut grads = params.zeros_like();
    for iteration in 0..config.iterations {
        for arr in grads.arrays_mut() {
            arr.iter_mut().for_each(|g| *g = 0.0);
        }
        let mut phi_grads: Vec<PeriodicGradient> =
            phi.iter().map(|(c, _)| PeriodicGradient::zeros_like(c)).collect();

        let mut batch_loss = 0.0;
        for _ in 0..config.batch_size {
            let si = sampleable[rng.gen_range(0..sampleable.len())];
            let (lo, hi) = ranges[si].expect("sampleable implies a valid range");
            let anchor = rng.gen_range(lo..=hi);
            let window = window_at(&regions[si], si, anchor, l, h)?;
            let times: Vec<i64> = (anchor - l as i64..anchor + h as i64).collect();
            let (coeffs, mask) = &phi[si];
            let z = coeffs.evaluate(mask, &times)?;

            let (decomp, cache) =
                network_forward_cached(&params, si, &window.lookback, &z, &flags)?;
            let (loss, mut d_forecast) = match config.loss {
                Loss::Smape => (
                    smape(&decomp.forecast, &window.target)?,
                    smape_gradient(&decomp.forecast, &window.target)?,
                ),
                Loss::Mase => (
                    mase(
                        &decomp.forecast,
                        &window.target,
                        &window.lookback,
                        config.mase_seasonal_lag,
                    )?,
                    mase_gradient(
                        &decomp.forecast,
                        &window.target,
                        &window.lookback,
                        config.mase_seasonal_lag,
                    )?,
                ),
            };
            batch_loss += loss;
            // The batch loss is the mean over windows.
            for d in &mut d_forecast {
                *d /= config.batch_size as f64;
            }
            let d_z = network_backward(&params, si, &cache, &flags, &d_forecast, &mut grads)?;
            if fine_tune_phi {
                let (coeffs, mask) = &phi[si];
                coeffs.accumulate_gradient(mask, &times, &d_z, &mut phi_grads[si])?;
            }
        }
        batch_loss /= config.batch_size as f64;
        if !batch_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged at iteration {iteration}: non-finite batch loss"
            )));
        }
        losses.push(batch_loss);

        adam_step(&theta_hyper, &mut theta_state, &mut params.arrays_mut(), &grads.arrays())?;
        if fine_tune_phi {
            phi_state.step(&phi_hyper, &mut phi, &phi_grads);
        }
    }

    let final_loss = (!losses.is_empty()).then(|| {
        let trailing = losses.len().min(100);
        losses[losses.len() - trailing..].iter().sum::<f64>() / trailing as f64
    });
    let model = TrainedModel {
        series_ids: series.iter().map(|s| s.id.clone()).collect(),
        config: config.clone(),
        params,
        periodicity: series
            .iter()
            .zip(&phi)
            .map(|(s, (c, m))| SeriesPeriodicity::from_parts(&s.id, c, m))
            .collect(),
        initial_loss: losses.first().copied(),
        final_loss,
    };
    Ok((model, TrainingTrace { losses }))
}

/// Uninformed periodicity for the random-initialization control: the
/// constant level is the training mean, and `count` atoms draw amplitude
/// uniformly within one standard deviation, frequency anywhere in band, and
/// phase anywhere on the circle. All atoms are enabled.
fn random_periodicity(
    region: &Series,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> (PeriodicCoefficients, PeriodMask) {
    let n = region.len() as f64;
    let mean = region.values.iter().sum::<f64>() / n;
    let std = (region.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let amp = Uniform::new(0.0, std.max(f64::MIN_POSITIVE));
    let freq = Uniform::new(0.0, 0.5);
    let phase = Uniform::new(0.0, std::f64::consts::TAU);
    let atoms = (0..count)
        .map(|_| CosineAtom {
            amplitude: amp.sample(rng),
            frequency: freq.sample(rng),
            phase: phase.sample(rng),
        })
        .collect();
    (PeriodicCoefficients { a0: mean, atoms }, PeriodMask::all(count))
}
