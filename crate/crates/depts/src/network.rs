//! The triply residual expansion network.
//!
//! Each of the `N` layers holds a periodic block and a local block and
//! maintains three running signals: the lookback residue `x` (length `L`),
//! the periodic state `z` (length `L+H`), and the growing forecast `x_hat`
//! (length `H`). With `v = (v_back, v_fore)` from the periodic block and
//! `u = (u_back, u_fore)` from the local block, one layer computes
//!
//! ```text
//! v      = periodic_block(z)
//! u      = local_block(x - v_back)
//! x'     = x - v_back - u_back
//! z'     = z - v
//! x_hat' = x_hat + u_fore + v_fore
//! ```
//!
//! so by construction the inputs telescope into the layer contributions plus
//! a terminal residue. Ablation switches ([`VariantFlags`]) cut individual
//! residual connections to isolate what each one buys.
//!
//! Everything here works on a single window; training batches are loops over
//! windows with gradients accumulated in fixed order, which keeps runs
//! bit-reproducible. The forward pass caches every post-activation needed by
//! the hand-rolled reverse pass in [`ForwardCache`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One affine map `y = W*x + b`, weights row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    /// Uniform init on `[-limit, limit]` with `limit = sqrt(6/(fan_in+fan_out))`,
    /// biases zero.
    pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let w = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
        Dense { rows, cols, w, b: vec![0.0; rows] }
    }

    /// Same shape, all zeros; used for gradients and optimizer state.
    pub fn zeros_like(&self) -> Self {
        Dense {
            rows: self.rows,
            cols: self.cols,
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.rows],
        }
    }

    /// `out = W*x + b`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            out.push(self.b[r] + dot(row, x));
        }
        out
    }

    /// Reverse-mode step: accumulates `dW += dy*x^T`, `db += dy`, and when
    /// `dx` is given, `dx += W^T*dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>, grad: &mut Dense) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &g) in dy.iter().enumerate() {
            grad.b[r] += g;
            let row = &mut grad.w[r * self.cols..(r + 1) * self.cols];
            for (gw, &xc) in row.iter_mut().zip(x) {
                *gw += g * xc;
            }
        }
        if let Some(dx) = dx {
            debug_assert_eq!(dx.len(), self.cols);
            for (r, &g) in dy.iter().enumerate() {
                let row = &self.w[r * self.cols..(r + 1) * self.cols];
                for (d, &wc) in dx.iter_mut().zip(row) {
                    *d += g * wc;
                }
            }
        }
    }
}

/// Dot product with four fixed accumulators: deterministic reassociation
/// with enough instruction-level parallelism for the FP units.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n4 = a.len() & !3;
    let (a4, at) = a.split_at(n4);
    let (b4, bt) = b.split_at(n4);
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for (ca, cb) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        s0 += ca[0] * cb[0];
        s1 += ca[1] * cb[1];
        s2 += ca[2] * cb[2];
        s3 += ca[3] * cb[3];
    }
    let mut s = (s0 + s2) + (s1 + s3);
    for (x, y) in at.iter().zip(bt) {
        s += x * y;
    }
    s
}

fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Masks `dy` by the rectifier: gradient passes where the cached
/// post-activation is strictly positive.
fn relu_backward(post: &[f64], dy: &mut [f64]) {
    for (d, &p) in dy.iter_mut().zip(post) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Local block: a four-layer rectified trunk over the (periodicity-reduced)
/// lookback, linear heads for backcast/forecast expansion coefficients, and
/// square linear bases mapping those to signal space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBlock {
    pub fc: [Dense; 4],
    pub coeff_back: Dense,
    pub coeff_fore: Dense,
    pub basis_back: Dense,
    pub basis_fore: Dense,
}

impl LocalBlock {
    fn init(l: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Self {
        LocalBlock {
            fc: [
                Dense::glorot(w, l, rng),
                Dense::glorot(w, w, rng),
                Dense::glorot(w, w, rng),
                Dense::glorot(w, w, rng),
            ],
            coeff_back: Dense::glorot(l, w, rng),
            coeff_fore: Dense::glorot(h, w, rng),
            basis_back: Dense::glorot(l, l, rng),
            basis_fore: Dense::glorot(h, h, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        LocalBlock {
            fc: [
                self.fc[0].zeros_like(),
                self.fc[1].zeros_like(),
                self.fc[2].zeros_like(),
                self.fc[3].zeros_like(),
            ],
            coeff_back: self.coeff_back.zeros_like(),
            coeff_fore: self.coeff_fore.zeros_like(),
            basis_back: self.basis_back.zeros_like(),
            basis_fore: self.basis_fore.zeros_like(),
        }
    }
}

/// Periodic block: one rectified layer over the periodic state and two
/// linear heads for the backcast/forecast slices, scaled by the per-series
/// `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBlock {
    pub fc: Dense,
    pub head_back: Dense,
    pub head_fore: Dense,
}

impl PeriodicBlock {
    fn init(l: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Self {
        PeriodicBlock {
            fc: Dense::glorot(w, l + h, rng),
            head_back: Dense::glorot(l, w, rng),
            head_fore: Dense::glorot(h, w, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        PeriodicBlock {
            fc: self.fc.zeros_like(),
            head_back: self.head_back.zeros_like(),
            head_fore: self.head_fore.zeros_like(),
        }
    }
}

/// One expansion layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionLayer {
    pub periodic: PeriodicBlock,
    pub local: LocalBlock,
}

/// All trainable network parameters (periodicity coefficients live apart and
/// train under their own learning rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub lookback: usize,
    pub horizon: usize,
    pub width: usize,
    pub layers: Vec<ExpansionLayer>,
    /// Per-series output scale of the periodic blocks, initialized to 1.
    pub alpha: Vec<f64>,
}

impl NetworkParams {
    /// Fresh network; the traversal order of initialization draws is part of
    /// the determinism contract.
    pub fn init(
        n_series: usize,
        lookback: usize,
        horizon: usize,
        width: usize,
        n_layers: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|_| ExpansionLayer {
                periodic: PeriodicBlock::init(lookback, horizon, width, rng),
                local: LocalBlock::init(lookback, horizon, width, rng),
            })
            .collect();
        NetworkParams { lookback, horizon, width, layers, alpha: vec![1.0; n_series] }
    }

    /// Zero gradient / optimizer-state buffer shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            lookback: self.lookback,
            horizon: self.horizon,
            width: self.width,
            layers: self
                .layers
                .iter()
                .map(|l| ExpansionLayer {
                    periodic: l.periodic.zeros_like(),
                    local: l.local.zeros_like(),
                })
                .collect(),
            alpha: vec![0.0; self.alpha.len()],
        }
    }

    /// All parameter arrays in a fixed traversal order; gradients and
    /// optimizer state iterate the same way, which is what lets the
    /// optimizer zip them positionally.
    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            let p = &mut layer.periodic;
            for d in [&mut p.fc, &mut p.head_back, &mut p.head_fore] {
                out.push(&mut d.w);
                out.push(&mut d.b);
            }
            let l = &mut layer.local;
            let mut dense: Vec<&mut Dense> = l.fc.iter_mut().collect();
            dense.extend([
                &mut l.coeff_back,
                &mut l.coeff_fore,
                &mut l.basis_back,
                &mut l.basis_fore,
            ]);
            for d in dense {
                out.push(&mut d.w);
                out.push(&mut d.b);
            }
        }
        out.push(&mut self.alpha);
        out
    }

    /// Structural validation for parameters from untrusted bytes: every
    /// dense shape must match the declared lookback/horizon/width, every
    /// array length its shape, and every value must be finite. The forward
    /// pass indexes by shape and may only run on validated parameters.
    pub fn validate(&self) -> Result<()> {
        let (l, h, w) = (self.lookback, self.horizon, self.width);
        if l == 0 || h == 0 || w == 0 || self.layers.is_empty() || self.alpha.is_empty() {
            return Err(Error::Data(
                "network: empty dimension, layer list, or series scale".into(),
            ));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let p = &layer.periodic;
            let lo = &layer.local;
            let blocks = [
                (&p.fc, w, l + h, "periodic fc"),
                (&p.head_back, l, w, "periodic backcast head"),
                (&p.head_fore, h, w, "periodic forecast head"),
                (&lo.fc[0], w, l, "local fc0"),
                (&lo.fc[1], w, w, "local fc1"),
                (&lo.fc[2], w, w, "local fc2"),
                (&lo.fc[3], w, w, "local fc3"),
                (&lo.coeff_back, l, w, "local backcast coefficients"),
                (&lo.coeff_fore, h, w, "local forecast coefficients"),
                (&lo.basis_back, l, l, "local backcast basis"),
                (&lo.basis_fore, h, h, "local forecast basis"),
            ];
            for (d, rows, cols, name) in blocks {
                let cells = rows.checked_mul(cols).ok_or_else(|| {
                    Error::Data(format!("layer {i} {name}: shape {rows}x{cols} overflows"))
                })?;
                if d.rows != rows || d.cols != cols || d.w.len() != cells || d.b.len() != rows {
                    return Err(Error::Data(format!(
                        "layer {i} {name}: expected {rows}x{cols}, found {}x{} with {} weights and {} biases",
                        d.rows,
                        d.cols,
                        d.w.len(),
                        d.b.len()
                    )));
                }
            }
        }
        for arr in self.arrays() {
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("network: non-finite parameter".into()));
            }
        }
        Ok(())
    }

    /// Immutable view matching [`NetworkParams::arrays_mut`].
    pub fn arrays(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            let p = &layer.periodic;
            for d in [&p.fc, &p.head_back, &p.head_fore] {
                out.push(&d.w);
                out.push(&d.b);
            }
            let l = &layer.local;
            let mut dense: Vec<&Dense> = l.fc.iter().collect();
            dense.extend([&l.coeff_back, &l.coeff_fore, &l.basis_back, &l.basis_fore]);
            for d in dense {
                out.push(&d.w);
                out.push(&d.b);
            }
        }
        out.push(&self.alpha);
        out
    }
}

/// Residual-connection switches for the ablation variants.
///
/// All false is the full model. Exactly one switch is set by each ablation:
/// `raw_local_input` feeds every local block the raw lookback instead of the
/// periodicity-reduced residue; `drop_periodic_forecast` keeps periodic
/// forecasts out of the accumulated forecast; `shared_z` feeds every layer
/// the initial periodic state instead of the shrinking residue; and
/// `local_only` removes periodic blocks entirely, feeding the network
/// `x - z_back` once at the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VariantFlags {
    pub raw_local_input: bool,
    pub drop_periodic_forecast: bool,
    pub shared_z: bool,
    pub local_only: bool,
}

/// Per-layer contributions, recorded for diagnostics and decomposition dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTerms {
    pub u_back: Vec<f64>,
    pub u_fore: Vec<f64>,
    pub v_back: Vec<f64>,
    pub v_fore: Vec<f64>,
}

/// Forecast of one window split into its sources.
///
/// `periodic_part` is derived as `forecast - local_part`, so that identity
/// is bit-exact (and the sum form `forecast = local_part + periodic_part`
/// holds to one rounding). Under `drop_periodic_forecast` and `local_only`
/// nothing periodic is ever added, the two accumulators agree exactly, and
/// `periodic_part` is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDecomposition {
    pub forecast: Vec<f64>,
    pub local_part: Vec<f64>,
    pub periodic_part: Vec<f64>,
    /// Terminal lookback residue `x^(N)`.
    pub x_residue: Vec<f64>,
    /// Terminal periodic residue `z^(N)`.
    pub z_residue: Vec<f64>,
    pub layers: Vec<LayerTerms>,
}

/// Per-window tensors cached by the forward pass for the reverse pass.
///
/// `z_inputs` / `x_inputs` record what each layer's blocks actually consumed,
/// which also makes residual-routing claims directly testable.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub z_inputs: Vec<Vec<f64>>,
    pub x_inputs: Vec<Vec<f64>>,
    periodic_hidden: Vec<Vec<f64>>,
    v_back_raw: Vec<Vec<f64>>,
    v_fore_raw: Vec<Vec<f64>>,
    local_hidden: Vec<[Vec<f64>; 4]>,
    coeff_back: Vec<Vec<f64>>,
    coeff_fore: Vec<Vec<f64>>,
}

impl ForwardCache {
    fn with_capacity(n: usize) -> Self {
        ForwardCache {
            z_inputs: Vec::with_capacity(n),
            x_inputs: Vec::with_capacity(n),
            periodic_hidden: Vec::with_capacity(n),
            v_back_raw: Vec::with_capacity(n),
            v_fore_raw: Vec::with_capacity(n),
            local_hidden: Vec::with_capacity(n),
            coeff_back: Vec::with_capacity(n),
            coeff_fore: Vec::with_capacity(n),
        }
    }
}

fn validate_window(
    params: &NetworkParams,
    series_index: usize,
    lookback: &[f64],
    z: &[f64],
) -> Result<()> {
    let (l, h) = (params.lookback, params.horizon);
    if lookback.len() != l {
        return Err(Error::Data(format!(
            "lookback has {} points, network expects {l}",
            lookback.len()
        )));
    }
    if z.len() != l + h {
        return Err(Error::Data(format!(
            "periodic state has {} points, network expects {}",
            z.len(),
            l + h
        )));
    }
    if series_index >= params.alpha.len() {
        return Err(Error::Data(format!(
            "series index {series_index} out of range for {} series",
            params.alpha.len()
        )));
    }
    Ok(())
}

/// Runs one window through the network.
pub fn network_forward(
    params: &NetworkParams,
    series_index: usize,
    lookback: &[f64],
    z: &[f64],
    flags: &VariantFlags,
) -> Result<ForecastDecomposition> {
    network_forward_cached(params, series_index, lookback, z, flags).map(|(d, _)| d)
}

/// Forward pass that also returns the cache consumed by [`network_backward`].
pub fn network_forward_cached(
    params: &NetworkParams,
    series_index: usize,
    lookback: &[f64],
    z: &[f64],
    flags: &VariantFlags,
) -> Result<(ForecastDecomposition, ForwardCache)> {
    validate_window(params, series_index, lookback, z)?;
    let (l, h) = (params.lookback, params.horizon);
    let alpha = params.alpha[series_index];

    // The lookback-only variant consumes the periodicity once, at the input.
    let mut x_res: Vec<f64> = if flags.local_only {
        lookback.iter().zip(&z[..l]).map(|(x, zb)| x - zb).collect()
    } else {
        lookback.to_vec()
    };
    let mut z_res: Vec<f64> = z.to_vec();
    let mut forecast = vec![0.0; h];
    let mut local_part = vec![0.0; h];
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut cache = ForwardCache::with_capacity(params.layers.len());

    for layer in &params.layers {
        let (v_back, v_fore) = if flags.local_only {
            (vec![0.0; l], vec![0.0; h])
        } else {
            let z_in = if flags.shared_z { z } else { z_res.as_slice() };
            let mut hidden = layer.periodic.fc.forward(z_in);
            relu_inplace(&mut hidden);
            let v_back_raw = layer.periodic.head_back.forward(&hidden);
            let v_fore_raw = layer.periodic.head_fore.forward(&hidden);
            let v_back: Vec<f64> = v_back_raw.iter().map(|v| alpha * v).collect();
            let v_fore: Vec<f64> = v_fore_raw.iter().map(|v| alpha * v).collect();
            cache.z_inputs.push(z_in.to_vec());
            cache.periodic_hidden.push(hidden);
            cache.v_back_raw.push(v_back_raw);
            cache.v_fore_raw.push(v_fore_raw);
            (v_back, v_fore)
        };

        let x_tilde: Vec<f64> = if flags.local_only {
            x_res.clone()
        } else if flags.raw_local_input {
            lookback.to_vec()
        } else {
            x_res.iter().zip(&v_back).map(|(x, v)| x - v).collect()
        };
        let mut hidden = [layer.local.fc[0].forward(&x_tilde), Vec::new(), Vec::new(), Vec::new()];
        relu_inplace(&mut hidden[0]);
        for i in 1..4 {
            hidden[i] = layer.local.fc[i].forward(&hidden[i - 1]);
            relu_inplace(&mut hidden[i]);
        }
        let c_back = layer.local.coeff_back.forward(&hidden[3]);
        let c_fore = layer.local.coeff_fore.forward(&hidden[3]);
        let u_back = layer.local.basis_back.forward(&c_back);
        let u_fore = layer.local.basis_fore.forward(&c_fore);

        for ((x, vb), ub) in x_res.iter_mut().zip(&v_back).zip(&u_back) {
            *x -= vb + ub;
        }
        if !flags.shared_z && !flags.local_only {
            for (zr, v) in z_res.iter_mut().zip(v_back.iter().chain(&v_fore)) {
                *zr -= v;
            }
        }
        for (f, u) in forecast.iter_mut().zip(&u_fore) {
            *f += u;
        }
        for (p, u) in local_part.iter_mut().zip(&u_fore) {
            *p += u;
        }
        if !flags.drop_periodic_forecast && !flags.local_only {
            for (f, v) in forecast.iter_mut().zip(&v_fore) {
                *f += v;
            }
        }

        cache.x_inputs.push(x_tilde);
        cache.local_hidden.push(hidden);
        cache.coeff_back.push(c_back);
        cache.coeff_fore.push(c_fore);
        layers.push(LayerTerms { u_back, u_fore, v_back, v_fore });
    }

    let periodic_part: Vec<f64> = forecast.iter().zip(&local_part).map(|(f, u)| f - u).collect();
    let decomposition = ForecastDecomposition {
        forecast,
        local_part,
        periodic_part,
        x_residue: x_res,
        z_residue: z_res,
        layers,
    };
    Ok((decomposition, cache))
}

/// Reverse pass for one window.
///
/// `d_forecast` is the upstream gradient on the forecast. Parameter
/// gradients accumulate into `grads` (so a batch is a loop over windows
/// sharing one buffer); the returned vector is the gradient with respect to
/// the periodic state `z`, which the caller chains into the periodicity
/// coefficients.
pub fn network_backward(
    params: &NetworkParams,
    series_index: usize,
    cache: &ForwardCache,
    flags: &VariantFlags,
    d_forecast: &[f64],
    grads: &mut NetworkParams,
) -> Result<Vec<f64>> {
    let (l, h) = (params.lookback, params.horizon);
    if d_forecast.len() != h {
        return Err(Error::Data(format!(
            "upstream gradient has {} points, horizon is {h}",
            d_forecast.len()
        )));
    }
    if series_index >= params.alpha.len() {
        return Err(Error::Data(format!(
            "series index {series_index} out of range for {} series",
            params.alpha.len()
        )));
    }
    let alpha = params.alpha[series_index];

    let mut d_x_res = vec![0.0; l];
    let mut d_z_res = vec![0.0; l + h];
    // Under shared_z the per-layer state gradients bypass the residual chain
    // and land directly on the initial z.
    let mut d_z_shared = vec![0.0; l + h];

    for (idx, layer) in params.layers.iter().enumerate().rev() {
        let g_layer = &mut grads.layers[idx];

        // Adjoints of this layer's block outputs, taken before the residue
        // adjoints are advanced below.
        let d_u_fore = d_forecast;
        let d_u_back: Vec<f64> = d_x_res.iter().map(|d| -d).collect();

        // Local block: bases -> coefficient heads -> rectified trunk.
        let mut d_c_back = vec![0.0; l];
        let mut d_c_fore = vec![0.0; h];
        layer.local.basis_back.backward(
            &cache.coeff_back[idx],
            &d_u_back,
            Some(&mut d_c_back),
            &mut g_layer.local.basis_back,
        );
        layer.local.basis_fore.backward(
            &cache.coeff_fore[idx],
            d_u_fore,
            Some(&mut d_c_fore),
            &mut g_layer.local.basis_fore,
        );
        let mut d_hidden = vec![0.0; params.width];
        layer.local.coeff_back.backward(
            &cache.local_hidden[idx][3],
            &d_c_back,
            Some(&mut d_hidden),
            &mut g_layer.local.coeff_back,
        );
        layer.local.coeff_fore.backward(
            &cache.local_hidden[idx][3],
            &d_c_fore,
            Some(&mut d_hidden),
            &mut g_layer.local.coeff_fore,
        );
        let mut d_x_tilde = vec![0.0; l];
        for i in (0..4).rev() {
            relu_backward(&cache.local_hidden[idx][i], &mut d_hidden);
            let input: &[f64] =
                if i == 0 { &cache.x_inputs[idx] } else { &cache.local_hidden[idx][i - 1] };
            if i == 0 {
                layer.local.fc[0].backward(
                    input,
                    &d_hidden,
                    Some(&mut d_x_tilde),
                    &mut g_layer.local.fc[0],
                );
            } else {
                let mut d_prev = vec![0.0; params.width];
                layer.local.fc[i].backward(
                    input,
                    &d_hidden,
                    Some(&mut d_prev),
                    &mut g_layer.local.fc[i],
                );
                d_hidden = d_prev;
            }
        }

        if flags.local_only {
            // x' = x - u_back and x_tilde = x: both feed the previous residue.
            for (d, dt) in d_x_res.iter_mut().zip(&d_x_tilde) {
                *d += dt;
            }
            continue;
        }

        // Adjoints of the scaled periodic outputs, gathered from the three
        // recurrences that consume them.
        let mut d_v_back: Vec<f64> = d_x_res.iter().map(|d| -d).collect();
        let mut d_v_fore: Vec<f64> =
            if flags.drop_periodic_forecast { vec![0.0; h] } else { d_forecast.to_vec() };
        if !flags.shared_z {
            for (d, dz) in d_v_back.iter_mut().zip(&d_z_res[..l]) {
                *d -= dz;
            }
            for (d, dz) in d_v_fore.iter_mut().zip(&d_z_res[l..]) {
                *d -= dz;
            }
        }
        if flags.raw_local_input {
            // x_tilde was the raw lookback: data, no parameter gradient.
        } else {
            // x_tilde = x - v_back.
            for ((d, dt), dv) in d_x_res.iter_mut().zip(&d_x_tilde).zip(d_v_back.iter_mut()) {
                *d += dt;
                *dv -= dt;
            }
        }
        // alpha scales both raw head outputs.
        let g_alpha =
            dot(&d_v_back, &cache.v_back_raw[idx]) + dot(&d_v_fore, &cache.v_fore_raw[idx]);
        grads.alpha[series_index] += g_alpha;
        let d_v_back_raw: Vec<f64> = d_v_back.iter().map(|d| alpha * d).collect();
        let d_v_fore_raw: Vec<f64> = d_v_fore.iter().map(|d| alpha * d).collect();

        let mut d_p_hidden = vec![0.0; params.width];
        layer.periodic.head_back.backward(
            &cache.periodic_hidden[idx],
            &d_v_back_raw,
            Some(&mut d_p_hidden),
            &mut g_layer.periodic.head_back,
        );
        layer.periodic.head_fore.backward(
            &cache.periodic_hidden[idx],
            &d_v_fore_raw,
            Some(&mut d_p_hidden),
            &mut g_layer.periodic.head_fore,
        );
        relu_backward(&cache.periodic_hidden[idx], &mut d_p_hidden);
        let mut d_z_in = vec![0.0; l + h];
        layer.periodic.fc.backward(
            &cache.z_inputs[idx],
            &d_p_hidden,
            Some(&mut d_z_in),
            &mut g_layer.periodic.fc,
        );

        if flags.shared_z {
            for (d, di) in d_z_shared.iter_mut().zip(&d_z_in) {
                *d += di;
            }
        } else {
            for (d, di) in d_z_res.iter_mut().zip(&d_z_in) {
                *d += di;
            }
        }
    }

    // Below the first layer the residues are the network inputs.
    let mut d_z: Vec<f64> = d_z_res.iter().zip(&d_z_shared).map(|(a, b)| a + b).collect();
    if flags.local_only {
        // Input was x - z_back: the lookback residue gradient flips sign
        // onto the backcast slice of z; the forecast slice is unused.
        for (d, dx) in d_z.iter_mut().zip(&d_x_res) {
            *d = -dx;
        }
        for d in d_z[l..].iter_mut() {
            *d = 0.0;
        }
    }
    Ok(d_z)
}
