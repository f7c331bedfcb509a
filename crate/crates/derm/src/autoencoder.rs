//! Feedforward autoencoder: per-sample reconstruction losses, weighted
//! backpropagation, and Adam updates.
//!
//! The gradient of any of the aggregate objectives is obtained without
//! autodiff: compute per-sample losses, derive the closed-form weights,
//! then backprop the surrogate `sum(w_i * f_i)` with the weights treated
//! as constants. One weighted batch backward pass does the work of N
//! per-sample passes.

use serde::{Deserialize, Serialize};

use crate::aggregation::{LossVector, WeightVector};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    fn grad_at(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Relu => write!(f, "relu"),
            Activation::Linear => write!(f, "linear"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Param(format!("unknown activation '{other}'"))),
        }
    }
}

/// One fully connected layer: `out = act(in * weights + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    weights: Matrix, // in_dim x out_dim
    bias: Vec<f64>,
    activation: Activation,
}

impl LayerParams {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::Shape(format!(
                "bias length {} vs {} output units",
                bias.len(),
                weights.cols()
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer bias".into()));
        }
        Ok(LayerParams {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Encoder-then-decoder layer stack of a single autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<LayerParams>,
}

/// Default hidden widths for input dimension `d`: roughly halve twice.
pub fn default_hidden(d: usize) -> Vec<usize> {
    vec![2.max(d.div_ceil(2)), 1.max(d.div_ceil(4))]
}

/// Mirror `hidden` around the bottleneck: `[d, h1, .., hk, .., h1, d]`.
pub fn autoencoder_dims(d: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(2 * hidden.len() + 2);
    dims.push(d);
    dims.extend_from_slice(hidden);
    dims.extend(hidden.iter().rev().skip(1));
    dims.push(d);
    dims
}

/// ReLU on every layer except a linear output.
pub fn default_activations(n_layers: usize) -> Vec<Activation> {
    let mut acts = vec![Activation::Relu; n_layers];
    if let Some(last) = acts.last_mut() {
        *last = Activation::Linear;
    }
    acts
}

impl MlpParams {
    /// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero biases.
    /// `dims` must chain and start/end at the data dimension.
    pub fn init(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::Shape(format!(
                "need at least 3 dims (in, hidden, out), got {}",
                dims.len()
            )));
        }
        if dims.first() != dims.last() {
            return Err(Error::Shape(format!(
                "autoencoder input dim {} != output dim {}",
                dims[0],
                dims[dims.len() - 1]
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} activations for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, win) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.range(-bound, bound))
                .collect();
            layers.push(LayerParams::new(
                Matrix::from_vec(fan_in, fan_out, data)?,
                vec![0.0; fan_out],
                activations[l],
            )?);
        }
        Ok(MlpParams { layers })
    }

    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Shape("need at least 2 layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer dims do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        if layers[0].in_dim() != layers[layers.len() - 1].out_dim() {
            return Err(Error::Shape("input dim != output dim".into()));
        }
        Ok(MlpParams { layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim()));
        dims
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// All parameters as one flat vector: per layer, weights row-major
    /// then bias. Used by checkpointing and the finite-difference tests.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`params_flat`](Self::params_flat); shapes must match.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} params supplied, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.data().len();
            l.weights = Matrix::from_vec(
                l.weights.rows(),
                l.weights.cols(),
                flat[off..off + nw].to_vec(),
            )?;
            off += nw;
            let nb = l.bias.len();
            for (b, &v) in l.bias.iter_mut().zip(&flat[off..off + nb]) {
                if !v.is_finite() {
                    return Err(Error::NonFinite("bias param".into()));
                }
                *b = v;
            }
            off += nb;
        }
        Ok(())
    }

    /// Cheap content hash tying a ForwardCache to the exact parameters
    /// that produced it.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |bits: u64| {
            h ^= bits;
            h = h.wrapping_mul(0x100000001b3);
        };
        for l in &self.layers {
            for &w in l.weights.data() {
                mix(w.to_bits());
            }
            for &b in &l.bias {
                mix(b.to_bits());
            }
            mix(l.activation as u64 + 1);
        }
        h
    }
}

/// Activations recorded by a forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `post[0]` is the input batch; `post[l]` the output of layer `l`.
    post: Vec<Matrix>,
    /// `pre[l-1]` is the pre-activation of layer `l`.
    pre: Vec<Matrix>,
    params_fingerprint: u64,
}

/// Squared-L2 reconstruction loss per batch row, plus the cache needed to
/// backpropagate. Losses are summed over features, not averaged.
pub fn per_sample_recon_loss(mlp: &MlpParams, batch: &Matrix) -> Result<(LossVector, ForwardCache)> {
    if batch.cols() != mlp.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} features, model expects {}",
            batch.cols(),
            mlp.input_dim()
        )));
    }
    if batch.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut post = vec![batch.clone()];
    let mut pre = Vec::with_capacity(mlp.layers.len());
    for layer in &mlp.layers {
        let z = post
            .last()
            .unwrap()
            .matmul(&layer.weights)?
            .add_row_broadcast(&layer.bias)?;
        let a = z.map(|x| layer.activation.apply(x))?;
        pre.push(z);
        post.push(a);
    }
    let output = post.last().unwrap();
    let mut losses = Vec::with_capacity(batch.rows());
    for r in 0..batch.rows() {
        let loss: f64 = output
            .row(r)
            .iter()
            .zip(batch.row(r))
            .map(|(y, x)| (y - x) * (y - x))
            .sum();
        losses.push(loss);
    }
    let losses = LossVector::new(losses)?;
    Ok((
        losses,
        ForwardCache {
            post,
            pre,
            params_fingerprint: mlp.fingerprint(),
        },
    ))
}

/// Parameter gradients shaped exactly like the [`MlpParams`] they belong to.
#[derive(Debug, Clone)]
pub struct Gradients {
    layers: Vec<(Matrix, Vec<f64>)>, // (d_weights, d_bias) per layer
}

impl Gradients {
    pub fn layers(&self) -> &[(Matrix, Vec<f64>)] {
        &self.layers
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.is_finite() && b.iter().all(|x| x.is_finite()))
    }
}

/// Gradients of `sum_i weights[i] * loss_i(mlp, batch)` with the weights
/// treated as constants. The cache must come from
/// [`per_sample_recon_loss`] on the very same parameters and batch.
pub fn backward_weighted(
    mlp: &MlpParams,
    cache: &ForwardCache,
    batch: &Matrix,
    weights: &WeightVector,
) -> Result<Gradients> {
    if cache.params_fingerprint != mlp.fingerprint() {
        return Err(Error::Contract(
            "forward cache does not match these parameters".into(),
        ));
    }
    let input = &cache.post[0];
    if input.rows() != batch.rows() || input.cols() != batch.cols() || input != batch {
        return Err(Error::Contract(
            "forward cache does not match this batch".into(),
        ));
    }
    if weights.len() != batch.rows() {
        return Err(Error::Shape(format!(
            "{} weights for {} batch rows",
            weights.len(),
            batch.rows()
        )));
    }

    let n_layers = mlp.layers.len();
    let output = &cache.post[n_layers];

    // d/d(output) of sum_i w_i * ||out_i - x_i||^2 = 2 * w_i * (out_i - x_i)
    let mut d_act = {
        let diff = output.sub(batch)?;
        let mut scaled = Vec::with_capacity(diff.rows() * diff.cols());
        for r in 0..diff.rows() {
            let w = weights.values()[r];
            scaled.extend(diff.row(r).iter().map(|&v| 2.0 * w * v));
        }
        Matrix::from_vec(diff.rows(), diff.cols(), scaled)?
    };

    let mut grads = vec![None; n_layers];
    for l in (0..n_layers).rev() {
        let layer = &mlp.layers[l];
        // d_pre = d_act ⊙ act'(pre)
        let mask = cache.pre[l].map(|z| layer.activation.grad_at(z))?;
        let d_pre = d_act.hadamard(&mask)?;
        let d_w = cache.post[l].transpose().matmul(&d_pre)?;
        let d_b = d_pre.column_sum();
        if l > 0 {
            d_act = d_pre.matmul(&layer.weights.transpose())?;
        }
        grads[l] = Some((d_w, d_b));
    }
    Ok(Gradients {
        layers: grads.into_iter().map(|g| g.unwrap()).collect(),
    })
}

/// Adam accumulator state; shapes mirror the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<(Matrix, Vec<f64>)>,
    v: Vec<(Matrix, Vec<f64>)>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(mlp: &MlpParams) -> Self {
        let zeros: Vec<(Matrix, Vec<f64>)> = mlp
            .layers
            .iter()
            .map(|l| {
                (
                    Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    vec![0.0; l.bias.len()],
                )
            })
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. Gradients must be finite and
/// shaped like the parameters; `lr` must be positive.
pub fn adam_step(
    mlp: &mut MlpParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::Param(format!("learning rate must be > 0, got {lr}")));
    }
    if grads.layers.len() != mlp.layers.len() || state.m.len() != mlp.layers.len() {
        return Err(Error::Shape("gradient/state layer count mismatch".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients passed to adam_step".into()));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);

    for (l, layer) in mlp.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[l];
        if gw.rows() != layer.weights.rows()
            || gw.cols() != layer.weights.cols()
            || gb.len() != layer.bias.len()
        {
            return Err(Error::Shape(format!("gradient shape mismatch at layer {l}")));
        }
        let (mw, mb) = &mut state.m[l];
        let (vw, vb) = &mut state.v[l];
        if mw.data().len() != gw.data().len() || mb.len() != gb.len() {
            return Err(Error::Shape(format!("adam state shape mismatch at layer {l}")));
        }

        let mut new_w = layer.weights.data().to_vec();
        let mut mw_data = mw.data().to_vec();
        let mut vw_data = vw.data().to_vec();
        for (i, &g) in gw.data().iter().enumerate() {
            mw_data[i] = state.beta1 * mw_data[i] + (1.0 - state.beta1) * g;
            vw_data[i] = state.beta2 * vw_data[i] + (1.0 - state.beta2) * g * g;
            let m_hat = mw_data[i] / bc1;
            let v_hat = vw_data[i] / bc2;
            new_w[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        *mw = Matrix::from_vec(gw.rows(), gw.cols(), mw_data)?;
        *vw = Matrix::from_vec(gw.rows(), gw.cols(), vw_data)?;
        layer.weights = Matrix::from_vec(gw.rows(), gw.cols(), new_w)?;

        for (i, &g) in gb.iter().enumerate() {
            mb[i] = state.beta1 * mb[i] + (1.0 - state.beta1) * g;
            vb[i] = state.beta2 * vb[i] + (1.0 - state.beta2) * g * g;
            let m_hat = mb[i] / bc1;
            let v_hat = vb[i] / bc2;
            layer.bias[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
            if !layer.bias[i].is_finite() {
                return Err(Error::NonFinite("bias after adam update".into()));
            }
        }
    }
    Ok(())
}
