//! Dense multilayer perceptrons with exact reverse-mode gradients and Adam.
//!
//! Every layer computes `a_k = act_k(a_{k-1} W_k^T + b_k)` on a batch of row
//! vectors. Weights are stored `output_dim x input_dim`, so one row of a weight
//! matrix feeds one output unit.
//!
//! # Snapshot format
//!
//! Parameters serialize to a little-endian binary layout:
//!
//! ```text
//! magic      8 bytes  "DQNSNAP1"
//! layers     u32      number of layers L
//! L times:   u32 input_dim, u32 output_dim, u8 activation (0 identity, 1 relu, 2 tanh)
//! L times:   f64 x (output_dim * input_dim)  weights, row-major
//!            f64 x output_dim                biases
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

const SNAPSHOT_MAGIC: &[u8; 8] = b"DQNSNAP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    /// ReLU uses 0 at exactly `z == 0`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            c => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// Builds the layer list of a Q-network: `hidden` layers of `width` units
/// with `activation`, followed by an identity output layer.
pub fn q_network_spec(
    input_dim: usize,
    outputs: usize,
    hidden: usize,
    width: usize,
    activation: Activation,
) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden + 1);
    let mut fan_in = input_dim;
    for _ in 0..hidden {
        specs.push(LayerSpec::new(fan_in, width, activation));
        fan_in = width;
    }
    specs.push(LayerSpec::new(fan_in, outputs, Activation::Identity));
    specs
}

pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for (k, s) in specs.iter().enumerate() {
        if s.input_dim == 0 || s.output_dim == 0 {
            return Err(Error::Config(format!("layer {k} has a zero dimension")));
        }
    }
    for (k, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::Config(format!(
                "layer {k} outputs {} values but layer {} expects {}",
                pair[0].output_dim,
                k + 1,
                pair[1].input_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub activation: Activation,
    /// `output_dim x input_dim`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.weight.ncols(), self.weight.nrows(), self.activation)
    }
}

/// Weights and biases of a dense network. Gradients and Adam moments reuse
/// the same type since they share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

/// Activations recorded by a forward pass, one row per batch element.
#[derive(Debug, Clone)]
pub struct GradCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl GradCache {
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }

    pub fn post_activations(&self) -> &[Array2<f64>] {
        &self.post
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

impl MlpParams {
    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        validate_specs(specs)?;
        let layers = specs
            .iter()
            .map(|s| Dense {
                activation: s.activation,
                weight: Array2::zeros((s.output_dim, s.input_dim)),
                bias: Array1::zeros(s.output_dim),
            })
            .collect();
        Ok(MlpParams { layers })
    }

    /// Glorot-uniform weights in `[-L, L]`, `L = sqrt(6 / (fan_in + fan_out))`,
    /// drawn row-major layer by layer; biases are zero.
    pub fn glorot(specs: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        let mut params = MlpParams::zeros(specs)?;
        for layer in &mut params.layers {
            let (fan_out, fan_in) = layer.weight.dim();
            let limit = glorot_limit(fan_in, fan_out);
            for w in layer.weight.iter_mut() {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        Ok(params)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    fn check_same_shape(&self, other: &MlpParams, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!("{what} does not match the parameter shapes")))
        }
    }

    /// All parameters in layer order: each layer's weights row-major, then its biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    /// Single-input forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, GradCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (out, cache) = self.forward_batch(x)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Forward pass over a batch of row inputs, keeping what `backward_batch` needs.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, GradCache)> {
        self.check_input(inputs.ncols())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = post.last().map(|a| a.view()).unwrap_or(inputs);
            let z = affine(layer, prev);
            let a = match layer.activation {
                Activation::Identity => z.clone(),
                act => z.mapv(|v| act.apply(v)),
            };
            pre.push(z);
            post.push(a);
        }
        let output = post.last().cloned().expect("non-empty network");
        let cache = GradCache {
            input: inputs.to_owned(),
            pre,
            post,
        };
        Ok((output, cache))
    }

    /// Forward pass without recording intermediates.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        let mut current: Option<Array2<f64>> = None;
        for layer in &self.layers {
            let prev = current.as_ref().map(|a| a.view()).unwrap_or(inputs);
            let mut z = affine(layer, prev);
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            current = Some(z);
        }
        Ok(current.expect("non-empty network"))
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Gradient of `output_grad . output` with respect to every parameter.
    pub fn backward(&self, cache: &GradCache, output_grad: &[f64]) -> Result<MlpParams> {
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad)
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.backward_batch(cache, g)
    }

    /// Gradient of `sum_i output_grad[i] . output[i]` over the batch rows.
    pub fn backward_batch(&self, cache: &GradCache, output_grad: ArrayView2<f64>) -> Result<MlpParams> {
        if cache.pre.len() != self.layers.len()
            || cache
                .pre
                .iter()
                .zip(&self.layers)
                .any(|(z, l)| z.ncols() != l.weight.nrows())
        {
            return Err(Error::Shape("cache was not produced by these parameters".into()));
        }
        let batch = cache.batch_size();
        if output_grad.dim() != (batch, self.output_dim()) {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, expected ({batch}, {})",
                output_grad.dim(),
                self.output_dim()
            )));
        }

        let n = self.layers.len();
        let mut grads: Vec<Dense> = Vec::with_capacity(n);
        let mut upstream = output_grad.to_owned();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let mut delta = upstream;
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                Zip::from(&mut delta)
                    .and(&cache.pre[k])
                    .and(&cache.post[k])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            let below = if k == 0 { cache.input.view() } else { cache.post[k - 1].view() };
            let weight = delta.t().dot(&below);
            let bias = delta.sum_axis(Axis(0));
            if k > 0 {
                upstream = delta.dot(&layer.weight);
            } else {
                upstream = Array2::zeros((0, 0));
            }
            grads.push(Dense {
                activation: layer.activation,
                weight,
                bias,
            });
        }
        grads.reverse();
        Ok(MlpParams { layers: grads })
    }

    /// Adds `c` to every output-layer bias.
    pub fn shift_output_bias(&mut self, c: f64) {
        let last = self.layers.len() - 1;
        self.layers[last].bias.mapv_inplace(|b| b + c);
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {len} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            let s = layer.spec();
            w.write_all(&(s.input_dim as u32).to_le_bytes())?;
            w.write_all(&(s.output_dim as u32).to_le_bytes())?;
            w.write_all(&[s.activation.code()])?;
        }
        for layer in &self.layers {
            // Arrays are created in standard layout, so iteration is row-major.
            for x in layer.weight.iter().chain(layer.bias.iter()) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("not a network snapshot".into()));
        }
        let count = read_u32(&mut r)? as usize;
        let mut specs = Vec::with_capacity(count);
        for _ in 0..count {
            let input_dim = read_u32(&mut r)? as usize;
            let output_dim = read_u32(&mut r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            specs.push(LayerSpec::new(input_dim, output_dim, Activation::from_code(code[0])?));
        }
        validate_specs(&specs).map_err(|e| Error::Format(e.to_string()))?;
        let mut params = MlpParams::zeros(&specs)?;
        for x in params.iter_mut() {
            *x = read_f64(&mut r)?;
        }
        Ok(params)
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn affine(layer: &Dense, inputs: ArrayView2<f64>) -> Array2<f64> {
    let mut z = inputs.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamConfig {
            alpha,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let zeros = MlpParams::zeros(&params.specs()).expect("specs of valid params");
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut MlpParams,
    grad: &MlpParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    params.check_same_shape(grad, "gradient")?;
    params.check_same_shape(&state.m, "adam state")?;
    if !grad.is_finite() {
        return Err(Error::Training(format!(
            "non-finite gradient at optimizer step {}",
            state.t + 1
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let m_scale = 1.0 / (1.0 - cfg.beta1.powi(t));
    let v_scale = 1.0 / (1.0 - cfg.beta2.powi(t));
    let (b1, b2, alpha, eps) = (cfg.beta1, cfg.beta2, cfg.alpha, cfg.eps);
    let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m * m_scale;
        let v_hat = *v * v_scale;
        *p -= alpha * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grad.layers)
        .zip(state.m.layers.iter_mut())
        .zip(state.v.layers.iter_mut())
    {
        Zip::from(&mut p.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(update);
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    Ok(())
}
