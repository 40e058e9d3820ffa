//! Fully connected network with optional additive time conditioning.
//!
//! Batches are row-major: one sample per row. Layer `l` computes
//!
//! - `z = a W^T + b (+ e C^T)` for hidden layers when conditioning is enabled
//! - `a' = act(z)`
//!
//! where `e` is the time embedding row of each sample and `C` is the layer's
//! conditioning projection of shape `(width, embed_dim)`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{dim_err, domain_err, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Softplus,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
    Softmax,
}

/// Architecture of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Widths from input to output, at least two entries.
    pub layer_dims: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    /// Width of the time embedding; 0 disables conditioning.
    pub embed_dim: usize,
}

impl MlpConfig {
    fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return domain_err("an MLP needs at least an input and an output width");
        }
        if self.layer_dims.contains(&0) {
            return domain_err(format!("layer widths must be positive, got {:?}", self.layer_dims));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn conditioned_layers(&self) -> usize {
        if self.embed_dim > 0 {
            self.n_layers() - 1
        } else {
            0
        }
    }

    /// Lengths of the flat parameter blocks in canonical order.
    pub fn param_shapes(&self) -> Vec<usize> {
        let mut shapes = Vec::new();
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            shapes.push(fan_out * fan_in);
            shapes.push(fan_out);
            if l < self.conditioned_layers() {
                shapes.push(fan_out * self.embed_dim);
            }
        }
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    cond: Vec<Array2<f64>>,
}

/// Activations recorded by [`Mlp::forward`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    embed: Option<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

/// Parameter gradients, laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub cond: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            cond: net.cond.iter().map(|c| Array2::zeros(c.raw_dim())).collect(),
        }
    }

    /// Flat views in the same order as [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 3);
        for l in 0..self.weights.len() {
            out.push(self.weights[l].as_slice().expect("standard layout"));
            out.push(self.biases[l].as_slice().expect("standard layout"));
            if let Some(c) = self.cond.get(l) {
                out.push(c.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Result of [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    pub input_grad: Array2<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl HiddenActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            HiddenActivation::Softplus => softplus(x),
            HiddenActivation::Relu => x.max(0.0),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            HiddenActivation::Softplus => sigmoid(x),
            HiddenActivation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_layers();
        let weights = (0..n)
            .map(|l| Array2::zeros((config.layer_dims[l + 1], config.layer_dims[l])))
            .collect();
        let biases = (0..n).map(|l| Array1::zeros(config.layer_dims[l + 1])).collect();
        let cond = (0..config.conditioned_layers())
            .map(|l| Array2::zeros((config.layer_dims[l + 1], config.embed_dim)))
            .collect();
        Ok(Mlp {
            config,
            weights,
            biases,
            cond,
        })
    }

    /// Fan-in scaled normal initialization (`std = sqrt(2 / fan_in)`), zero biases.
    ///
    /// Conditioning projections use the embedding width as their fan-in.
    pub fn init(config: MlpConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = rng::seeded(seed);
        let mut fill = |m: &mut Array2<f64>, fan_in: usize| {
            let std = (2.0 / fan_in as f64).sqrt();
            m.mapv_inplace(|_| std * rng.sample::<f64, _>(StandardNormal));
        };
        for l in 0..net.weights.len() {
            let fan_in = net.config.layer_dims[l];
            fill(&mut net.weights[l], fan_in);
            if l < net.cond.len() {
                let embed_dim = net.config.embed_dim;
                fill(&mut net.cond[l], embed_dim);
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn conditioning(&self) -> &[Array2<f64>] {
        &self.cond
    }

    pub fn conditioning_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.cond
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 3);
        for l in 0..self.weights.len() {
            out.push(self.weights[l].as_slice().expect("standard layout"));
            out.push(self.biases[l].as_slice().expect("standard layout"));
            if let Some(c) = self.cond.get(l) {
                out.push(c.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 3);
        let mut cond = self.cond.iter_mut();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
            if let Some(c) = cond.next() {
                out.push(c.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Concatenation of every parameter block in canonical order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn from_flat_params(config: MlpConfig, params: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if params.len() != net.param_count() {
            return dim_err(format!(
                "expected {} parameters, got {}",
                net.param_count(),
                params.len()
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        let mut offset = 0;
        for block in net.param_slices_mut() {
            let n = block.len();
            block.copy_from_slice(&params[offset..offset + n]);
            offset += n;
        }
        Ok(net)
    }

    /// SHA-256 over the architecture and the little-endian parameter bytes.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for d in &self.config.layer_dims {
            h.update((*d as u64).to_le_bytes());
        }
        h.update([
            self.config.hidden_activation as u8,
            self.config.output_activation as u8,
        ]);
        h.update((self.config.embed_dim as u64).to_le_bytes());
        for block in self.param_slices() {
            for v in block {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    fn check_input(&self, input: &ArrayView2<f64>, t_embed: Option<&ArrayView2<f64>>) -> Result<()> {
        if input.ncols() != self.config.input_dim() {
            return dim_err(format!(
                "input width {} != layer_dims[0] = {}",
                input.ncols(),
                self.config.input_dim()
            ));
        }
        match (t_embed, self.config.embed_dim) {
            (None, 0) => {}
            (Some(_), 0) => return dim_err("time embedding given to an unconditioned network"),
            (None, _) => return dim_err("conditioned network requires a time embedding"),
            (Some(e), d) => {
                if e.ncols() != d {
                    return dim_err(format!("embedding width {} != embed_dim {}", e.ncols(), d));
                }
                if e.nrows() != 1 && e.nrows() != input.nrows() {
                    return dim_err(format!(
                        "embedding rows {} must be 1 or match the batch size {}",
                        e.nrows(),
                        input.nrows()
                    ));
                }
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite time embedding".into()));
                }
            }
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        Ok(())
    }

    fn pre_activation(&self, l: usize, a: &Array2<f64>, embed: Option<&ArrayView2<f64>>) -> Array2<f64> {
        let mut z = a.dot(&self.weights[l].t());
        z += &self.biases[l];
        if let (Some(c), Some(e)) = (self.cond.get(l), embed) {
            if e.nrows() == 1 {
                let shift = c.dot(&e.row(0));
                z += &shift;
            } else {
                z += &e.dot(&c.t());
            }
        }
        z
    }

    fn run(&self, input: ArrayView2<f64>, t_embed: Option<ArrayView2<f64>>, keep: bool) -> ForwardCache {
        let n = self.config.n_layers();
        let mut inputs = Vec::with_capacity(if keep { n } else { 0 });
        let mut pre = Vec::with_capacity(if keep { n } else { 0 });
        let mut a = input.to_owned();
        for l in 0..n {
            let z = self.pre_activation(l, &a, t_embed.as_ref());
            let out = if l + 1 < n {
                let act = self.config.hidden_activation;
                z.mapv(|v| act.apply(v))
            } else {
                let mut out = z.clone();
                if self.config.output_activation == OutputActivation::Softmax {
                    softmax_rows(&mut out);
                }
                out
            };
            if keep {
                inputs.push(std::mem::replace(&mut a, out));
                pre.push(z);
            } else {
                a = out;
            }
        }
        ForwardCache {
            inputs,
            pre,
            embed: if keep { t_embed.map(|e| e.to_owned()) } else { None },
            output: a,
        }
    }

    /// Forward pass keeping the activations needed by [`Mlp::backward`].
    ///
    /// `t_embed` must be given iff the network is conditioned; it holds either
    /// one row per sample or a single row shared by the whole batch.
    pub fn forward(&self, input: ArrayView2<f64>, t_embed: Option<ArrayView2<f64>>) -> Result<ForwardCache> {
        self.check_input(&input, t_embed.as_ref())?;
        Ok(self.run(input, t_embed, true))
    }

    /// Forward pass without caching.
    pub fn predict(&self, input: ArrayView2<f64>, t_embed: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        self.check_input(&input, t_embed.as_ref())?;
        Ok(self.run(input, t_embed, false).output)
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let n = self.config.n_layers();
        let state = |msg: String| Err(Error::State(msg));
        if cache.pre.len() != n || cache.inputs.len() != n {
            return state(format!("cache holds {} layers, network has {}", cache.pre.len(), n));
        }
        for l in 0..n {
            if cache.inputs[l].ncols() != self.config.layer_dims[l]
                || cache.pre[l].ncols() != self.config.layer_dims[l + 1]
            {
                return state(format!("cache layer {l} does not match the network widths"));
            }
        }
        if cache.embed.is_some() != (self.config.embed_dim > 0) {
            return state("cache conditioning does not match the network".into());
        }
        Ok(())
    }

    /// Backpropagates a gradient taken with respect to the network output.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Backward> {
        self.check_cache(cache)?;
        if output_grad.dim() != cache.output.dim() {
            return dim_err(format!(
                "output gradient shape {:?} != output shape {:?}",
                output_grad.dim(),
                cache.output.dim()
            ));
        }
        let logit_grad = match self.config.output_activation {
            OutputActivation::Linear => output_grad.to_owned(),
            OutputActivation::Softmax => {
                let p = &cache.output;
                let dot = (&output_grad * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                p * &(&output_grad - &dot)
            }
        };
        self.backward_logits(cache, logit_grad)
    }

    /// Backpropagates a gradient taken with respect to the last pre-activation.
    ///
    /// For a softmax output trained with cross-entropy this is `p - y`.
    pub fn backward_logits(&self, cache: &ForwardCache, logit_grad: Array2<f64>) -> Result<Backward> {
        self.check_cache(cache)?;
        if logit_grad.dim() != cache.output.dim() {
            return dim_err("logit gradient shape does not match the output");
        }
        let n = self.config.n_layers();
        let mut grads = Gradients::zeros_like(self);
        let mut dz = logit_grad;
        for l in (0..n).rev() {
            grads.weights[l] = dz.t().dot(&cache.inputs[l]);
            grads.biases[l] = dz.sum_axis(Axis(0));
            if let (Some(_), Some(e)) = (self.cond.get(l), cache.embed.as_ref()) {
                grads.cond[l] = if e.nrows() == 1 {
                    let col = grads.biases[l].view().insert_axis(Axis(1));
                    col.dot(&e.view())
                } else {
                    dz.t().dot(e)
                };
            }
            let mut da = dz.dot(&self.weights[l]);
            if l > 0 {
                let act = self.config.hidden_activation;
                Zip::from(&mut da)
                    .and(&cache.pre[l - 1])
                    .for_each(|g, &z| *g *= act.derivative(z));
            }
            dz = da;
        }
        Ok(Backward {
            grads,
            input_grad: dz,
        })
    }
}
