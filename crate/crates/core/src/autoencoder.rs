//! Per-view MLP autoencoders with hand-written backpropagation.
//!
//! Encoders map `input → hidden… → embedding` with ReLU hidden layers and a
//! linear embedding layer. The decoder mirrors the encoder and only exists
//! during reconstruction pretraining; joint clustering keeps the encoder.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::{Matrix, OptimizerKind, OptimizerState, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    // subgradient 0 at exactly zero
    fn derivative(self, pre: f64) -> f64 {
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

/// Layer widths and per-layer activations of one MLP.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    /// Validates an explicit spec: at least two dims, all positive, ReLU on
    /// hidden layers and a linear output layer.
    pub fn new(layer_dims: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least an input and an output dimension".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer dimensions must be positive, got {layer_dims:?}"
            )));
        }
        if activations.len() != layer_dims.len() - 1 {
            return Err(shape_err(
                "MlpSpec::new",
                format!("{} activations", layer_dims.len() - 1),
                activations.len(),
            ));
        }
        let (last, hidden) = activations.split_last().expect("non-empty");
        if *last != Activation::Linear || hidden.iter().any(|a| *a != Activation::Relu) {
            return Err(Error::InvalidArgument(
                "hidden layers must be ReLU and the output layer linear".into(),
            ));
        }
        Ok(Self {
            layer_dims,
            activations,
        })
    }

    /// Standard encoder: ReLU hidden layers, linear embedding layer.
    pub fn encoder(layer_dims: Vec<usize>) -> Result<Self> {
        let n = layer_dims.len().saturating_sub(1);
        let mut activations = vec![Activation::Relu; n];
        if let Some(last) = activations.last_mut() {
            *last = Activation::Linear;
        }
        Self::new(layer_dims, activations)
    }

    /// The mirrored decoder spec (embedding → … → input).
    pub fn decoder(&self) -> Self {
        let mut dims = self.layer_dims.clone();
        dims.reverse();
        Self::encoder(dims).expect("mirror of a valid spec is valid")
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }
}

/// Fully connected layer with `[out × in]` weights and a `1 × out` bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Matrix, activation: Activation) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(shape_err(
                "Dense::new",
                format!("bias 1x{}", weight.rows()),
                format!("{}x{}", bias.rows(), bias.cols()),
            ));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn pre_activation(&self, x: &Matrix) -> Result<Matrix> {
        let mut a = x.matmul_t(&self.weight)?;
        let b = self.bias.row(0);
        for r in 0..a.rows() {
            for (v, bb) in a.row_mut(r).iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(a)
    }
}

/// Gradients for each layer of an [`Mlp`], in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Matrix, Matrix)>,
}

impl MlpGrads {
    /// Flattened `[w0, b0, w1, b1, …]`, matching [`Mlp::params_mut`].
    pub fn as_refs(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|(w, b)| [w, b]).collect()
    }
}

/// Intermediate values kept by [`Mlp::forward_cached`] for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut RngState) -> Self {
        let layers = spec
            .layer_dims
            .windows(2)
            .zip(&spec.activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform_range(-limit, limit));
                Dense {
                    weight,
                    bias: Matrix::zeros(1, fan_out),
                    activation,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("MLP layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(shape_err(
                    "Mlp::from_layers",
                    format!("layer input {}", pair[0].out_dim()),
                    pair[1].in_dim(),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Single linear layer with identity weights.
    pub fn identity(dim: usize) -> Self {
        Self {
            layers: vec![Dense {
                weight: Matrix::identity(dim),
                bias: Matrix::zeros(1, dim),
                activation: Activation::Linear,
            }],
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Parameters in `[w0, b0, w1, b1, …]` order.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(shape_err(
                "mlp forward",
                format!("{} input columns", self.input_dim()),
                x.cols(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            let mut a = layer.pre_activation(&h)?;
            a.map_inplace(|v| layer.activation.apply(v));
            h = a;
        }
        h.ensure_finite("mlp output")?;
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let a = layer.pre_activation(&h)?;
            let next = a.map(|v| layer.activation.apply(v));
            inputs.push(h);
            pre.push(a);
            h = next;
        }
        h.ensure_finite("mlp output")?;
        Ok(ForwardCache {
            inputs,
            pre,
            output: h,
        })
    }

    /// Backpropagates `grad_output` (∂L/∂output) through the cached pass.
    /// Returns parameter gradients and ∂L/∂input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &Matrix,
    ) -> Result<(MlpGrads, Matrix)> {
        if !grad_output.same_shape(&cache.output) {
            return Err(shape_err(
                "mlp backward",
                format!("{:?}", cache.output.shape()),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre[idx];
            if layer.activation != Activation::Linear {
                for (d, &a) in delta.data_mut().iter_mut().zip(pre.data()) {
                    *d *= layer.activation.derivative(a);
                }
            }
            let grad_w = delta.t_matmul(&cache.inputs[idx])?;
            let grad_b = delta.column_sums();
            let next = delta.matmul(&layer.weight)?;
            grads.push((grad_w, grad_b));
            delta = next;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }
}

/// Encoder (and, during pretraining, decoder) of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub encoder: Mlp,
    pub decoder: Option<Mlp>,
}

impl MlpParams {
    pub fn init(spec: &MlpSpec, rng: &mut RngState) -> Self {
        let encoder = Mlp::init(spec, rng);
        let decoder = Mlp::init(&spec.decoder(), rng);
        Self {
            encoder,
            decoder: Some(decoder),
        }
    }
}

pub fn encode(params: &MlpParams, batch: &Matrix) -> Result<Matrix> {
    params.encoder.forward(batch)
}

/// Gradients of the reconstruction loss for encoder and decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
}

/// Mean squared reconstruction error over batch and features, with its
/// exact gradient.
pub fn reconstruction_grad(params: &MlpParams, batch: &Matrix) -> Result<(f64, AutoencoderGrads)> {
    let decoder = params
        .decoder
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("reconstruction needs a decoder".into()))?;
    if batch.rows() == 0 {
        return Err(Error::Empty("reconstruction batch"));
    }
    let enc = params.encoder.forward_cached(batch)?;
    let dec = decoder.forward_cached(enc.output())?;
    let count = (batch.rows() * batch.cols()) as f64;
    let mut residual = dec.output().sub(batch)?;
    let loss = residual.data().iter().map(|r| r * r).sum::<f64>() / count;
    residual.scale(2.0 / count);
    let (dec_grads, grad_z) = decoder.backward(&dec, &residual)?;
    let (enc_grads, _) = params.encoder.backward(&enc, &grad_z)?;
    Ok((
        loss,
        AutoencoderGrads {
            encoder: enc_grads,
            decoder: dec_grads,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Keep the decoder in the returned params.
    pub keep_decoder: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            optimizer: OptimizerKind::adam(),
            keep_decoder: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOutcome {
    pub params: MlpParams,
    /// Mean reconstruction loss per epoch, accumulated over the epoch's
    /// minibatches before each update.
    pub loss_history: Vec<f64>,
}

/// End-to-end reconstruction pretraining of one view's autoencoder.
pub fn pretrain(
    spec: &MlpSpec,
    data: &Matrix,
    config: &PretrainConfig,
    rng: &mut RngState,
) -> Result<PretrainOutcome> {
    if config.epochs == 0 {
        return Err(Error::InvalidArgument(
            "pretraining needs at least one epoch".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if data.rows() == 0 {
        return Err(Error::Empty("pretraining data"));
    }
    if data.cols() != spec.input_dim() {
        return Err(shape_err(
            "pretrain",
            format!("{} feature columns", spec.input_dim()),
            data.cols(),
        ));
    }
    let mut params = MlpParams::init(spec, rng);
    let mut optimizer = OptimizerState::new(config.optimizer);
    let mut loss_history = Vec::with_capacity(config.epochs);
    let n = data.rows();
    for epoch in 0..config.epochs {
        let order = rng.permutation(n);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.select_rows(chunk);
            let (loss, grads) = reconstruction_grad(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: "non-finite reconstruction loss".into(),
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            let decoder = params.decoder.as_mut().expect("present during pretraining");
            let mut all: Vec<&mut Matrix> = params.encoder.params_mut();
            all.extend(decoder.params_mut());
            let mut g = grads.encoder.as_refs();
            g.extend(grads.decoder.as_refs());
            optimizer.step(&mut all, &g)?;
        }
        loss_history.push(epoch_loss / n as f64);
    }
    if !config.keep_decoder {
        params.decoder = None;
    }
    Ok(PretrainOutcome {
        params,
        loss_history,
    })
}
