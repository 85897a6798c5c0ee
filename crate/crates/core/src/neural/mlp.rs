use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::dataset::Problem;
use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix, Op};
use crate::normalize::NormalizationSpec;
use crate::optics::Grid;
use crate::scalar::Scalar;

/// Affine map `y = W x + b` with `W` stored as `fan_out x fan_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<S> {
    pub weights: Matrix<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: vec![S::zero(); fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }
}

/// Provenance of a trained model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub data_seed: Option<u64>,
    pub train_seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub best_epoch: Option<usize>,
    pub note: Option<String>,
}

/// What the network's inputs and outputs mean.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub problem: Option<Problem>,
    pub normalization: Option<NormalizationSpec>,
    pub grid: Option<Grid>,
    pub training_fingerprint: Option<TrainingFingerprint>,
}

/// Dense feed-forward network. Hidden layers share one activation; the
/// output layer has its own (linear for every network in this crate).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel<S> {
    layer_dims: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    layers: Vec<Layer<S>>,
    pub meta: ModelMeta,
}

/// Activations saved by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<S> {
    input: Matrix<S>,
    pre: Vec<Matrix<S>>,
    post: Vec<Matrix<S>>,
}

impl<S: Scalar> Default for ForwardCache<S> {
    fn default() -> Self {
        Self {
            input: Matrix::zeros(0, 0),
            pre: Vec::new(),
            post: Vec::new(),
        }
    }
}

impl<S: Scalar> ForwardCache<S> {
    pub fn output(&self) -> &Matrix<S> {
        self.post.last().expect("forward pass not run")
    }

    pub fn input(&self) -> &Matrix<S> {
        &self.input
    }

    pub fn batch_len(&self) -> usize {
        self.input.rows()
    }
}

/// Gradients with the same layout as the model, plus the gradient with
/// respect to the network input.
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    pub layers: Vec<Layer<S>>,
    pub input: Matrix<S>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(model: &MlpModel<S>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
                .collect(),
            input: Matrix::zeros(0, model.input_dim()),
        }
    }

    /// Parameter gradients in the order of [`MlpModel::tensors_mut`].
    pub fn tensors(&self) -> impl Iterator<Item = &[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }
}

/// Which gradients a backward pass should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTargets {
    Params,
    Input,
    Both,
}

impl GradTargets {
    fn params(self) -> bool {
        matches!(self, GradTargets::Params | GradTargets::Both)
    }

    fn input(self) -> bool {
        matches!(self, GradTargets::Input | GradTargets::Both)
    }
}

impl<S: Scalar> MlpModel<S> {
    /// Network with all weights and biases zero.
    pub fn zeros(layer_dims: &[usize], hidden_activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidParams(format!(
                "layer dims need at least input and output and no zero widths, got {layer_dims:?}"
            )));
        }
        let layers = layer_dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            hidden_activation,
            output_activation: Activation::Linear,
            layers,
            meta: ModelMeta::default(),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(layer_dims: &[usize], hidden_activation: Activation, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(layer_dims, hidden_activation)?;
        for layer in &mut model.layers {
            let limit = (6.0 / (layer.fan_in() + layer.fan_out()) as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = S::lit(rng.random_range(-limit..limit));
            }
        }
        Ok(model)
    }

    /// `input, hidden x depth, output`.
    pub fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(hidden.len() + 2);
        d.push(input);
        d.extend_from_slice(hidden);
        d.push(output);
        d
    }

    pub fn from_layers(
        layers: Vec<Layer<S>>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidParams("model needs at least one layer".into()))?;
        let mut dims = vec![first.fan_in()];
        for layer in &layers {
            if layer.fan_in() != *dims.last().unwrap() {
                return Err(Error::shape("layer chain", *dims.last().unwrap(), layer.fan_in()));
            }
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::shape("bias length", layer.fan_out(), layer.bias.len()));
            }
            dims.push(layer.fan_out());
        }
        Ok(Self {
            layer_dims: dims,
            hidden_activation,
            output_activation,
            layers,
            meta: ModelMeta::default(),
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Mutable parameter tensors: `W0, b0, W1, b1, ...`.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [S]> {
        self.layers.iter_mut().flat_map(|l| {
            let Layer { weights, bias } = l;
            [weights.as_mut_slice(), bias.as_mut_slice()]
        })
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Forward pass for a single feature vector.
    pub fn forward(&self, features: &[S]) -> Result<Vec<S>> {
        if features.len() != self.input_dim() {
            return Err(Error::shape("forward input", self.input_dim(), features.len()));
        }
        let mut a = features.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(i);
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = layer.weights.row(o);
                *zo += row.iter().zip(&a).map(|(&w, &x)| w * x).sum::<S>();
            }
            if !act.is_linear() {
                z.iter_mut().for_each(|v| *v = act.eval(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        Ok(cache.post.pop().unwrap())
    }

    /// Forward pass that keeps pre- and post-activations for
    /// [`MlpModel::backward`]. Buffers in `cache` are reused across calls.
    pub fn forward_cached(&self, x: &Matrix<S>, cache: &mut ForwardCache<S>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("forward input", self.input_dim(), x.cols()));
        }
        let batch = x.rows();
        cache.input.resize(batch, x.cols());
        cache.input.as_mut_slice().copy_from_slice(x.as_slice());
        let depth = self.layers.len();
        cache.pre.resize_with(depth, || Matrix::zeros(0, 0));
        cache.post.resize_with(depth, || Matrix::zeros(0, 0));
        for i in 0..depth {
            let layer = &self.layers[i];
            let (prev_post, rest) = cache.post.split_at_mut(i);
            let a_prev = if i == 0 { &cache.input } else { &prev_post[i - 1] };
            let z = &mut cache.pre[i];
            z.resize(batch, layer.fan_out());
            for r in 0..batch {
                z.row_mut(r).copy_from_slice(&layer.bias);
            }
            gemm(S::one(), a_prev, Op::N, &layer.weights, Op::T, S::one(), z);
            let act = self.activation_of(i);
            let a = &mut rest[0];
            a.resize(batch, layer.fan_out());
            for (dst, &src) in a.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *dst = act.eval(src);
            }
        }
        Ok(())
    }

    /// Backpropagates `d_out` (gradient of a scalar loss with respect to the
    /// network output of the cached batch) into `grads`.
    pub fn backward(
        &self,
        cache: &ForwardCache<S>,
        d_out: &Matrix<S>,
        grads: &mut Gradients<S>,
        targets: GradTargets,
    ) -> Result<()> {
        let out = cache.output();
        if (d_out.rows(), d_out.cols()) != (out.rows(), out.cols()) {
            return Err(Error::shape("backward output gradient", out.cols(), d_out.cols()));
        }
        let batch = out.rows();
        let mut delta = d_out.clone();
        let mut next = Matrix::zeros(0, 0);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = self.activation_of(i);
            if !act.is_linear() {
                for (d, &z) in delta.as_mut_slice().iter_mut().zip(cache.pre[i].as_slice()) {
                    *d *= act.grad(z);
                }
            }
            let a_prev = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            if targets.params() {
                let g = &mut grads.layers[i];
                gemm(S::one(), &delta, Op::T, a_prev, Op::N, S::zero(), &mut g.weights);
                g.bias.iter_mut().for_each(|b| *b = S::zero());
                for r in 0..batch {
                    for (b, &d) in g.bias.iter_mut().zip(delta.row(r)) {
                        *b += d;
                    }
                }
            }
            if i > 0 || targets.input() {
                next.resize(batch, layer.fan_in());
                gemm(S::one(), &delta, Op::N, &layer.weights, Op::N, S::zero(), &mut next);
                std::mem::swap(&mut delta, &mut next);
            }
        }
        if targets.input() {
            grads.input = delta;
        }
        Ok(())
    }
}
