//! Affine + activation layers and the layer stack built from them.

use super::matrix::Matrix;
use super::params::{ParamStore, Segment};
use super::rng::Rng;
use crate::error::{Result, SrdaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Shape and activation of one `activation(x·W + b)` layer. `W` is
/// `inputs × outputs`, `b` is `1 × outputs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

/// What the backward pass needs from a forward call.
#[derive(Clone, Debug)]
pub struct LayerCache {
    input: Matrix,
    pre_activation: Matrix,
}

#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Matrix,
}

fn check_params(layer: &Dense, weight: &Matrix, bias: &Matrix) -> Result<()> {
    if weight.shape() != (layer.inputs, layer.outputs) || bias.shape() != (1, layer.outputs) {
        return Err(SrdaError::ShapeError(format!(
            "layer {}→{} given weight {:?} and bias {:?}",
            layer.inputs,
            layer.outputs,
            weight.shape(),
            bias.shape()
        )));
    }
    Ok(())
}

pub fn layer_forward(layer: &Dense, weight: &Matrix, bias: &Matrix, input: &Matrix) -> Result<(Matrix, LayerCache)> {
    check_params(layer, weight, bias)?;
    if input.cols() != layer.inputs {
        return Err(SrdaError::ShapeError(format!(
            "layer expects {} inputs, got {}",
            layer.inputs,
            input.cols()
        )));
    }
    let mut pre = input.matmul(weight)?;
    let b = bias.as_slice();
    for r in 0..pre.rows() {
        for (v, &bj) in pre.row_mut(r).iter_mut().zip(b) {
            *v += bj;
        }
    }
    let out = pre.map(|v| layer.activation.apply(v));
    Ok((out, LayerCache { input: input.clone(), pre_activation: pre }))
}

fn upstream_through_activation(layer: &Dense, cache: &LayerCache, upstream: &Matrix) -> Result<Matrix> {
    if upstream.shape() != cache.pre_activation.shape() {
        return Err(SrdaError::ShapeError(format!(
            "upstream gradient {:?} for layer output {:?}",
            upstream.shape(),
            cache.pre_activation.shape()
        )));
    }
    upstream.zip_with(&cache.pre_activation, |g, pre| g * layer.activation.derivative(pre))
}

/// Returns the gradient with respect to the layer input together with the
/// weight and bias gradients for this call.
pub fn layer_backward(layer: &Dense, weight: &Matrix, cache: &LayerCache, upstream: &Matrix) -> Result<(Matrix, LayerGrads)> {
    let delta = upstream_through_activation(layer, cache, upstream)?;
    let input_grad = delta.matmul_transposed(weight)?;
    let weight_grad = cache.input.transposed_matmul(&delta)?;
    let mut bias_grad = Matrix::zeros(1, layer.outputs);
    for r in 0..delta.rows() {
        for (b, &d) in bias_grad.as_mut_slice().iter_mut().zip(delta.row(r)) {
            *b += d;
        }
    }
    Ok((input_grad, LayerGrads { weight: weight_grad, bias: bias_grad }))
}

fn layer_input_grad(layer: &Dense, weight: &Matrix, cache: &LayerCache, upstream: &Matrix) -> Result<Matrix> {
    upstream_through_activation(layer, cache, upstream)?.matmul_transposed(weight)
}

/// Forward caches for every layer of a [`LayeredNet`].
#[derive(Clone, Debug)]
pub struct NetCache {
    layers: Vec<LayerCache>,
}

/// A stack of dense layers owning its parameters. Layer `i` keeps its weight
/// in segment `2i` and its bias in segment `2i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredNet {
    layers: Vec<Dense>,
    params: ParamStore,
}

impl LayeredNet {
    /// Zero-initialized stack over `widths` (`widths[0]` inputs, last entry
    /// outputs). Hidden layers use `hidden`, the final layer `output`.
    pub fn zeros(name: &str, widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(SrdaError::InvalidInput(format!("layer widths {widths:?} need ≥ 2 positive entries")));
        }
        let mut layers = Vec::new();
        let mut params = ParamStore::new();
        let last = widths.len() - 2;
        for (i, pair) in widths.windows(2).enumerate() {
            let activation = if i == last { output } else { hidden };
            layers.push(Dense { inputs: pair[0], outputs: pair[1], activation });
            params.push(Segment::new(format!("{name}.layer{i}.weight"), Matrix::zeros(pair[0], pair[1])));
            params.push(Segment::new(format!("{name}.layer{i}.bias"), Matrix::zeros(1, pair[1])));
        }
        Ok(Self { layers, params })
    }

    /// He-normal weights, zero biases.
    pub fn random(name: &str, widths: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(name, widths, hidden, output)?;
        for (i, layer) in net.layers.clone().iter().enumerate() {
            let sd = (2.0 / layer.inputs as f64).sqrt();
            let w = net.params.segment_mut(2 * i).values.as_mut_slice();
            w.iter_mut().for_each(|v| *v = sd * rng.normal());
        }
        Ok(net)
    }

    pub(crate) fn from_parts(layers: Vec<Dense>, params: ParamStore) -> Result<Self> {
        if params.len() != 2 * layers.len() {
            return Err(SrdaError::ShapeError(format!(
                "{} layers need {} segments, got {}",
                layers.len(),
                2 * layers.len(),
                params.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            check_params(l, &params.segment(2 * i).values, &params.segment(2 * i + 1).values)?;
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(SrdaError::ShapeError(format!("layer {i} input width does not chain")));
            }
        }
        Ok(Self { layers, params })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_layer(&mut self, idx: usize, weight: Matrix, bias: Matrix) -> Result<()> {
        check_params(&self.layers[idx], &weight, &bias)?;
        self.params.segment_mut(2 * idx).values = weight;
        self.params.segment_mut(2 * idx + 1).values = bias;
        Ok(())
    }

    fn weight(&self, idx: usize) -> &Matrix {
        &self.params.segment(2 * idx).values
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, NetCache)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer_forward(layer, self.weight(i), &self.params.segment(2 * i + 1).values, &act)?;
            caches.push(cache);
            act = out;
        }
        Ok((act, NetCache { layers: caches }))
    }

    /// Forward pass without retaining caches.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut act = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            act = layer_forward(layer, self.weight(i), &self.params.segment(2 * i + 1).values, &act)?.0;
        }
        Ok(act)
    }

    /// Backpropagates `upstream` (gradient w.r.t. the net output), adding
    /// parameter gradients into the store. Returns the input gradient.
    pub fn backward(&mut self, cache: &NetCache, upstream: &Matrix) -> Result<Matrix> {
        let mut grad = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let (input_grad, g) = layer_backward(&self.layers[i], self.weight(i), &cache.layers[i], &grad)?;
            self.params.accumulate(2 * i, &g.weight)?;
            self.params.accumulate(2 * i + 1, &g.bias)?;
            grad = input_grad;
        }
        Ok(grad)
    }

    /// Input gradient only; parameters and their gradient buffers are not touched.
    pub fn input_grad(&self, cache: &NetCache, upstream: &Matrix) -> Result<Matrix> {
        let mut grad = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            grad = layer_input_grad(&self.layers[i], self.weight(i), &cache.layers[i], &grad)?;
        }
        Ok(grad)
    }
}
