//! Dense layers, initializers and hand-derived backpropagation.
//!
//! Weights are stored `(out_units, in_units)` so that row `k` of a binomial
//! layer is the indicator vector of the `k`-th feature combination. The
//! forward pass of a layer is `act(x * W^T + b)` for a `B x in` batch `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{self, FeatureCombination};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Matrix};

/// Default neuron cap for a single layer.
pub const DEFAULT_MAX_NEURONS: usize = 100_000;

/// Rows per block in forward and backward passes are chosen so that one
/// block of the widest layer holds about this many values.
const BLOCK_VALUES: usize = 1 << 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitializerTag {
    Xavier,
    BinomialFull,
    BinomialRandom,
    BinomialPrefix,
    LinearPair,
}

impl InitializerTag {
    pub fn is_binary(self) -> bool {
        !matches!(self, InitializerTag::Xavier)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// The same derivative written in terms of the output `a = apply(x)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Matrix,
    /// `None` for layers restored from a checkpoint.
    initializer: Option<InitializerTag>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Matrix, initializer: Option<InitializerTag>) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weights.rows() {
            return Err(Error::ShapeMismatch {
                op: "dense layer bias",
                left: weights.shape(),
                right: bias.shape(),
            });
        }
        Ok(Self {
            weights,
            bias,
            initializer,
        })
    }

    /// Layer whose row `k` is the indicator of `combinations[k]`, with zero bias.
    pub fn from_combinations(
        in_features: usize,
        combinations: &[FeatureCombination],
        tag: InitializerTag,
    ) -> Result<Self> {
        let mut weights = Matrix::zeros(combinations.len(), in_features)?;
        for (k, c) in combinations.iter().enumerate() {
            let row = weights.row_mut(k);
            for &i in c.indices() {
                if i >= in_features {
                    return Err(Error::invalid(format!(
                        "feature {i} out of range for {in_features} inputs"
                    )));
                }
                row[i] = 1.0;
            }
        }
        let bias = Matrix::zeros(1, combinations.len())?;
        Self::new(weights, bias, Some(tag))
    }

    /// One neuron per non-empty feature subset. Fails when `2^F - 1 > max_neurons`.
    pub fn binomial_full(in_features: usize, max_neurons: usize) -> Result<Self> {
        let total = combinatorics::total_combinations(in_features)?;
        match combinatorics::total_combinations_usize(in_features)? {
            Some(n) if n <= max_neurons => {
                let all = combinatorics::enumerate_prefix(in_features, n)?;
                Self::from_combinations(in_features, &all, InitializerTag::BinomialFull)
            }
            _ => Err(Error::NeuronCapExceeded {
                requested: total.to_string(),
                cap: max_neurons,
            }),
        }
    }

    /// The first `neurons` combinations in canonical order.
    pub fn binomial_prefix(in_features: usize, neurons: usize) -> Result<Self> {
        let prefix = combinatorics::enumerate_prefix(in_features, neurons)?;
        Self::from_combinations(in_features, &prefix, InitializerTag::BinomialPrefix)
    }

    /// `neurons` uniformly sampled combinations, duplicates allowed.
    pub fn binomial_random(in_features: usize, neurons: usize, seed: u64) -> Result<Self> {
        let sampled = combinatorics::sample_random(in_features, neurons, seed)?;
        Self::from_combinations(in_features, &sampled, InitializerTag::BinomialRandom)
    }

    /// Singletons for every input, followed by the first lexicographic pairs.
    pub fn linear_pair(in_units: usize, out_units: usize) -> Result<Self> {
        if in_units == 0 {
            return Err(Error::NoFeatures);
        }
        let pairs = in_units * (in_units - 1) / 2;
        if out_units < in_units || out_units - in_units > pairs {
            return Err(Error::invalid(format!(
                "linear_pair needs {in_units} <= out_units <= {}, got {out_units}",
                in_units + pairs
            )));
        }
        // singletons then pairs is exactly the head of the canonical order
        let rows = combinatorics::enumerate_prefix(in_units, out_units)?;
        Self::from_combinations(in_units, &rows, InitializerTag::LinearPair)
    }

    /// Glorot uniform in `[-sqrt(6 / (in + out)), sqrt(6 / (in + out))]`.
    pub fn xavier(in_units: usize, out_units: usize, seed: u64) -> Result<Self> {
        if in_units == 0 || out_units == 0 {
            return Err(Error::invalid("xavier layer needs at least one unit"));
        }
        let limit = (6.0 / (in_units + out_units) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..in_units * out_units)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        let weights = Matrix::from_vec(out_units, in_units, data)?;
        let bias = Matrix::zeros(1, out_units)?;
        Self::new(weights, bias, Some(InitializerTag::Xavier))
    }

    #[inline]
    pub fn in_units(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_units(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Matrix {
        &self.bias
    }

    pub fn initializer(&self) -> Option<InitializerTag> {
        self.initializer
    }

    /// Pre-activation `x * W^T + b`.
    pub fn affine(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_units() {
            return Err(Error::ShapeMismatch {
                op: "dense forward",
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        let mut z = x.matmul_transposed(&self.weights)?;
        z.add_rowwise_in_place(&self.bias)?;
        Ok(z)
    }

    /// `act(x * W^T + b)` with the bias and activation applied in one pass.
    pub fn activated(&self, x: &Matrix, act: Activation) -> Result<Matrix> {
        let mut out = Matrix::placeholder();
        self.activated_into(x, act, &mut out)?;
        Ok(out)
    }

    /// [`DenseLayer::activated`] writing into `out`, reusing its allocation.
    pub fn activated_into(&self, x: &Matrix, act: Activation, out: &mut Matrix) -> Result<()> {
        if x.cols() != self.in_units() {
            return Err(Error::ShapeMismatch {
                op: "dense forward",
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        out.reshape_uninit(x.rows(), self.out_units());
        self.activate_rows(x.rows(), x.as_slice(), act, out.as_mut_slice());
        Ok(())
    }

    /// `rows` contiguous input rows into `rows` contiguous output rows.
    fn activate_rows(&self, rows: usize, x: &[f64], act: Activation, out: &mut [f64]) {
        let (i, o) = (self.in_units(), self.out_units());
        gemm(rows, i, o, (x, i as isize, 1), (self.weights.as_slice(), 1, i as isize), out, false);
        let bias = self.bias.as_slice();
        for row in out.chunks_exact_mut(o) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v = act.apply(*v + b);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub dense: DenseLayer,
    pub activation: Activation,
}

impl Layer {
    pub fn new(dense: DenseLayer, activation: Activation) -> Self {
        Self { dense, activation }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Activations recorded by a forward pass, the network input followed by the
/// output of every layer.
///
/// Reusing one cache across batches of the same size avoids reallocating the
/// hidden activations.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Input of `layer`.
    pub fn input(&self, layer: usize) -> &Matrix {
        &self.activations[layer]
    }

    /// Post-activation output of `layer`.
    pub fn output(&self, layer: usize) -> &Matrix {
        &self.activations[layer + 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub weights: Matrix,
    pub bias: Matrix,
}

/// Parameter gradients summed over the batch, in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    /// Flattened `[w0, b0, w1, b1, ...]`, matching [`Network::parameters_mut`].
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|g| [&g.weights, &g.bias])
            .collect()
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].dense.out_units() != pair[1].dense.in_units() {
                return Err(Error::invalid(format!(
                    "layer {i} has {} outputs but layer {} expects {} inputs",
                    pair[0].dense.out_units(),
                    i + 1,
                    pair[1].dense.in_units()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_units(&self) -> usize {
        self.layers[0].dense.in_units()
    }

    pub fn output_units(&self) -> usize {
        self.layers[self.layers.len() - 1].dense.out_units()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| (l.dense.in_units() + 1) * l.dense.out_units())
            .sum()
    }

    /// Flattened `[w0, b0, w1, b1, ...]`.
    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.dense.weights, &mut l.dense.bias])
            .collect()
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.dense.weights, &l.dense.bias])
            .collect()
    }

    fn block_rows(&self, rows: usize) -> usize {
        let widest = self
            .layers
            .iter()
            .map(|l| l.dense.in_units().max(l.dense.out_units()))
            .max()
            .unwrap_or(1);
        (BLOCK_VALUES / widest).clamp(1, rows.max(1))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_units() {
            return Err(Error::ShapeMismatch {
                op: "dense forward",
                left: x.shape(),
                right: self.layers[0].dense.weights.shape(),
            });
        }
        Ok(())
    }

    /// Output only, without recording a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let rows = x.rows();
        let outputs = self.output_units();
        let block = self.block_rows(rows);
        let mut out = vec![0.0; rows * outputs];
        let (mut cur, mut next) = (Vec::new(), Vec::new());
        for r0 in (0..rows).step_by(block) {
            let m = block.min(rows - r0);
            cur.clear();
            cur.extend_from_slice(&x.as_slice()[r0 * x.cols()..(r0 + m) * x.cols()]);
            for layer in &self.layers {
                next.resize(m * layer.dense.out_units(), 0.0);
                layer.dense.activate_rows(m, &cur, layer.activation, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            out[r0 * outputs..(r0 + m) * outputs].copy_from_slice(&cur);
        }
        Matrix::from_vec(rows, outputs, out)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let mut cache = ForwardCache::new();
        let out = self.forward_into(x, &mut cache)?.clone();
        Ok((out, cache))
    }

    /// Forward pass recorded into `cache`; returns the network output.
    pub fn forward_into<'c>(&self, x: &Matrix, cache: &'c mut ForwardCache) -> Result<&'c Matrix> {
        self.check_input(x)?;
        let n = self.layers.len();
        let rows = x.rows();
        cache.activations.resize_with(n + 1, Matrix::placeholder);
        cache.activations[0].copy_from(x);
        for (i, layer) in self.layers.iter().enumerate() {
            cache.activations[i + 1].reshape_uninit(rows, layer.dense.out_units());
        }
        let block = self.block_rows(rows);
        for r0 in (0..rows).step_by(block) {
            let m = block.min(rows - r0);
            for (i, layer) in self.layers.iter().enumerate() {
                let (fi, fo) = (layer.dense.in_units(), layer.dense.out_units());
                let (done, rest) = cache.activations.split_at_mut(i + 1);
                let input = &done[i].as_slice()[r0 * fi..(r0 + m) * fi];
                let output = &mut rest[0].as_mut_slice()[r0 * fo..(r0 + m) * fo];
                layer.dense.activate_rows(m, input, layer.activation, output);
            }
        }
        Ok(&cache.activations[n])
    }

    /// Parameter gradients and the gradient with respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: &Matrix,
    ) -> Result<(Gradients, Matrix)> {
        let (grads, input) = self.backprop(cache, output_gradient, true)?;
        Ok((grads, input.expect("input gradient requested")))
    }

    /// Like [`Network::backward`] but skips the input gradient of the first layer.
    pub fn backward_params(
        &self,
        cache: &ForwardCache,
        output_gradient: &Matrix,
    ) -> Result<Gradients> {
        Ok(self.backprop(cache, output_gradient, false)?.0)
    }

    /// Backpropagates block by block; every gradient is a sum over rows, so
    /// the upstream gradient of a wide layer never has to exist in full.
    fn backprop(
        &self,
        cache: &ForwardCache,
        output_gradient: &Matrix,
        want_input: bool,
    ) -> Result<(Gradients, Option<Matrix>)> {
        let n = self.layers.len();
        if cache.activations.len() != n + 1 {
            return Err(Error::invalid("forward cache does not belong to this network"));
        }
        let out_shape = cache.output(n - 1).shape();
        if output_gradient.shape() != out_shape {
            return Err(Error::ShapeMismatch {
                op: "backward output gradient",
                left: output_gradient.shape(),
                right: out_shape,
            });
        }
        let rows = out_shape.0;
        let mut layer_grads = self
            .layers
            .iter()
            .map(|l| {
                Ok(LayerGradients {
                    weights: Matrix::zeros(l.dense.out_units(), l.dense.in_units())?,
                    bias: Matrix::zeros(1, l.dense.out_units())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut input_grad = if want_input {
            Some(Matrix::zeros(rows, self.in_units())?)
        } else {
            None
        };
        let block = self.block_rows(rows);
        let (mut dz, mut below) = (Vec::new(), Vec::new());
        for r0 in (0..rows).step_by(block) {
            let m = block.min(rows - r0);
            let last = out_shape.1;
            dz.clear();
            dz.extend_from_slice(&output_gradient.as_slice()[r0 * last..(r0 + m) * last]);
            for (i, layer) in self.layers.iter().enumerate().rev() {
                let (fi, fo) = (layer.dense.in_units(), layer.dense.out_units());
                let act = layer.activation;
                if act != Activation::Identity {
                    let a = &cache.activations[i + 1].as_slice()[r0 * fo..(r0 + m) * fo];
                    for (g, &a) in dz.iter_mut().zip(a) {
                        *g *= act.derivative_from_output(a);
                    }
                }
                let input = &cache.activations[i].as_slice()[r0 * fi..(r0 + m) * fi];
                let g = &mut layer_grads[i];
                gemm(fo, m, fi, (&dz, 1, fo as isize), (input, fi as isize, 1), g.weights.as_mut_slice(), true);
                let db = g.bias.as_mut_slice();
                for row in dz.chunks_exact(fo) {
                    for (s, v) in db.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                if i == 0 && input_grad.is_none() {
                    break;
                }
                below.resize(m * fi, 0.0);
                let w = layer.dense.weights.as_slice();
                gemm(m, fo, fi, (&dz, fo as isize, 1), (w, fi as isize, 1), &mut below, false);
                if i == 0 {
                    if let Some(ig) = input_grad.as_mut() {
                        ig.as_mut_slice()[r0 * fi..(r0 + m) * fi].copy_from_slice(&below);
                    }
                } else {
                    std::mem::swap(&mut dz, &mut below);
                }
            }
        }
        Ok((
            Gradients {
                layers: layer_grads,
            },
            input_grad,
        ))
    }
}
