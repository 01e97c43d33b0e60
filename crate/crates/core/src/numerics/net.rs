//! Fully connected feedforward networks with reverse-mode gradients.
//!
//! All parameters of a [`DenseNet`] live in one flat vector: for each layer,
//! the row-major weight matrix `(out, in)` followed by the bias. Gradients
//! use the same layout, which lets the optimizer treat a network as a plain
//! parameter slice.
//!
//! Batched passes go through [`Workspace`], which keeps the per-layer
//! activations needed by the backward pass and is reused across steps.

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LayerShape {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    offset: usize,
}

impl LayerShape {
    fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.in_dim * self.out_dim
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.in_dim * self.out_dim;
        start..start + self.out_dim
    }

    fn len(&self) -> usize {
        (self.in_dim + 1) * self.out_dim
    }
}

/// One layer's parameters, used to build a network by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major `(out, in)`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

impl DenseNet {
    /// Builds a network with rectifier hidden layers and an identity output.
    ///
    /// `widths` lists every layer width including input and output, so
    /// `[10, 64, 64, 1]` has two hidden layers. Weights are drawn uniformly
    /// from `±sqrt(6 / fan_in)` for rectifier layers and `±sqrt(3 / fan_in)`
    /// for the output layer; biases start at zero.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2, "a network needs input and output widths");
        assert!(widths.iter().all(|&w| w > 0), "layer widths must be positive");
        let n_layers = widths.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for (i, pair) in widths.windows(2).enumerate() {
            let activation = if i + 1 == n_layers {
                Activation::Identity
            } else {
                Activation::Relu
            };
            let shape = LayerShape {
                in_dim: pair[0],
                out_dim: pair[1],
                activation,
                offset,
            };
            offset += shape.len();
            layers.push(shape);
        }
        let mut params = vec![0.0; offset];
        for shape in &layers {
            let gain = match shape.activation {
                Activation::Relu => 6.0,
                Activation::Identity => 3.0,
            };
            let limit = (gain / shape.in_dim as f64).sqrt();
            for w in &mut params[shape.weight_range()] {
                *w = rng.uniform_in(-limit, limit);
            }
        }
        Self { layers, params }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut params = Vec::new();
        let mut prev_out: Option<usize> = None;
        for layer in layers {
            let out_dim = layer.bias.len();
            if layer.in_dim == 0 || out_dim == 0 {
                return Err(Error::contract("layer widths must be positive"));
            }
            if layer.weights.len() != out_dim * layer.in_dim {
                return Err(Error::DimensionMismatch {
                    expected: out_dim * layer.in_dim,
                    got: layer.weights.len(),
                });
            }
            if let Some(prev) = prev_out {
                if prev != layer.in_dim {
                    return Err(Error::DimensionMismatch {
                        expected: prev,
                        got: layer.in_dim,
                    });
                }
            }
            if let Some(i) = layer
                .weights
                .iter()
                .chain(&layer.bias)
                .position(|v| !v.is_finite())
            {
                return Err(Error::NonFinite {
                    context: "layer parameters",
                    index: i,
                });
            }
            shapes.push(LayerShape {
                in_dim: layer.in_dim,
                out_dim,
                activation: layer.activation,
                offset: params.len(),
            });
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
            prev_out = Some(out_dim);
        }
        Ok(Self {
            layers: shapes,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].weight_range()]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].bias_range()]
    }

    pub fn layer_activation(&self, layer: usize) -> Activation {
        self.layers[layer].activation
    }

    pub fn layer_in_dim(&self, layer: usize) -> usize {
        self.layers[layer].in_dim
    }

    /// Slices a flat gradient (same layout as [`params`](Self::params)) into
    /// the weight and bias parts of `layer`.
    pub fn split_grad<'g>(&self, grad: &'g [f64], layer: usize) -> (&'g [f64], &'g [f64]) {
        let shape = &self.layers[layer];
        (&grad[shape.weight_range()], &grad[shape.bias_range()])
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut ws = Workspace::default();
        self.forward_batch(input, 1, &mut ws)?;
        Ok(ws.output().to_vec())
    }

    /// Single-sample gradient of `cotangent · net(input)` with respect to
    /// every parameter.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        let mut ws = Workspace::default();
        self.forward_batch(input, 1, &mut ws)?;
        let mut grad = vec![0.0; self.num_params()];
        self.backward_batch(&mut ws, cotangent, &mut grad)?;
        Ok(grad)
    }

    /// Forward pass over `batch` row-major inputs. The output rows are
    /// available from [`Workspace::output`].
    pub fn forward_batch(&self, inputs: &[f64], batch: usize, ws: &mut Workspace) -> Result<()> {
        let in_dim = self.input_dim();
        if inputs.len() != batch * in_dim {
            return Err(Error::DimensionMismatch {
                expected: batch * in_dim,
                got: inputs.len(),
            });
        }
        ws.prepare(self, batch);
        ws.input.clear();
        ws.input.extend_from_slice(inputs);
        for (l, shape) in self.layers.iter().enumerate() {
            let (done, rest) = ws.post.split_at_mut(l);
            let x: &[f64] = if l == 0 { &ws.input } else { &done[l - 1] };
            let z = &mut ws.pre[l];
            let bias = &self.params[shape.bias_range()];
            for row in z.chunks_exact_mut(shape.out_dim) {
                row.copy_from_slice(bias);
            }
            gemm(
                batch,
                shape.in_dim,
                shape.out_dim,
                x,
                (shape.in_dim, 1),
                &self.params[shape.weight_range()],
                (1, shape.in_dim),
                1.0,
                z,
                (shape.out_dim, 1),
            );
            let a = &mut rest[0];
            for (dst, &src) in a.iter_mut().zip(z.iter()) {
                *dst = shape.activation.apply(src);
            }
        }
        ws.batch = batch;
        Ok(())
    }

    /// Accumulates into `grad` the gradient of `Σ_b cotangents[b] · out[b]`
    /// for the batch most recently passed through [`forward_batch`].
    ///
    /// [`forward_batch`]: Self::forward_batch
    pub fn backward_batch(
        &self,
        ws: &mut Workspace,
        cotangents: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        let batch = ws.batch;
        if cotangents.len() != batch * self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: batch * self.output_dim(),
                got: cotangents.len(),
            });
        }
        if grad.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: grad.len(),
            });
        }
        ws.delta.clear();
        ws.delta.extend_from_slice(cotangents);
        for l in (0..self.layers.len()).rev() {
            let shape = &self.layers[l];
            let z = &ws.pre[l];
            for (d, &zv) in ws.delta.iter_mut().zip(z.iter()) {
                *d *= shape.activation.derivative(zv);
            }
            if ws.delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "backward pass",
                    index: l,
                });
            }
            let x: &[f64] = if l == 0 { &ws.input } else { &ws.post[l - 1] };
            gemm(
                shape.out_dim,
                batch,
                shape.in_dim,
                &ws.delta,
                (1, shape.out_dim),
                x,
                (shape.in_dim, 1),
                1.0,
                &mut grad[shape.weight_range()],
                (shape.in_dim, 1),
            );
            let gb = &mut grad[shape.bias_range()];
            for row in ws.delta.chunks_exact(shape.out_dim) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                ws.delta_prev.clear();
                ws.delta_prev.resize(batch * shape.in_dim, 0.0);
                gemm(
                    batch,
                    shape.out_dim,
                    shape.in_dim,
                    &ws.delta,
                    (shape.out_dim, 1),
                    &self.params[shape.weight_range()],
                    (shape.in_dim, 1),
                    0.0,
                    &mut ws.delta_prev,
                    (shape.in_dim, 1),
                );
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
        Ok(())
    }
}

/// Scratch buffers for batched passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    batch: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, net: &DenseNet, batch: usize) {
        let n = net.layers.len();
        self.pre.resize_with(n, Vec::new);
        self.post.resize_with(n, Vec::new);
        for (l, shape) in net.layers.iter().enumerate() {
            self.pre[l].resize(batch * shape.out_dim, 0.0);
            self.post[l].resize(batch * shape.out_dim, 0.0);
        }
    }

    /// Output rows of the most recent forward pass.
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `c (m×n) = beta·c + a (m×k) · b (k×n)`, strides given as `(row, col)`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(a.len() > last(m, k, rsa, csa));
        assert!(b.len() > last(k, n, rsb, csb));
    }
    assert!(c.len() > last(m, n, rsc, csc));
    // SAFETY: the asserts above bound every element the kernel touches, and
    // `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_return_bias() {
        let net = DenseNet::from_layers(vec![Layer {
            weights: vec![0.0; 6],
            bias: vec![0.5, -1.5],
            in_dim: 3,
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 7.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn scalar_affine() {
        let net = DenseNet::from_layers(vec![Layer {
            weights: vec![2.0],
            bias: vec![1.0],
            in_dim: 1,
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = DenseNet::new(&[3, 4, 1], &mut Rng::new(0));
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn incompatible_layers_rejected() {
        let err = DenseNet::from_layers(vec![
            Layer {
                weights: vec![0.0; 6],
                bias: vec![0.0; 2],
                in_dim: 3,
                activation: Activation::Relu,
            },
            Layer {
                weights: vec![0.0; 3],
                bias: vec![0.0],
                in_dim: 3,
                activation: Activation::Identity,
            },
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn zero_cotangent_zero_gradient() {
        let net = DenseNet::new(&[4, 8, 8, 1], &mut Rng::new(1));
        let g = net.backward(&[0.1, -0.2, 0.3, 0.4], &[0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_gradient_is_outer_product() {
        let net = DenseNet::from_layers(vec![Layer {
            weights: vec![0.3, -0.1, 0.7, 0.2, 0.0, 1.1],
            bias: vec![0.0, 0.0],
            in_dim: 3,
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = [1.5, -2.0, 0.25];
        let ct = [0.5, -3.0];
        let g = net.backward(&x, &ct).unwrap();
        let (gw, gb) = net.split_grad(&g, 0);
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(gw[o * 3 + i], ct[o] * x[i]);
            }
            assert_eq!(gb[o], ct[o]);
        }
    }

    #[test]
    fn batch_matches_single() {
        let net = DenseNet::new(&[5, 16, 16, 1], &mut Rng::new(2));
        let mut rng = Rng::new(3);
        let inputs: Vec<f64> = (0..5 * 7).map(|_| rng.normal()).collect();
        let mut ws = Workspace::default();
        net.forward_batch(&inputs, 7, &mut ws).unwrap();
        let batch_out = ws.output().to_vec();
        let mut grad = vec![0.0; net.num_params()];
        net.backward_batch(&mut ws, &[1.0; 7], &mut grad).unwrap();
        let mut summed = vec![0.0; net.num_params()];
        for (b, row) in inputs.chunks(5).enumerate() {
            assert!((net.forward(row).unwrap()[0] - batch_out[b]).abs() < 1e-12);
            for (s, g) in summed.iter_mut().zip(net.backward(row, &[1.0]).unwrap()) {
                *s += g;
            }
        }
        for (a, b) in grad.iter().zip(&summed) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn gradient_matches_central_differences(
            seed in 0u64..1_000_000,
            widths in proptest::collection::vec(1usize..9, 2..5),
        ) {
            let mut rng = Rng::new(seed);
            let mut net = DenseNet::new(&widths, &mut rng);
            for p in net.params_mut() {
                *p += 0.1 * rng.normal();
            }
            let input: Vec<f64> = (0..widths[0]).map(|_| rng.normal()).collect();
            let cot: Vec<f64> = (0..*widths.last().unwrap()).map(|_| rng.normal()).collect();
            let objective = |net: &DenseNet| -> f64 {
                net.forward(&input).unwrap().iter().zip(&cot).map(|(y, c)| y * c).sum()
            };
            let grad = net.backward(&input, &cot).unwrap();
            let h = 1e-6;
            let mut fd = vec![0.0; grad.len()];
            for k in 0..grad.len() {
                let orig = net.params()[k];
                net.params_mut()[k] = orig + h;
                let up = objective(&net);
                net.params_mut()[k] = orig - h;
                let down = objective(&net);
                net.params_mut()[k] = orig;
                fd[k] = (up - down) / (2.0 * h);
            }
            let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt() + fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            proptest::prop_assert!(scale == 0.0 || diff / scale < 1e-4, "relative error {}", diff / scale);
        }

        #[test]
        fn same_seed_same_trajectory(seed in 0u64..1_000_000) {
            let run = || {
                let mut rng = Rng::new(seed);
                let mut net = DenseNet::new(&[3, 8, 8, 1], &mut rng);
                let mut adam = crate::numerics::Adam::new(net.num_params(), Default::default());
                let mut trace = Vec::new();
                for _ in 0..20 {
                    let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
                    trace.extend(net.forward(&x).unwrap());
                    let g = net.backward(&x, &[1.0]).unwrap();
                    adam.step(net.params_mut(), &g).unwrap();
                }
                (trace, net.params().to_vec())
            };
            proptest::prop_assert_eq!(run(), run());
        }
    }
}
