//! A small sequential network with explicit reverse-mode gradients.
//!
//! Tensors flow through the network as `(channel, row, column)` arrays;
//! dense layers see their input flattened and emit `(out, 1, 1)`.
//! Layers are generic over [`Scalar`] so the same model can run in 32-bit
//! for training and in 64-bit for gradient verification.

mod conv;
pub mod optim;
pub mod store;

use std::fmt::Debug;

use ndarray::{Array1, Array2, Array3, ArrayView3, Axis, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use conv::{col2im, im2col, ConvGeometry};

use crate::error::{Error, Result};
use crate::seed;

pub trait Scalar:
    Float
    + FromPrimitive
    + ndarray::LinalgScalar
    + ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + Debug
    + Default
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Architecture description of a single layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool2,
    Upsample2,
    GlobalAvgPool,
    Linear {
        input: usize,
        output: usize,
    },
}

impl LayerSpec {
    pub fn conv3x3(input: usize, output: usize, stride: usize) -> Self {
        LayerSpec::Conv2d { input, output, kernel: 3, stride, pad: 1 }
    }

    pub fn conv1x1(input: usize, output: usize) -> Self {
        LayerSpec::Conv2d { input, output, kernel: 1, stride: 1, pad: 0 }
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d { input, output, kernel, .. } => {
                vec![vec![output, input, kernel, kernel], vec![output]]
            }
            LayerSpec::Linear { input, output } => vec![vec![output, input], vec![output]],
            _ => Vec::new(),
        }
    }
}

/// Dense weights: a `(out, fan_in)` matrix and a bias vector.
/// Convolution kernels are kept unrolled as `(out, in·k·k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub name: String,
    pub spec: LayerSpec,
    pub params: Option<Params<F>>,
}

impl<F: Scalar> Layer<F> {
    fn forward(&self, x: ArrayView3<'_, F>) -> Array3<F> {
        match self.spec {
            LayerSpec::Conv2d { output, kernel, stride, pad, .. } => {
                let p = self.params.as_ref().expect("conv params");
                let g = ConvGeometry { kernel, stride, pad };
                let (_, h, w) = x.dim();
                let (ho, wo) = (g.output_side(h), g.output_side(w));
                let col = im2col(x, g);
                let mut out = p.weight.dot(&col);
                out += &p.bias.view().insert_axis(Axis(1));
                out.into_shape_with_order((output, ho, wo)).unwrap()
            }
            LayerSpec::Relu => x.mapv(|v| if v > F::zero() { v } else { F::zero() }),
            LayerSpec::MaxPool2 => {
                let (c, h, w) = x.dim();
                Array3::from_shape_fn((c, h / 2, w / 2), |(ci, y, xx)| {
                    let a = x[[ci, 2 * y, 2 * xx]];
                    let b = x[[ci, 2 * y, 2 * xx + 1]];
                    let d = x[[ci, 2 * y + 1, 2 * xx]];
                    let e = x[[ci, 2 * y + 1, 2 * xx + 1]];
                    a.max(b).max(d.max(e))
                })
            }
            LayerSpec::Upsample2 => {
                let (c, h, w) = x.dim();
                Array3::from_shape_fn((c, 2 * h, 2 * w), |(ci, y, xx)| x[[ci, y / 2, xx / 2]])
            }
            LayerSpec::GlobalAvgPool => {
                let (c, h, w) = x.dim();
                let z = F::from_usize(h * w).unwrap();
                let sums = x.to_shape((c, h * w)).unwrap().sum_axis(Axis(1));
                (sums / z).into_shape_with_order((c, 1, 1)).unwrap()
            }
            LayerSpec::Linear { output, .. } => {
                let p = self.params.as_ref().expect("linear params");
                let flat = x.iter().copied().collect::<Array1<F>>();
                let out = p.weight.dot(&flat) + &p.bias;
                out.into_shape_with_order((output, 1, 1)).unwrap()
            }
        }
    }

    /// Given the layer input, its output and the gradient w.r.t. the output,
    /// returns the gradient w.r.t. the input and accumulates parameter
    /// gradients into `grads` when supplied.
    fn backward(
        &self,
        x: ArrayView3<'_, F>,
        y: ArrayView3<'_, F>,
        dy: Array3<F>,
        grads: Option<&mut Params<F>>,
        need_input_grad: bool,
    ) -> Option<Array3<F>> {
        match self.spec {
            LayerSpec::Conv2d { output, kernel, stride, pad, .. } => {
                let p = self.params.as_ref().expect("conv params");
                let g = ConvGeometry { kernel, stride, pad };
                let (_, ho, wo) = dy.dim();
                let dy2 = dy.into_shape_with_order((output, ho * wo)).unwrap();
                if let Some(gp) = grads {
                    let col = im2col(x, g);
                    gp.weight += &dy2.dot(&col.t());
                    gp.bias += &dy2.sum_axis(Axis(1));
                }
                need_input_grad.then(|| {
                    let dcol = p.weight.t().dot(&dy2);
                    col2im(dcol.view(), x.dim(), g)
                })
            }
            LayerSpec::Relu => {
                need_input_grad.then(|| {
                    let mut dx = dy;
                    dx.zip_mut_with(&y, |d, &o| {
                        if o <= F::zero() {
                            *d = F::zero();
                        }
                    });
                    dx
                })
            }
            LayerSpec::MaxPool2 => need_input_grad.then(|| {
                let mut dx = Array3::zeros(x.dim());
                let (c, ho, wo) = dy.dim();
                for ci in 0..c {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let target = y[[ci, oy, ox]];
                            // first maximal element in row-major order receives the gradient
                            'win: for dy_ in 0..2 {
                                for dx_ in 0..2 {
                                    if x[[ci, 2 * oy + dy_, 2 * ox + dx_]] == target {
                                        dx[[ci, 2 * oy + dy_, 2 * ox + dx_]] = dy[[ci, oy, ox]];
                                        break 'win;
                                    }
                                }
                            }
                        }
                    }
                }
                dx
            }),
            LayerSpec::Upsample2 => need_input_grad.then(|| {
                let (c, h, w) = x.dim();
                Array3::from_shape_fn((c, h, w), |(ci, yy, xx)| {
                    dy[[ci, 2 * yy, 2 * xx]]
                        + dy[[ci, 2 * yy, 2 * xx + 1]]
                        + dy[[ci, 2 * yy + 1, 2 * xx]]
                        + dy[[ci, 2 * yy + 1, 2 * xx + 1]]
                })
            }),
            LayerSpec::GlobalAvgPool => need_input_grad.then(|| {
                let (c, h, w) = x.dim();
                let z = F::from_usize(h * w).unwrap();
                Array3::from_shape_fn((c, h, w), |(ci, _, _)| dy[[ci, 0, 0]] / z)
            }),
            LayerSpec::Linear { output, .. } => {
                let p = self.params.as_ref().expect("linear params");
                let dy1 = dy.into_shape_with_order(output).unwrap();
                if let Some(gp) = grads {
                    let flat = x.iter().copied().collect::<Array1<F>>();
                    let outer = dy1
                        .view()
                        .insert_axis(Axis(1))
                        .dot(&flat.view().insert_axis(Axis(0)));
                    gp.weight += &outer;
                    gp.bias += &dy1;
                }
                need_input_grad.then(|| p.weight.t().dot(&dy1).into_shape_with_order(x.dim()).unwrap())
            }
        }
    }
}

/// Activations recorded during a forward pass: `acts[0]` is the input and
/// `acts[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Trace<F> {
    pub acts: Vec<Array3<F>>,
}

impl<F> Trace<F> {
    pub fn output(&self) -> &Array3<F> {
        self.acts.last().expect("non-empty trace")
    }
}

/// Parameter gradients, one entry per layer (None for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub layers: Vec<Option<Params<F>>>,
}

impl<F: Scalar> Grads<F> {
    pub fn add_assign(&mut self, other: &Grads<F>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.weight += &b.weight;
                a.bias += &b.bias;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.mapv_inplace(|v| v * s);
            p.bias.mapv_inplace(|v| v * s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    layers: Vec<Layer<F>>,
}

impl<F: Scalar> Network<F> {
    /// Builds a network with He-normal weights and zero biases.
    pub fn init(specs: &[(String, LayerSpec)], seed: u64) -> Self {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, (name, spec))| {
                let params = match *spec {
                    LayerSpec::Conv2d { input, output, kernel, .. } => {
                        Some(he_params(output, input * kernel * kernel, seed::derive(seed, i as u64)))
                    }
                    LayerSpec::Linear { input, output } => {
                        Some(he_params(output, input, seed::derive(seed, i as u64)))
                    }
                    _ => None,
                };
                Layer { name: name.clone(), spec: *spec, params }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer<F>>) -> Result<Self> {
        for l in &layers {
            let expect = l.spec.param_shapes();
            match (&l.params, expect.is_empty()) {
                (None, true) => {}
                (Some(p), false) => {
                    let fan_in: usize = expect[0][1..].iter().product();
                    if p.weight.dim() != (expect[0][0], fan_in) || p.bias.len() != expect[1][0] {
                        return Err(Error::Dimension(format!("parameters of layer `{}`", l.name)));
                    }
                }
                _ => return Err(Error::Dimension(format!("parameters of layer `{}`", l.name))),
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<(String, LayerSpec)> {
        self.layers.iter().map(|l| (l.name.clone(), l.spec)).collect()
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::MissingLayer(name.to_string()))
    }

    pub fn cast<G: Scalar>(&self) -> Network<G> {
        let conv = |a: &F| G::from_f64_lossy(a.as_f64());
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    name: l.name.clone(),
                    spec: l.spec,
                    params: l.params.as_ref().map(|p| Params {
                        weight: p.weight.map(conv),
                        bias: p.bias.map(conv),
                    }),
                })
                .collect(),
        }
    }

    pub fn forward(&self, x: ArrayView3<'_, F>) -> Array3<F> {
        self.forward_range(x, 0, self.layers.len())
    }

    /// Runs layers `start..end` on `x`.
    pub fn forward_range(&self, x: ArrayView3<'_, F>, start: usize, end: usize) -> Array3<F> {
        let mut cur = x.to_owned();
        for l in &self.layers[start..end] {
            cur = l.forward(cur.view());
        }
        cur
    }

    pub fn forward_trace(&self, x: ArrayView3<'_, F>) -> Trace<F> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for l in &self.layers {
            let next = l.forward(acts.last().unwrap().view());
            acts.push(next);
        }
        Trace { acts }
    }

    pub fn zero_grads(&self) -> Grads<F> {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.params.as_ref().map(|p| Params {
                        weight: Array2::zeros(p.weight.dim()),
                        bias: Array1::zeros(p.bias.len()),
                    })
                })
                .collect(),
        }
    }

    /// Back-propagates `grad_out` (w.r.t. the network output) down to the
    /// input of layer `stop`, returning the gradient there. Parameter
    /// gradients of layers `stop..` are accumulated into `grads` if given.
    pub fn backward(
        &self,
        trace: &Trace<F>,
        grad_out: Array3<F>,
        stop: usize,
        mut grads: Option<&mut Grads<F>>,
    ) -> Array3<F> {
        let mut g = grad_out;
        for i in (stop..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let gp = grads.as_deref_mut().and_then(|gr| gr.layers[i].as_mut());
            g = layer
                .backward(trace.acts[i].view(), trace.acts[i + 1].view(), g, gp, true)
                .expect("input gradient requested");
        }
        g
    }

    /// Parameter-only backward pass; skips the input gradient of layer 0.
    pub fn param_grads(&self, trace: &Trace<F>, grad_out: Array3<F>, grads: &mut Grads<F>) {
        let mut g = Some(grad_out);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let need = i > 0;
            g = layer.backward(
                trace.acts[i].view(),
                trace.acts[i + 1].view(),
                g.expect("gradient available"),
                grads.layers[i].as_mut(),
                need,
            );
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref())
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }
}

fn he_params<F: Scalar>(output: usize, fan_in: usize, seed: u64) -> Params<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).unwrap();
    let mut rng = seed::rng(seed);
    Params {
        weight: Array2::from_shape_simple_fn((output, fan_in), || F::from_f64_lossy(normal.sample(&mut rng))),
        bias: Array1::zeros(output),
    }
}

/// Numerically stable softmax over a logit vector.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().copied().fold(F::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}
