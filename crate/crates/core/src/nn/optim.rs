//! Adam with an optional cosine learning-rate decay.

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Grads, Network, Params, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    #[default]
    Cosine,
}

impl Schedule {
    /// Learning rate at `step` of `total` steps.
    pub fn lr(&self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::Cosine => {
                let t = step as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

pub struct Adam<F> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Option<Params<F>>>,
    v: Vec<Option<Params<F>>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(net: &Network<F>) -> Self {
        let zeros = net.zero_grads().layers;
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, net: &mut Network<F>, grads: &Grads<F>, lr: f64) {
        self.step += 1;
        let b1 = F::from_f64_lossy(self.beta1);
        let b2 = F::from_f64_lossy(self.beta2);
        let one = F::one();
        let c1 = one - b1.powi(self.step);
        let c2 = one - b2.powi(self.step);
        let lr = F::from_f64_lossy(lr);
        let eps = F::from_f64_lossy(self.eps);
        let update = |p: &mut F, g: &F, m: &mut F, v: &mut F| {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            let (Some(p), Some(g), Some(m), Some(v)) =
                (layer.params.as_mut(), grads.layers[i].as_ref(), self.m[i].as_mut(), self.v[i].as_mut())
            else {
                continue;
            };
            zip2(&mut p.weight, &g.weight, &mut m.weight, &mut v.weight, update);
            zip1(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias, update);
        }
    }
}

fn zip2<F: Scalar>(
    p: &mut Array2<F>,
    g: &Array2<F>,
    m: &mut Array2<F>,
    v: &mut Array2<F>,
    f: impl Fn(&mut F, &F, &mut F, &mut F),
) {
    Zip::from(p).and(g).and(m).and(v).for_each(f);
}

fn zip1<F: Scalar>(
    p: &mut Array1<F>,
    g: &Array1<F>,
    m: &mut Array1<F>,
    v: &mut Array1<F>,
    f: impl Fn(&mut F, &F, &mut F, &mut F),
) {
    Zip::from(p).and(g).and(m).and(v).for_each(f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use ndarray::Array3;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(Schedule::Cosine.lr(1.0, 0, 10), 1.0);
        assert!(Schedule::Cosine.lr(1.0, 10, 10).abs() < 1e-12);
        assert_eq!(Schedule::Constant.lr(0.3, 7, 10), 0.3);
    }

    #[test]
    fn adam_reduces_a_quadratic() {
        let specs = vec![("fc".to_string(), LayerSpec::Linear { input: 2, output: 1 })];
        let mut net: Network<f64> = Network::init(&specs, 1);
        let mut opt = Adam::new(&net);
        let x = Array3::from_shape_vec((2, 1, 1), vec![1.0, -2.0]).unwrap();
        let target = 3.0;
        let loss = |net: &Network<f64>| (net.forward(x.view())[[0, 0, 0]] - target).powi(2);
        let before = loss(&net);
        for _ in 0..500 {
            let trace = net.forward_trace(x.view());
            let out = trace.output()[[0, 0, 0]];
            let mut g = net.zero_grads();
            net.param_grads(&trace, Array3::from_elem((1, 1, 1), 2.0 * (out - target)), &mut g);
            opt.step(&mut net, &g, 0.05);
        }
        assert!(loss(&net) < before * 1e-4);
    }
}
