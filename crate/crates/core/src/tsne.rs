//! Exact t-SNE for a few hundred points.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneOptions {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 1000, learning_rate: 200.0, exaggeration: 12.0, exaggeration_iters: 250, seed: 0 }
    }
}

/// Largest usable perplexity for `n` points.
pub fn effective_perplexity(requested: f64, n: usize) -> f64 {
    let cap = (n as f64 - 1.0) / 3.0;
    if requested > cap {
        log::warn!("perplexity {requested} is too large for {n} points; using {cap:.2}");
        cap.max(1.0)
    } else {
        requested
    }
}

fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Conditional probabilities `p_{j|i}` whose entropy matches `ln(perplexity)`.
fn conditional_p(d: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = d.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
        let min_d = (0..n).filter(|&j| j != i).map(|j| d[[i, j]]).fold(f64::INFINITY, f64::min);
        for _ in 0..100 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let e = (-(d[[i, j]] - min_d) * beta).exp();
                p[[i, j]] = e;
                sum += e;
                weighted += e * (d[[i, j]] - min_d);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            for j in 0..n {
                p[[i, j]] /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
    }
    p
}

/// Embeds the rows of `x` in two dimensions. Deterministic per seed.
pub fn tsne(x: &Array2<f64>, opts: &TsneOptions) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Invalid(format!("t-SNE needs at least 2 points, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    let perplexity = effective_perplexity(opts.perplexity, n);
    let cond = conditional_p(&squared_distances(x), perplexity);
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            p[[i, j]] = ((cond[[i, j]] + cond[[j, i]]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let normal = Normal::new(0.0, 1e-2).unwrap();
    let mut rng = seed::rng(opts.seed);
    let mut y = Array2::from_shape_simple_fn((n, 2), || normal.sample(&mut rng));
    let mut velocity = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut num = Array2::<f64>::zeros((n, n));
    for it in 0..opts.iterations {
        let exag = if it < opts.exaggeration_iters { opts.exaggeration } else { 1.0 };
        let momentum = if it < opts.exaggeration_iters { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dy0 = y[[i, 0]] - y[[j, 0]];
                let dy1 = y[[i, 1]] - y[[j, 1]];
                let q = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                num[[i, j]] = q;
                num[[j, i]] = q;
                z += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut g = [0.0f64; 2];
            for j in (0..n).filter(|&j| j != i) {
                let coeff = (exag * p[[i, j]] - num[[i, j]] / z) * num[[i, j]];
                g[0] += 4.0 * coeff * (y[[i, 0]] - y[[j, 0]]);
                g[1] += 4.0 * coeff * (y[[i, 1]] - y[[j, 1]]);
            }
            for d in 0..2 {
                let same_sign = (g[d] > 0.0) == (velocity[[i, d]] > 0.0);
                gains[[i, d]] = if same_sign { (gains[[i, d]] * 0.8).max(0.01) } else { gains[[i, d]] + 0.2 };
                velocity[[i, d]] = momentum * velocity[[i, d]] - opts.learning_rate * gains[[i, d]] * g[d];
            }
        }
        y += &velocity;
        let mean = y.mean_axis(ndarray::Axis(0)).unwrap();
        y -= &mean;
    }
    Ok(y)
}
