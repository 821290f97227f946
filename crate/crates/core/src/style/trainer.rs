//! Reconstruction training for the encoder / compress / uncompress / decoder
//! stack. The embedding layer stays at its seeded initialization.
//!
//! Images are reconstructed through the same path `apply_style` takes at
//! `α = 1`: the compressed features are projected onto the content
//! embedding direction and rescaled to their own norm before decoding. The
//! embedding direction and the rescaling factor are held constant when
//! differentiating.

use ndarray::{Array1, Array2, Array3, Axis};
use rand::seq::SliceRandom;

use super::engine::embedding_of;
use super::{EngineConfig, FeatureTensor, StyleEngine};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::optim::{Adam, Schedule};
use crate::nn::{Grads, Network};
use crate::par::{self, Exec};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for EngineTrainOptions {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 16, lr: 1e-3, seed: 0, exec: Exec::available() }
    }
}

fn centered(img: &ImageTensor) -> Array3<f32> {
    let mean = img.channel_means();
    let mut x = img.data().clone();
    for (c, mut plane) in x.axis_iter_mut(Axis(0)).enumerate() {
        plane.mapv_inplace(|v| v - mean[c]);
    }
    x
}

fn split(net: &Network<f32>, at: usize) -> Result<(Network<f32>, Network<f32>)> {
    let layers = net.layers();
    Ok((Network::from_layers(layers[..at].to_vec())?, Network::from_layers(layers[at..].to_vec())?))
}

fn join(a: &Network<f32>, b: &Network<f32>) -> Result<Network<f32>> {
    Network::from_layers(a.layers().iter().chain(b.layers()).cloned().collect())
}

/// Unit embedding direction `u` and rescale `k` so that the `α = 1` path
/// maps `x` to `k · u (uᵀx)`. None when the projection vanishes.
fn projection(phi: &Array1<f32>, x: &Array2<f32>) -> Option<(Array1<f32>, f32)> {
    let norm = phi.dot(phi).sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let u = phi / norm;
    let s = u.dot(x);
    let (nx, ns) = (x.iter().map(|v| v * v).sum::<f32>().sqrt(), s.dot(&s).sqrt());
    (ns > 0.0 && ns.is_finite()).then(|| (u, nx / ns))
}

fn outer(a: &Array1<f32>, b: &Array1<f32>) -> Array2<f32> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Trains the autoencoder path to reproduce mean-centered images.
/// Returns the engine and the mean reconstruction MSE per epoch.
pub fn train_engine(
    images: &[ImageTensor],
    config: EngineConfig,
    opts: EngineTrainOptions,
) -> Result<(StyleEngine, Vec<f64>)> {
    if images.is_empty() {
        return Err(Error::Invalid("no images to train the style engine on".into()));
    }
    let init = StyleEngine::new(config, opts.seed)?;
    let embed = init.embed_network().clone();
    // encoder runs through `compress`; the decoder starts at `uncompress`
    let cut = init.autoencoder().layer_index("uncompress")?;
    let (mut enc, mut dec) = split(init.autoencoder(), cut)?;
    let inputs: Vec<Array3<f32>> = images
        .iter()
        .map(|img| img.resized(config.resolution, config.resolution).map(|r| centered(&r)))
        .collect::<Result<_>>()?;

    let (mut opt_e, mut opt_d) = (Adam::new(&enc), Adam::new(&dec));
    let batch = opts.batch_size.max(1);
    let total = inputs.len().div_ceil(batch) * opts.epochs;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut step = 0;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut seed::rng(seed::derive(opts.seed, 1000 + epoch as u64)));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let per_sample = par::try_map_indices(opts.exec, chunk.len(), |j| -> Result<(f64, Grads<f32>, Grads<f32>)> {
                let i = chunk[j];
                let img = &inputs[i];
                let te = enc.forward_trace(img.view());
                let features = FeatureTensor::new(te.acts[cut - 1].clone())?;
                let phi = embedding_of(&embed, &features)?;
                let x3 = te.output();
                let (n, h1, w1) = x3.dim();
                let x = x3.to_shape((n, h1 * w1)).unwrap().to_owned();
                let mut ge = enc.zero_grads();
                let mut gd = dec.zero_grads();
                let Some((u, k)) = projection(&phi, &x) else {
                    return Ok((f64::NAN, ge, gd));
                };
                let s = u.dot(&x);
                let y = outer(&u, &s) * k;
                let td = dec.forward_trace(y.into_shape_with_order((n, h1, w1)).unwrap().view());
                let diff = td.output() - img;
                let npix = diff.len() as f32;
                let loss = diff.iter().map(|d| (*d as f64).powi(2)).sum::<f64>() / npix as f64;
                let gy = dec.backward(&td, diff.mapv(|d| 2.0 * d / npix), 0, Some(&mut gd));
                let gy = gy.into_shape_with_order((n, h1 * w1)).unwrap();
                let proj = u.dot(&gy) * k;
                let gx = outer(&u, &proj);
                enc.param_grads(&te, gx.into_shape_with_order((n, h1, w1)).unwrap(), &mut ge);
                Ok((loss, ge, gd))
            })?;
            let (mut ge, mut gd) = (enc.zero_grads(), dec.zero_grads());
            let mut used = 0usize;
            for (loss, e, d) in &per_sample {
                if loss.is_nan() {
                    continue;
                }
                epoch_loss += loss;
                used += 1;
                ge.add_assign(e);
                gd.add_assign(d);
            }
            if used > 0 {
                ge.scale(1.0 / used as f32);
                gd.scale(1.0 / used as f32);
                let lr = Schedule::Cosine.lr(opts.lr, step, total);
                opt_e.step(&mut enc, &ge, lr);
                opt_d.step(&mut dec, &gd, lr);
            }
            step += 1;
        }
        let mean = epoch_loss / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        log::info!("engine epoch {epoch}: reconstruction mse {mean:.5}");
        history.push(mean);
    }
    let engine = StyleEngine::from_parts(config, join(&enc, &dec)?, embed)?;
    Ok((engine, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style::{Alpha, NoiseParams};

    #[test]
    fn projection_path_matches_apply_style_at_alpha_one() {
        let cfg = EngineConfig { resolution: 32, n: 6, feature_channels: 8, widths: [4, 6] };
        let engine = StyleEngine::new(cfg, 3).unwrap();
        let img = ImageTensor::new(Array3::from_shape_fn((3, 32, 32), |(c, y, x)| ((c * 7 + y * 3 + x * 5) % 17) as f32 / 16.0))
            .unwrap();
        let cut = engine.autoencoder().layer_index("uncompress").unwrap();
        let (enc, dec) = split(engine.autoencoder(), cut).unwrap();
        let xin = centered(&img);
        let te = enc.forward_trace(xin.view());
        let phi = embedding_of(engine.embed_network(), &FeatureTensor::new(te.acts[cut - 1].clone()).unwrap()).unwrap();
        let (n, h1, w1) = te.output().dim();
        let x = te.output().to_shape((n, h1 * w1)).unwrap().to_owned();
        let (u, k) = projection(&phi, &x).unwrap();
        let y = outer(&u, &u.dot(&x)) * k;
        let mut out = dec.forward(y.into_shape_with_order((n, h1, w1)).unwrap().view());
        let mean = img.channel_means();
        for (c, mut plane) in out.axis_iter_mut(Axis(0)).enumerate() {
            plane.mapv_inplace(|v| (v + mean[c]).clamp(0.0, 1.0));
        }
        let style = engine.embed_style(&img, "s").unwrap();
        let styled = engine.apply_style(&img, &style, Alpha::ONE, &NoiseParams::none(6)).unwrap();
        let err = styled.data().iter().zip(out.iter()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 1e-4, "max deviation {err}");
    }

    #[test]
    fn training_reduces_reconstruction_error() {
        let cfg = EngineConfig { resolution: 32, n: 6, feature_channels: 8, widths: [4, 6] };
        let imgs: Vec<ImageTensor> = (0..8).map(|s| crate::synth::shape_image(s % 3, 32, s as u64)).collect();
        let opts = EngineTrainOptions { epochs: 6, batch_size: 4, lr: 1e-3, seed: 2, exec: Exec::Sequential };
        let (_, hist) = train_engine(&imgs, cfg, opts).unwrap();
        assert!(hist.last().unwrap() < &hist[0], "{hist:?}");
    }
}
