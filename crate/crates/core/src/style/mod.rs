//! Linear style transfer with a noise-randomized style embedding.
//!
//! Content and style images are mean-centered, encoded, and summarized by
//! a fully-connected map over their channel covariance. A transform built
//! from the content embedding and a perturbed style embedding mixes the
//! compressed content features, which are then decoded and shifted by an
//! interpolation of the content and style channel means.

mod engine;
mod noise;
mod transform;
mod trainer;

use ndarray::{Array1, Array2, Array3};

pub use engine::{EngineConfig, Encoded, StyleEngine, ENGINE_FORMAT_VERSION};
pub use noise::{perturb_embedding, NoiseParams};
pub use trainer::{train_engine, EngineTrainOptions};
pub use transform::{compose_transform, Alpha, TransformMatrix};

use crate::error::{Error, Result};

/// Encoder output: `(F₁, N₁, M₁)` with every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    data: Array3<f32>,
}

impl FeatureTensor {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature tensor".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let (_, h, w) = self.data.dim();
        (h, w)
    }
}

/// A style summarized for the transform: the embedding of the centered
/// style image and the style image's per-channel pixel mean.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEmbedding {
    pub z: Array1<f32>,
    pub mu_z: [f32; 3],
    pub style_id: String,
}

/// Population channel covariance of a feature tensor, accumulated in 64-bit.
///
/// Spatial positions are the observations, so the result is `F₁ × F₁`
/// with `cov[a][b] = mean_p (x_a(p) − x̄_a)(x_b(p) − x̄_b)`.
pub fn channel_covariance(features: &FeatureTensor) -> Result<Array2<f64>> {
    let (f, h, w) = features.data.dim();
    let p = h * w;
    let mut x = features
        .data
        .to_shape((f, p))
        .map_err(|e| Error::Dimension(e.to_string()))?
        .mapv(|v| v as f64);
    for mut row in x.rows_mut() {
        let mean = row.sum() / p as f64;
        row.mapv_inplace(|v| v - mean);
    }
    let cov = x.dot(&x.t()) / p as f64;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature covariance".into()));
    }
    Ok(cov)
}

/// Upper triangle (diagonal included) of a symmetric matrix, row-major.
pub(crate) fn upper_triangle(m: &Array2<f64>) -> Vec<f32> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[[i, j]] as f32);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_features_have_zero_covariance() {
        let f = FeatureTensor::new(Array3::from_elem((4, 3, 3), 2.5)).unwrap();
        let cov = channel_covariance(&f).unwrap();
        assert!(cov.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_channel_gives_single_diagonal_entry() {
        let mut data = Array3::zeros((5, 4, 4));
        for y in 0..4 {
            for x in 0..4 {
                data[[2, y, x]] = (y * 4 + x) as f32;
            }
        }
        let cov = channel_covariance(&FeatureTensor::new(data).unwrap()).unwrap();
        let nonzero: Vec<_> = cov.indexed_iter().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].0, (2, 2));
        // variance of 0..16
        assert!((cov[[2, 2]] - 21.25).abs() < 1e-12);
    }

    #[test]
    fn non_finite_features_rejected() {
        let mut data = Array3::zeros((2, 2, 2));
        data[[0, 1, 1]] = f32::INFINITY;
        assert!(FeatureTensor::new(data).is_err());
    }
}
