use ndarray::Array1;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::StyleEmbedding;
use crate::error::{Error, Result};
use crate::seed;

/// Diagonal Gaussian perturbation of a style embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
    pub seed: u64,
}

impl NoiseParams {
    /// Zero mean, zero spread: the perturbation is the identity.
    pub fn none(n: usize) -> Self {
        Self { mu: vec![0.0; n], sigma: vec![0.0; n], seed: 0 }
    }

    /// `mu = 0`, `sigma = scale · std` where `std` is the per-dimension spread
    /// of the style bank.
    pub fn scaled_spread(std: &[f32], scale: f32, seed: u64) -> Self {
        Self { mu: vec![0.0; std.len()], sigma: std.iter().map(|s| s * scale).collect(), seed }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mu.len() != n || self.sigma.len() != n {
            return Err(Error::Dimension(format!(
                "noise has mu/sigma lengths {}/{}, embedding length is {n}",
                self.mu.len(),
                self.sigma.len()
            )));
        }
        if self.mu.iter().chain(&self.sigma).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise parameters".into()));
        }
        if self.sigma.iter().any(|s| *s < 0.0) {
            return Err(Error::Invalid("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// `ẑ = z̄ + g`, `g ~ N(mu, diag(sigma²))`, drawn from a generator seeded
/// with `noise.seed`.
pub fn perturb_embedding(z: &StyleEmbedding, noise: &NoiseParams) -> Result<Array1<f32>> {
    noise.validate(z.z.len())?;
    let mut rng = seed::rng(noise.seed);
    Ok(z
        .z
        .iter()
        .zip(noise.mu.iter().zip(&noise.sigma))
        .map(|(&zi, (&m, &s))| {
            let g: f32 = StandardNormal.sample(&mut rng);
            zi + (m + s * g)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb() -> StyleEmbedding {
        StyleEmbedding { z: Array1::from(vec![0.5, -1.25, 3.0]), mu_z: [0.1, 0.2, 0.3], style_id: "s".into() }
    }

    #[test]
    fn zero_noise_is_identity() {
        let z = emb();
        let out = perturb_embedding(&z, &NoiseParams::none(3).with_seed(99)).unwrap();
        assert_eq!(out, z.z);
    }

    #[test]
    fn zero_sigma_shifts_exactly() {
        let z = emb();
        let noise = NoiseParams { mu: vec![1.0, 2.0, -0.5], sigma: vec![0.0; 3], seed: 4 };
        let out = perturb_embedding(&z, &noise).unwrap();
        assert_eq!(out.to_vec(), vec![1.5, 0.75, 2.5]);
    }

    #[test]
    fn same_seed_same_draw() {
        let z = emb();
        let noise = NoiseParams { mu: vec![0.0; 3], sigma: vec![1.0; 3], seed: 11 };
        assert_eq!(perturb_embedding(&z, &noise).unwrap(), perturb_embedding(&z, &noise).unwrap());
        let other = perturb_embedding(&z, &noise.clone().with_seed(12)).unwrap();
        assert_ne!(perturb_embedding(&z, &noise).unwrap(), other);
    }

    #[test]
    fn validation() {
        let z = emb();
        assert!(matches!(perturb_embedding(&z, &NoiseParams::none(2)), Err(Error::Dimension(_))));
        let neg = NoiseParams { mu: vec![0.0; 3], sigma: vec![0.1, -0.1, 0.0], seed: 0 };
        assert!(perturb_embedding(&z, &neg).is_err());
        let nan = NoiseParams { mu: vec![f32::NAN, 0.0, 0.0], sigma: vec![0.0; 3], seed: 0 };
        assert!(perturb_embedding(&z, &nan).is_err());
    }
}
