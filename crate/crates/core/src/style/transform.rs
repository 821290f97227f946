use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Style intensity in `[0, 1]`: 1.0 leaves the content statistics in
/// place, 0.0 hands the second-order statistics fully to the style.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub const ONE: Alpha = Alpha(1.0);
    pub const ZERO: Alpha = Alpha(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Invalid(format!("alpha {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// True when no style enters the output.
    pub fn is_unstyled(self) -> bool {
        self.0 == 1.0
    }

    /// The six-point grid 0.0, 0.2, …, 1.0.
    pub fn grid() -> Vec<Alpha> {
        (0..=5).map(|i| Alpha(i as f64 / 5.0)).collect()
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Alpha::new(v)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

impl std::fmt::Display for Alpha {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

/// Square matrix mixing content and style second-order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix<F> {
    m: Array2<F>,
}

impl<F: Scalar> TransformMatrix<F> {
    pub fn matrix(&self) -> &Array2<F> {
        &self.m
    }

    pub fn into_matrix(self) -> Array2<F> {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

fn outer<F: Scalar>(v: ArrayView1<'_, F>) -> Array2<F> {
    v.insert_axis(Axis(1)).dot(&v.insert_axis(Axis(0)))
}

/// `T = (φ φᵀ)(α φ φᵀ + (1 − α) ẑ ẑᵀ)`.
///
/// The style vector enters through its outer product so that both terms of
/// the interpolation are n×n second-order statistics.
pub fn compose_transform<F: Scalar>(
    phi_c: ArrayView1<'_, F>,
    z_hat: ArrayView1<'_, F>,
    alpha: Alpha,
) -> Result<TransformMatrix<F>> {
    if phi_c.len() != z_hat.len() {
        return Err(Error::Dimension(format!(
            "content embedding has length {}, style embedding {}",
            phi_c.len(),
            z_hat.len()
        )));
    }
    if phi_c.iter().chain(z_hat.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transform inputs".into()));
    }
    let a = F::from_f64_lossy(alpha.get());
    let content = outer(phi_c);
    let style = outer(z_hat);
    let mixed = &content * a + &style * (F::one() - a);
    Ok(TransformMatrix { m: content.dot(&mixed) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1};

    #[test]
    fn alpha_bounds() {
        assert!(Alpha::new(-0.01).is_err());
        assert!(Alpha::new(1.01).is_err());
        assert!(Alpha::new(f64::NAN).is_err());
        assert!(Alpha::new(1.0).unwrap().is_unstyled());
        let g: Vec<f64> = Alpha::grid().into_iter().map(f64::from).collect();
        assert_eq!(g, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let parsed: Alpha = serde_json::from_str("0.7").unwrap();
        assert_eq!(parsed.get(), 0.7);
        assert!(serde_json::from_str::<Alpha>("1.5").is_err());
    }

    #[test]
    fn alpha_one_ignores_style() {
        let phi = arr1(&[0.3f64, -1.2, 0.5]);
        let a = compose_transform(phi.view(), arr1(&[1.0, 2.0, 3.0]).view(), Alpha::ONE).unwrap();
        let b = compose_transform(phi.view(), arr1(&[-7.0, 0.1, 9.0]).view(), Alpha::ONE).unwrap();
        assert_eq!(a, b);
        let pp = outer(phi.view());
        assert_eq!(a.matrix(), &pp.dot(&pp));
    }

    #[test]
    fn alpha_zero_is_content_times_style() {
        let phi = arr1(&[0.3f64, -1.2, 0.5]);
        let z = arr1(&[1.0, 2.0, 3.0]);
        let t = compose_transform(phi.view(), z.view(), Alpha::ZERO).unwrap();
        let want = outer(phi.view()).dot(&outer(z.view()));
        assert_eq!(t.matrix(), &want);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let r = compose_transform(Array1::<f64>::zeros(3).view(), Array1::zeros(4).view(), Alpha::ONE);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
