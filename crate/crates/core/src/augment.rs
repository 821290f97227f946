//! Training-time augmentation: none, traditional (flip / crop / rotation /
//! cutout), style augmentation, or traditional followed by style.
//!
//! Every transform is label-preserving and a pure function of
//! `(image, config, seed)`.

use ndarray::{s, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{StyleBank, StyleSelector};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::seed;
use crate::style::{Alpha, NoiseParams, StyleEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    None,
    Trad,
    Sa,
    TradSa,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::None, Strategy::Trad, Strategy::Sa, Strategy::TradSa];

    pub fn uses_trad(self) -> bool {
        matches!(self, Strategy::Trad | Strategy::TradSa)
    }

    pub fn uses_style(self) -> bool {
        matches!(self, Strategy::Sa | Strategy::TradSa)
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::None => "NONE",
            Strategy::Trad => "TRAD",
            Strategy::Sa => "SA",
            Strategy::TradSa => "TRAD_SA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CutoutFill {
    Zero,
    /// Dataset channel mean when known, otherwise the image's own mean.
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TradOp {
    Hflip { p: f64 },
    /// Reflect-pad by `pad` pixels, then crop back at a random offset.
    Crop { pad: usize, p: f64 },
    /// Rotation by a uniform angle in `[-max_deg, max_deg]`.
    Rotation { max_deg: f64, p: f64 },
    Cutout { size: usize, p: f64, #[serde(default)] fill: CutoutFill },
}

impl TradOp {
    fn probability(&self) -> f64 {
        match *self {
            TradOp::Hflip { p } | TradOp::Crop { p, .. } | TradOp::Rotation { p, .. } | TradOp::Cutout { p, .. } => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlphaMode {
    Fixed { alpha: Alpha },
    Uniform { lo: Alpha, hi: Alpha },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NoisePolicy {
    /// No perturbation of the style embedding.
    Off,
    /// `sigma = scale × bank spread`, zero mean.
    BankSpread { scale: f32 },
    Explicit { mu: Vec<f32>, sigma: Vec<f32> },
}

impl NoisePolicy {
    pub fn params(&self, bank: &StyleBank, seed: u64) -> NoiseParams {
        match self {
            NoisePolicy::Off => NoiseParams::none(bank.n()),
            NoisePolicy::BankSpread { scale } => NoiseParams::scaled_spread(bank.embedding_std(), *scale, seed),
            NoisePolicy::Explicit { mu, sigma } => NoiseParams { mu: mu.clone(), sigma: sigma.clone(), seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaPolicy {
    pub alpha: AlphaMode,
    pub style_prob: f64,
    pub noise: NoisePolicy,
}

impl Default for SaPolicy {
    fn default() -> Self {
        Self {
            alpha: AlphaMode::Fixed { alpha: Alpha::new(0.7).unwrap() },
            style_prob: 0.5,
            noise: NoisePolicy::BankSpread { scale: crate::bank::DEFAULT_NOISE_SCALE },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub trad_ops: Vec<TradOp>,
    pub sa_policy: SaPolicy,
}

impl StrategyConfig {
    /// Default operation magnitudes for images of side `resolution`.
    pub fn with_defaults(strategy: Strategy, resolution: usize) -> Self {
        Self {
            strategy,
            trad_ops: vec![
                TradOp::Hflip { p: 0.5 },
                TradOp::Crop { pad: 4, p: 1.0 },
                TradOp::Rotation { max_deg: 15.0, p: 1.0 },
                TradOp::Cutout { size: resolution / 4, p: 0.5, fill: CutoutFill::Mean },
            ],
            sa_policy: SaPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{what} probability {p} outside [0, 1]")))
            }
        };
        for op in &self.trad_ops {
            prob(op.probability(), "operation")?;
            if let TradOp::Rotation { max_deg, .. } = op {
                if !max_deg.is_finite() || *max_deg < 0.0 {
                    return Err(Error::Invalid(format!("rotation bound {max_deg} must be finite and >= 0")));
                }
            }
        }
        prob(self.sa_policy.style_prob, "style")?;
        if let AlphaMode::Uniform { lo, hi } = self.sa_policy.alpha {
            if lo > hi {
                return Err(Error::Invalid(format!("alpha range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

/// Read-only resources an augmentation may draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct AugmentContext<'a> {
    pub styler: Option<(&'a StyleEngine, &'a StyleBank)>,
    pub dataset_mean: Option<[f32; 3]>,
}

/// Applies the configured strategy. The label is returned untouched.
pub fn augment(
    image: &ImageTensor,
    label: usize,
    cfg: &StrategyConfig,
    ctx: &AugmentContext<'_>,
    seed: u64,
) -> Result<(ImageTensor, usize)> {
    let mut out = image.clone();
    if cfg.strategy.uses_trad() {
        out = apply_trad(&out, &cfg.trad_ops, ctx.dataset_mean, seed::derive(seed, 1))?;
    }
    if cfg.strategy.uses_style() {
        let (engine, bank) = ctx
            .styler
            .ok_or_else(|| Error::Missing("style augmentation requested without a loaded style bank".into()))?;
        out = apply_sa(&out, &cfg.sa_policy, engine, bank, seed::derive(seed, 2))?;
    }
    Ok((out, label))
}

fn apply_trad(image: &ImageTensor, ops: &[TradOp], dataset_mean: Option<[f32; 3]>, seed: u64) -> Result<ImageTensor> {
    let mut rng = seed::rng(seed);
    let mut out = image.clone();
    for op in ops {
        let fire = rng.random_bool(op.probability());
        out = match *op {
            TradOp::Hflip { .. } => {
                if fire {
                    out.hflip()
                } else {
                    out
                }
            }
            TradOp::Crop { pad, .. } => {
                let dy = rng.random_range(0..=2 * pad);
                let dx = rng.random_range(0..=2 * pad);
                if fire {
                    reflect_crop(&out, pad, dy, dx)?
                } else {
                    out
                }
            }
            TradOp::Rotation { max_deg, .. } => {
                let deg = if max_deg > 0.0 { rng.random_range(-max_deg..=max_deg) } else { 0.0 };
                if fire {
                    rotate(&out, deg)?
                } else {
                    out
                }
            }
            TradOp::Cutout { size, fill, .. } => {
                let (h, w) = (out.height(), out.width());
                if size >= h.min(w) {
                    return Err(Error::Invalid(format!("cutout size {size} must be smaller than the image side")));
                }
                let y0 = rng.random_range(0..=h - size);
                let x0 = rng.random_range(0..=w - size);
                if fire {
                    let value = match fill {
                        CutoutFill::Zero => [0.0; 3],
                        CutoutFill::Mean => dataset_mean.unwrap_or_else(|| out.channel_means()),
                    };
                    cutout(&out, y0, x0, size, value)?
                } else {
                    out
                }
            }
        };
    }
    Ok(out)
}

fn apply_sa(
    image: &ImageTensor,
    policy: &SaPolicy,
    engine: &StyleEngine,
    bank: &StyleBank,
    seed: u64,
) -> Result<ImageTensor> {
    let mut rng = seed::rng(seed);
    if !rng.random_bool(policy.style_prob) {
        return Ok(image.clone());
    }
    let alpha = match policy.alpha {
        AlphaMode::Fixed { alpha } => alpha,
        AlphaMode::Uniform { lo, hi } => Alpha::new(rng.random_range(lo.get()..=hi.get()))?,
    };
    if alpha.is_unstyled() {
        return Ok(image.clone());
    }
    let style = bank.sample(&StyleSelector::Random(rng.random()))?;
    let noise = policy.noise.params(bank, rng.random());
    engine.apply_style(image, style, alpha, &noise)
}

/// Zero- or mean-fills the `size`×`size` square with top-left `(y0, x0)`.
pub fn cutout(image: &ImageTensor, y0: usize, x0: usize, size: usize, value: [f32; 3]) -> Result<ImageTensor> {
    let mut data = image.data().clone();
    for c in 0..CHANNELS {
        data.slice_mut(s![c, y0..y0 + size, x0..x0 + size]).fill(value[c]);
    }
    ImageTensor::new(data)
}

fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Crop of the reflect-padded image at offset `(dy, dx)` in `[0, 2·pad]`.
pub fn reflect_crop(image: &ImageTensor, pad: usize, dy: usize, dx: usize) -> Result<ImageTensor> {
    let (h, w) = (image.height(), image.width());
    let src = image.data();
    let data = Array3::from_shape_fn((CHANNELS, h, w), |(c, y, x)| {
        let sy = reflect(y as isize + dy as isize - pad as isize, h);
        let sx = reflect(x as isize + dx as isize - pad as isize, w);
        src[[c, sy, sx]]
    });
    ImageTensor::new(data)
}

/// Bilinear rotation about the image center, with edge clamping.
pub fn rotate(image: &ImageTensor, degrees: f64) -> Result<ImageTensor> {
    let (h, w) = (image.height(), image.width());
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = image.data();
    let data = Array3::from_shape_fn((CHANNELS, h, w), |(c, y, x)| {
        let (ry, rx) = (y as f64 - cy, x as f64 - cx);
        let sy = (cos * ry - sin * rx + cy).clamp(0.0, h as f64 - 1.0);
        let sx = (sin * ry + cos * rx + cx).clamp(0.0, w as f64 - 1.0);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = ((sy - y0 as f64) as f32, (sx - x0 as f64) as f32);
        let top = src[[c, y0, x0]] * (1.0 - fx) + src[[c, y0, x1]] * fx;
        let bottom = src[[c, y1, x0]] * (1.0 - fx) + src[[c, y1, x1]] * fx;
        top * (1.0 - fy) + bottom * fy
    });
    ImageTensor::from_clamped(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> ImageTensor {
        ImageTensor::new(Array3::from_shape_fn((3, 32, 32), |(c, y, x)| ((c * 5 + y * 3 + x * 7) % 23) as f32 / 22.0 + 0.0))
            .unwrap()
    }

    fn only(op: TradOp) -> StrategyConfig {
        StrategyConfig { strategy: Strategy::Trad, trad_ops: vec![op], sa_policy: SaPolicy::default() }
    }

    #[test]
    fn none_is_identity() {
        let cfg = StrategyConfig::with_defaults(Strategy::None, 32);
        let (out, label) = augment(&img(), 7, &cfg, &AugmentContext::default(), 3).unwrap();
        assert_eq!(out, img());
        assert_eq!(label, 7);
    }

    #[test]
    fn certain_flip_reverses_columns() {
        let (out, _) = augment(&img(), 0, &only(TradOp::Hflip { p: 1.0 }), &AugmentContext::default(), 9).unwrap();
        assert_eq!(out, img().hflip());
    }

    #[test]
    fn zero_probability_ops_do_nothing() {
        let cfg = StrategyConfig {
            strategy: Strategy::Trad,
            trad_ops: vec![
                TradOp::Hflip { p: 0.0 },
                TradOp::Crop { pad: 4, p: 0.0 },
                TradOp::Rotation { max_deg: 30.0, p: 0.0 },
                TradOp::Cutout { size: 8, p: 0.0, fill: CutoutFill::Zero },
            ],
            sa_policy: SaPolicy::default(),
        };
        let (out, _) = augment(&img(), 0, &cfg, &AugmentContext::default(), 1).unwrap();
        assert_eq!(out, img());
    }

    #[test]
    fn crop_at_center_offset_is_identity() {
        assert_eq!(reflect_crop(&img(), 4, 4, 4).unwrap(), img());
        let shifted = reflect_crop(&img(), 4, 4, 5).unwrap();
        assert_eq!(shifted.get(3, 0, 0), img().get(3, 1, 0));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let r = rotate(&img(), 0.0).unwrap();
        for (a, b) in r.data().iter().zip(img().data().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cutout_fills_one_square() {
        let cfg = only(TradOp::Cutout { size: 8, p: 1.0, fill: CutoutFill::Zero });
        let base = ImageTensor::filled(32, 32, [0.5, 0.6, 0.7]).unwrap();
        let (out, _) = augment(&base, 0, &cfg, &AugmentContext::default(), 5).unwrap();
        let zeros: Vec<(usize, usize)> =
            (0..32).flat_map(|y| (0..32).map(move |x| (y, x))).filter(|&(y, x)| out.get(y, x, 0) == 0.0).collect();
        assert_eq!(zeros.len(), 64);
        let (ys, xs): (Vec<_>, Vec<_>) = zeros.iter().copied().unzip();
        assert_eq!(ys.iter().max().unwrap() - ys.iter().min().unwrap(), 7);
        assert_eq!(xs.iter().max().unwrap() - xs.iter().min().unwrap(), 7);
    }

    #[test]
    fn mean_fill_uses_dataset_mean() {
        let cfg = only(TradOp::Cutout { size: 4, p: 1.0, fill: CutoutFill::Mean });
        let ctx = AugmentContext { styler: None, dataset_mean: Some([0.25, 0.5, 0.75]) };
        let base = ImageTensor::filled(32, 32, [1.0, 1.0, 1.0]).unwrap();
        let (out, _) = augment(&base, 0, &cfg, &ctx, 5).unwrap();
        let count = out.data().iter().filter(|&&v| v == 0.5).count();
        assert_eq!(count, 16);
    }

    #[test]
    fn oversized_cutout_rejected() {
        let cfg = only(TradOp::Cutout { size: 32, p: 1.0, fill: CutoutFill::Zero });
        assert!(augment(&img(), 0, &cfg, &AugmentContext::default(), 0).is_err());
    }

    #[test]
    fn style_without_bank_fails() {
        let cfg = StrategyConfig::with_defaults(Strategy::Sa, 32);
        assert!(matches!(augment(&img(), 0, &cfg, &AugmentContext::default(), 0), Err(Error::Missing(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = StrategyConfig::with_defaults(Strategy::Trad, 32);
        let ctx = AugmentContext::default();
        let a = augment(&img(), 0, &cfg, &ctx, 77).unwrap();
        let b = augment(&img(), 0, &cfg, &ctx, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation_and_json() {
        let mut cfg = StrategyConfig::with_defaults(Strategy::TradSa, 64);
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"TRAD_SA\""));
        let back: StrategyConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        cfg.sa_policy.style_prob = 1.5;
        assert!(cfg.validate().is_err());
        cfg.sa_policy.style_prob = 0.5;
        cfg.sa_policy.alpha = AlphaMode::Uniform { lo: Alpha::new(0.8).unwrap(), hi: Alpha::new(0.3).unwrap() };
        assert!(cfg.validate().is_err());
    }
}
