use std::fs;
use std::path::Path;

use ndarray::{Array1, Array3, Axis};
use serde::{Deserialize, Serialize};

use super::{
    channel_covariance, compose_transform, perturb_embedding, upper_triangle, Alpha, FeatureTensor, NoiseParams,
    StyleEmbedding,
};
use crate::error::{io_err, json_err, Error, Result};
use crate::image::{ImageTensor, MIN_SIDE};
use crate::nn::store::{self, NamedTensor, TensorEntry};
use crate::nn::{LayerSpec, Network};

pub const ENGINE_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Side length the engine is trained at; style images are resized to it.
    pub resolution: usize,
    /// Compressed channel dimension and embedding length.
    pub n: usize,
    /// Encoder output channels F₁.
    pub feature_channels: usize,
    /// Widths of the two inner encoder stages (mirrored by the decoder).
    pub widths: [usize; 2],
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { resolution: 64, n: 32, feature_channels: 64, widths: [16, 32] }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.feature_channels <= 3 || self.widths.contains(&0) {
            return Err(Error::Invalid(format!("degenerate engine config {self:?}")));
        }
        if self.resolution < MIN_SIDE || !self.resolution.is_multiple_of(4) {
            return Err(Error::Invalid(format!(
                "engine resolution {} must be a multiple of 4 and at least {MIN_SIDE}",
                self.resolution
            )));
        }
        Ok(())
    }

    fn embed_input(&self) -> usize {
        self.feature_channels * (self.feature_channels + 1) / 2
    }

    fn autoencoder_specs(&self) -> Vec<(String, LayerSpec)> {
        let [w0, w1] = self.widths;
        let f = self.feature_channels;
        let named = |n: &str, s| (n.to_string(), s);
        vec![
            named("enc1", LayerSpec::conv3x3(3, w0, 1)),
            named("enc1_relu", LayerSpec::Relu),
            named("enc2", LayerSpec::conv3x3(w0, w1, 2)),
            named("enc2_relu", LayerSpec::Relu),
            named("enc3", LayerSpec::conv3x3(w1, w1, 1)),
            named("enc3_relu", LayerSpec::Relu),
            named("enc4", LayerSpec::conv3x3(w1, f, 2)),
            named("enc4_relu", LayerSpec::Relu),
            named("compress", LayerSpec::conv1x1(f, self.n)),
            named("uncompress", LayerSpec::conv1x1(self.n, f)),
            named("dec1", LayerSpec::conv3x3(f, w1, 1)),
            named("dec1_relu", LayerSpec::Relu),
            named("dec1_up", LayerSpec::Upsample2),
            named("dec2", LayerSpec::conv3x3(w1, w1, 1)),
            named("dec2_relu", LayerSpec::Relu),
            named("dec2_up", LayerSpec::Upsample2),
            named("dec3", LayerSpec::conv3x3(w1, w0, 1)),
            named("dec3_relu", LayerSpec::Relu),
            named("dec4", LayerSpec::conv3x3(w0, 3, 1)),
        ]
    }

    fn embed_specs(&self) -> Vec<(String, LayerSpec)> {
        vec![("fc".to_string(), LayerSpec::Linear { input: self.embed_input(), output: self.n })]
    }
}

pub(crate) fn embedding_of(embed: &Network<f32>, features: &FeatureTensor) -> Result<Array1<f32>> {
    let cov = channel_covariance(features)?;
    let flat = Array1::from(upper_triangle(&cov));
    let n = flat.len();
    let out = embed.forward(flat.into_shape_with_order((n, 1, 1)).unwrap().view());
    let z: Array1<f32> = out.iter().copied().collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding".into()));
    }
    Ok(z)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EngineManifest {
    format_version: u32,
    config: EngineConfig,
    autoencoder: Vec<(String, LayerSpec)>,
    embed: Vec<(String, LayerSpec)>,
    tensors: Vec<TensorEntry>,
    fingerprint: String,
}

/// Result of encoding a mean-centered image.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub features: FeatureTensor,
    /// Per-channel pixel mean of the input before centering.
    pub mean: [f32; 3],
}

/// Encoder, channel compress/uncompress maps, decoder and the covariance
/// embedding layer. Immutable once built; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleEngine {
    config: EngineConfig,
    autoencoder: Network<f32>,
    embed: Network<f32>,
    compress_at: usize,
    fingerprint: String,
}

impl StyleEngine {
    /// Randomly initialized engine.
    pub fn new(config: EngineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let autoencoder = Network::init(&config.autoencoder_specs(), crate::seed::derive(seed, 1));
        let embed = Network::init(&config.embed_specs(), crate::seed::derive(seed, 2));
        Self::from_parts(config, autoencoder, embed)
    }

    pub(crate) fn from_parts(config: EngineConfig, autoencoder: Network<f32>, embed: Network<f32>) -> Result<Self> {
        let compress_at = autoencoder.layer_index("compress")?;
        autoencoder.layer_index("uncompress")?;
        let mut engine = Self { config, autoencoder, embed, compress_at, fingerprint: String::new() };
        engine.fingerprint = store::fingerprint(&engine.tensors());
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    /// SHA-256 of all weight tensors.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub(crate) fn autoencoder(&self) -> &Network<f32> {
        &self.autoencoder
    }

    pub(crate) fn embed_network(&self) -> &Network<f32> {
        &self.embed
    }

    /// Zeros the final decoder convolution so the decoded image vanishes
    /// and only the interpolated channel means remain in the output.
    pub fn zero_output_path(&mut self) {
        let last = self.autoencoder.layers_mut().last_mut().expect("decoder layer");
        if let Some(p) = last.params.as_mut() {
            p.weight.fill(0.0);
            p.bias.fill(0.0);
        }
        self.fingerprint = store::fingerprint(&self.tensors());
    }

    fn check_image(&self, image: &ImageTensor) -> Result<()> {
        let (h, w) = (image.height(), image.width());
        if h < MIN_SIDE || w < MIN_SIDE || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Dimension(format!(
                "image is {h}x{w}; the encoder needs sides >= {MIN_SIDE} and divisible by 4"
            )));
        }
        Ok(())
    }

    /// Encodes the mean-centered image.
    pub fn encode_content(&self, image: &ImageTensor) -> Result<Encoded> {
        self.check_image(image)?;
        let mean = image.channel_means();
        let mut centered = image.data().clone();
        for (c, mut plane) in centered.axis_iter_mut(Axis(0)).enumerate() {
            plane.mapv_inplace(|v| v - mean[c]);
        }
        let features = self.autoencoder.forward_range(centered.view(), 0, self.compress_at);
        Ok(Encoded { features: FeatureTensor::new(features)?, mean })
    }

    /// Style images take the same encoding path as content images.
    pub fn encode_style(&self, image: &ImageTensor) -> Result<Encoded> {
        self.encode_content(image)
    }

    /// Fully-connected map over the upper triangle of the channel covariance.
    pub fn compute_embedding(&self, features: &FeatureTensor) -> Result<Array1<f32>> {
        if features.channels() != self.config.feature_channels {
            return Err(Error::Dimension(format!(
                "features have {} channels, engine expects {}",
                features.channels(),
                self.config.feature_channels
            )));
        }
        embedding_of(&self.embed, features)
    }

    /// Builds the bank entry for a style image.
    pub fn embed_style(&self, image: &ImageTensor, style_id: &str) -> Result<StyleEmbedding> {
        let enc = self.encode_style(image)?;
        Ok(StyleEmbedding { z: self.compute_embedding(&enc.features)?, mu_z: enc.mean, style_id: style_id.to_string() })
    }

    /// Stylizes `content`.
    ///
    /// The compressed content features are mixed by the transform at every
    /// spatial location and rescaled to their original Frobenius norm before
    /// decoding; the decoded image is shifted by `α·μ_c + (1−α)·μ_z` and
    /// clamped to `[0, 1]`.
    pub fn apply_style(
        &self,
        content: &ImageTensor,
        style: &StyleEmbedding,
        alpha: Alpha,
        noise: &NoiseParams,
    ) -> Result<ImageTensor> {
        if style.z.len() != self.config.n {
            return Err(Error::Dimension(format!(
                "style embedding has length {}, engine n = {}",
                style.z.len(),
                self.config.n
            )));
        }
        let enc = self.encode_content(content)?;
        let phi = self.compute_embedding(&enc.features)?;
        let z_hat = perturb_embedding(style, noise)?;
        let t = compose_transform(phi.view(), z_hat.view(), alpha)?;

        let (_, h1, w1) = enc.features.data().dim();
        let n = self.config.n;
        let c = self.compress_at;
        let compressed = self.autoencoder.forward_range(enc.features.data().view(), c, c + 1);
        let x = compressed.into_shape_with_order((n, h1 * w1)).unwrap();
        let mut y = t.matrix().dot(&x);
        let norm = |a: &ndarray::Array2<f32>| a.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        let (nx, ny) = (norm(&x), norm(&y));
        let scale = if ny > 0.0 && ny.is_finite() { (nx / ny) as f32 } else { 0.0 };
        y.mapv_inplace(|v| v * scale);
        let y = y.into_shape_with_order((n, h1, w1)).unwrap();
        let decoded = self.autoencoder.forward_range(y.view(), c + 1, self.autoencoder.layers().len());

        let a = alpha.get() as f32;
        let mut out: Array3<f32> = decoded;
        for (ch, mut plane) in out.axis_iter_mut(Axis(0)).enumerate() {
            let shift = a * enc.mean[ch] + (1.0 - a) * style.mu_z[ch];
            plane.mapv_inplace(|v| v + shift);
        }
        ImageTensor::from_clamped(out)
    }

    fn tensors(&self) -> Vec<NamedTensor> {
        let mut t = store::network_tensors("ae.", &self.autoencoder);
        t.extend(store::network_tensors("embed.", &self.embed));
        t
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tensors = store::write_tensors(dir, &self.tensors())?;
        let manifest = EngineManifest {
            format_version: ENGINE_FORMAT_VERSION,
            config: self.config,
            autoencoder: self.autoencoder.specs(),
            embed: self.embed.specs(),
            tensors,
            fingerprint: self.fingerprint.clone(),
        };
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(json_err(&path))?;
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: EngineManifest = serde_json::from_str(&text).map_err(json_err(&path))?;
        if m.format_version != ENGINE_FORMAT_VERSION {
            return Err(Error::FormatVersion { path, found: m.format_version, expected: ENGINE_FORMAT_VERSION });
        }
        m.config.validate()?;
        let tensors = store::read_tensors(dir, &m.tensors)?;
        let autoencoder = store::network_from_tensors("ae.", &m.autoencoder, &tensors)?;
        let embed = store::network_from_tensors("embed.", &m.embed, &tensors)?;
        let engine = Self::from_parts(m.config, autoencoder, embed)?;
        if engine.fingerprint != m.fingerprint {
            return Err(Error::Invalid(format!("engine weights in {} do not match their manifest fingerprint", dir.display())));
        }
        Ok(engine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> StyleEngine {
        let cfg = EngineConfig { resolution: 32, n: 8, feature_channels: 12, widths: [4, 8] };
        StyleEngine::new(cfg, 5).unwrap()
    }

    fn pattern(h: usize, w: usize, k: usize) -> ImageTensor {
        ImageTensor::new(Array3::from_shape_fn((3, h, w), |(c, y, x)| {
            ((c * 13 + y * (3 + k) + x * (5 + 2 * k)) % 29) as f32 / 28.0
        }))
        .unwrap()
    }

    #[test]
    fn encoder_downsamples_by_four() {
        let e = small();
        let enc = e.encode_content(&pattern(32, 48, 0)).unwrap();
        assert_eq!(enc.features.data().dim(), (12, 8, 12));
    }

    #[test]
    fn zero_image_has_zero_mean_and_is_deterministic() {
        let e = small();
        let img = ImageTensor::filled(32, 32, [0.0; 3]).unwrap();
        let a = e.encode_content(&img).unwrap();
        assert_eq!(a.mean, [0.0; 3]);
        assert_eq!(a, e.encode_content(&img).unwrap());
    }

    #[test]
    fn rejects_sides_not_divisible_by_four() {
        let e = small();
        assert!(matches!(e.encode_content(&pattern(34, 32, 0)), Err(Error::Dimension(_))));
    }

    #[test]
    fn constant_features_embed_to_bias() {
        let e = small();
        let f = FeatureTensor::new(Array3::from_elem((12, 4, 4), 0.3)).unwrap();
        let z = e.compute_embedding(&f).unwrap();
        let bias = &e.embed.layers()[0].params.as_ref().unwrap().bias;
        assert_eq!(&z, bias);
    }

    #[test]
    fn embedding_rejects_wrong_channel_count() {
        let e = small();
        let f = FeatureTensor::new(Array3::zeros((5, 4, 4))).unwrap();
        assert!(matches!(e.compute_embedding(&f), Err(Error::Dimension(_))));
    }

    #[test]
    fn output_keeps_shape() {
        let e = small();
        let style = e.embed_style(&pattern(32, 32, 3), "s").unwrap();
        for &(h, w) in &[(32, 32), (64, 32), (96, 64)] {
            let out = e.apply_style(&pattern(h, w, 1), &style, Alpha::new(0.3).unwrap(), &NoiseParams::none(8)).unwrap();
            assert_eq!((out.height(), out.width()), (h, w));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let e = small();
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path()).unwrap();
        let back = StyleEngine::load(dir.path()).unwrap();
        assert_eq!(back, e);
        let first = fs::read(dir.path().join(MANIFEST)).unwrap();
        back.save(dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join(MANIFEST)).unwrap());
    }

    #[test]
    fn tampered_weights_fail_fingerprint() {
        let e = small();
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path()).unwrap();
        let f = dir.path().join("ae.enc1.bias.f32");
        let mut bytes = fs::read(&f).unwrap();
        bytes[0] ^= 1;
        fs::write(&f, bytes).unwrap();
        assert!(StyleEngine::load(dir.path()).is_err());
    }
}
