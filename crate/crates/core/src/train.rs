//! Small-CNN classifier: training under an augmentation strategy, clean
//! evaluation, and style-robustness / alpha sweeps.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::Array3;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentContext, StrategyConfig};
use crate::bank::StyleBank;
use crate::data::Dataset;
use crate::error::{io_err, json_err, Error, Result};
use crate::image::ImageTensor;
use crate::nn::optim::{Adam, Schedule};
use crate::nn::store::{self, TensorEntry};
use crate::nn::{softmax, LayerSpec, Network};
use crate::par::{self, Exec};
use crate::seed;
use crate::style::{Alpha, NoiseParams, StyleEmbedding, StyleEngine};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MANIFEST: &str = "manifest.json";

/// Subtracted from every pixel before the first convolution.
pub const INPUT_OFFSET: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Output channels of each conv block; the depth is `widths.len()`.
    pub widths: Vec<usize>,
    /// Number of leading blocks followed by a 2×2 max-pool.
    pub pools: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { widths: vec![16, 32, 32, 64], pools: 2 }
    }
}

impl ModelConfig {
    pub fn validate(&self, resolution: usize) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Invalid("model widths must be non-empty and positive".into()));
        }
        if self.pools > self.widths.len() || !resolution.is_multiple_of(1 << self.pools) {
            return Err(Error::Invalid(format!("{} pools do not fit {} blocks at side {resolution}", self.pools, self.widths.len())));
        }
        Ok(())
    }

    /// Name of the last convolutional activation, the default explanation tap.
    pub fn tap(&self) -> String {
        format!("relu{}", self.widths.len())
    }

    pub fn layers(&self, classes: usize) -> Vec<(String, LayerSpec)> {
        let mut out = Vec::new();
        let mut input = 3;
        for (i, &w) in self.widths.iter().enumerate() {
            let k = i + 1;
            out.push((format!("conv{k}"), LayerSpec::conv3x3(input, w, 1)));
            out.push((format!("relu{k}"), LayerSpec::Relu));
            if i < self.pools {
                out.push((format!("pool{k}"), LayerSpec::MaxPool2));
            }
            input = w;
        }
        out.push(("gap".into(), LayerSpec::GlobalAvgPool));
        out.push(("fc".into(), LayerSpec::Linear { input, output: classes }));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    #[serde(default)]
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { lr: 1e-3, schedule: Schedule::Cosine, epochs: 40, batch_size: 64 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("epochs and batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// A trained classifier together with what is needed to feed and explain it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    net: Network<f32>,
    tap: String,
    class_names: Vec<String>,
    resolution: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    format_version: u32,
    resolution: usize,
    tap: String,
    class_names: Vec<String>,
    input_offset: f32,
    layers: Vec<(String, LayerSpec)>,
    tensors: Vec<TensorEntry>,
    fingerprint: String,
}

impl Classifier {
    pub fn new(model: &ModelConfig, class_names: Vec<String>, resolution: usize, seed: u64) -> Result<Self> {
        model.validate(resolution)?;
        if class_names.len() < 2 {
            return Err(Error::Invalid("a classifier needs at least two classes".into()));
        }
        let net = Network::init(&model.layers(class_names.len()), seed);
        Ok(Self { net, tap: model.tap(), class_names, resolution })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    /// Direct weight access, e.g. for hand-constructed models.
    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn tap(&self) -> &str {
        &self.tap
    }

    pub fn set_tap(&mut self, name: &str) -> Result<()> {
        self.net.layer_index(name)?;
        self.tap = name.to_string();
        Ok(())
    }

    pub fn tap_index(&self) -> Result<usize> {
        self.net.layer_index(&self.tap)
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Network input for `image`: pixels shifted by [`INPUT_OFFSET`].
    pub fn input(&self, image: &ImageTensor) -> Array3<f32> {
        image.data().mapv(|v| v - INPUT_OFFSET)
    }

    pub fn logits(&self, image: &ImageTensor) -> Vec<f32> {
        self.net.forward(self.input(image).view()).iter().copied().collect()
    }

    pub fn probabilities(&self, image: &ImageTensor) -> Vec<f32> {
        softmax(&self.logits(image))
    }

    pub fn predict(&self, image: &ImageTensor) -> usize {
        argmax(&self.logits(image))
    }

    /// Pooled features feeding the linear head.
    pub fn features(&self, image: &ImageTensor) -> Result<Vec<f32>> {
        let gap = self.net.layer_index("gap")?;
        Ok(self.net.forward_range(self.input(image).view(), 0, gap + 1).iter().copied().collect())
    }

    pub fn fingerprint(&self) -> String {
        store::fingerprint(&store::network_tensors("", &self.net))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tensors = store::network_tensors("", &self.net);
        let fingerprint = store::fingerprint(&tensors);
        let entries = store::write_tensors(dir, &tensors)?;
        let manifest = ModelManifest {
            format_version: MODEL_FORMAT_VERSION,
            resolution: self.resolution,
            tap: self.tap.clone(),
            class_names: self.class_names.clone(),
            input_offset: INPUT_OFFSET,
            layers: self.net.specs(),
            tensors: entries,
            fingerprint,
        };
        let path = dir.join(MODEL_MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(json_err(&path))?;
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: ModelManifest = serde_json::from_str(&text).map_err(json_err(&path))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion { path, found: m.format_version, expected: MODEL_FORMAT_VERSION });
        }
        if m.input_offset != INPUT_OFFSET {
            return Err(Error::Invalid(format!("model input offset {} is not supported", m.input_offset)));
        }
        let tensors = store::read_tensors(dir, &m.tensors)?;
        if store::fingerprint(&tensors) != m.fingerprint {
            return Err(Error::Invalid(format!("weights in {} do not match their manifest fingerprint", dir.display())));
        }
        let net = store::network_from_tensors("", &m.layers, &tensors)?;
        net.layer_index(&m.tap)?;
        Ok(Self { net, tap: m.tap, class_names: m.class_names, resolution: m.resolution })
    }
}

pub(crate) fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy loss and its gradient w.r.t. the logits.
fn cross_entropy(logits: &[f32], label: usize) -> (f64, Vec<f32>) {
    let p = softmax(logits);
    let loss = -(p[label].max(f32::MIN_POSITIVE) as f64).ln();
    let mut g = p;
    g[label] -= 1.0;
    (loss, g)
}

/// An exact top-1 accuracy `correct / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

impl std::ops::Add for Accuracy {
    type Output = Accuracy;
    fn add(self, o: Accuracy) -> Accuracy {
        Accuracy { correct: self.correct + o.correct, total: self.total + o.total }
    }
}

/// Rounds to four decimals for reporting.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl Serialize for Accuracy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Accuracy", 3)?;
        st.serialize_field("accuracy", &round4(self.value()))?;
        st.serialize_field("correct", &self.correct)?;
        st.serialize_field("total", &self.total)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Accuracy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            correct: u64,
            total: u64,
        }
        let r = Raw::deserialize(d)?;
        if r.correct > r.total {
            return Err(serde::de::Error::custom("correct exceeds total"));
        }
        Ok(Accuracy { correct: r.correct, total: r.total })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub seed: u64,
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: Accuracy,
    pub lr: f64,
    pub seconds: f64,
}

/// Trains a fresh classifier on `train`. Results are bit-identical for a
/// given seed regardless of `exec`: per-sample gradients are reduced in
/// index order.
pub fn train_classifier(
    train: &Dataset,
    model: &ModelConfig,
    strategy: &StrategyConfig,
    optimizer: &OptimizerConfig,
    styler: Option<(&StyleEngine, &StyleBank)>,
    seed: u64,
    exec: Exec,
) -> Result<(Classifier, Vec<EpochLog>)> {
    optimizer.validate()?;
    strategy.validate()?;
    if train.is_empty() {
        return Err(Error::Missing("training set is empty".into()));
    }
    if strategy.strategy.uses_style() && styler.is_none() {
        return Err(Error::Missing(format!("strategy {} needs a style bank", strategy.strategy.label())));
    }
    let resolution = train.images[0].height();
    let mut clf = Classifier::new(model, train.class_names.clone(), resolution, seed::derive(seed, 0))?;
    let ctx = AugmentContext { styler, dataset_mean: Some(train.channel_means()) };
    let mut opt = Adam::new(&clf.net);
    let batch = optimizer.batch_size;
    let total_steps = train.len().div_ceil(batch) * optimizer.epochs;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::with_capacity(optimizer.epochs);
    let mut step = 0;
    for epoch in 0..optimizer.epochs {
        let started = Instant::now();
        let epoch_seed = seed::derive(seed::derive(seed, 1), epoch as u64);
        order.shuffle(&mut seed::rng(epoch_seed));
        let mut loss_sum = 0.0;
        let mut acc = Accuracy::default();
        let mut lr = 0.0;
        for chunk in order.chunks(batch) {
            let net = &clf.net;
            let per_sample = par::try_map_indices(exec, chunk.len(), |j| -> Result<_> {
                let i = chunk[j];
                let (img, label) =
                    augment(&train.images[i], train.labels[i], strategy, &ctx, seed::derive(epoch_seed, i as u64))?;
                let x = img.data().mapv(|v| v - INPUT_OFFSET);
                let trace = net.forward_trace(x.view());
                let logits: Vec<f32> = trace.output().iter().copied().collect();
                let (loss, g) = cross_entropy(&logits, label);
                let mut grads = net.zero_grads();
                net.param_grads(&trace, Array3::from_shape_vec((g.len(), 1, 1), g).unwrap(), &mut grads);
                Ok((loss, argmax(&logits) == label, grads))
            })?;
            let mut grads = clf.net.zero_grads();
            for (loss, hit, g) in &per_sample {
                loss_sum += loss;
                acc = acc + Accuracy { correct: *hit as u64, total: 1 };
                grads.add_assign(g);
            }
            grads.scale(1.0 / chunk.len() as f32);
            lr = optimizer.schedule.lr(optimizer.lr, step, total_steps);
            opt.step(&mut clf.net, &grads, lr);
            step += 1;
        }
        let loss = loss_sum / train.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        log::debug!("seed {seed} epoch {epoch}: loss {loss:.4}, train acc {:.4}", acc.value());
        logs.push(EpochLog { seed, epoch, loss, train_accuracy: acc, lr, seconds: started.elapsed().as_secs_f64() });
    }
    Ok((clf, logs))
}

/// Top-1 accuracy over the untouched `test` set.
pub fn evaluate_clean(model: &Classifier, test: &Dataset, exec: Exec) -> Accuracy {
    let hits = par::map_indices(exec, test.len(), |i| model.predict(&test.images[i]) == test.labels[i]);
    Accuracy { correct: hits.iter().filter(|&&h| h).count() as u64, total: test.len() as u64 }
}

/// Stylizes `image` for evaluation. `α = 1` means "no stylization" and
/// returns the input unchanged; otherwise no embedding noise is applied.
pub fn stylize_for_eval(image: &ImageTensor, engine: &StyleEngine, style: &StyleEmbedding, alpha: Alpha) -> Result<ImageTensor> {
    if alpha.is_unstyled() {
        return Ok(image.clone());
    }
    engine.apply_style(image, style, alpha, &NoiseParams::none(engine.n()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleScore {
    pub style_id: String,
    pub alpha: Alpha,
    pub accuracy: Accuracy,
}

/// Per-style accuracies of several models on `subset` stylized at `alpha`,
/// in bank order. Each stylized image is produced once and shared.
pub fn styled_accuracies(
    models: &[&Classifier],
    subset: &Dataset,
    engine: &StyleEngine,
    bank: &StyleBank,
    alpha: Alpha,
    exec: Exec,
) -> Result<Vec<Vec<StyleScore>>> {
    if bank.is_empty() {
        return Err(Error::Invalid("robustness sweep needs a non-empty bank".into()));
    }
    let m = subset.len();
    let cells = par::try_map_indices(exec, bank.len() * m, |k| -> Result<Vec<bool>> {
        let (s, i) = (k / m, k % m);
        let img = stylize_for_eval(&subset.images[i], engine, &bank.entries()[s], alpha)?;
        Ok(models.iter().map(|clf| clf.predict(&img) == subset.labels[i]).collect())
    })?;
    Ok((0..models.len())
        .map(|mi| {
            bank.entries()
                .iter()
                .enumerate()
                .map(|(s, style)| StyleScore {
                    style_id: style.style_id.clone(),
                    alpha,
                    accuracy: Accuracy {
                        correct: cells[s * m..(s + 1) * m].iter().filter(|hits| hits[mi]).count() as u64,
                        total: m as u64,
                    },
                })
                .collect()
        })
        .collect())
}

/// Sorts scores by non-increasing accuracy; ties keep their input order.
pub fn sort_scores(mut scores: Vec<StyleScore>) -> Vec<StyleScore> {
    scores.sort_by(|a, b| b.accuracy.value().total_cmp(&a.accuracy.value()));
    scores
}

/// Accuracy per style at `alpha`, sorted from highest to lowest.
pub fn robustness_sweep(
    model: &Classifier,
    subset: &Dataset,
    engine: &StyleEngine,
    bank: &StyleBank,
    alpha: Alpha,
    exec: Exec,
) -> Result<Vec<StyleScore>> {
    let mut per_model = styled_accuracies(&[model], subset, engine, bank, alpha, exec)?;
    Ok(sort_scores(per_model.remove(0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: Alpha,
    pub accuracy: Accuracy,
}

/// Accuracy pooled over every style of `bank` at each alpha.
pub fn alpha_sweep(
    model: &Classifier,
    subset: &Dataset,
    engine: &StyleEngine,
    bank: &StyleBank,
    alphas: &[Alpha],
    exec: Exec,
) -> Result<Vec<AlphaPoint>> {
    alphas
        .iter()
        .map(|&alpha| {
            let scores = styled_accuracies(&[model], subset, engine, bank, alpha, exec)?;
            let accuracy = scores[0].iter().fold(Accuracy::default(), |acc, s| acc + s.accuracy);
            Ok(AlphaPoint { alpha, accuracy })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Strategy;
    use crate::synth;

    fn tiny_dataset(per_class: usize) -> Dataset {
        let classes = 3;
        let mut ds = Dataset { images: vec![], labels: vec![], ids: vec![], class_names: vec![] };
        for c in 0..classes {
            ds.class_names.push(synth::SHAPE_CLASSES[c].to_string());
            for i in 0..per_class {
                ds.images.push(synth::shape_image(c, 32, (c * 100 + i) as u64));
                ds.labels.push(c);
                ds.ids.push(format!("{c}/{i}"));
            }
        }
        ds
    }

    fn small_model() -> ModelConfig {
        ModelConfig { widths: vec![4, 8], pools: 2 }
    }

    fn opt(epochs: usize) -> OptimizerConfig {
        OptimizerConfig { lr: 3e-3, schedule: Schedule::Constant, epochs, batch_size: 4 }
    }

    #[test]
    fn layer_names_and_tap() {
        let m = ModelConfig::default();
        let names: Vec<String> = m.layers(10).into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["conv1", "relu1", "pool1", "conv2", "relu2", "pool2", "conv3", "relu3", "conv4", "relu4", "gap", "fc"]
        );
        assert_eq!(m.tap(), "relu4");
        assert!(ModelConfig { widths: vec![4], pools: 2 }.validate(32).is_err());
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let (loss, g) = cross_entropy(&[1.0, 2.0, 0.5], 1);
        assert!(loss > 0.0);
        assert!(g.iter().sum::<f32>().abs() < 1e-6);
        assert!(g[1] < 0.0);
    }

    #[test]
    fn smoke_one_epoch() {
        let ds = tiny_dataset(4);
        let cfg = StrategyConfig::with_defaults(Strategy::None, 32);
        let (_, log) = train_classifier(&ds.select(&[0, 1, 4, 5, 8, 9, 2, 3, 6, 7]), &small_model(), &cfg, &opt(1), None, 1, Exec::Sequential)
            .unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].train_accuracy.total, 10);
    }

    #[test]
    fn training_is_deterministic_across_exec_modes() {
        let ds = tiny_dataset(3);
        let cfg = StrategyConfig::with_defaults(Strategy::Trad, 32);
        let a = train_classifier(&ds, &small_model(), &cfg, &opt(2), None, 7, Exec::Sequential).unwrap();
        let b = train_classifier(&ds, &small_model(), &cfg, &opt(2), None, 7, Exec::Parallel).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.iter().map(|l| l.loss).collect::<Vec<_>>(), b.1.iter().map(|l| l.loss).collect::<Vec<_>>());
    }

    #[test]
    fn memorizes_two_samples() {
        let ds = tiny_dataset(1).select(&[0, 1]);
        let ds = Dataset { class_names: ds.class_names[..2].to_vec(), ..ds };
        let cfg = StrategyConfig::with_defaults(Strategy::None, 32);
        let o = OptimizerConfig { lr: 1e-2, schedule: Schedule::Constant, epochs: 60, batch_size: 2 };
        let (clf, _) = train_classifier(&ds, &small_model(), &cfg, &o, None, 3, Exec::Sequential).unwrap();
        assert_eq!(evaluate_clean(&clf, &ds, Exec::Sequential), Accuracy { correct: 2, total: 2 });
    }

    #[test]
    fn sa_without_bank_is_rejected() {
        let ds = tiny_dataset(1);
        let cfg = StrategyConfig::with_defaults(Strategy::Sa, 32);
        assert!(matches!(
            train_classifier(&ds, &small_model(), &cfg, &opt(1), None, 0, Exec::Sequential),
            Err(Error::Missing(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let clf = Classifier::new(&small_model(), vec!["a".into(), "b".into()], 32, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        clf.save(dir.path()).unwrap();
        let back = Classifier::load(dir.path()).unwrap();
        assert_eq!(back, clf);
        let w = dir.path().join("conv1.weight.f32");
        let mut bytes = fs::read(&w).unwrap();
        bytes[0] ^= 1;
        fs::write(&w, bytes).unwrap();
        assert!(Classifier::load(dir.path()).is_err());
    }

    #[test]
    fn accuracy_json_has_four_decimals() {
        let a = Accuracy { correct: 2, total: 3 };
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.contains("\"accuracy\":0.6667"), "{text}");
        assert_eq!(serde_json::from_str::<Accuracy>(&text).unwrap(), a);
    }

    #[test]
    fn sort_is_stable_and_non_increasing() {
        let mk = |id: &str, c| StyleScore { style_id: id.into(), alpha: Alpha::ONE, accuracy: Accuracy { correct: c, total: 4 } };
        let sorted = sort_scores(vec![mk("a", 1), mk("b", 3), mk("c", 1), mk("d", 4)]);
        let ids: Vec<&str> = sorted.iter().map(|s| s.style_id.as_str()).collect();
        assert_eq!(ids, ["d", "b", "a", "c"]);
    }
}
