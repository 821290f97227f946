//! Style activation maps.
//!
//! Importance weights are the spatial mean of the class-score gradient at a
//! tapped layer. A SAM is the ReLU of the importance-weighted sum of that
//! layer's feature maps, a WSAM is the score-weighted mean of SAMs over a
//! (style, alpha) grid, and the WSAM variance measures how far the WSAM
//! strays from the unstyled, score-weighted SAM.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, json_err, Error, Result};
use crate::image::{resize_bilinear, ImageTensor};
use crate::nn::store::{read_f32, write_f32};
use crate::nn::{softmax, Network, Scalar};
use crate::par::{self, Exec};
use crate::seed;
use crate::style::{Alpha, NoiseParams, StyleEmbedding, StyleEngine};
use crate::train::{stylize_for_eval, Classifier};

/// Which class score weights a SAM inside a WSAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights<F> {
    pub delta: Array1<F>,
    pub class_id: usize,
}

/// Importance weights plus the quantities computed along the way.
#[derive(Debug, Clone)]
pub struct Attribution<F> {
    pub weights: ImportanceWeights<F>,
    /// Tapped feature maps `A^k`, shape `(K, u, v)`.
    pub activations: Array3<F>,
    pub logits: Vec<F>,
}

/// Gradient of logit `class_id` w.r.t. the output of layer `tap`,
/// global-average-pooled per channel.
pub fn importance_weights<F: Scalar>(
    net: &Network<F>,
    tap: usize,
    input: ArrayView3<'_, F>,
    class_id: usize,
) -> Result<Attribution<F>> {
    if tap + 1 >= net.layers().len() {
        return Err(Error::MissingLayer(format!("tap index {tap}")));
    }
    let trace = net.forward_trace(input);
    let logits: Vec<F> = trace.output().iter().copied().collect();
    if class_id >= logits.len() {
        return Err(Error::ClassOutOfRange { class: class_id, classes: logits.len() });
    }
    let mut seed_grad = Array3::zeros(trace.output().dim());
    seed_grad[[class_id, 0, 0]] = F::one();
    let grad = net.backward(&trace, seed_grad, tap + 1, None);
    let (k, u, v) = grad.dim();
    let z = F::from_usize(u * v).unwrap();
    let delta = grad.into_shape_with_order((k, u * v)).unwrap().sum_axis(Axis(1)).mapv(|s| s / z);
    Ok(Attribution {
        weights: ImportanceWeights { delta, class_id },
        activations: trace.acts[tap + 1].clone(),
        logits,
    })
}

/// `ReLU(Σ_k δ_k A^k)`.
pub fn sam_map<F: Scalar>(delta: &Array1<F>, activations: &Array3<F>) -> Result<Array2<F>> {
    let (k, u, v) = activations.dim();
    if delta.len() != k {
        return Err(Error::Dimension(format!("{} weights for {k} feature maps", delta.len())));
    }
    let flat = activations.to_shape((k, u * v)).unwrap();
    let combined = delta.dot(&flat);
    Ok(combined.mapv(|s| if s > F::zero() { s } else { F::zero() }).into_shape_with_order((u, v)).unwrap())
}

/// Non-negative map at the tapped layer's resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMap {
    #[serde(skip)]
    pub data: Array2<f32>,
    pub class_id: usize,
    pub alpha: Alpha,
    pub style_id: String,
    /// Class probability (or logit, per the score mode) of the input.
    pub score: f32,
}

impl ActivationMap {
    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    /// Bilinear upsample for display; the stored map is not touched.
    pub fn upsampled(&self, height: usize, width: usize) -> Array2<f32> {
        resize_bilinear(self.data.view(), height, width)
    }

    /// Writes `<path>` as raw little-endian f32 and `<path>.json` alongside.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        write_f32(path, self.data.as_standard_layout().as_slice().unwrap())?;
        let (u, v) = self.dim();
        let side = sidecar_path(path);
        let meta = MapSidecar {
            u,
            v,
            class_id: self.class_id,
            alpha: self.alpha,
            style_id: self.style_id.clone(),
            score: self.score,
        };
        let text = serde_json::to_string_pretty(&meta).map_err(json_err(&side))?;
        fs::write(&side, text).map_err(io_err(&side))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(io_err(&side))?;
        let m: MapSidecar = serde_json::from_str(&text).map_err(json_err(&side))?;
        let data = read_f32(path)?;
        let data = Array2::from_shape_vec((m.u, m.v), data).map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(Self { data, class_id: m.class_id, alpha: m.alpha, style_id: m.style_id, score: m.score })
    }
}

#[derive(Serialize, Deserialize)]
struct MapSidecar {
    u: usize,
    v: usize,
    class_id: usize,
    alpha: Alpha,
    style_id: String,
    score: f32,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

fn score_of(logits: &[f32], class_id: usize, mode: ScoreMode) -> f32 {
    match mode {
        ScoreMode::Probability => softmax(logits)[class_id],
        ScoreMode::Logit => logits[class_id],
    }
}

/// SAM of `image` as given (already stylized, or clean).
pub fn sam_of_image(clf: &Classifier, image: &ImageTensor, class_id: usize, mode: ScoreMode) -> Result<(Array2<f32>, f32)> {
    let attr = importance_weights(clf.network(), clf.tap_index()?, clf.input(image).view(), class_id)?;
    let map = sam_map(&attr.weights.delta, &attr.activations)?;
    Ok((map, score_of(&attr.logits, class_id, mode)))
}

/// SAM of `image` stylized with `style` at `alpha`. At `α = 1` (or with no
/// style) the raw input is explained.
pub fn sam(
    clf: &Classifier,
    engine: Option<&StyleEngine>,
    image: &ImageTensor,
    class_id: usize,
    alpha: Alpha,
    style: Option<&StyleEmbedding>,
    mode: ScoreMode,
) -> Result<ActivationMap> {
    let (input, style_id) = match (alpha.is_unstyled(), style, engine) {
        (true, s, _) => (image.clone(), s.map_or("none".to_string(), |s| s.style_id.clone())),
        (false, Some(s), Some(e)) => (stylize_for_eval(image, e, s, alpha)?, s.style_id.clone()),
        (false, _, _) => return Err(Error::Invalid(format!("alpha {alpha} needs a style and an engine"))),
    };
    let (data, score) = sam_of_image(clf, &input, class_id, mode)?;
    Ok(ActivationMap { data, class_id, alpha, style_id, score })
}

/// Weighted style activation map of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsamRecord {
    #[serde(skip)]
    pub map: Array2<f32>,
    pub class_id: usize,
    pub sample_id: String,
    pub omega: usize,
    pub styles: Vec<String>,
    pub alphas: Vec<Alpha>,
    pub score_mode: ScoreMode,
    /// Class score of the clean sample and its SAM, the `α = 1` reference.
    pub clean_score: f32,
    #[serde(skip)]
    pub clean_sam: Array2<f32>,
}

/// Running mean `m_k = m_{k-1} + (x_k - m_{k-1}) / k`. A sequence of
/// identical terms leaves the mean bit-identical to the term.
#[derive(Debug, Clone)]
pub struct IncrementalMean {
    mean: Array2<f32>,
    count: usize,
}

impl IncrementalMean {
    pub fn new(dim: (usize, usize)) -> Self {
        Self { mean: Array2::zeros(dim), count: 0 }
    }

    pub fn push(&mut self, x: &Array2<f32>) {
        self.count += 1;
        let k = self.count as f32;
        ndarray::Zip::from(&mut self.mean).and(x).for_each(|m, &v| *m += (v - *m) / k);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn into_mean(self) -> Array2<f32> {
        self.mean
    }
}

/// `y · SAM` for one grid point.
fn weighted(map: &Array2<f32>, y: f32) -> Array2<f32> {
    map.mapv(|s| y * s)
}

/// Options shared by WSAM evaluations.
#[derive(Debug, Clone)]
pub struct WsamOptions {
    pub alphas: Vec<Alpha>,
    pub noise: Option<NoiseParams>,
    pub score_mode: ScoreMode,
    pub exec: Exec,
}

impl Default for WsamOptions {
    fn default() -> Self {
        Self { alphas: Alpha::grid(), noise: None, score_mode: ScoreMode::Probability, exec: Exec::available() }
    }
}

/// WSAM of `sample` over `styles × opts.alphas`. Grid points are evaluated
/// independently and reduced alpha-major, style-minor.
pub fn wsam(
    clf: &Classifier,
    engine: &StyleEngine,
    sample: &ImageTensor,
    sample_id: &str,
    class_id: usize,
    styles: &[&StyleEmbedding],
    opts: &WsamOptions,
) -> Result<WsamRecord> {
    if styles.is_empty() || opts.alphas.is_empty() {
        return Err(Error::Invalid("WSAM needs at least one style and one alpha".into()));
    }
    let (clean_sam, clean_score) = sam_of_image(clf, sample, class_id, opts.score_mode)?;
    let clean_term = weighted(&clean_sam, clean_score);
    let grid: Vec<(Alpha, &StyleEmbedding)> =
        opts.alphas.iter().flat_map(|&a| styles.iter().map(move |&s| (a, s))).collect();
    let terms = par::try_map_indices(opts.exec, grid.len(), |g| -> Result<Option<Array2<f32>>> {
        let (alpha, style) = grid[g];
        if alpha.is_unstyled() {
            return Ok(None);
        }
        let styled = match &opts.noise {
            Some(n) => engine.apply_style(sample, style, alpha, &n.clone().with_seed(seed::derive(n.seed, g as u64)))?,
            None => stylize_for_eval(sample, engine, style, alpha)?,
        };
        let (map, y) = sam_of_image(clf, &styled, class_id, opts.score_mode)?;
        Ok(Some(weighted(&map, y)))
    })?;
    let mut acc = IncrementalMean::new(clean_sam.dim());
    for t in &terms {
        acc.push(t.as_ref().unwrap_or(&clean_term));
    }
    Ok(WsamRecord {
        map: acc.into_mean(),
        class_id,
        sample_id: sample_id.to_string(),
        omega: grid.len(),
        styles: styles.iter().map(|s| s.style_id.clone()).collect(),
        alphas: opts.alphas.clone(),
        score_mode: opts.score_mode,
        clean_score,
        clean_sam,
    })
}

/// `(1 / (Z·m)) Σ_i Σ_pixels (WSAM_i - y_i · I_i)²` over the records of one
/// class, where `I_i` is the clean SAM and `y_i` the clean score.
pub fn variance_of_records(records: &[WsamRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Invalid("WSAM variance needs at least one sample".into()));
    }
    let z = records[0].map.len();
    let mut total = 0.0f64;
    for r in records {
        if r.map.len() != z {
            return Err(Error::Dimension("WSAM maps differ in size".into()));
        }
        for (&w, &i) in r.map.iter().zip(r.clean_sam.iter()) {
            let d = (w - r.clean_score * i) as f64;
            total += d * d;
        }
    }
    Ok(total / (z * records.len()) as f64)
}

/// WSAM variance of class `class_id` over `samples`.
pub fn wsam_variance(
    clf: &Classifier,
    engine: &StyleEngine,
    samples: &[ImageTensor],
    class_id: usize,
    styles: &[&StyleEmbedding],
    opts: &WsamOptions,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("WSAM variance needs at least one sample".into()));
    }
    let records = samples
        .iter()
        .enumerate()
        .map(|(i, s)| wsam(clf, engine, s, &i.to_string(), class_id, styles, opts))
        .collect::<Result<Vec<_>>>()?;
    variance_of_records(&records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVariance {
    pub class_id: usize,
    pub class_name: String,
    pub raw: f64,
    /// `raw / max_c raw`, or 0 when every class is 0.
    pub max_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// Sorted by increasing variance; ties keep class order.
    pub per_class: Vec<ClassVariance>,
    pub samples_per_class: usize,
    pub styles: Vec<String>,
    pub alphas: Vec<Alpha>,
    pub score_mode: ScoreMode,
}

impl VarianceReport {
    pub fn from_raw(
        raw: Vec<(usize, String, f64)>,
        samples_per_class: usize,
        styles: Vec<String>,
        alphas: Vec<Alpha>,
        score_mode: ScoreMode,
    ) -> Self {
        let max = raw.iter().map(|r| r.2).fold(0.0f64, f64::max);
        let mut per_class: Vec<ClassVariance> = raw
            .into_iter()
            .map(|(class_id, class_name, v)| ClassVariance {
                class_id,
                class_name,
                raw: v,
                max_one: if max > 0.0 { v / max } else { 0.0 },
            })
            .collect();
        per_class.sort_by(|a, b| a.raw.total_cmp(&b.raw));
        Self { per_class, samples_per_class, styles, alphas, score_mode }
    }
}

/// WSAM variance of every class, each over `samples_per_class` samples of
/// `samples` (grouped by `labels`).
pub fn variance_report(
    clf: &Classifier,
    engine: &StyleEngine,
    samples: &[ImageTensor],
    labels: &[usize],
    styles: &[&StyleEmbedding],
    opts: &WsamOptions,
) -> Result<VarianceReport> {
    let classes = clf.classes();
    let mut per_class = Vec::with_capacity(classes);
    let mut m = None;
    for c in 0..classes {
        let members: Vec<ImageTensor> =
            samples.iter().zip(labels).filter(|(_, &l)| l == c).map(|(s, _)| s.clone()).collect();
        if *m.get_or_insert(members.len()) != members.len() {
            return Err(Error::Invalid("every class needs the same number of samples".into()));
        }
        let v = wsam_variance(clf, engine, &members, c, styles, opts)?;
        per_class.push((c, clf.class_names()[c].clone(), v));
    }
    Ok(VarianceReport::from_raw(
        per_class,
        m.unwrap_or(0),
        styles.iter().map(|s| s.style_id.clone()).collect(),
        opts.alphas.clone(),
        opts.score_mode,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use ndarray::Array3;

    fn toy(seed: u64) -> Network<f64> {
        Network::init(
            &[
                ("conv1".into(), LayerSpec::conv3x3(3, 4, 1)),
                ("relu1".into(), LayerSpec::Relu),
                ("conv2".into(), LayerSpec::conv3x3(4, 5, 1)),
                ("relu2".into(), LayerSpec::Relu),
                ("gap".into(), LayerSpec::GlobalAvgPool),
                ("fc".into(), LayerSpec::Linear { input: 5, output: 3 }),
            ],
            seed,
        )
    }

    #[test]
    fn linear_head_on_single_map_gives_quarter() {
        // y = mean of a 2×2 single map, so every ∂y/∂A_ij = 1/4 and δ = 1/4
        let mut net: Network<f64> = Network::init(
            &[("id".into(), LayerSpec::Relu), ("gap".into(), LayerSpec::GlobalAvgPool), ("fc".into(), LayerSpec::Linear { input: 1, output: 1 })],
            0,
        );
        net.layers_mut()[2].params.as_mut().unwrap().weight.fill(1.0);
        let x = Array3::from_elem((1, 2, 2), 0.5);
        let a = importance_weights(&net, 0, x.view(), 0).unwrap();
        assert_eq!(a.weights.delta.to_vec(), vec![0.25]);
        assert_eq!(sam_map(&a.weights.delta, &a.activations).unwrap(), Array2::from_elem((2, 2), 0.125));
    }

    #[test]
    fn negated_score_zeroes_sam() {
        let mut net: Network<f64> = Network::init(
            &[("id".into(), LayerSpec::Relu), ("gap".into(), LayerSpec::GlobalAvgPool), ("fc".into(), LayerSpec::Linear { input: 1, output: 1 })],
            0,
        );
        net.layers_mut()[2].params.as_mut().unwrap().weight.fill(-1.0);
        let x = Array3::from_shape_fn((1, 3, 3), |(_, i, j)| (i + j) as f64 / 4.0);
        let a = importance_weights(&net, 0, x.view(), 0).unwrap();
        assert!(sam_map(&a.weights.delta, &a.activations).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_class_and_tap() {
        let net = toy(1);
        let x = Array3::from_elem((3, 6, 6), 0.1);
        assert!(matches!(importance_weights(&net, 3, x.view(), 3), Err(Error::ClassOutOfRange { .. })));
        assert!(matches!(importance_weights(&net, 5, x.view(), 0), Err(Error::MissingLayer(_))));
    }

    #[test]
    fn detached_channel_has_zero_weight() {
        let mut net = toy(2);
        let fc = net.layers_mut()[5].params.as_mut().unwrap();
        fc.weight.column_mut(2).fill(0.0);
        let x = Array3::from_shape_fn((3, 6, 6), |(c, i, j)| ((c + 2 * i + 3 * j) % 7) as f64 / 7.0);
        let a = importance_weights(&net, 3, x.view(), 1).unwrap();
        assert_eq!(a.weights.delta[2], 0.0);
    }

    #[test]
    fn incremental_mean_of_identical_terms_is_exact() {
        let x = Array2::from_shape_fn((3, 3), |(i, j)| 0.1 + (i * 3 + j) as f32 * 0.37);
        let mut m = IncrementalMean::new((3, 3));
        for _ in 0..30 {
            m.push(&x);
        }
        assert_eq!(m.into_mean(), x);
    }

    #[test]
    fn scalar_variance_example() {
        let rec = WsamRecord {
            map: Array2::from_elem((1, 1), 0.8),
            class_id: 0,
            sample_id: "0".into(),
            omega: 1,
            styles: vec![],
            alphas: vec![],
            score_mode: ScoreMode::Probability,
            clean_score: 0.5,
            clean_sam: Array2::from_elem((1, 1), 1.0),
        };
        assert!((variance_of_records(&[rec]).unwrap() - 0.09).abs() < 1e-7);
        assert!(variance_of_records(&[]).is_err());
    }

    #[test]
    fn max_one_normalization() {
        let r = VarianceReport::from_raw(
            vec![(0, "a".into(), 0.3), (1, "b".into(), 0.1), (2, "c".into(), 0.7)],
            2,
            vec![],
            vec![],
            ScoreMode::Probability,
        );
        let names: Vec<&str> = r.per_class.iter().map(|c| c.class_name.as_str()).collect();
        assert_eq!(names, ["b", "a", "c"]);
        assert_eq!(r.per_class[2].max_one, 1.0);
        let zero = VarianceReport::from_raw(vec![(0, "a".into(), 0.0)], 1, vec![], vec![], ScoreMode::Logit);
        assert_eq!(zero.per_class[0].max_one, 0.0);
    }

    #[test]
    fn map_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = ActivationMap {
            data: Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f32),
            class_id: 4,
            alpha: Alpha::new(0.4).unwrap(),
            style_id: "s1".into(),
            score: 0.25,
        };
        let path = dir.path().join("m.f32");
        map.save(&path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 24);
        assert_eq!(ActivationMap::load(&path).unwrap(), map);
    }
}
