//! Figures written into a run directory, each with the data behind it.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::experiment::{read_json, write_json};
use crate::image::ImageTensor;
use crate::interpret::{sam, wsam, WsamOptions};
use crate::render::{montage, render_overlay, scatter, strip};
use crate::style::{Alpha, StyleEmbedding, StyleEngine};
use crate::train::{stylize_for_eval, Classifier};
use crate::tsne::{effective_perplexity, tsne, TsneOptions};

pub const FIGURES_DIR: &str = "figures";
pub const TSNE_PNG: &str = "figures/tsne.png";
pub const TSNE_JSON: &str = "figures/tsne.json";
pub const OVERLAYS_PNG: &str = "figures/overlays.png";
pub const OVERLAYS_JSON: &str = "figures/overlays.json";
pub const STRIP_PNG: &str = "figures/alpha_strip.png";
pub const STRIP_JSON: &str = "figures/alpha_strip.json";

fn save_png(img: &image::RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    img.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsnePoint {
    pub x: f64,
    pub y: f64,
    pub label: usize,
    pub styled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneFigure {
    pub seed: u64,
    pub perplexity: f64,
    pub points: Vec<TsnePoint>,
}

/// Pooled penultimate features of every image, one row each.
pub fn feature_matrix(clf: &Classifier, images: &[ImageTensor]) -> Result<Array2<f64>> {
    let rows = images.iter().map(|img| clf.features(img)).collect::<Result<Vec<_>>>()?;
    let d = rows.first().map_or(0, Vec::len);
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j] as f64))
}

/// Projects the classifier features of `images` to 2-D. Deterministic per
/// seed; the perplexity is reduced (with a warning) for small inputs.
pub fn render_tsne(
    clf: &Classifier,
    images: &[ImageTensor],
    labels: &[usize],
    styled: &[bool],
    seed: u64,
    rundir: &Path,
) -> Result<TsneFigure> {
    if images.len() != labels.len() || images.len() != styled.len() {
        return Err(Error::Dimension("t-SNE inputs, labels and flags differ in length".into()));
    }
    let opts = TsneOptions { seed, ..Default::default() };
    let coords = tsne(&feature_matrix(clf, images)?, &opts)?;
    let fig = TsneFigure {
        seed,
        perplexity: effective_perplexity(opts.perplexity, images.len()),
        points: (0..images.len())
            .map(|i| TsnePoint { x: coords[[i, 0]], y: coords[[i, 1]], label: labels[i], styled: styled[i] })
            .collect(),
    };
    save_png(&scatter(&coords, labels, styled, "t-SNE (x = styled)"), &rundir.join(TSNE_PNG))?;
    write_json(&rundir.join(TSNE_JSON), &fig)?;
    Ok(fig)
}

pub fn load_tsne(rundir: &Path) -> Result<TsneFigure> {
    read_json(&rundir.join(TSNE_JSON))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayCell {
    pub sample: usize,
    pub kind: String,
    pub score: f32,
    pub map: Vec<Vec<f32>>,
}

/// One row per sample: SAM of the clean input, SAM of the input stylized
/// with the first style at `alpha`, and the WSAM over `styles` and `alphas`.
pub fn render_overlays(
    clf: &Classifier,
    engine: &StyleEngine,
    samples: &[(ImageTensor, usize)],
    styles: &[&StyleEmbedding],
    alpha: Alpha,
    opts: &WsamOptions,
    rundir: &Path,
) -> Result<Vec<OverlayCell>> {
    let first = *styles.first().ok_or_else(|| Error::Invalid("overlays need at least one style".into()))?;
    let mut tiles = Vec::new();
    let mut cells = Vec::new();
    let rows = |m: &Array2<f32>| m.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    for (i, (img, class)) in samples.iter().enumerate() {
        let name = clf.class_names()[*class].clone();
        let clean = sam(clf, Some(engine), img, *class, Alpha::ONE, None, opts.score_mode)?;
        tiles.push(render_overlay(img, &clean, &format!("{name} {:.2}", clean.score), 4));
        cells.push(OverlayCell { sample: i, kind: "sam_clean".into(), score: clean.score, map: rows(&clean.data) });

        let styled_img = stylize_for_eval(img, engine, first, alpha)?;
        let styled = sam(clf, Some(engine), img, *class, alpha, Some(first), opts.score_mode)?;
        tiles.push(render_overlay(&styled_img, &styled, &format!("a{alpha} {:.2}", styled.score), 4));
        cells.push(OverlayCell { sample: i, kind: format!("sam_alpha_{alpha}"), score: styled.score, map: rows(&styled.data) });

        let rec = wsam(clf, engine, img, &format!("sample-{i}"), *class, styles, opts)?;
        let as_map = crate::interpret::ActivationMap {
            data: rec.map.clone(),
            class_id: *class,
            alpha: Alpha::ONE,
            style_id: "wsam".into(),
            score: rec.clean_score,
        };
        tiles.push(render_overlay(img, &as_map, "wsam", 4));
        cells.push(OverlayCell { sample: i, kind: "wsam".into(), score: rec.clean_score, map: rows(&rec.map) });
    }
    save_png(&montage(&tiles, 3, 4), &rundir.join(OVERLAYS_PNG))?;
    write_json(&rundir.join(OVERLAYS_JSON), &cells)?;
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripFigure {
    pub style_id: String,
    pub alphas: Vec<Alpha>,
    /// Class probability of each strip image, or empty without a model.
    pub scores: Vec<f32>,
}

/// Style image, then `image` stylized at every alpha, then the raw input.
pub fn render_alpha_strip(
    clf: Option<&Classifier>,
    engine: &StyleEngine,
    image: &ImageTensor,
    class: usize,
    style: &StyleEmbedding,
    style_image: Option<&ImageTensor>,
    alphas: &[Alpha],
    rundir: &Path,
) -> Result<StripFigure> {
    let mut images = Vec::new();
    let mut captions = Vec::new();
    if let Some(s) = style_image {
        images.push(s.resized(image.height(), image.width())?);
        captions.push("STYLE".to_string());
    }
    let mut scores = Vec::new();
    for &a in alphas {
        let img = stylize_for_eval(image, engine, style, a)?;
        if let Some(c) = clf {
            scores.push(c.probabilities(&img)[class]);
        }
        images.push(img);
        captions.push(format!("{a}"));
    }
    images.push(image.clone());
    captions.push("RAW".to_string());
    save_png(&strip(&images, &captions, 3), &rundir.join(STRIP_PNG))?;
    let fig = StripFigure { style_id: style.style_id.clone(), alphas: alphas.to_vec(), scores };
    write_json(&rundir.join(STRIP_JSON), &fig)?;
    Ok(fig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::ModelConfig;

    fn model() -> Classifier {
        Classifier::new(&ModelConfig { widths: vec![4, 4], pools: 1 }, vec!["a".into(), "b".into()], 32, 1).unwrap()
    }

    fn img(seed: usize) -> ImageTensor {
        ImageTensor::new(ndarray::Array3::from_shape_fn((3, 32, 32), |(c, y, x)| ((c + y * 3 + x * seed) % 7) as f32 / 6.0))
            .unwrap()
    }

    #[test]
    fn identical_inputs_give_identical_features() {
        let clf = model();
        let f = feature_matrix(&clf, &[img(2), img(2), img(3)]).unwrap();
        assert_eq!(f.row(0), f.row(1));
    }

    #[test]
    fn tsne_json_is_deterministic() {
        let clf = model();
        let images: Vec<_> = (1..9).map(img).collect();
        let labels: Vec<_> = (0..8).map(|i| i % 2).collect();
        let styled: Vec<_> = (0..8).map(|i| i >= 4).collect();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        render_tsne(&clf, &images, &labels, &styled, 5, a.path()).unwrap();
        render_tsne(&clf, &images, &labels, &styled, 5, b.path()).unwrap();
        let read = |d: &Path| fs::read(d.join(TSNE_JSON)).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        assert!(a.path().join(TSNE_PNG).is_file());
        let fig = load_tsne(a.path()).unwrap();
        assert_eq!(fig.points.len(), 8);
        assert!(fig.perplexity < 30.0);
    }
}
