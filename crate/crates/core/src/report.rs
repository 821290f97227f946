//! Self-contained HTML report over one or more run directories.
//!
//! Sections appear only when their data exists: strategy comparison
//! (`eval.json`), sweep curves (`sweeps.json`), WSAM variance
//! (`variance.json`), activation-map montages and the t-SNE view
//! (`figures/`). Images are inlined as base64 PNG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use base64::Engine as _;

use crate::augment::Strategy;
use crate::error::{io_err, Error, Result};
use crate::experiment::{read_json, EvalResult, RunManifest, SweepRecord, EVAL_FILE, SWEEPS_FILE};
use crate::figures::{OVERLAYS_PNG, STRIP_PNG, TSNE_PNG};
use crate::interpret::VarianceReport;
use crate::render::{line_chart, Series};

pub const VARIANCE_FILE: &str = "variance.json";
pub const REPORT_FILE: &str = "report.html";

pub const SECTION_ACCURACY: &str = "Strategy comparison";
pub const SECTION_SWEEPS: &str = "Sweep curves";
pub const SECTION_VARIANCE: &str = "WSAM variance";
pub const SECTION_MAPS: &str = "Activation maps";
pub const SECTION_TSNE: &str = "t-SNE view";

#[derive(Debug, Clone)]
pub struct Report {
    pub html: String,
    pub sections: Vec<&'static str>,
}

/// Mean clean and mean styled accuracy of one strategy over its seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySummary {
    pub seeds: usize,
    pub clean: f64,
    pub clean_std: f64,
    /// Mean over seeds of the mean per-style accuracy; None without styled results.
    pub styled: Option<f64>,
}

pub fn summarize(results: &[EvalResult]) -> BTreeMap<Strategy, StrategySummary> {
    let mut groups: BTreeMap<Strategy, Vec<&EvalResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.strategy).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(s, rs)| {
            let n = rs.len() as f64;
            let clean = rs.iter().map(|r| r.clean.value()).sum::<f64>() / n;
            let var = rs.iter().map(|r| (r.clean.value() - clean).powi(2)).sum::<f64>() / n;
            let styled: Vec<f64> = rs
                .iter()
                .filter(|r| !r.styled.is_empty())
                .map(|r| r.styled.iter().map(|x| x.accuracy.value()).sum::<f64>() / r.styled.len() as f64)
                .collect();
            let styled = (!styled.is_empty()).then(|| styled.iter().sum::<f64>() / styled.len() as f64);
            (s, StrategySummary { seeds: rs.len(), clean, clean_std: var.sqrt(), styled })
        })
        .collect()
}

fn png_tag(bytes: &[u8], alt: &str) -> String {
    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
    format!("<img alt=\"{alt}\" src=\"data:image/png;base64,{b64}\">\n")
}

fn chart_tag(img: &image::RgbImage, alt: &str) -> Result<String> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: PathBuf::from(alt), source })?;
    Ok(png_tag(&bytes, alt))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn signed(v: f64) -> String {
    format!("{:+.2}", 100.0 * v)
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.is_file() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Eval results of every run; each run must carry a manifest.
fn collect_eval(runs: &[PathBuf]) -> Result<Vec<EvalResult>> {
    let mut out = Vec::new();
    for r in runs {
        RunManifest::load(r)?;
        if let Some(mut e) = read_optional::<Vec<EvalResult>>(&r.join(EVAL_FILE))? {
            out.append(&mut e);
        }
    }
    Ok(out)
}

fn accuracy_section(html: &mut String, eval: &[EvalResult], baseline: Option<&[EvalResult]>) {
    let ours = summarize(eval);
    let theirs = baseline.map(summarize);
    let _ = writeln!(html, "<h2>{SECTION_ACCURACY}</h2>");
    let _ = write!(html, "<table><tr><th>strategy</th><th>seeds</th><th>clean %</th><th>std</th><th>styled %</th>");
    if theirs.is_some() {
        let _ = write!(html, "<th>&Delta; clean</th><th>&Delta; styled</th>");
    }
    let _ = writeln!(html, "</tr>");
    for (s, sum) in &ours {
        let styled = sum.styled.map_or("-".into(), pct);
        let _ = write!(
            html,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{styled}</td>",
            s.label(),
            sum.seeds,
            pct(sum.clean),
            pct(sum.clean_std)
        );
        if let Some(t) = &theirs {
            let (dc, ds) = match t.get(s) {
                Some(b) => (
                    signed(sum.clean - b.clean),
                    sum.styled.zip(b.styled).map_or("-".into(), |(a, b)| signed(a - b)),
                ),
                None => ("-".into(), "-".into()),
            };
            let _ = write!(html, "<td>{dc}</td><td>{ds}</td>");
        }
        let _ = writeln!(html, "</tr>");
    }
    let _ = writeln!(html, "</table>");
    let _ = writeln!(html, "<table><tr><th>strategy</th><th>seed</th><th>clean</th><th>runtime s</th></tr>");
    for r in eval {
        let _ = writeln!(
            html,
            "<tr><td>{}</td><td>{}</td><td>{}/{}</td><td>{:.1}</td></tr>",
            r.strategy.label(),
            r.seed,
            r.clean.correct,
            r.clean.total,
            r.runtime_s
        );
    }
    let _ = writeln!(html, "</table>");
}

/// Position-wise mean of equally long sequences.
fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len).map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64).collect()
}

fn sweeps_section(html: &mut String, sweeps: &[SweepRecord]) -> Result<()> {
    let mut robust: BTreeMap<Strategy, Vec<Vec<f64>>> = BTreeMap::new();
    let mut alpha: BTreeMap<Strategy, Vec<Vec<f64>>> = BTreeMap::new();
    let mut alpha_grid = Vec::new();
    for s in sweeps {
        if !s.robustness.is_empty() {
            robust.entry(s.strategy).or_default().push(s.robustness.iter().map(|x| x.accuracy.value()).collect());
        }
        if !s.alpha_curve.is_empty() {
            alpha_grid = s.alpha_curve.iter().map(|p| p.alpha.to_string()).collect();
            alpha.entry(s.strategy).or_default().push(s.alpha_curve.iter().map(|p| p.accuracy.value()).collect());
        }
    }
    let _ = writeln!(html, "<h2>{SECTION_SWEEPS}</h2>");
    let series = |m: &BTreeMap<Strategy, Vec<Vec<f64>>>| -> Vec<Series> {
        m.iter().map(|(s, c)| Series { label: s.label().into(), values: mean_curve(c) }).collect()
    };
    if !robust.is_empty() {
        let a = sweeps.iter().find(|s| !s.robustness.is_empty()).map_or(0.0, |s| s.alpha);
        let _ = writeln!(html, "<p>Accuracy per style at alpha {a}, sorted high to low, mean over seeds.</p>");
        html.push_str(&chart_tag(&line_chart(&series(&robust), "style robustness"), "robustness")?);
    }
    if !alpha.is_empty() {
        let _ = writeln!(html, "<p>Accuracy pooled over styles at alpha = {}.</p>", alpha_grid.join(", "));
        html.push_str(&chart_tag(&line_chart(&series(&alpha), "alpha influence"), "alpha sweep")?);
    }
    Ok(())
}

fn variance_section(html: &mut String, v: &VarianceReport) {
    let _ = writeln!(html, "<h2>{SECTION_VARIANCE}</h2>");
    let _ = writeln!(
        html,
        "<p>{} samples per class, {} styles, {} alphas.</p>",
        v.samples_per_class,
        v.styles.len(),
        v.alphas.len()
    );
    let _ = writeln!(html, "<table><tr><th>class</th><th>raw</th><th>normalized</th></tr>");
    for c in &v.per_class {
        let _ = writeln!(html, "<tr><td>{}</td><td>{:.6}</td><td>{:.3}</td></tr>", escape(&c.class_name), c.raw, c.max_one);
    }
    let _ = writeln!(html, "</table>");
}

fn image_section(html: &mut String, title: &str, files: &[PathBuf]) -> Result<()> {
    let _ = writeln!(html, "<h2>{title}</h2>");
    for f in files {
        let bytes = fs::read(f).map_err(io_err(f))?;
        html.push_str(&png_tag(&bytes, &escape(&f.file_name().unwrap_or_default().to_string_lossy())));
    }
    Ok(())
}

/// Builds the report for `runs`. With `compare`, the strategy table gains
/// per-strategy deltas against those runs.
pub fn emit_report(runs: &[PathBuf], compare: &[PathBuf]) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::Invalid("report needs at least one run directory".into()));
    }
    let eval = collect_eval(runs)?;
    let baseline = if compare.is_empty() { None } else { Some(collect_eval(compare)?) };
    let mut sweeps = Vec::new();
    let mut variance = Vec::new();
    let mut maps = Vec::new();
    let mut tsne = Vec::new();
    for r in runs {
        if let Some(mut s) = read_optional::<Vec<SweepRecord>>(&r.join(SWEEPS_FILE))? {
            sweeps.append(&mut s);
        }
        if let Some(v) = read_optional::<VarianceReport>(&r.join(VARIANCE_FILE))? {
            variance.push((r.clone(), v));
        }
        for f in [OVERLAYS_PNG, STRIP_PNG] {
            if r.join(f).is_file() {
                maps.push(r.join(f));
            }
        }
        if r.join(TSNE_PNG).is_file() {
            tsne.push(r.join(TSNE_PNG));
        }
    }

    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>stylemap report</title>\n\
         <style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin:1em 0}\
         td,th{border:1px solid #999;padding:2px 8px;text-align:right}img{margin:4px;image-rendering:pixelated}</style>\n\
         </head><body>\n<h1>stylemap report</h1>\n",
    );
    let _ = writeln!(
        html,
        "<p>Runs: {}</p>",
        runs.iter().map(|r| escape(&r.display().to_string())).collect::<Vec<_>>().join(", ")
    );
    let mut sections = Vec::new();
    if !eval.is_empty() {
        accuracy_section(&mut html, &eval, baseline.as_deref());
        sections.push(SECTION_ACCURACY);
    }
    if sweeps.iter().any(|s| !s.robustness.is_empty() || !s.alpha_curve.is_empty()) {
        sweeps_section(&mut html, &sweeps)?;
        sections.push(SECTION_SWEEPS);
    }
    for (r, v) in &variance {
        if variance.len() > 1 {
            let _ = writeln!(html, "<p>{}</p>", escape(&r.display().to_string()));
        }
        variance_section(&mut html, v);
    }
    if !variance.is_empty() {
        sections.push(SECTION_VARIANCE);
    }
    if !maps.is_empty() {
        image_section(&mut html, SECTION_MAPS, &maps)?;
        sections.push(SECTION_MAPS);
    }
    if !tsne.is_empty() {
        image_section(&mut html, SECTION_TSNE, &tsne)?;
        sections.push(SECTION_TSNE);
    }
    html.push_str("</body></html>\n");
    Ok(Report { html, sections })
}
