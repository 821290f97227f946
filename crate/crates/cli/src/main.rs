//! `stylemap` command-line front end.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad arguments or
//! configs), 3 on runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stylemap::bank::{BuildOptions, StyleBank};
use stylemap::data::{load_split, parse_subset};
use stylemap::experiment::{run_experiment, write_json, ExperimentConfig, RunDir, RunManifest};
use stylemap::figures::{render_alpha_strip, render_overlays, render_tsne, FIGURES_DIR};
use stylemap::image::ImageTensor;
use stylemap::interpret::{sam, variance_report, wsam, ScoreMode, WsamOptions};
use stylemap::par::Exec;
use stylemap::render::render_overlay;
use stylemap::report::emit_report;
use stylemap::style::{train_engine, Alpha, EngineConfig, EngineTrainOptions, NoiseParams, StyleEmbedding, StyleEngine};
use stylemap::train::{robustness_sweep, stylize_for_eval, Classifier};
use stylemap::{synth, Error};

#[derive(Parser)]
#[command(name = "stylemap", version, about = "Style augmentation and style activation maps")]
struct Cli {
    /// Run data-parallel work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset or style corpus.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Train the style engine autoencoder.
    #[command(subcommand)]
    Engine(EngineCmd),
    /// Build a style bank from an image corpus.
    #[command(subcommand)]
    Bank(BankCmd),
    /// Stylize one image with a bank style.
    Stylize(StylizeArgs),
    /// Train and evaluate one strategy over the configured seeds.
    Train(TrainArgs),
    /// Style-robustness sweep of a trained model.
    Sweep(SweepArgs),
    /// SAM, WSAM and per-class WSAM variance.
    #[command(subcommand)]
    Explain(ExplainCmd),
    /// Overlay montage, alpha strip and t-SNE view for a run directory.
    Figures(FiguresArgs),
    /// Self-contained HTML report over run directories.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum SynthCmd {
    Dataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Styles {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum EngineCmd {
    Train {
        /// Dataset root; its `train` split is used.
        #[arg(long)]
        dataset: PathBuf,
        /// Optional style corpus added to the training images.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BankCmd {
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        engine: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail on undecodable files instead of skipping them.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Args)]
struct StylizeArgs {
    #[arg(long)]
    engine: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    style: String,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Perturb the style embedding with the bank's default noise.
    #[arg(long)]
    noise: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write an alpha strip (0, 0.2, ..., 1) to this path.
    #[arg(long)]
    strip: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Run directory (or a bare weights directory).
    #[arg(long)]
    model: PathBuf,
    /// Seed of the model inside a run directory; the first one by default.
    #[arg(long)]
    seed: Option<u64>,
    /// Style engine; defaults to the run's configured engine.
    #[arg(long)]
    engine: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value = "balanced:100")]
    subset: String,
    /// Dataset root; defaults to the run's dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExplainCmd {
    Sam {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        image: PathBuf,
        /// Class index or name.
        #[arg(long)]
        class: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        style: Option<String>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Use the raw logit instead of the softmax probability.
        #[arg(long)]
        logit: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    Wsam {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
        alphas: Vec<f64>,
        /// Leading bank styles to use; all by default.
        #[arg(long)]
        styles: Option<usize>,
        #[arg(long)]
        logit: bool,
        #[arg(long)]
        out: PathBuf,
        /// Raw map file written next to the record.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    WsamVariance {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        styles: usize,
        #[arg(long, default_value_t = 10)]
        samples_per_class: usize,
        #[arg(long)]
        logit: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FiguresArgs {
    /// Run directory to add figures to.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    engine: Option<PathBuf>,
    #[arg(long)]
    bank: PathBuf,
    /// Style corpus, used for the style thumbnail of the alpha strip.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 4)]
    overlay_samples: usize,
    #[arg(long, default_value_t = 100)]
    tsne_samples: usize,
    #[arg(long, default_value_t = 0)]
    tsne_seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to report on.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Baseline runs; the strategy table then shows per-strategy deltas.
    #[arg(long, num_args = 1..)]
    compare: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::available() };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_validation))
                || e.downcast_ref::<Usage>().is_some();
            ExitCode::from(if validation { 2 } else { 3 })
        }
    }
}

/// Argument errors detected after parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

/// If `path` sits inside a completed run directory, lists it in the manifest.
fn register_in_run(path: &Path) -> Result<()> {
    let Some(dir) = path.parent() else { return Ok(()) };
    let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
    if dir.join(stylemap::experiment::RUN_MANIFEST).is_file() && dir.join(stylemap::experiment::CONFIG_FILE).is_file() {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        RunManifest::register(dir, &[name])?;
    }
    Ok(())
}

struct Loaded {
    model: Classifier,
    run: Option<RunDir>,
    engine: Option<StyleEngine>,
}

fn load_model(args: &ModelArgs) -> Result<Loaded> {
    let (model, run) = if args.model.join(stylemap::experiment::CONFIG_FILE).is_file() {
        let run = RunDir::load(&args.model)?;
        (run.model(args.seed)?.clone(), Some(run))
    } else {
        if args.seed.is_some() {
            return Err(usage("--seed only applies to run directories"));
        }
        (Classifier::load(&args.model)?, None)
    };
    let engine_path = args.engine.clone().or_else(|| run.as_ref().and_then(|r| r.config.engine.clone()));
    let engine = engine_path.as_deref().map(StyleEngine::load).transpose()?;
    Ok(Loaded { model, run, engine })
}

fn require_engine(l: &Loaded) -> Result<&StyleEngine> {
    l.engine.as_ref().ok_or_else(|| usage("no style engine: pass --engine or use a run configured with one"))
}

fn parse_class(model: &Classifier, class: &str) -> Result<usize> {
    if let Ok(i) = class.parse::<usize>() {
        if i < model.classes() {
            return Ok(i);
        }
        return Err(Error::ClassOutOfRange { class: i, classes: model.classes() }.into());
    }
    model
        .class_names()
        .iter()
        .position(|n| n == class)
        .ok_or_else(|| usage(format!("unknown class `{class}`")))
}

fn alphas(values: &[f64]) -> Result<Vec<Alpha>> {
    Ok(values.iter().map(|&a| Alpha::new(a)).collect::<stylemap::Result<_>>()?)
}

fn score_mode(logit: bool) -> ScoreMode {
    if logit {
        ScoreMode::Logit
    } else {
        ScoreMode::Probability
    }
}

fn load_input(model: &Classifier, path: &Path) -> Result<ImageTensor> {
    let r = model.resolution();
    Ok(ImageTensor::load(path)?.resized(r, r)?)
}

fn run(cmd: Command, exec: Exec) -> Result<()> {
    match cmd {
        Command::Synth(SynthCmd::Dataset { out, train, test, resolution, seed }) => {
            synth::write_shape_dataset(&out, train, test, resolution, seed)?;
            log::info!("wrote {train} train / {test} test images to {}", out.display());
        }
        Command::Synth(SynthCmd::Styles { out, count, resolution, seed }) => {
            synth::write_style_corpus(&out, count, resolution, seed)?;
            log::info!("wrote {count} style images to {}", out.display());
        }
        Command::Engine(EngineCmd::Train { dataset, corpus, out, resolution, n, epochs, lr, seed }) => {
            let mut images = load_split(&dataset, "train", resolution, None)?.images;
            if let Some(c) = corpus {
                for p in fs::read_dir(&c).with_context(|| format!("reading {}", c.display()))? {
                    let p = p?.path();
                    if p.is_file() {
                        images.push(ImageTensor::load(&p)?.resized(resolution, resolution)?);
                    }
                }
            }
            let mut config = EngineConfig { resolution, ..EngineConfig::default() };
            if let Some(n) = n {
                config.n = n;
            }
            let defaults = EngineTrainOptions::default();
            let opts = EngineTrainOptions {
                epochs: epochs.unwrap_or(defaults.epochs),
                lr: lr.unwrap_or(defaults.lr),
                seed,
                exec,
                ..defaults
            };
            let (engine, history) = train_engine(&images, config, opts)?;
            engine.save(&out)?;
            write_json(&out.join("history.json"), &history)?;
            log::info!("engine {} saved to {}", engine.fingerprint(), out.display());
        }
        Command::Bank(BankCmd::Build { corpus, engine, out, seed, strict }) => {
            let engine = StyleEngine::load(&engine)?;
            let bank = StyleBank::build(&corpus, &engine, seed, BuildOptions { strict })?;
            bank.save(&out)?;
            log::info!("bank of {} styles saved to {}", bank.len(), out.display());
        }
        Command::Stylize(a) => {
            let engine = StyleEngine::load(&a.engine)?;
            let bank = StyleBank::load(&a.bank, Some(&engine), false)?;
            let style = bank.get(&a.style)?;
            let res = engine.config().resolution;
            let image = ImageTensor::load(&a.image)?.resized(res, res)?;
            let alpha = Alpha::new(a.alpha)?;
            let out = if a.noise {
                engine.apply_style(&image, style, alpha, &bank.default_noise(a.seed))?
            } else {
                stylize_for_eval(&image, &engine, style, alpha)?
            };
            out.save(&a.out)?;
            if let Some(strip) = a.strip {
                let dir = tempdir_for(&strip)?;
                render_alpha_strip(None, &engine, &image, 0, style, None, &Alpha::grid(), &dir)?;
                fs::rename(dir.join(stylemap::figures::STRIP_PNG), &strip)?;
                fs::remove_dir_all(&dir)?;
            }
        }
        Command::Train(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let run = run_experiment(&cfg, &a.out, command_line(), exec)?;
            for r in &run.eval {
                log::info!("{} seed {}: clean accuracy {:.4}", r.strategy.label(), r.seed, r.clean.value());
            }
        }
        Command::Sweep(a) => {
            let l = load_model(&a.model)?;
            let engine = require_engine(&l)?;
            let bank = StyleBank::load(&a.bank, Some(engine), false)?;
            let root = match (&a.dataset, &l.run) {
                (Some(d), _) => d.clone(),
                (None, Some(r)) => r.config.dataset.root.clone(),
                (None, None) => return Err(usage("--dataset is required with a bare weights directory")),
            };
            let test = load_split(&root, "test", l.model.resolution(), None)?;
            let subset = test.balanced_subset(parse_subset(&a.subset, test.classes())?)?;
            let scores = robustness_sweep(&l.model, &subset, engine, &bank, Alpha::new(a.alpha)?, exec)?;
            write_json(&a.out, &scores)?;
            register_in_run(&a.out)?;
        }
        Command::Explain(e) => explain(e, exec)?,
        Command::Figures(a) => figures(a, exec)?,
        Command::Report(a) => {
            let report = emit_report(&a.runs, &a.compare)?;
            if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&a.out, &report.html).with_context(|| format!("writing {}", a.out.display()))?;
            log::info!("report with sections {:?} written to {}", report.sections, a.out.display());
        }
    }
    Ok(())
}

fn tempdir_for(target: &Path) -> Result<PathBuf> {
    let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let dir = parent.join(format!(".stylemap-tmp-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn explain(cmd: ExplainCmd, exec: Exec) -> Result<()> {
    match cmd {
        ExplainCmd::Sam { model, image, class, alpha, style, bank, logit, out, overlay } => {
            let l = load_model(&model)?;
            let class = parse_class(&l.model, &class)?;
            let img = load_input(&l.model, &image)?;
            let alpha = Alpha::new(alpha)?;
            let bank = match (&bank, &l.engine) {
                (Some(b), Some(e)) => Some(StyleBank::load(b, Some(e), false)?),
                (Some(_), None) => return Err(usage("--bank needs a style engine")),
                _ => None,
            };
            let style: Option<&StyleEmbedding> = match (&style, &bank) {
                (Some(id), Some(b)) => Some(b.get(id)?),
                (Some(_), None) => return Err(usage("--style needs --bank")),
                (None, _) => None,
            };
            let map = sam(&l.model, l.engine.as_ref(), &img, class, alpha, style, score_mode(logit))?;
            map.save(&out)?;
            if let Some(path) = overlay {
                let shown = match (style, &l.engine) {
                    (Some(s), Some(e)) => stylize_for_eval(&img, e, s, alpha)?,
                    _ => img.clone(),
                };
                let caption = format!("{} {:.3}", l.model.class_names()[class], map.score);
                render_overlay(&shown, &map, &caption, 4)
                    .save(&path)
                    .map_err(|source| Error::Image { path: path.clone(), source })?;
            }
        }
        ExplainCmd::Wsam { model, image, class, bank, alphas: a, styles, logit, out, map } => {
            let l = load_model(&model)?;
            let engine = require_engine(&l)?;
            let class = parse_class(&l.model, &class)?;
            let img = load_input(&l.model, &image)?;
            let bank = StyleBank::load(&bank, Some(engine), false)?;
            let bank = styles.map_or_else(|| bank.clone(), |k| bank.truncated(k));
            let styles: Vec<&StyleEmbedding> = bank.entries().iter().collect();
            let opts = WsamOptions { alphas: alphas(&a)?, noise: None, score_mode: score_mode(logit), exec };
            let sample_id = image.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let rec = wsam(&l.model, engine, &img, &sample_id, class, &styles, &opts)?;
            write_json(&out, &rec)?;
            if let Some(path) = map {
                stylemap::interpret::ActivationMap {
                    data: rec.map.clone(),
                    class_id: class,
                    alpha: Alpha::ONE,
                    style_id: "wsam".into(),
                    score: rec.clean_score,
                }
                .save(&path)?;
            }
        }
        ExplainCmd::WsamVariance { model, dataset, split, bank, alphas: a, styles, samples_per_class, logit, out } => {
            let l = load_model(&model)?;
            let engine = require_engine(&l)?;
            let bank = StyleBank::load(&bank, Some(engine), false)?.truncated(styles);
            let ds = load_split(&dataset, &split, l.model.resolution(), None)?;
            if ds.class_names != l.model.class_names() {
                return Err(usage("dataset classes differ from the model's classes"));
            }
            let subset = ds.balanced_subset(samples_per_class)?;
            let refs: Vec<&StyleEmbedding> = bank.entries().iter().collect();
            let opts = WsamOptions { alphas: alphas(&a)?, noise: None, score_mode: score_mode(logit), exec };
            let report = variance_report(&l.model, engine, &subset.images, &subset.labels, &refs, &opts)?;
            write_json(&out, &report)?;
            register_in_run(&out)?;
            for c in &report.per_class {
                println!("{:<12} {:.6} {:.4}", c.class_name, c.raw, c.max_one);
            }
        }
    }
    Ok(())
}

fn figures(a: FiguresArgs, exec: Exec) -> Result<()> {
    let l = load_model(&ModelArgs { model: a.run.clone(), seed: a.seed, engine: a.engine.clone() })?;
    let Some(run) = &l.run else { bail!(usage("--run must be a run directory")) };
    let engine = require_engine(&l)?;
    let bank = StyleBank::load(&a.bank, Some(engine), false)?;
    let alpha = Alpha::new(a.alpha)?;
    let d = &run.config.dataset;
    let test = load_split(&d.root, "test", d.resolution, Some(d.test_size))?;
    let classes = test.classes();

    let picks = test.balanced_subset(1)?;
    let samples: Vec<(ImageTensor, usize)> =
        picks.images.into_iter().zip(picks.labels).take(a.overlay_samples.max(1)).collect();
    let styles: Vec<&StyleEmbedding> = bank.entries().iter().take(3).collect();
    let opts = WsamOptions { exec, ..Default::default() };
    render_overlays(&l.model, engine, &samples, &styles, alpha, &opts, &a.run)?;

    let first = &bank.entries()[0];
    let thumb = match &a.corpus {
        Some(c) => {
            let p = ["png", "jpg", "jpeg"].iter().map(|e| c.join(format!("{}.{e}", first.style_id))).find(|p| p.is_file());
            p.map(|p| ImageTensor::load(&p)).transpose()?
        }
        None => None,
    };
    render_alpha_strip(Some(&l.model), engine, &samples[0].0, samples[0].1, first, thumb.as_ref(), &Alpha::grid(), &a.run)?;

    let per_class = (a.tsne_samples / classes).max(1);
    let clean = test.balanced_subset(per_class)?;
    let mut images = clean.images.clone();
    let mut labels = clean.labels.clone();
    let mut styled = vec![false; images.len()];
    for (i, img) in clean.images.iter().enumerate() {
        let s = &bank.entries()[i % bank.len()];
        images.push(engine.apply_style(img, s, alpha, &NoiseParams::none(engine.n()))?);
        labels.push(clean.labels[i]);
        styled.push(true);
    }
    render_tsne(&l.model, &images, &labels, &styled, a.tsne_seed, &a.run)?;

    let mut outputs: Vec<String> = Vec::new();
    for f in fs::read_dir(a.run.join(FIGURES_DIR))? {
        let name = f?.file_name().to_string_lossy().into_owned();
        outputs.push(format!("{FIGURES_DIR}/{name}"));
    }
    outputs.sort();
    RunManifest::register(&a.run, &outputs)?;
    Ok(())
}
