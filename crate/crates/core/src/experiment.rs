//! Config-driven experiment runs and their on-disk run directories.
//!
//! A run directory holds `config.json` (resolved), `weights/seed-<s>/`,
//! `log.jsonl`, `eval.json`, `sweeps.json` and finally `manifest.json`.
//! The manifest is written last; a directory without one is incomplete and
//! every reader refuses it.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::augment::{Strategy, StrategyConfig};
use crate::bank::StyleBank;
use crate::data::{load_split, parse_subset, Dataset};
use crate::error::{io_err, json_err, Error, Result};
use crate::par::Exec;
use crate::style::{Alpha, StyleEngine};
use crate::train::{
    alpha_sweep, evaluate_clean, sort_scores, styled_accuracies, train_classifier, Accuracy, AlphaPoint, Classifier,
    EpochLog, ModelConfig, OptimizerConfig, StyleScore,
};

pub const RUN_MANIFEST: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "log.jsonl";
pub const EVAL_FILE: &str = "eval.json";
pub const SWEEPS_FILE: &str = "sweeps.json";
pub const ENV_PREFIX: &str = "STYLEMAP_";
pub const RESOLUTIONS: [usize; 3] = [32, 64, 96];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub root: PathBuf,
    pub resolution: usize,
    pub classes: usize,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// α of the style-robustness sweep.
    pub sweep_alpha: f64,
    /// Class-balanced subset used by both sweeps, `balanced:<count>`.
    pub subset: String,
    /// Bank for evaluation; the training bank when absent.
    #[serde(default)]
    pub bank: Option<PathBuf>,
    /// Leading bank entries used by the robustness sweep; all when absent.
    #[serde(default)]
    pub styles: Option<usize>,
    /// Leading bank entries pooled by the α sweep; 0 skips it.
    pub alpha_styles: usize,
    pub alphas: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sweep_alpha: 0.5,
            subset: "balanced:100".into(),
            bank: None,
            styles: None,
            alpha_styles: 10,
            alphas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub seeds: Vec<u64>,
    /// Style engine directory; needed for SA strategies and styled evaluation.
    #[serde(default)]
    pub engine: Option<PathBuf>,
    /// Training style bank directory.
    #[serde(default)]
    pub bank: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !RESOLUTIONS.contains(&d.resolution) {
            return Err(Error::Invalid(format!("resolution {} is not one of {RESOLUTIONS:?}", d.resolution)));
        }
        if d.classes < 2 || d.train_size == 0 || d.test_size == 0 {
            return Err(Error::Invalid("dataset needs at least 2 classes and non-empty splits".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Invalid(format!("seeds {:?} are not distinct", self.seeds)));
        }
        self.model.validate(d.resolution)?;
        self.optimizer.validate()?;
        self.strategy.validate()?;
        if self.strategy.strategy.uses_style() && (self.engine.is_none() || self.bank.is_none()) {
            return Err(Error::Invalid(format!("strategy {} needs `engine` and `bank`", self.strategy.strategy.label())));
        }
        Alpha::new(self.eval.sweep_alpha)?;
        for &a in &self.eval.alphas {
            Alpha::new(a)?;
        }
        parse_subset(&self.eval.subset, d.classes)?;
        Ok(())
    }

    /// Reads a config file and applies `STYLEMAP_*` overrides from the
    /// process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut value: Value = serde_json::from_str(&text).map_err(json_err(path))?;
        apply_overrides(&mut value, std::env::vars())?;
        let cfg: Self = serde_json::from_value(value).map_err(json_err(path))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Applies `STYLEMAP_A__B=value` as `config.a.b = value`. The value is
/// parsed as JSON and falls back to a plain string. The top-level key must
/// already exist, so typos fail loudly.
pub fn apply_overrides(config: &mut Value, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(String::is_empty) {
            return Err(Error::Invalid(format!("malformed override `{key}`")));
        }
        if config.get(&path[0]).is_none() {
            return Err(Error::Invalid(format!("override `{key}` names no config field `{}`", path[0])));
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut node = &mut *config;
        for seg in &path[..path.len() - 1] {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Invalid(format!("override `{key}` descends into a non-object")))?;
            node = obj.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()));
        }
        node.as_object_mut()
            .ok_or_else(|| Error::Invalid(format!("override `{key}` descends into a non-object")))?
            .insert(path[path.len() - 1].clone(), value);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub clean: Accuracy,
    /// Per (style, α) accuracy on the evaluation subset, in bank order.
    pub styled: Vec<StyleScore>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub strategy: Strategy,
    pub seed: u64,
    pub alpha: f64,
    /// Sorted from highest to lowest accuracy.
    pub robustness: Vec<StyleScore>,
    pub alpha_curve: Vec<AlphaPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFingerprint {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config: Value,
    pub tool_version: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputFingerprint>,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>, config: Value, seeds: Vec<u64>) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self {
            command_line,
            config,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_s: started,
            wall_clock_s: 0.0,
        }
    }

    /// Loads the manifest, failing for incomplete directories or when a
    /// listed output is gone.
    pub fn load(rundir: &Path) -> Result<Self> {
        let path = rundir.join(RUN_MANIFEST);
        if !path.is_file() {
            return Err(Error::Missing(format!("{} has no {RUN_MANIFEST}; the run is incomplete", rundir.display())));
        }
        let m: Self = read_json(&path)?;
        if let Some(missing) = m.outputs.iter().find(|o| !rundir.join(o).exists()) {
            return Err(Error::Missing(format!("{} lists `{missing}`, which does not exist", path.display())));
        }
        Ok(m)
    }

    /// Writes the manifest through a temporary file and a rename so it
    /// appears atomically.
    pub fn write(&self, rundir: &Path) -> Result<()> {
        if let Some(missing) = self.outputs.iter().find(|o| !rundir.join(o).exists()) {
            return Err(Error::Missing(format!("output `{missing}` was never written")));
        }
        let tmp = rundir.join(format!("{RUN_MANIFEST}.tmp"));
        write_json(&tmp, self)?;
        let path = rundir.join(RUN_MANIFEST);
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    /// Adds outputs written into an already completed run and rewrites the
    /// manifest.
    pub fn register(rundir: &Path, outputs: &[String]) -> Result<()> {
        let mut m = Self::load(rundir)?;
        for o in outputs {
            if !m.outputs.contains(o) {
                m.outputs.push(o.clone());
            }
        }
        m.write(rundir)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

/// Pretty JSON with a trailing newline; parent directories are created.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// SHA-256 over every regular file below `path` in sorted order, keyed by
/// relative path, so directories and single files fingerprint alike.
pub fn fingerprint_path(path: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for (rel, full) in files {
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(fs::read(&full).map_err(io_err(&full))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn collect_files(root: &Path, path: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    if path.is_file() {
        let rel = path.strip_prefix(root).unwrap_or(path).to_string_lossy().into_owned();
        out.push((rel, path.to_path_buf()));
        return Ok(());
    }
    for entry in fs::read_dir(path).map_err(io_err(path))? {
        collect_files(root, &entry.map_err(io_err(path))?.path(), out)?;
    }
    Ok(())
}

pub fn weights_dir(seed: u64) -> String {
    format!("weights/seed-{seed}")
}

/// Everything a finished run directory holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDir {
    pub config: ExperimentConfig,
    pub models: Vec<(u64, Classifier)>,
    pub log: Vec<EpochLog>,
    pub eval: Vec<EvalResult>,
    pub sweeps: Vec<SweepRecord>,
    pub manifest: RunManifest,
}

impl RunDir {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(dir)?;
        let config: ExperimentConfig = read_json(&dir.join(CONFIG_FILE))?;
        let models = config
            .seeds
            .iter()
            .map(|&s| Ok((s, Classifier::load(&dir.join(weights_dir(s)))?)))
            .collect::<Result<_>>()?;
        let log_path = dir.join(LOG_FILE);
        let log = fs::read_to_string(&log_path)
            .map_err(io_err(&log_path))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(json_err(&log_path)))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            models,
            log,
            eval: read_json(&dir.join(EVAL_FILE))?,
            sweeps: read_json(&dir.join(SWEEPS_FILE))?,
            manifest,
        })
    }

    /// Writes every artifact, then the manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join(CONFIG_FILE), &self.config)?;
        for (seed, model) in &self.models {
            model.save(&dir.join(weights_dir(*seed)))?;
        }
        let log_path = dir.join(LOG_FILE);
        let mut text = String::new();
        for entry in &self.log {
            text.push_str(&serde_json::to_string(entry).map_err(json_err(&log_path))?);
            text.push('\n');
        }
        fs::write(&log_path, text).map_err(io_err(&log_path))?;
        write_json(&dir.join(EVAL_FILE), &self.eval)?;
        write_json(&dir.join(SWEEPS_FILE), &self.sweeps)?;
        self.manifest.write(dir)
    }

    pub fn model(&self, seed: Option<u64>) -> Result<&Classifier> {
        match seed {
            None => self.models.first().map(|(_, m)| m),
            Some(s) => self.models.iter().find(|(k, _)| *k == s).map(|(_, m)| m),
        }
        .ok_or_else(|| Error::Invalid(format!("run has no model for seed {seed:?}")))
    }
}

/// Loaded inputs of an experiment.
pub struct Inputs {
    pub train: Dataset,
    pub test: Dataset,
    pub engine: Option<StyleEngine>,
    pub bank: Option<StyleBank>,
    pub eval_bank: Option<StyleBank>,
}

impl Inputs {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let d = &cfg.dataset;
        let train = load_split(&d.root, "train", d.resolution, Some(d.train_size))?;
        let test = load_split(&d.root, "test", d.resolution, Some(d.test_size))?;
        if train.classes() != d.classes {
            return Err(Error::Invalid(format!("dataset has {} classes, config says {}", train.classes(), d.classes)));
        }
        let engine = cfg.engine.as_deref().map(StyleEngine::load).transpose()?;
        let bank = match (&cfg.bank, &engine) {
            (Some(p), Some(e)) => Some(StyleBank::load(p, Some(e), false)?),
            (Some(_), None) => return Err(Error::Invalid("`bank` needs `engine`".into())),
            _ => None,
        };
        let eval_bank = match (&cfg.eval.bank, &engine) {
            (Some(p), Some(e)) => Some(StyleBank::load(p, Some(e), false)?),
            (Some(_), None) => return Err(Error::Invalid("`eval.bank` needs `engine`".into())),
            (None, _) => bank.clone(),
        };
        Ok(Self { train, test, engine, bank, eval_bank })
    }

    fn fingerprints(cfg: &ExperimentConfig) -> Result<Vec<InputFingerprint>> {
        let mut out = vec![
            InputFingerprint { name: "dataset/train".into(), sha256: fingerprint_path(&cfg.dataset.root.join("train"))? },
            InputFingerprint { name: "dataset/test".into(), sha256: fingerprint_path(&cfg.dataset.root.join("test"))? },
        ];
        for (name, p) in [("engine", &cfg.engine), ("bank", &cfg.bank), ("eval.bank", &cfg.eval.bank)] {
            if let Some(p) = p {
                out.push(InputFingerprint { name: name.into(), sha256: fingerprint_path(p)? });
            }
        }
        Ok(out)
    }
}

/// Evaluates one trained model: clean accuracy on the full test set, the
/// robustness sweep and the α sweep on the configured subset.
pub fn evaluate(
    model: &Classifier,
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    seed: u64,
    exec: Exec,
) -> Result<(Accuracy, Vec<StyleScore>, Vec<AlphaPoint>)> {
    let clean = evaluate_clean(model, &inputs.test, exec);
    let (Some(engine), Some(bank)) = (&inputs.engine, &inputs.eval_bank) else {
        log::info!("seed {seed}: no engine or evaluation bank, skipping styled evaluation");
        return Ok((clean, Vec::new(), Vec::new()));
    };
    let subset = inputs.test.balanced_subset(parse_subset(&cfg.eval.subset, inputs.test.classes())?)?;
    let sweep_bank = cfg.eval.styles.map_or_else(|| bank.clone(), |k| bank.truncated(k));
    let alpha = Alpha::new(cfg.eval.sweep_alpha)?;
    let styled = styled_accuracies(&[model], &subset, engine, &sweep_bank, alpha, exec)?.remove(0);
    let curve = if cfg.eval.alpha_styles == 0 {
        Vec::new()
    } else {
        let alphas = cfg.eval.alphas.iter().map(|&a| Alpha::new(a)).collect::<Result<Vec<_>>>()?;
        alpha_sweep(model, &subset, engine, &bank.truncated(cfg.eval.alpha_styles), &alphas, exec)?
    };
    Ok((clean, styled, curve))
}

/// Trains and evaluates one model per seed and writes the run directory.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, command_line: Vec<String>, exec: Exec) -> Result<RunDir> {
    cfg.validate()?;
    if out.join(RUN_MANIFEST).exists() {
        return Err(Error::Invalid(format!("{} already holds a completed run", out.display())));
    }
    let started = Instant::now();
    let inputs = Inputs::load(cfg)?;
    let config_value = serde_json::to_value(cfg).expect("config serializes");
    let mut manifest = RunManifest::new(command_line, config_value, cfg.seeds.clone());
    manifest.inputs = Inputs::fingerprints(cfg)?;

    let styler = match (&inputs.engine, &inputs.bank) {
        (Some(e), Some(b)) if cfg.strategy.strategy.uses_style() => Some((e, b)),
        _ => None,
    };
    let mut run = RunDir { config: cfg.clone(), models: vec![], log: vec![], eval: vec![], sweeps: vec![], manifest };
    for &seed in &cfg.seeds {
        let t = Instant::now();
        let (model, log) = train_classifier(&inputs.train, &cfg.model, &cfg.strategy, &cfg.optimizer, styler, seed, exec)?;
        let (clean, styled, curve) = evaluate(&model, cfg, &inputs, seed, exec)?;
        log::info!("seed {seed}: clean accuracy {:.4}", clean.value());
        run.eval.push(EvalResult {
            strategy: cfg.strategy.strategy,
            seed,
            clean,
            styled: styled.clone(),
            runtime_s: t.elapsed().as_secs_f64(),
        });
        run.sweeps.push(SweepRecord {
            strategy: cfg.strategy.strategy,
            seed,
            alpha: cfg.eval.sweep_alpha,
            robustness: sort_scores(styled),
            alpha_curve: curve,
        });
        run.log.extend(log);
        run.models.push((seed, model));
    }
    run.manifest.outputs = [CONFIG_FILE, LOG_FILE, EVAL_FILE, SWEEPS_FILE]
        .iter()
        .map(|s| s.to_string())
        .chain(cfg.seeds.iter().map(|&s| weights_dir(s)))
        .collect();
    run.manifest.wall_clock_s = started.elapsed().as_secs_f64();
    run.save(out)?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn overrides_set_nested_fields() {
        let mut v = json!({"optimizer": {"epochs": 40, "lr": 0.001}, "seeds": [0]});
        apply_overrides(
            &mut v,
            vars(&[("STYLEMAP_OPTIMIZER__EPOCHS", "3"), ("STYLEMAP_SEEDS", "[1,2]"), ("HOME", "/x")]),
        )
        .unwrap();
        assert_eq!(v, json!({"optimizer": {"epochs": 3, "lr": 0.001}, "seeds": [1, 2]}));
    }

    #[test]
    fn overrides_fall_back_to_strings_and_reject_unknown_keys() {
        let mut v = json!({"dataset": {"root": "a"}});
        apply_overrides(&mut v, vars(&[("STYLEMAP_DATASET__ROOT", "/data/x")])).unwrap();
        assert_eq!(v["dataset"]["root"], "/data/x");
        assert!(apply_overrides(&mut v, vars(&[("STYLEMAP_DATASE__ROOT", "1")])).is_err());
        assert!(apply_overrides(&mut v, vars(&[("STYLEMAP_DATASET__ROOT__X", "1")])).is_err());
    }

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig { root: "d".into(), resolution: 32, classes: 10, train_size: 100, test_size: 100 },
            model: ModelConfig::default(),
            strategy: StrategyConfig::with_defaults(Strategy::None, 32),
            optimizer: OptimizerConfig::default(),
            seeds: vec![0, 1],
            engine: None,
            bank: None,
            eval: EvalConfig::default(),
        }
    }

    #[test]
    fn validation_rules() {
        assert!(config().validate().is_ok());
        let mut c = config();
        c.seeds = vec![3, 3];
        assert!(c.validate().unwrap_err().is_validation());
        let mut c = config();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = config();
        c.dataset.resolution = 48;
        assert!(c.validate().is_err());
        let mut c = config();
        c.optimizer.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.strategy.strategy = Strategy::Sa;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let c = config();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        let minimal = json!({
            "dataset": {"root": "d", "resolution": 32, "classes": 10, "train_size": 10, "test_size": 10},
            "strategy": serde_json::to_value(StrategyConfig::with_defaults(Strategy::Trad, 32)).unwrap(),
            "seeds": [4]
        });
        let c: ExperimentConfig = serde_json::from_value(minimal).unwrap();
        assert_eq!(c.optimizer, OptimizerConfig::default());
        assert_eq!(c.eval, EvalConfig::default());
    }

    #[test]
    fn manifest_is_required_and_checked() {
        let dir = tempfile::tempdir().unwrap();
        assert!(RunManifest::load(dir.path()).is_err());
        let mut m = RunManifest::new(vec!["x".into()], json!({}), vec![0]);
        m.outputs = vec!["a.txt".into()];
        assert!(m.write(dir.path()).is_err());
        fs::write(dir.path().join("a.txt"), "hi").unwrap();
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
        fs::write(dir.path().join("b.txt"), "").unwrap();
        RunManifest::register(dir.path(), &["b.txt".into()]).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap().outputs, vec!["a.txt", "b.txt"]);
        fs::remove_file(dir.path().join("a.txt")).unwrap();
        assert!(RunManifest::load(dir.path()).is_err());
    }

    #[test]
    fn fingerprints_track_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("s")).unwrap();
        fs::write(dir.path().join("s/a"), "1").unwrap();
        let before = fingerprint_path(dir.path()).unwrap();
        assert_eq!(before, fingerprint_path(dir.path()).unwrap());
        fs::write(dir.path().join("s/a"), "2").unwrap();
        assert_ne!(before, fingerprint_path(dir.path()).unwrap());
    }
}
