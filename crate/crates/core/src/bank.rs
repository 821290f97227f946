//! Precomputed style embeddings and channel means, persisted as a manifest
//! plus two raw little-endian f32 files.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{is_image_file, sorted_entries};
use crate::error::{io_err, json_err, Error, Result};
use crate::image::ImageTensor;
use crate::nn::store::{read_f32, write_f32};
use crate::style::{NoiseParams, StyleEmbedding, StyleEngine};
use crate::seed;

pub const BANK_FORMAT_VERSION: u32 = 1;
pub const BANK_MANIFEST: &str = "bank.manifest.json";
const EMBEDDINGS: &str = "embeddings.f32";
const MEANS: &str = "means.f32";

/// Default noise scale relative to the per-dimension spread of the bank.
pub const DEFAULT_NOISE_SCALE: f32 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EntryRecord {
    style_id: String,
    embedding_offset: usize,
    mean_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BankManifest {
    format_version: u32,
    n: usize,
    engine_fingerprint: String,
    seed: u64,
    resolution: usize,
    embedding_std: Vec<f32>,
    entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleBank {
    entries: Vec<StyleEmbedding>,
    n: usize,
    engine_fingerprint: String,
    seed: u64,
    resolution: usize,
    std: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StyleSelector {
    Id(String),
    /// Uniform over entries, deterministic per seed.
    Random(u64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Fail on undecodable files instead of skipping them.
    pub strict: bool,
}

/// Population standard deviation of each embedding dimension (two-pass).
fn embedding_std(entries: &[StyleEmbedding], n: usize) -> Vec<f32> {
    let count = entries.len() as f64;
    (0..n)
        .map(|d| {
            let mean = entries.iter().map(|e| e.z[d] as f64).sum::<f64>() / count;
            let var = entries.iter().map(|e| (e.z[d] as f64 - mean).powi(2)).sum::<f64>() / count;
            var.sqrt() as f32
        })
        .collect()
}

impl StyleBank {
    pub fn from_entries(entries: Vec<StyleEmbedding>, engine: &StyleEngine, seed: u64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Invalid("a style bank needs at least one entry".into()));
        }
        let n = engine.n();
        let mut seen = HashSet::new();
        for e in &entries {
            if e.z.len() != n {
                return Err(Error::Dimension(format!("style `{}` has length {}, expected {n}", e.style_id, e.z.len())));
            }
            if !seen.insert(e.style_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate style id `{}`", e.style_id)));
            }
        }
        let std = embedding_std(&entries, n);
        Ok(Self {
            entries,
            n,
            engine_fingerprint: engine.fingerprint().to_string(),
            seed,
            resolution: engine.config().resolution,
            std,
        })
    }

    /// Encodes every decodable image in `corpus_dir` (sorted by file name)
    /// after resizing it to the engine resolution. The style id is the
    /// file stem.
    pub fn build(corpus_dir: &Path, engine: &StyleEngine, seed: u64, opts: BuildOptions) -> Result<Self> {
        let res = engine.config().resolution;
        let mut entries = Vec::new();
        for path in sorted_entries(corpus_dir)? {
            if !path.is_file() {
                continue;
            }
            let decoded = if is_image_file(&path) {
                ImageTensor::load(&path)
            } else {
                Err(Error::Invalid(format!("{} is not a supported image file", path.display())))
            };
            let img = match decoded {
                Ok(img) => img,
                Err(e) if !opts.strict => {
                    log::warn!("skipping {}: {e}", path.display());
                    continue;
                }
                Err(e) => return Err(e),
            };
            let id = path.file_stem().unwrap().to_string_lossy().to_string();
            entries.push(engine.embed_style(&img.resized(res, res)?, &id)?);
        }
        if entries.is_empty() {
            return Err(Error::EmptyCorpus(corpus_dir.to_path_buf()));
        }
        Self::from_entries(entries, engine, seed)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[StyleEmbedding] {
        &self.entries
    }

    pub fn engine_fingerprint(&self) -> &str {
        &self.engine_fingerprint
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-dimension standard deviation of the stored embeddings.
    pub fn embedding_std(&self) -> &[f32] {
        &self.std
    }

    /// Default perturbation: zero mean, 0.1 × bank spread.
    pub fn default_noise(&self, seed: u64) -> NoiseParams {
        NoiseParams::scaled_spread(&self.std, DEFAULT_NOISE_SCALE, seed)
    }

    pub fn get(&self, style_id: &str) -> Result<&StyleEmbedding> {
        self.entries
            .iter()
            .find(|e| e.style_id == style_id)
            .ok_or_else(|| Error::UnknownStyle(style_id.to_string()))
    }

    pub fn sample(&self, selector: &StyleSelector) -> Result<&StyleEmbedding> {
        match selector {
            StyleSelector::Id(id) => self.get(id),
            StyleSelector::Random(s) => {
                let i = seed::rng(*s).random_range(0..self.entries.len());
                Ok(&self.entries[i])
            }
        }
    }

    /// The first `count` entries, as a bank of their own.
    pub fn truncated(&self, count: usize) -> StyleBank {
        let mut b = self.clone();
        b.entries.truncate(count.max(1));
        b.std = embedding_std(&b.entries, b.n);
        b
    }

    /// Fails when the bank was built by a different engine, unless
    /// `allow_mismatch` is set.
    pub fn check_engine(&self, engine: &StyleEngine, allow_mismatch: bool) -> Result<()> {
        if self.engine_fingerprint != engine.fingerprint() {
            if allow_mismatch {
                log::warn!("style bank engine fingerprint differs from the loaded engine");
            } else {
                return Err(Error::FingerprintMismatch {
                    bank: self.engine_fingerprint.clone(),
                    engine: engine.fingerprint().to_string(),
                });
            }
        }
        if self.n != engine.n() {
            return Err(Error::Dimension(format!("bank n = {}, engine n = {}", self.n, engine.n())));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut z = Vec::with_capacity(self.len() * self.n);
        let mut means = Vec::with_capacity(self.len() * 3);
        let mut records = Vec::with_capacity(self.len());
        for e in &self.entries {
            records.push(EntryRecord { style_id: e.style_id.clone(), embedding_offset: z.len(), mean_offset: means.len() });
            z.extend(e.z.iter().copied());
            means.extend(e.mu_z);
        }
        write_f32(&dir.join(EMBEDDINGS), &z)?;
        write_f32(&dir.join(MEANS), &means)?;
        let manifest = BankManifest {
            format_version: BANK_FORMAT_VERSION,
            n: self.n,
            engine_fingerprint: self.engine_fingerprint.clone(),
            seed: self.seed,
            resolution: self.resolution,
            embedding_std: self.std.clone(),
            entries: records,
        };
        let path = dir.join(BANK_MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(json_err(&path))?;
        fs::write(&path, text).map_err(io_err(&path))
    }

    /// Loads a bank; when `engine` is given the fingerprint guard applies.
    pub fn load(dir: &Path, engine: Option<&StyleEngine>, allow_mismatch: bool) -> Result<Self> {
        let path = dir.join(BANK_MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: BankManifest = serde_json::from_str(&text).map_err(json_err(&path))?;
        if m.format_version != BANK_FORMAT_VERSION {
            return Err(Error::FormatVersion { path, found: m.format_version, expected: BANK_FORMAT_VERSION });
        }
        let z = read_f32(&dir.join(EMBEDDINGS))?;
        let means = read_f32(&dir.join(MEANS))?;
        let entries = m
            .entries
            .iter()
            .map(|r| {
                let zs = z
                    .get(r.embedding_offset..r.embedding_offset + m.n)
                    .ok_or_else(|| Error::Dimension(format!("embedding of `{}` out of range", r.style_id)))?;
                let ms = means
                    .get(r.mean_offset..r.mean_offset + 3)
                    .ok_or_else(|| Error::Dimension(format!("mean of `{}` out of range", r.style_id)))?;
                Ok(StyleEmbedding { z: Array1::from(zs.to_vec()), mu_z: [ms[0], ms[1], ms[2]], style_id: r.style_id.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        if m.embedding_std.len() != m.n {
            return Err(Error::Dimension("embedding_std length differs from n".into()));
        }
        let bank = Self {
            entries,
            n: m.n,
            engine_fingerprint: m.engine_fingerprint,
            seed: m.seed,
            resolution: m.resolution,
            std: m.embedding_std,
        };
        if let Some(engine) = engine {
            bank.check_engine(engine, allow_mismatch)?;
        }
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style::EngineConfig;

    fn engine(seed: u64) -> StyleEngine {
        StyleEngine::new(EngineConfig { resolution: 32, n: 6, feature_channels: 8, widths: [4, 6] }, seed).unwrap()
    }

    fn corpus(dir: &Path, count: usize) {
        for i in 0..count {
            crate::synth::style_image(40, i as u64).save(&dir.join(format!("s{i:03}.png"))).unwrap();
        }
    }

    #[test]
    fn single_image_round_trip() {
        let e = engine(1);
        let c = tempfile::tempdir().unwrap();
        corpus(c.path(), 1);
        let bank = StyleBank::build(c.path(), &e, 3, BuildOptions::default()).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.entries()[0].style_id, "s000");
        let out = tempfile::tempdir().unwrap();
        bank.save(out.path()).unwrap();
        assert_eq!(StyleBank::load(out.path(), Some(&e), false).unwrap(), bank);
    }

    #[test]
    fn empty_and_undecodable_corpora() {
        let e = engine(1);
        let c = tempfile::tempdir().unwrap();
        assert!(matches!(StyleBank::build(c.path(), &e, 0, BuildOptions::default()), Err(Error::EmptyCorpus(_))));
        fs::write(c.path().join("broken.png"), b"not a png").unwrap();
        assert!(matches!(StyleBank::build(c.path(), &e, 0, BuildOptions::default()), Err(Error::EmptyCorpus(_))));
        corpus(c.path(), 2);
        assert_eq!(StyleBank::build(c.path(), &e, 0, BuildOptions::default()).unwrap().len(), 2);
        assert!(StyleBank::build(c.path(), &e, 0, BuildOptions { strict: true }).is_err());
    }

    #[test]
    fn fingerprint_guard() {
        let e = engine(1);
        let c = tempfile::tempdir().unwrap();
        corpus(c.path(), 2);
        let bank = StyleBank::build(c.path(), &e, 0, BuildOptions::default()).unwrap();
        let out = tempfile::tempdir().unwrap();
        bank.save(out.path()).unwrap();
        let other = engine(2);
        assert!(matches!(
            StyleBank::load(out.path(), Some(&other), false),
            Err(Error::FingerprintMismatch { .. })
        ));
        assert!(StyleBank::load(out.path(), Some(&other), true).is_ok());
    }

    #[test]
    fn lookup_and_random_selection() {
        let e = engine(1);
        let c = tempfile::tempdir().unwrap();
        corpus(c.path(), 3);
        let bank = StyleBank::build(c.path(), &e, 0, BuildOptions::default()).unwrap();
        assert_eq!(bank.sample(&StyleSelector::Id("s001".into())).unwrap().style_id, "s001");
        assert!(matches!(bank.sample(&StyleSelector::Id("zzz".into())), Err(Error::UnknownStyle(_))));
        let a = bank.sample(&StyleSelector::Random(42)).unwrap();
        let b = bank.sample(&StyleSelector::Random(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = engine(1);
        let emb = StyleEmbedding { z: Array1::zeros(6), mu_z: [0.0; 3], style_id: "x".into() };
        assert!(StyleBank::from_entries(vec![emb.clone(), emb], &e, 0).is_err());
    }
}
