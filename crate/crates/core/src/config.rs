//! Run configuration, read from a TOML file and overridden by command-line
//! flags.
//!
//! A `meta.json` written by an earlier run is also accepted: its `config`
//! object is the effective configuration of that run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analyses::{layer_path, Battery, ControlKind};
use crate::error::{Error, Result};
use crate::probes::AlphaGrid;

pub const THREADS_ENV: &str = "IDIOPROBE_THREADS";

/// Worker count; `Auto` lets the pool size itself to the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threads {
    #[default]
    Auto,
    Count(usize),
}

impl Threads {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Count(n)),
            _ => Err(Error::ConfigError(format!("threads must be a positive integer or 'auto', got '{s}'"))),
        }
    }

    /// `None` means let the pool decide.
    pub fn count(self) -> Option<usize> {
        match self {
            Threads::Auto => None,
            Threads::Count(n) => Some(n),
        }
    }
}

impl Serialize for Threads {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threads::Auto => s.serialize_str("auto"),
            Threads::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Threads {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Threads::parse(&n.to_string()),
            Raw::Name(s) => Threads::parse(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// EMB1 path with a `{layer}` placeholder, e.g. `emb/layer_{layer}.emb`.
    pub embeddings: Option<String>,
    pub targets: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// EMB1 file for the static-embedding control.
    pub static_embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub folds: u64,
    pub bootstrap: u64,
    pub controls: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            folds: 42,
            bootstrap: 42,
            controls: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlsConfig {
    pub n_permutations: usize,
    pub negative_feature: Option<String>,
}

impl Default for ControlsConfig {
    fn default() -> Self {
        Self {
            n_permutations: 10,
            negative_feature: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossDatasetConfig {
    pub train_corpus: String,
    pub test_corpus: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub layers: Vec<u32>,
    pub pca_dims: Vec<usize>,
    /// `None` selects every feature in the targets file.
    pub features: Option<Vec<String>>,
    /// `None` selects every participant.
    pub participants: Option<Vec<String>>,
    /// Required when the targets span several corpora.
    pub corpus: Option<String>,
    pub k_folds: usize,
    pub alpha_grid: AlphaGrid,
    pub seeds: Seeds,
    pub bootstrap: BootstrapConfig,
    pub analyses: Battery,
    pub controls: ControlsConfig,
    pub cross_dataset: Option<CrossDatasetConfig>,
    pub threads: Threads,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            layers: Vec::new(),
            pca_dims: vec![50],
            features: None,
            participants: None,
            corpus: None,
            k_folds: 5,
            alpha_grid: AlphaGrid::default(),
            seeds: Seeds::default(),
            bootstrap: BootstrapConfig::default(),
            analyses: Battery::default(),
            controls: ControlsConfig::default(),
            cross_dataset: None,
            threads: Threads::Auto,
        }
    }
}

impl RunConfig {
    /// Reads TOML, or the `config` object of a JSON file such as `meta.json`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))?;
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
            serde_json::from_value(value).map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))
        }
    }

    pub fn embeddings_pattern(&self) -> Result<&str> {
        self.paths
            .embeddings
            .as_deref()
            .ok_or_else(|| Error::ConfigError("no embeddings path given (--embeddings or paths.embeddings)".into()))
    }

    pub fn targets_path(&self) -> Result<&Path> {
        self.paths
            .targets
            .as_deref()
            .ok_or_else(|| Error::ConfigError("no targets path given (--targets or paths.targets)".into()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.paths
            .out
            .as_deref()
            .ok_or_else(|| Error::ConfigError("no output directory given (--out or paths.out)".into()))
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigError(m));
        if self.layers.is_empty() {
            return bad("no layers requested".into());
        }
        let mut layers = self.layers.clone();
        layers.sort_unstable();
        if layers.windows(2).any(|w| w[0] == w[1]) {
            return bad("layers contain duplicates".into());
        }
        if self.pca_dims.is_empty() || self.pca_dims.contains(&0) {
            return bad("pca_dims must be nonempty and positive".into());
        }
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if self.bootstrap.resamples < 100 {
            return bad(format!("bootstrap.resamples must be at least 100, got {}", self.bootstrap.resamples));
        }
        if !(self.bootstrap.confidence > 0.0 && self.bootstrap.confidence < 1.0) {
            return bad(format!("bootstrap.confidence must lie in (0, 1), got {}", self.bootstrap.confidence));
        }
        if let Some(f) = &self.features {
            if f.is_empty() {
                return bad("features list is empty".into());
            }
        }
        if let Some(p) = &self.participants {
            if p.is_empty() {
                return bad("participants list is empty".into());
            }
        }
        let controls = &self.analyses.controls;
        if controls.contains(&ControlKind::Shuffle) && self.controls.n_permutations == 0 {
            return bad("shuffle control needs controls.n_permutations >= 1".into());
        }
        if controls.contains(&ControlKind::NegativeFeature) && self.controls.negative_feature.is_none() {
            return bad("negative-feature control needs controls.negative_feature".into());
        }
        if controls.contains(&ControlKind::StaticEmbedding) {
            match &self.paths.static_embeddings {
                None => return bad("static-embedding control needs paths.static_embeddings".into()),
                Some(p) if !p.is_file() => return bad(format!("static embedding file {} not found", p.display())),
                _ => {}
            }
        }
        let targets = self.targets_path()?;
        if !targets.is_file() {
            return bad(format!("targets file {} not found", targets.display()));
        }
        let pattern = self.embeddings_pattern()?;
        for &layer in &self.layers {
            let path = layer_path(pattern, layer);
            if !path.is_file() {
                return Err(Error::MissingLayerFile { layer, path });
            }
        }
        self.out_dir()?;
        Ok(())
    }

    /// Thread count after applying the environment override.
    pub fn effective_threads(&self) -> Result<Threads> {
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Threads::parse(&v),
            _ => Ok(self.threads),
        }
    }
}
