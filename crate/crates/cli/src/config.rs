//! Experiment configuration: one JSON file describing a single run.

use std::fs;
use std::path::{Path, PathBuf};

use kgprompt_core::eval::StdMode;
use kgprompt_core::prompts::{Architecture, LabelMapping, PromptTemplate, TruncationPolicy, DEFAULT_MASK};
use kgprompt_core::seeding::DEFAULT_SEED;
use kgprompt_core::structure::ExtractionLimits;
use kgprompt_core::verbalize::TemplateSet;
use kgprompt_core::StructureKind;
use kgprompt_remote::{CachePolicy, HttpEndpoint, RemoteEndpoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KgFormat {
    /// Hetionet-style JSON document, optionally bzip2-compressed.
    HetionetJson,
    /// One `{"node": ...}` or `{"edge": ...}` object per line.
    EdgeListJsonl,
}

impl KgFormat {
    /// Guesses from the file name: `.jsonl` is an edge list, anything else a dump.
    pub fn infer(path: &Path) -> Self {
        let name = path.file_name().map(|n| n.to_string_lossy().to_lowercase()).unwrap_or_default();
        if name.ends_with(".jsonl") {
            KgFormat::EdgeListJsonl
        } else {
            KgFormat::HetionetJson
        }
    }
}

/// Where the knowledge graph comes from. Exactly one variant may be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KgSource {
    Local {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<KgFormat>,
    },
    Remote {
        #[serde(default)]
        endpoint: RemoteEndpoint,
        cache: PathBuf,
        #[serde(default)]
        cache_policy: CachePolicy,
    },
}

impl KgSource {
    pub fn is_remote(&self) -> bool {
        matches!(self, KgSource::Remote { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    pub seed: u64,
}

impl Default for MockSettings {
    fn default() -> Self {
        MockSettings { seed: DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Mock(MockSettings),
    Http(HttpEndpoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewShotSettings {
    pub k: usize,
    pub stratified: bool,
}

impl Default for FewShotSettings {
    fn default() -> Self {
        FewShotSettings { k: 16, stratified: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSettings {
    pub n_folds: usize,
    pub stratified: bool,
}

impl Default for FoldSettings {
    fn default() -> Self {
        FoldSettings { n_folds: 5, stratified: true }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A single experiment. Relative paths are resolved against the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub kg: KgSource,
    pub structure: StructureKind,
    /// Defaults to the local or remote limits depending on `kg`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<ExtractionLimits>,
    #[serde(default)]
    pub templates: TemplateSet,
    /// Render neighbor contexts with their relation labels.
    #[serde(default)]
    pub labeled_neighbors: bool,
    pub architecture: Architecture,
    #[serde(default)]
    pub label_mapping: LabelMapping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<PromptTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<String>,
    #[serde(default)]
    pub few_shot: FewShotSettings,
    #[serde(default)]
    pub folds: FoldSettings,
    /// Master seed for fold planning, extraction and few-shot sampling.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
    /// JSON array of `{"name": ..., "node": ...}` link overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<PathBuf>,
    #[serde(default)]
    pub std_mode: StdMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&raw).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// `p` relative to the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn limits(&self) -> ExtractionLimits {
        self.limits.unwrap_or_else(|| {
            if self.kg.is_remote() {
                ExtractionLimits::remote()
            } else {
                ExtractionLimits::default()
            }
        })
    }

    pub fn mask_token(&self) -> &str {
        self.mask_token.as_deref().unwrap_or(DEFAULT_MASK)
    }

    pub fn out_dir(&self) -> Option<PathBuf> {
        self.out.as_deref().map(|p| self.resolve(p))
    }

    /// Applies command-line overrides.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>, cache: Option<PathBuf>, offline: bool) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            // command-line paths are relative to the working directory
            self.out = Some(std::path::absolute(&o).unwrap_or(o));
        }
        if let KgSource::Remote { cache: dir, cache_policy, .. } = &mut self.kg {
            if let Some(c) = cache {
                *dir = std::path::absolute(&c).unwrap_or(c);
            }
            if offline {
                *cache_policy = CachePolicy::ReadOnly;
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dataset = self.resolve(&self.dataset);
        if !dataset.is_file() {
            return Err(invalid(format!("dataset {} does not exist", dataset.display())));
        }
        if let Some(o) = &self.overrides {
            let o = self.resolve(o);
            if !o.is_file() {
                return Err(invalid(format!("overrides file {} does not exist", o.display())));
            }
        }
        let limits = self.limits();
        limits.validate().map_err(|e| invalid(e.to_string()))?;
        match &self.kg {
            KgSource::Local { path, .. } => {
                let p = self.resolve(path);
                if !p.is_file() {
                    return Err(invalid(format!("knowledge graph {} does not exist", p.display())));
                }
            }
            KgSource::Remote { endpoint, cache, cache_policy } => {
                endpoint.validate().map_err(|e| invalid(e.to_string()))?;
                if limits.max_hops != 1 {
                    return Err(invalid("a remote knowledge graph is queried one hop deep; set max_hops to 1"));
                }
                let c = self.resolve(cache);
                if *cache_policy == CachePolicy::ReadOnly && !c.is_dir() {
                    return Err(invalid(format!("read-only cache {} does not exist", c.display())));
                }
            }
        }
        if self.structure == StructureKind::MP && limits.max_hops < 2 {
            return Err(invalid("metapaths need max_hops of at least 2"));
        }
        self.templates.validate().map_err(|e| invalid(e.to_string()))?;
        if let Some(t) = &self.prompt_template {
            t.validate().map_err(|e| invalid(e.to_string()))?;
        }
        if self.mask_token().is_empty() {
            return Err(invalid("mask_token must be non-empty"));
        }
        if self.few_shot.k == 0 || (self.few_shot.stratified && self.few_shot.k < 2) {
            return Err(invalid("few_shot.k must be at least 1 (2 when stratified)"));
        }
        if self.folds.n_folds < 2 {
            return Err(invalid("folds.n_folds must be at least 2"));
        }
        if let Some(BackendConfig::Http(h)) = &self.backend {
            h.predict_url().map_err(|e| invalid(e.to_string()))?;
            if h.in_flight == 0 {
                return Err(invalid("http.in_flight must be at least 1"));
            }
        }
        Ok(())
    }

    /// Hash of the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}
