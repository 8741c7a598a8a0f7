//! Application settings, read from one TOML file. Backend secrets never live
//! here: a backend names the environment variable that holds its key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::scripted_teacher;
use crate::evallm::EvalConfig;
use crate::gateway::BackendConfig;
use crate::prompt::{PromptError, PromptForge, TemplateSet, DEFAULT_SUGGESTION_COUNT};
use crate::recommend::scripted_student;

pub const SCRIPTED_TEACHER: &str = "scripted-teacher";
pub const SCRIPTED_STUDENT: &str = "scripted-student";

/// Share of each hardness class that goes to training. 2938 training
/// triples against 1800 held out is roughly 0.62.
pub const DEFAULT_TRAIN_RATIO: f64 = 0.62;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("invalid setting: {0}")]
    Invalid(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub data_dir: PathBuf,
    /// Corpus index used by `evaluate` and `enrich` when none is given.
    pub corpus: Option<PathBuf>,
    pub listen: String,
    pub study_seed: u64,
    /// Optional JSONL of study samples loaded when the service starts.
    pub study_pool: Option<PathBuf>,
    pub split_seed: u64,
    pub train_ratio: f64,
    pub suggestion_count: usize,
    pub templates_dir: Option<PathBuf>,
    pub eval: EvalConfig,
    pub backends: BTreeMap<String, BackendConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            data_dir: PathBuf::from("data"),
            corpus: None,
            listen: "127.0.0.1:8080".into(),
            study_seed: 7,
            study_pool: None,
            split_seed: 42,
            train_ratio: DEFAULT_TRAIN_RATIO,
            suggestion_count: DEFAULT_SUGGESTION_COUNT,
            templates_dir: None,
            eval: EvalConfig::default(),
            backends: BTreeMap::new(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(ConfigError::Invalid(format!("train_ratio {} not in (0, 1)", self.train_ratio)));
        }
        if !(1..=5).contains(&self.suggestion_count) {
            return Err(ConfigError::Invalid(format!("suggestion_count {} not in 1..=5", self.suggestion_count)));
        }
        for (name, b) in &self.backends {
            b.validate()
                .map_err(|e| ConfigError::Invalid(format!("backend `{name}`: {e}")))?;
        }
        Ok(())
    }

    /// Looks a backend up by tag. The two scripted backends are always there
    /// unless the file overrides them. Backends without a cache directory
    /// cache under the data directory.
    pub fn backend(&self, tag: &str) -> Result<BackendConfig, ConfigError> {
        let mut cfg = match self.backends.get(tag) {
            Some(b) => b.clone(),
            None if tag == SCRIPTED_TEACHER => scripted_teacher(),
            None if tag == SCRIPTED_STUDENT => scripted_student(),
            None => return Err(ConfigError::UnknownBackend(tag.into())),
        };
        if cfg.cache_dir.is_none() && !cfg.is_mock() {
            cfg.cache_dir = Some(self.data_dir.join("cache").join(tag));
        }
        Ok(cfg)
    }

    pub fn backend_tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = self.backends.keys().cloned().collect();
        for t in [SCRIPTED_STUDENT, SCRIPTED_TEACHER] {
            if !self.backends.contains_key(t) {
                tags.push(t.into());
            }
        }
        tags.sort();
        tags
    }

    pub fn forge(&self) -> Result<PromptForge, ConfigError> {
        let templates = match &self.templates_dir {
            Some(dir) => TemplateSet::from_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        Ok(PromptForge::new(templates, self.suggestion_count)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let cfg = AppConfig::from_toml("", "x").unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(cfg.backend_tags(), vec![SCRIPTED_STUDENT, SCRIPTED_TEACHER]);
        assert_eq!(cfg.backend(SCRIPTED_TEACHER).unwrap().model_name, SCRIPTED_TEACHER);
        assert!(matches!(cfg.backend("gpt"), Err(ConfigError::UnknownBackend(_))));
    }

    #[test]
    fn backends_from_toml() {
        let cfg = AppConfig::from_toml(
            r#"
data_dir = "/tmp/v"
train_ratio = 0.5
[eval]
syntax_mode = "lenient"
[backends.student]
base_url = "http://gpu:8000/v1"
model_name = "vrecs-7b"
api_key_ref = "VRECS_KEY"
"#,
            "x",
        )
        .unwrap();
        let b = cfg.backend("student").unwrap();
        assert_eq!(b.model_name, "vrecs-7b");
        assert_eq!(b.api_key_ref.as_deref(), Some("VRECS_KEY"));
        assert_eq!(b.cache_dir, Some(PathBuf::from("/tmp/v/cache/student")));
        assert_eq!(cfg.eval.syntax_mode, crate::evallm::SyntaxMode::Lenient);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(AppConfig::from_toml("train_ratio = 1.5", "x"), Err(ConfigError::Invalid(_))));
        assert!(matches!(AppConfig::from_toml("suggestion_count = 9", "x"), Err(ConfigError::Invalid(_))));
        assert!(matches!(AppConfig::from_toml("api_key = \"sk\"", "x"), Err(ConfigError::Parse { .. })));
    }
}
