//! Pipeline configuration, read from a TOML file. Relative paths resolve
//! against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mirror_core::gymrun::{DockerExecutor, ExecutionPort, FakeGymExecutor, ProcessExecutor};
use mirror_core::github::{FixtureGitHub, GitHubPort, HttpGitHub, RecordingGitHub, Throttled, TokenBucket};
use mirror_core::lm::{HttpLm, HttpLmConfig, LanguageModelPort, ScriptedLm};
use mirror_core::mirror::MirrorConfig;

use crate::CliError;

/// Timestamp written into instances when the model is scripted.
pub const MOCK_CREATED_AT: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmMode {
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    pub mode: LmMode,
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: String,
}

fn default_model() -> String {
    "gpt-4.1".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GhMode {
    Fixture,
    Live,
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GitHubSection {
    pub mode: GhMode,
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    #[serde(default = "default_rps")]
    pub requests_per_sec: f64,
    #[serde(default = "default_burst")]
    pub burst: u32,
    /// Skip keyword search and mine these repositories.
    #[serde(default)]
    pub repos: Vec<String>,
}

fn default_rps() -> f64 {
    1.0
}
fn default_burst() -> u32 {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Fake,
    Process,
    Docker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecSection {
    pub mode: ExecMode,
    #[serde(default = "default_docker")]
    pub docker_binary: String,
}

fn default_docker() -> String {
    "docker".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorSection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_n() -> usize {
    5
}
fn default_k() -> usize {
    3
}
fn default_temperature() -> f64 {
    1.0
}

impl Default for MirrorSection {
    fn default() -> Self {
        MirrorSection {
            n: default_n(),
            k: default_k(),
            temperature: default_temperature(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// JSON array of gym specs.
    pub gyms: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Fixed creation timestamp; defaults to a constant in scripted mode
    /// and to the current time otherwise.
    #[serde(default)]
    pub created_at: Option<String>,
    pub lm: LmSection,
    pub github: GitHubSection,
    pub exec: ExecSection,
    #[serde(default)]
    pub mirror: MirrorSection,
    /// gym_id → repository checkout directory.
    pub checkouts: BTreeMap<String, PathBuf>,
}

fn default_workers() -> usize {
    4
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        resolve(base_dir, &mut cfg.gyms);
        resolve(base_dir, &mut cfg.output_dir);
        if let Some(s) = cfg.lm.script.as_mut() {
            resolve(base_dir, s);
        }
        if let Some(f) = cfg.github.fixtures.as_mut() {
            resolve(base_dir, f);
        }
        for p in cfg.checkouts.values_mut() {
            resolve(base_dir, p);
        }
        if cfg.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn mirror_config(&self) -> MirrorConfig {
        MirrorConfig {
            n: self.mirror.n,
            k: self.mirror.k,
            temperature: self.mirror.temperature,
            seed: self.seed,
        }
    }

    pub fn created_at(&self) -> String {
        match (&self.created_at, self.lm.mode) {
            (Some(t), _) => t.clone(),
            (None, LmMode::Scripted) => MOCK_CREATED_AT.into(),
            (None, LmMode::Http) => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn language_model(&self) -> Result<Box<dyn LanguageModelPort>, CliError> {
        match self.lm.mode {
            LmMode::Scripted => {
                let path = self
                    .lm
                    .script
                    .as_ref()
                    .ok_or_else(|| CliError::Config("lm.script is required in scripted mode".into()))?;
                if !path.is_file() {
                    return Err(CliError::MissingInput(path.clone()));
                }
                Ok(Box::new(ScriptedLm::from_file(path)?))
            }
            LmMode::Http => Ok(Box::new(HttpLm::new(HttpLmConfig::from_env(&self.lm.model)?))),
        }
    }

    pub fn github(&self) -> Result<Box<dyn GitHubPort>, CliError> {
        let fixtures = || {
            self.github
                .fixtures
                .clone()
                .ok_or_else(|| CliError::Config("github.fixtures is required for fixture and record modes".into()))
        };
        let bucket = || TokenBucket::new(self.github.burst, self.github.requests_per_sec);
        let max_wait = std::time::Duration::from_secs(3600);
        Ok(match self.github.mode {
            GhMode::Fixture => {
                let dir = fixtures()?;
                if !dir.is_dir() {
                    return Err(CliError::MissingInput(dir));
                }
                Box::new(FixtureGitHub::new(dir))
            }
            GhMode::Live => Box::new(Throttled {
                inner: HttpGitHub::from_env(),
                bucket: bucket(),
                max_wait,
            }),
            GhMode::Record => Box::new(RecordingGitHub::new(
                Throttled {
                    inner: HttpGitHub::from_env(),
                    bucket: bucket(),
                    max_wait,
                },
                fixtures()?,
            )),
        })
    }

    pub fn executor(&self) -> Box<dyn ExecutionPort> {
        match self.exec.mode {
            ExecMode::Fake => Box::new(FakeGymExecutor::toy()),
            ExecMode::Process => Box::new(ProcessExecutor::default()),
            ExecMode::Docker => Box::new(DockerExecutor {
                binary: self.exec.docker_binary.clone(),
                ..Default::default()
            }),
        }
    }

    pub fn checkout_dir(&self, gym_id: &str) -> Result<&Path, CliError> {
        self.checkouts
            .get(gym_id)
            .map(PathBuf::as_path)
            .ok_or_else(|| CliError::Config(format!("no checkout configured for gym {gym_id}")))
    }
}
