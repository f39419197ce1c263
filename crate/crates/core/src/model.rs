//! Shared domain records and their JSON-lines wire format.
//!
//! Every pipeline stage exchanges these values through files. Task
//! instances are written one per line; the gym registry is a JSON array.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default wall-clock budget for one full test-suite run.
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(300);
/// Default memory budget for one full test-suite run (1 GiB).
pub const DEFAULT_MEMORY_LIMIT: u64 = 1 << 30;

static COMMIT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[0-9a-f]{40}$").unwrap());

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record is not valid UTF-8: {0}")]
    EncodingError(String),
    #[error("missing required field `{0}`")]
    SchemaError(String),
    #[error("malformed record: {0}")]
    ParseError(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    Python,
    Rust,
    Go,
    JavaScript,
    Other,
}

impl Language {
    pub const DATASET: [Language; 4] = [
        Language::Python,
        Language::Rust,
        Language::Go,
        Language::JavaScript,
    ];
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Language::Python => "Python",
            Language::Rust => "Rust",
            Language::Go => "Go",
            Language::JavaScript => "JavaScript",
            Language::Other => "Other",
        };
        f.write_str(s)
    }
}

/// Key into the gymrun parser registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogParserId {
    Pytest,
    CargoTest,
    GoTest,
    Jest,
}

impl fmt::Display for LogParserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LogParserId::Pytest => "pytest",
            LogParserId::CargoTest => "cargo_test",
            LogParserId::GoTest => "go_test",
            LogParserId::Jest => "jest",
        };
        f.write_str(s)
    }
}

/// Status of one test in one run. `None` means the test is absent from the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestStatus {
    #[serde(rename = "PASSED")]
    Passed,
    #[serde(rename = "FAILED")]
    Failed,
    #[serde(rename = "SKIPPED")]
    Skipped,
    #[serde(rename = "NONE")]
    None,
}

impl TestStatus {
    pub const ALL: [TestStatus; 4] = [
        TestStatus::Passed,
        TestStatus::Failed,
        TestStatus::Skipped,
        TestStatus::None,
    ];

    pub fn short(self) -> &'static str {
        match self {
            TestStatus::Passed => "P",
            TestStatus::Failed => "F",
            TestStatus::Skipped => "S",
            TestStatus::None => "NONE",
        }
    }
}

impl fmt::Display for TestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TestStatus::Passed => "PASSED",
            TestStatus::Failed => "FAILED",
            TestStatus::Skipped => "SKIPPED",
            TestStatus::None => "NONE",
        };
        f.write_str(s)
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs(u64::deserialize(d)?))
    }
}

fn default_time_limit() -> Duration {
    DEFAULT_TIME_LIMIT
}

fn default_memory_limit() -> u64 {
    DEFAULT_MEMORY_LIMIT
}

/// Executable environment descriptor for one repository snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GymSpec {
    pub gym_id: String,
    pub repo: String,
    pub base_commit: String,
    pub language: Language,
    pub image_ref: String,
    pub test_command: String,
    pub log_parser_id: LogParserId,
    #[serde(rename = "time_limit_secs", with = "secs", default = "default_time_limit")]
    pub time_limit: Duration,
    #[serde(rename = "memory_limit_bytes", default = "default_memory_limit")]
    pub memory_limit: u64,
    /// Paths (exact or `dir/` prefixes) that count as test files regardless
    /// of the naming heuristics. Needed where tests live beside the code.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_file_overrides: Vec<String>,
}

impl GymSpec {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.gym_id.trim().is_empty() {
            return Err(RecordError::Invalid("gym_id is empty".into()));
        }
        validate_repo(&self.repo)?;
        if !COMMIT_RE.is_match(&self.base_commit) {
            return Err(RecordError::Invalid(format!(
                "base_commit `{}` is not a 40-hex commit id",
                self.base_commit
            )));
        }
        if self.time_limit.is_zero() {
            return Err(RecordError::Invalid("time_limit must be positive".into()));
        }
        if self.memory_limit == 0 {
            return Err(RecordError::Invalid("memory_limit must be positive".into()));
        }
        Ok(())
    }
}

pub fn validate_repo(repo: &str) -> Result<(), RecordError> {
    match repo.split_once('/') {
        Some((owner, name)) if !owner.is_empty() && !name.is_empty() && !name.contains('/') => {
            Ok(())
        }
        _ => Err(RecordError::Invalid(format!("repo `{repo}` is not owner/name"))),
    }
}

/// Reads a gym registry file (a JSON array of [`GymSpec`]) and validates every entry.
pub fn load_gym_registry(path: &Path) -> Result<Vec<GymSpec>, RecordError> {
    let text = std::fs::read_to_string(path)?;
    let gyms: Vec<GymSpec> =
        serde_json::from_str(&text).map_err(|e| RecordError::ParseError(e.to_string()))?;
    for g in &gyms {
        g.validate()?;
    }
    Ok(gyms)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason")]
pub enum RuleVerdict {
    Pass,
    Fail(String),
}

impl RuleVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, RuleVerdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmVerdict {
    pub accepted: bool,
    pub reason: String,
}

/// A mined pull request with its linked issues, diff and filter verdicts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePR {
    pub source_repo: String,
    pub pr_number: u64,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub linked_issue_bodies: Vec<String>,
    pub diff: String,
    pub merged: bool,
    pub closed: bool,
    pub edits_code_files: bool,
    pub rule_verdict: RuleVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm_verdict: Option<LmVerdict>,
}

impl CandidatePR {
    /// PR body followed by every linked issue body. This is what prompts
    /// receive in their `{body}` slot.
    pub fn combined_body(&self) -> String {
        let mut out = self.body.trim_end().to_string();
        for issue in &self.linked_issue_bodies {
            if !out.is_empty() {
                out.push_str("\n\n");
            }
            out.push_str(issue.trim_end());
        }
        out
    }

    /// Stable key used for checkpoint file names and deterministic merges.
    pub fn key(&self) -> String {
        format!("{}__{}", self.source_repo.replace('/', "__"), self.pr_number)
    }

    pub fn is_accepted(&self) -> bool {
        self.rule_verdict.is_pass() && self.lm_verdict.as_ref().is_some_and(|v| v.accepted)
    }
}

/// Repository-agnostic description of the bug pattern behind a PR.
///
/// Sections the model left out are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AbstractIssue {
    pub issue_type: Option<String>,
    pub core_problem: Option<String>,
    pub technical_context: Option<String>,
    pub symptom: Option<String>,
    pub root_cause_pattern: Option<String>,
    pub impact_scope: Option<String>,
    pub raw_markdown: String,
}

impl AbstractIssue {
    pub const SECTIONS: [&'static str; 6] = [
        "Issue Type",
        "Core Problem",
        "Technical Context",
        "Symptom",
        "Root Cause Pattern",
        "Impact Scope",
    ];

    pub fn missing_sections(&self) -> Vec<&'static str> {
        let fields = [
            &self.issue_type,
            &self.core_problem,
            &self.technical_context,
            &self.symptom,
            &self.root_cause_pattern,
            &self.impact_scope,
        ];
        Self::SECTIONS
            .iter()
            .zip(fields)
            .filter(|(_, f)| f.is_none())
            .map(|(name, _)| *name)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub source_repo: String,
    pub pr_number: u64,
}

/// A verified mirrored task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub instance_id: String,
    #[serde(flatten)]
    pub gym: GymSpec,
    #[serde(flatten)]
    pub source: SourceRef,
    pub problem_statement: String,
    pub task_patch: String,
    pub test_patch: String,
    pub fix_patch: String,
    pub f2p_tests: BTreeSet<String>,
    pub p2p_tests: BTreeSet<String>,
    pub created_at: String,
}

/// Builds the `{repo}__{gym_id}-{seq}` identifier; the slash in the repo becomes `__`.
pub fn instance_id(repo: &str, gym_id: &str, seq: usize) -> String {
    format!("{}__{}-{}", repo.replace('/', "__"), gym_id, seq)
}

const REQUIRED_FIELDS: [&str; 17] = [
    "instance_id",
    "gym_id",
    "repo",
    "base_commit",
    "language",
    "image_ref",
    "test_command",
    "log_parser_id",
    "source_repo",
    "pr_number",
    "problem_statement",
    "task_patch",
    "test_patch",
    "fix_patch",
    "f2p_tests",
    "p2p_tests",
    "created_at",
];

/// Serializes one instance as a single JSON line (no trailing newline).
pub fn serialize_instance(inst: &TaskInstance) -> Result<String, RecordError> {
    serde_json::to_string(inst).map_err(|e| RecordError::EncodingError(e.to_string()))
}

/// Parses one JSONL record. Unknown fields are ignored.
pub fn deserialize_instance(line: &str) -> Result<TaskInstance, RecordError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| RecordError::ParseError(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| RecordError::ParseError("record is not a JSON object".into()))?;
    if let Some(missing) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(RecordError::SchemaError((*missing).to_string()));
    }
    serde_json::from_value(value).map_err(|e| RecordError::ParseError(e.to_string()))
}

pub fn deserialize_instance_bytes(bytes: &[u8]) -> Result<TaskInstance, RecordError> {
    let line = std::str::from_utf8(bytes).map_err(|e| RecordError::EncodingError(e.to_string()))?;
    deserialize_instance(line.trim_end_matches(['\n', '\r']))
}

/// Serializes a corpus sorted by `instance_id`, one line per instance.
pub fn write_instances(instances: &[TaskInstance]) -> Result<String, RecordError> {
    let mut sorted: Vec<&TaskInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut out = String::new();
    for inst in sorted {
        out.push_str(&serialize_instance(inst)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_instances(text: &str) -> Result<Vec<TaskInstance>, RecordError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(deserialize_instance)
        .collect()
}

/// Generic JSONL helpers for the other record types.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String, RecordError> {
    let mut out = String::new();
    for item in items {
        out.push_str(
            &serde_json::to_string(item).map_err(|e| RecordError::EncodingError(e.to_string()))?,
        );
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, RecordError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RecordError::ParseError(e.to_string())))
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn gym() -> GymSpec {
        GymSpec {
            gym_id: "toy-py".into(),
            repo: "acme/toyapp".into(),
            base_commit: "0123456789abcdef0123456789abcdef01234567".into(),
            language: Language::Python,
            image_ref: "toyapp:latest".into(),
            test_command: "pytest -rA".into(),
            log_parser_id: LogParserId::Pytest,
            time_limit: DEFAULT_TIME_LIMIT,
            memory_limit: DEFAULT_MEMORY_LIMIT,
            test_file_overrides: vec![],
        }
    }

    pub fn instance(seq: usize) -> TaskInstance {
        TaskInstance {
            instance_id: instance_id("acme/toyapp", "toy-py", seq),
            gym: gym(),
            source: SourceRef {
                source_repo: "other/webapp".into(),
                pr_number: 17,
            },
            problem_statement: "Registering with bad data returns 500".into(),
            task_patch: "--- a/src/app.py\n+++ b/src/app.py\n@@ -1 +1 @@\n-a\n+b\n".into(),
            test_patch: String::new(),
            fix_patch: "--- a/src/app.py\n+++ b/src/app.py\n@@ -1 +1 @@\n-b\n+a\n".into(),
            f2p_tests: ["tests/test_app.py::test_x".to_string()].into(),
            p2p_tests: BTreeSet::new(),
            created_at: "1970-01-01T00:00:00Z".into(),
        }
    }
}
