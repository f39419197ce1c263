//! Mirroring a source pull request into a gym: distill the bug pattern,
//! write tests with the test agent, break the code with the mirror agent,
//! then write the problem statement.

mod agents;
mod distill;
mod statement;
mod structure;

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agents::{
    added_test_ids, gen_task_patch, gen_test_patch, mirror_localize, render_files, test_localize, Localization,
    TaskPatches, DIFF_EXAMPLE, FILE_BUDGET,
};
pub use distill::{distill, parse_abstract};
pub use statement::{check_statement, find_leak, gen_problem_statement, grounding_terms, LEAK_MIN_CHARS};
pub use structure::{is_test_path, outline, FileEntry, RepoStructure, Symbol, TestClassifier};

use crate::lm::{prompts, LanguageModelPort, LmError, Sampling};
use crate::model::{AbstractIssue, CandidatePR, GymSpec};
use crate::patchkit::{MemTree, PatchError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MirrorError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error("no usable paths after localization: {0}")]
    LocalizationEmpty(String),
    #[error("test patch edits non-test files: {0:?}")]
    TestScopeViolation(Vec<String>),
    #[error("task patch edits test files: {0:?}")]
    SourceScopeViolation(Vec<String>),
    #[error("problem statement quotes a hidden test line: {0:?}")]
    TestLeakage(String),
    #[error("problem statement names none of: {0}")]
    Ungrounded(String),
    #[error("gym checkout unavailable: {0}")]
    GymUnavailable(String),
}

/// How far an attempt got. Each stage implies the earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Distilled,
    Tested,
    Mirrored,
    Stated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorConfig {
    /// Localization cap per file list.
    pub n: usize,
    /// Samples per candidate.
    pub k: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for MirrorConfig {
    fn default() -> Self {
        MirrorConfig {
            n: 5,
            k: 3,
            temperature: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorAttempt {
    pub candidate: CandidatePR,
    pub gym: GymSpec,
    pub sampling_index: usize,
    pub seed: u64,
    pub stage_reached: Option<Stage>,
    #[serde(rename = "abstract", default, skip_serializing_if = "Option::is_none")]
    pub abstract_issue: Option<AbstractIssue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_patch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_patch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix_patch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_statement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl MirrorAttempt {
    pub fn is_complete(&self) -> bool {
        self.stage_reached == Some(Stage::Stated)
    }
}

/// Source of a gym's repository snapshot at its base commit.
pub trait CheckoutSource: Send + Sync {
    fn checkout(&self, gym: &GymSpec) -> Result<MemTree, MirrorError>;
}

/// A local directory. Git repositories are cloned and checked out at the
/// gym's base commit; anything else is snapshotted as-is.
#[derive(Debug, Clone)]
pub struct DirCheckout {
    pub root: PathBuf,
}

impl DirCheckout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirCheckout { root: root.into() }
    }
}

fn git(args: &[&str], cwd: Option<&Path>) -> Result<(), MirrorError> {
    let mut cmd = Command::new("git");
    if let Some(d) = cwd {
        cmd.current_dir(d);
    }
    let out = cmd
        .args(args)
        .output()
        .map_err(|e| MirrorError::GymUnavailable(format!("git: {e}")))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(MirrorError::GymUnavailable(format!(
            "git {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )))
    }
}

impl CheckoutSource for DirCheckout {
    fn checkout(&self, gym: &GymSpec) -> Result<MemTree, MirrorError> {
        if !self.root.is_dir() {
            return Err(MirrorError::GymUnavailable(format!("{} is not a directory", self.root.display())));
        }
        let snapshot = |p: &Path| MemTree::from_dir(p).map_err(|e| MirrorError::GymUnavailable(format!("{}: {e}", p.display())));
        if !self.root.join(".git").exists() {
            return snapshot(&self.root);
        }
        let tmp = tempfile::tempdir().map_err(|e| MirrorError::GymUnavailable(e.to_string()))?;
        let dest = tmp.path().join("checkout");
        let (src, dst) = (self.root.to_string_lossy(), dest.to_string_lossy());
        git(&["clone", "--quiet", "--no-checkout", &src, &dst], None)?;
        git(&["checkout", "--quiet", &gym.base_commit], Some(&dest))?;
        snapshot(&dest)
    }
}

/// An in-memory snapshot, for tests and for callers that already hold one.
impl CheckoutSource for MemTree {
    fn checkout(&self, _gym: &GymSpec) -> Result<MemTree, MirrorError> {
        Ok(self.clone())
    }
}

/// One attempt through all four stages. Failures are recorded on the
/// attempt, never raised.
pub fn mirror_once(
    candidate: &CandidatePR,
    gym: &GymSpec,
    base: &MemTree,
    lm: &dyn LanguageModelPort,
    cfg: &MirrorConfig,
    sampling_index: usize,
) -> MirrorAttempt {
    let seed = cfg.seed.wrapping_add(sampling_index as u64);
    let mut att = MirrorAttempt {
        candidate: candidate.clone(),
        gym: gym.clone(),
        sampling_index,
        seed,
        stage_reached: None,
        abstract_issue: None,
        test_patch: None,
        task_patch: None,
        fix_patch: None,
        problem_statement: None,
        error: None,
        diagnostics: Vec::new(),
    };
    if let Err(e) = stages(&mut att, base, lm, cfg, Sampling::seeded(cfg.temperature, seed)) {
        log::info!("{} sample {sampling_index}: {e}", candidate.key());
        att.error = Some(e.to_string());
    }
    att
}

fn stages(
    att: &mut MirrorAttempt,
    base: &MemTree,
    lm: &dyn LanguageModelPort,
    cfg: &MirrorConfig,
    sampling: Sampling,
) -> Result<(), MirrorError> {
    let classifier = TestClassifier::new(&att.gym.test_file_overrides);
    let structure = RepoStructure::build(base, &classifier);

    let abstract_issue = distill(&att.candidate, lm, sampling)?;
    att.abstract_issue = Some(abstract_issue.clone());
    att.stage_reached = Some(Stage::Distilled);

    let loc = test_localize(&abstract_issue, &structure, cfg.n, lm, sampling)?;
    att.diagnostics.extend(loc.diagnostics.iter().cloned());
    let test_patch = gen_test_patch(&abstract_issue, base, &loc, &classifier, lm, sampling)?;
    att.test_patch = Some(test_patch.render());
    att.stage_reached = Some(Stage::Tested);

    let mloc = mirror_localize(&abstract_issue, &structure, &test_patch, cfg.n, lm, sampling)?;
    att.diagnostics.extend(mloc.diagnostics.iter().cloned());
    let tests = added_test_ids(base, &test_patch);
    let tp = gen_task_patch(
        &abstract_issue,
        base,
        &test_patch,
        &mloc.source_files,
        &tests,
        att.gym.language,
        &classifier,
        lm,
        sampling,
    )?;
    att.task_patch = Some(tp.task_patch.render());
    att.fix_patch = Some(tp.fix_patch.render());
    att.stage_reached = Some(Stage::Mirrored);

    let statement = gen_problem_statement(
        &att.candidate.combined_body(),
        &test_patch,
        &tp.fix_patch,
        &prompts::FEWSHOT,
        lm,
        sampling,
    )?;
    att.problem_statement = Some(statement);
    att.stage_reached = Some(Stage::Stated);
    Ok(())
}

/// `k` independent attempts with seeds `cfg.seed + i`.
pub fn run_mirror(
    candidate: &CandidatePR,
    gym: &GymSpec,
    checkout: &dyn CheckoutSource,
    lm: &dyn LanguageModelPort,
    cfg: &MirrorConfig,
) -> Result<Vec<MirrorAttempt>, MirrorError> {
    if cfg.k == 0 {
        return Ok(Vec::new());
    }
    let base = checkout.checkout(gym)?;
    Ok((0..cfg.k).map(|i| mirror_once(candidate, gym, &base, lm, cfg, i)).collect())
}
