//! Execution-based acceptance: sanity checks, status transitions across the
//! three logs, the four acceptance rules and failure categorization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gymrun::{LogState, StatusMap, ThreeLogs};
use crate::model::{Language, TestStatus};
use crate::patchkit::{apply_patch, FileTree, Fuzz, Patch, PatchError};

use TestStatus::{Failed as F, None as N, Passed as P, Skipped as S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SanityStage {
    Task,
    Test,
    Fix,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{stage:?} patch does not apply: {source}")]
pub struct SanityFailure {
    pub stage: SanityStage,
    pub source: PatchError,
}

/// Checks that task_patch applies to the base tree and that test_patch and
/// fix_patch each apply on top of it. Returns warnings for degenerate input.
pub fn sanity_check<T: FileTree + ?Sized>(
    base: &T,
    task_patch: &Patch,
    test_patch: &Patch,
    fix_patch: &Patch,
) -> Result<Vec<String>, SanityFailure> {
    let mut warnings = Vec::new();
    if task_patch.is_empty() {
        warnings.push("task_patch is empty; test and fix patches checked against the base".into());
    }
    let fail = |stage| move |source| SanityFailure { stage, source };
    let after_task = apply_patch(base, task_patch, Fuzz::STRICT).map_err(fail(SanityStage::Task))?;
    apply_patch(&after_task, test_patch, Fuzz::STRICT).map_err(fail(SanityStage::Test))?;
    apply_patch(&after_task, fix_patch, Fuzz::STRICT).map_err(fail(SanityStage::Fix))?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(warnings)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransitionTriple {
    pub test_id: String,
    pub s_run: TestStatus,
    pub s_test: TestStatus,
    pub s_fix: TestStatus,
}

impl TransitionTriple {
    pub fn new(test_id: impl Into<String>, s_run: TestStatus, s_test: TestStatus, s_fix: TestStatus) -> Self {
        TransitionTriple {
            test_id: test_id.into(),
            s_run,
            s_test,
            s_fix,
        }
    }

    pub fn statuses(&self) -> (TestStatus, TestStatus, TestStatus) {
        (self.s_run, self.s_test, self.s_fix)
    }
}

impl fmt::Display for TransitionTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: <{},{},{}>",
            self.test_id,
            self.s_run.short(),
            self.s_test.short(),
            self.s_fix.short()
        )
    }
}

/// One triple per test id seen in any of the maps, ordered by id.
pub fn classify_transitions(run: &StatusMap, test: &StatusMap, fix: &StatusMap) -> Vec<TransitionTriple> {
    let ids: BTreeSet<&String> = run.tests.keys().chain(test.tests.keys()).chain(fix.tests.keys()).collect();
    ids.into_iter()
        .map(|id| TransitionTriple::new(id.clone(), run.get(id), test.get(id), fix.get(id)))
        .collect()
}

/// Rule 1: allowed (run, test) pairs.
pub fn rule1_pair_ok(s_run: TestStatus, s_test: TestStatus) -> bool {
    matches!((s_run, s_test), (P, P) | (F, F) | (S, S) | (N, F))
}

/// Rule 3: the fix must not break a test that was stable before.
pub fn rule3_regression(t: (TestStatus, TestStatus, TestStatus)) -> bool {
    matches!(t, (P, P, F) | (S, S, F))
}

/// Rule 4 allow-set: rule 1 holds and (test, fix) is one of PP, FP, FF, SS.
pub fn rule4_normal(t: (TestStatus, TestStatus, TestStatus)) -> bool {
    rule1_pair_ok(t.0, t.1) && matches!((t.1, t.2), (P, P) | (F, P) | (F, F) | (S, S))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected {
        rule: u8,
        details: String,
        offending: Vec<TransitionTriple>,
    },
    Ambiguous {
        details: String,
        offending: Vec<TransitionTriple>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub outcome: Outcome,
    pub f2p_tests: BTreeSet<String>,
    pub p2p_tests: BTreeSet<String>,
    /// F2P tests that were already failing before test_patch (`<F,F,P>`).
    pub preexisting_f2p: BTreeSet<String>,
}

impl Verdict {
    fn bare(outcome: Outcome) -> Self {
        Verdict {
            outcome,
            f2p_tests: BTreeSet::new(),
            p2p_tests: BTreeSet::new(),
            preexisting_f2p: BTreeSet::new(),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.outcome == Outcome::Accepted
    }

    pub fn rejected_rule(&self) -> Option<u8> {
        match self.outcome {
            Outcome::Rejected { rule, .. } => Some(rule),
            _ => None,
        }
    }

    pub fn is_ambiguous(&self) -> bool {
        matches!(self.outcome, Outcome::Ambiguous { .. })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdicts serialize")
    }
}

fn sorted(mut v: Vec<TransitionTriple>) -> Vec<TransitionTriple> {
    v.sort();
    v
}

/// The four acceptance rules. The lowest-numbered violated rule is reported.
pub fn apply_rules(triples: &[TransitionTriple]) -> Verdict {
    let offending = |pred: &dyn Fn(&TransitionTriple) -> bool| -> Vec<TransitionTriple> {
        sorted(triples.iter().filter(|t| pred(t)).cloned().collect())
    };

    let bad = offending(&|t| !rule1_pair_ok(t.s_run, t.s_test));
    if !bad.is_empty() {
        return Verdict::bare(Outcome::Rejected {
            rule: 1,
            details: "run/test transition outside the permitted set".into(),
            offending: bad,
        });
    }
    if !triples.iter().any(|t| (t.s_test, t.s_fix) == (F, P)) {
        return Verdict::bare(Outcome::Rejected {
            rule: 2,
            details: "no test goes from FAILED to PASSED".into(),
            offending: Vec::new(),
        });
    }
    let bad = offending(&|t| rule3_regression(t.statuses()));
    if !bad.is_empty() {
        return Verdict::bare(Outcome::Rejected {
            rule: 3,
            details: "fix_patch breaks a previously stable test".into(),
            offending: bad,
        });
    }
    let bad = offending(&|t| !rule4_normal(t.statuses()));
    if !bad.is_empty() {
        return Verdict::bare(Outcome::Ambiguous {
            details: "abnormal transition".into(),
            offending: bad,
        });
    }
    let ids = |pred: &dyn Fn(&TransitionTriple) -> bool| -> BTreeSet<String> {
        triples.iter().filter(|t| pred(t)).map(|t| t.test_id.clone()).collect()
    };
    Verdict {
        outcome: Outcome::Accepted,
        f2p_tests: ids(&|t| (t.s_test, t.s_fix) == (F, P)),
        p2p_tests: ids(&|t| t.statuses() == (P, P, P)),
        preexisting_f2p: ids(&|t| t.statuses() == (F, F, P)),
    }
}

/// Verdict for a full attempt: a timeout or OOM in any state is Ambiguous
/// whatever the parsed statuses say.
pub fn judge(logs: &ThreeLogs) -> Verdict {
    let abnormal: Vec<String> = LogState::ALL
        .iter()
        .filter(|&&s| logs.get(s).status.meta.is_abnormal())
        .map(|&s| {
            let m = &logs.get(s).status.meta;
            let why = if m.timed_out { "timed out" } else { "ran out of memory" };
            format!("{} {why}", s.file_name())
        })
        .collect();
    if !abnormal.is_empty() {
        return Verdict::bare(Outcome::Ambiguous {
            details: abnormal.join("; "),
            offending: Vec::new(),
        });
    }
    apply_rules(&classify_transitions(&logs.run.status, &logs.test.status, &logs.fix.status))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCategory {
    CompileSyntax,
    Semantic,
}

static BUILD_FAILURE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?m)SyntaxError|IndentationError|^error\[E\d+\]|error: could not compile|\[build failed\]|Test suite failed to run|errors? during collection",
    )
    .unwrap()
});

pub fn has_build_failure(raw_log: &str) -> bool {
    BUILD_FAILURE.is_match(raw_log)
}

/// CompileSyntax when any state's log yields zero parsed tests or shows a
/// build failure; Semantic otherwise.
pub fn categorize_failure(states: &[(&str, &StatusMap)]) -> FailureCategory {
    let broken = states
        .iter()
        .any(|(log, status)| status.is_empty() || has_build_failure(log));
    if broken {
        FailureCategory::CompileSyntax
    } else {
        FailureCategory::Semantic
    }
}

pub fn categorize_logs(logs: &ThreeLogs) -> FailureCategory {
    let states: Vec<(&str, &StatusMap)> = LogState::ALL
        .iter()
        .map(|&s| (logs.get(s).raw_log.as_str(), &logs.get(s).status))
        .collect();
    categorize_failure(&states)
}

/// Outcome of one attempt for yield accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttemptResult {
    Success,
    Failure(FailureCategory),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldRow {
    pub label: String,
    pub attempts: usize,
    pub yield_pct: f64,
    pub compile_syntax_pct: f64,
    pub semantic_pct: f64,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        f64::NAN
    } else {
        (1000.0 * n as f64 / d as f64).round() / 10.0
    }
}

fn row(label: String, results: &[AttemptResult]) -> YieldRow {
    let count = |r: AttemptResult| results.iter().filter(|&&x| x == r).count();
    YieldRow {
        label,
        attempts: results.len(),
        yield_pct: pct(count(AttemptResult::Success), results.len()),
        compile_syntax_pct: pct(count(AttemptResult::Failure(FailureCategory::CompileSyntax)), results.len()),
        semantic_pct: pct(count(AttemptResult::Failure(FailureCategory::Semantic)), results.len()),
    }
}

/// Per-language rows followed by an overall row.
pub fn yield_table(results: &[(Language, AttemptResult)]) -> Vec<YieldRow> {
    let mut by_lang: BTreeMap<String, Vec<AttemptResult>> = BTreeMap::new();
    let order: Vec<Language> = Language::DATASET
        .iter()
        .copied()
        .chain([Language::Other])
        .filter(|l| results.iter().any(|(x, _)| x == l))
        .collect();
    for (lang, r) in results {
        by_lang.entry(lang.to_string()).or_default().push(*r);
    }
    let mut rows: Vec<YieldRow> = order
        .iter()
        .map(|l| row(l.to_string(), &by_lang[&l.to_string()]))
        .collect();
    let all: Vec<AttemptResult> = results.iter().map(|(_, r)| *r).collect();
    rows.push(row("Overall".into(), &all));
    rows
}

pub fn render_yield_table(rows: &[YieldRow]) -> String {
    let mut out = format!(
        "{:<12} {:>9} {:>10} {:>15} {:>10}\n",
        "Language", "Attempts", "Yield(%)", "Compile/Syntax", "Semantic"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>9} {:>10.1} {:>15.1} {:>10.1}\n",
            r.label, r.attempts, r.yield_pct, r.compile_syntax_pct, r.semantic_pct
        ));
    }
    out
}
