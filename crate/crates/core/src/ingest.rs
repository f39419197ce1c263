//! Candidate mining: keyword search for similar repositories, pull request
//! collection with linked issues, and the rule and model filters.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::github::{GhError, GitHubPort, RepoSearchResult};
use crate::lm::{complete_with_retries, last_fenced, prompts, render_template, LanguageModelPort, LmError, Sampling, DEFAULT_ATTEMPTS};
use crate::model::{CandidatePR, LmVerdict, RuleVerdict};
use crate::patchkit::parse_unified_diff;
use crate::pylit;

pub const MAX_REPOS: usize = 20;
pub const KEYWORD_COUNT: usize = 5;
pub const DIFF_BUDGET: usize = 48_000;
pub const TRUNCATION_MARK: &str = "\n[... truncated ...]\n";

pub const RULE_LINKED_ISSUES: &str = "linked_issues";
pub const RULE_MERGED: &str = "merged";
pub const RULE_CLOSED: &str = "closed";
pub const RULE_CODE_FILES: &str = "edits_code_files";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    GitHub(#[from] GhError),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("pull request {0} failed the rule filter")]
    NotEligible(String),
}

fn python_block(text: &str) -> Result<serde_json::Value, String> {
    let body = last_fenced(text, &["python", "py"]).unwrap_or_else(|| text.to_string());
    pylit::parse(body.trim())
}

/// Five distinct search keywords describing the README.
pub fn generate_keywords(readme: &str, lm: &dyn LanguageModelPort) -> Result<Vec<String>, IngestError> {
    if readme.trim().is_empty() {
        return Err(IngestError::InvalidInput("empty README".into()));
    }
    let prompt = render_template(prompts::KEYWORDS, &[("readme", readme)])?;
    let kws = complete_with_retries(lm, "keywords", &prompt, Sampling::GREEDY, DEFAULT_ATTEMPTS, |text| {
        let v = python_block(text)?;
        let items = v.as_array().ok_or("expected a list")?;
        let mut out: Vec<String> = Vec::new();
        for it in items {
            let s = it.as_str().ok_or("expected strings")?.trim().to_string();
            if !s.is_empty() && !out.contains(&s) {
                out.push(s);
            }
        }
        if out.len() < KEYWORD_COUNT {
            return Err(format!("only {} distinct keywords", out.len()));
        }
        out.truncate(KEYWORD_COUNT);
        Ok(out)
    })?;
    Ok(kws)
}

/// Top repositories for the keywords, by stars, then open issues, then name.
pub fn search_repos(keywords: &[String], gh: &dyn GitHubPort) -> Result<Vec<RepoSearchResult>, IngestError> {
    if keywords.is_empty() || keywords.len() > KEYWORD_COUNT {
        return Err(IngestError::InvalidInput(format!("expected 1-5 keywords, got {}", keywords.len())));
    }
    let query = keywords.join(" ");
    let mut hits = gh.search_repos(&query, 100)?;
    let mut seen = BTreeSet::new();
    hits.retain(|r| seen.insert(r.repo.clone()));
    hits.sort_by(|a, b| {
        b.stars
            .cmp(&a.stars)
            .then(b.open_issues.cmp(&a.open_issues))
            .then_with(|| a.repo.cmp(&b.repo))
    });
    hits.truncate(MAX_REPOS);
    Ok(hits)
}

static CLOSING_REF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:fix|fixes|fixed|close|closes|closed|resolve|resolves|resolved)\s*:?\s+#(\d+)\b").unwrap()
});

/// Issue numbers named by closing keywords, in order of first mention.
pub fn closing_refs(text: &str) -> Vec<u64> {
    let mut out = Vec::new();
    for c in CLOSING_REF.captures_iter(text) {
        if let Ok(n) = c[1].parse::<u64>() {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

const CODE_EXTENSIONS: &[&str] = &[
    "py", "pyx", "pyi", "rs", "go", "js", "jsx", "mjs", "cjs", "ts", "tsx", "java", "kt", "scala", "c", "h", "cc", "cpp",
    "cxx", "hpp", "hh", "cs", "rb", "php", "swift", "m", "mm", "lua", "pl", "sh", "vue", "svelte", "ex", "exs", "erl",
    "hs", "ml", "clj", "dart", "r", "jl", "zig", "nim",
];

const NON_CODE_DIRS: &[&str] = &["docs/", "doc/", ".github/", ".circleci/", ".gitlab/", "examples/docs/"];

const NON_CODE_FILES: &[&str] = &[
    "cargo.lock",
    "package-lock.json",
    "yarn.lock",
    "pnpm-lock.yaml",
    "poetry.lock",
    "pipfile.lock",
    "go.sum",
    "gemfile.lock",
    "composer.lock",
    ".travis.yml",
    ".gitlab-ci.yml",
    "appveyor.yml",
    "azure-pipelines.yml",
    "tox.ini",
    ".pre-commit-config.yaml",
    "codecov.yml",
];

/// Whether a changed path counts as source code.
pub fn is_code_file(path: &str) -> bool {
    let lower = path.to_ascii_lowercase();
    if NON_CODE_DIRS.iter().any(|d| lower.starts_with(d) || lower.contains(&format!("/{d}"))) {
        return false;
    }
    let name = lower.rsplit('/').next().unwrap_or(&lower);
    if NON_CODE_FILES.contains(&name) {
        return false;
    }
    match name.rsplit_once('.') {
        Some((_, ext)) => CODE_EXTENSIONS.contains(&ext),
        None => false,
    }
}

/// Paths touched by a diff; an unparseable diff falls back to `+++ b/` lines.
pub fn diff_paths(diff: &str) -> Vec<String> {
    match parse_unified_diff(diff) {
        Ok(p) => p.files.iter().map(|f| f.path().to_string()).collect(),
        Err(_) => diff
            .lines()
            .filter_map(|l| l.strip_prefix("+++ b/").or_else(|| l.strip_prefix("--- a/")))
            .map(str::to_string)
            .collect(),
    }
}

pub fn edits_code_files(diff: &str) -> bool {
    diff_paths(diff).iter().any(|p| is_code_file(p))
}

/// The three eligibility rules. Pull requests need not touch test files.
pub fn rule_filter(pr: &CandidatePR) -> RuleVerdict {
    let code = if pr.diff.trim().is_empty() {
        pr.edits_code_files
    } else {
        edits_code_files(&pr.diff)
    };
    if pr.linked_issue_bodies.is_empty() {
        RuleVerdict::Fail(RULE_LINKED_ISSUES.into())
    } else if !pr.merged {
        RuleVerdict::Fail(RULE_MERGED.into())
    } else if !pr.closed {
        RuleVerdict::Fail(RULE_CLOSED.into())
    } else if !code {
        RuleVerdict::Fail(RULE_CODE_FILES.into())
    } else {
        RuleVerdict::Pass
    }
}

/// Every closed pull request of `repo` with diff and linked issue bodies.
pub fn collect_prs(repo: &str, gh: &dyn GitHubPort) -> Result<Vec<CandidatePR>, IngestError> {
    let mut pulls = Vec::new();
    let mut page = 1;
    loop {
        let p = gh.list_pulls(repo, page)?;
        pulls.extend(p.items);
        if !p.has_next {
            break;
        }
        page += 1;
    }
    let mut out = Vec::with_capacity(pulls.len());
    for pull in pulls {
        let diff = gh.pull_diff(repo, pull.number)?;
        let mut refs = closing_refs(&pull.body);
        for n in gh.cross_refs(repo, pull.number)? {
            if !refs.contains(&n) {
                refs.push(n);
            }
        }
        let mut linked = Vec::new();
        for n in refs {
            match gh.issue(repo, n)? {
                Some(issue) if !issue.is_pull_request => linked.push(issue.body),
                _ => {}
            }
        }
        let mut pr = CandidatePR {
            source_repo: repo.to_string(),
            pr_number: pull.number,
            title: pull.title,
            body: pull.body,
            linked_issue_bodies: linked,
            edits_code_files: edits_code_files(&diff),
            diff,
            merged: pull.merged,
            closed: pull.closed,
            rule_verdict: RuleVerdict::Pass,
            lm_verdict: None,
        };
        pr.rule_verdict = rule_filter(&pr);
        out.push(pr);
    }
    out.sort_by_key(|p| p.pr_number);
    Ok(out)
}

/// Collects several repositories on `workers` threads. Results come back
/// ordered by repository name, each list ordered by PR number.
pub fn collect_many(
    repos: &[String],
    gh: &dyn GitHubPort,
    workers: usize,
) -> Vec<(String, Result<Vec<CandidatePR>, IngestError>)> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(repos.len()));
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, repos.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(repo) = repos.get(i) else { break };
                let r = collect_prs(repo, gh);
                results.lock().unwrap().push((repo.clone(), r));
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Keeps the head and tail halves of an oversize diff around a marker.
pub fn truncate_middle(text: &str, budget: usize) -> String {
    if text.len() <= budget {
        return text.to_string();
    }
    let keep = budget.saturating_sub(TRUNCATION_MARK.len()) / 2;
    let mut head = keep;
    while !text.is_char_boundary(head) {
        head -= 1;
    }
    let mut tail = text.len() - keep;
    while !text.is_char_boundary(tail) {
        tail += 1;
    }
    format!("{}{TRUNCATION_MARK}{}", &text[..head], &text[tail..])
}

/// Parses `[bool, "reason"]` from the model's reply.
pub fn parse_filter_reply(text: &str) -> Result<LmVerdict, String> {
    let v = python_block(text)?;
    match v.as_array().map(Vec::as_slice) {
        Some([serde_json::Value::Bool(b), serde_json::Value::String(r)]) => Ok(LmVerdict {
            accepted: *b,
            reason: r.clone(),
        }),
        _ => Err(format!("expected [bool, str], got {v}")),
    }
}

/// Asks the model whether the PR can be mirrored into the target repository.
pub fn lm_filter(
    pr: &CandidatePR,
    target_readme: &str,
    target_test_suite_listing: &str,
    lm: &dyn LanguageModelPort,
) -> Result<LmVerdict, IngestError> {
    if !pr.rule_verdict.is_pass() {
        return Err(IngestError::NotEligible(pr.key()));
    }
    let budget = DIFF_BUDGET.min(lm.max_context_chars() / 2);
    let diff = truncate_middle(&pr.diff, budget);
    let body = pr.combined_body();
    let prompt = render_template(
        prompts::LM_FILTER,
        &[
            ("body", &body),
            ("diff", &diff),
            ("readme", target_readme),
            ("test_suite", target_test_suite_listing),
        ],
    )?;
    Ok(complete_with_retries(
        lm,
        "lm_filter",
        &prompt,
        Sampling::GREEDY,
        DEFAULT_ATTEMPTS,
        parse_filter_reply,
    )?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub rule_rejected: usize,
    pub lm_rejected: usize,
    pub accepted: usize,
    pub per_rule_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Percent, rounded to 0.1. NaN when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        pct(self.tp, self.tp + self.fp)
    }

    /// Percent, rounded to 0.1. NaN when there are no positives.
    pub fn recall(&self) -> f64 {
        pct(self.tp, self.tp + self.fn_)
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        return f64::NAN;
    }
    (num as f64 * 1000.0 / den as f64).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEvaluation {
    pub report: FilterReport,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
}

impl FilterEvaluation {
    pub fn render(&self) -> String {
        let c = &self.confusion;
        let fmt = |x: f64| if x.is_nan() { "NaN".to_string() } else { format!("{x:.1}%") };
        format!(
            "total {}  rule_rejected {}  lm_rejected {}  accepted {}\n\
             TP {}  FN {}  FP {}  TN {}\n\
             precision {}  recall {}\n",
            self.report.total,
            self.report.rule_rejected,
            self.report.lm_rejected,
            self.report.accepted,
            c.tp,
            c.fn_,
            c.fp,
            c.tn,
            fmt(self.precision),
            fmt(self.recall)
        )
    }
}

/// Runs both filters over a labeled set. A rule rejection counts as a
/// negative prediction and the model is not consulted for it.
pub fn evaluate_filter(
    labeled: &[(CandidatePR, bool)],
    lm: &dyn LanguageModelPort,
    target_readme: &str,
    target_test_suite_listing: &str,
) -> Result<FilterEvaluation, IngestError> {
    if labeled.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut report = FilterReport {
        total: labeled.len(),
        ..Default::default()
    };
    let mut c = Confusion::default();
    for (pr, label) in labeled {
        let predicted = match rule_filter(pr) {
            RuleVerdict::Fail(rule) => {
                report.rule_rejected += 1;
                *report.per_rule_counts.entry(rule).or_default() += 1;
                false
            }
            RuleVerdict::Pass => {
                let mut pr = pr.clone();
                pr.rule_verdict = RuleVerdict::Pass;
                let v = lm_filter(&pr, target_readme, target_test_suite_listing, lm)?;
                if v.accepted {
                    report.accepted += 1;
                } else {
                    report.lm_rejected += 1;
                }
                v.accepted
            }
        };
        match (predicted, *label) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(FilterEvaluation {
        report,
        precision: c.precision(),
        recall: c.recall(),
        confusion: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::github::{fixtures::write_replay, FixtureGitHub};
    use crate::lm::ScriptedLm;

    fn pr() -> CandidatePR {
        CandidatePR {
            source_repo: "a/b".into(),
            pr_number: 1,
            title: "t".into(),
            body: "Fixes #2".into(),
            linked_issue_bodies: vec!["issue".into()],
            diff: "--- a/src/x.py\n+++ b/src/x.py\n@@ -1 +1 @@\n-a\n+b\n".into(),
            merged: true,
            closed: true,
            edits_code_files: true,
            rule_verdict: RuleVerdict::Pass,
            lm_verdict: None,
        }
    }

    #[test]
    fn keywords_truncate_and_retry() {
        let readme = "# fetchy\nAn HTTP client library.";
        let lm = ScriptedLm::default().rule(
            &["fetchy"],
            &["```python\n[\"http\", \"client\", \"requests\", \"async\", \"rest\", \"json\", \"retry\"]\n```"],
        );
        assert_eq!(generate_keywords(readme, &lm).unwrap(), ["http", "client", "requests", "async", "rest"]);

        let lm = ScriptedLm::default().rule(
            &["fetchy"],
            &["no idea", "[\"http\", \"http\"]", "['http', 'client', 'requests', 'async', 'rest']"],
        );
        assert_eq!(generate_keywords(readme, &lm).unwrap().len(), 5);
        assert_eq!(lm.prompts().len(), 3);

        let lm = ScriptedLm::default().rule(&["fetchy"], &["nope"]);
        assert!(matches!(generate_keywords(readme, &lm), Err(IngestError::Lm(LmError::Format { .. }))));
    }

    #[test]
    fn search_sorts_and_caps() {
        let dir = tempfile::tempdir().unwrap();
        write_replay(dir.path());
        let gh = FixtureGitHub::new(dir.path());
        let kws: Vec<String> = ["http", "client"].iter().map(|s| s.to_string()).collect();
        let got = search_repos(&kws, &gh).unwrap();
        assert_eq!(got.len(), 20);
        let mut oracle = gh.search_repos("", 100).unwrap();
        oracle.sort_by_key(|r| (std::cmp::Reverse(r.stars), std::cmp::Reverse(r.open_issues), r.repo.clone()));
        assert_eq!(got, oracle[..20]);
        assert!(search_repos(&[], &gh).is_err());
    }

    #[test]
    fn collect_resolves_links() {
        let dir = tempfile::tempdir().unwrap();
        write_replay(dir.path());
        let gh = FixtureGitHub::new(dir.path());
        let prs = collect_prs("acme/webapp", &gh).unwrap();
        assert_eq!(prs.len(), 3);
        let linked: Vec<_> = prs.iter().filter(|p| !p.linked_issue_bodies.is_empty()).collect();
        assert_eq!(linked.len(), 1);
        assert_eq!(linked[0].linked_issue_bodies[0], "Bad input returns 500 instead of 400");
        assert_eq!(prs[0].rule_verdict, RuleVerdict::Pass);
        assert_eq!(prs[1].rule_verdict, RuleVerdict::Fail(RULE_LINKED_ISSUES.into()));
        assert!(matches!(collect_prs("x/y", &gh), Err(IngestError::GitHub(GhError::RepoNotFound(_)))));

        let many = collect_many(&["x/y".into(), "acme/webapp".into()], &gh, 4);
        assert_eq!(many[0].0, "acme/webapp");
        assert_eq!(many[0].1.as_ref().unwrap(), &prs);
    }

    #[test]
    fn closing_keywords() {
        assert_eq!(closing_refs("Fixes #456. Also closes: #7 and resolved #456"), [456, 7]);
        assert!(closing_refs("see #12, prefix #3").is_empty());
    }

    #[test]
    fn rules() {
        assert_eq!(rule_filter(&pr()), RuleVerdict::Pass);
        let mut p = pr();
        p.merged = false;
        assert_eq!(rule_filter(&p), RuleVerdict::Fail(RULE_MERGED.into()));
        let mut p = pr();
        p.diff = "--- a/README.md\n+++ b/README.md\n@@ -1 +1 @@\n-a\n+b\n".into();
        assert_eq!(rule_filter(&p), RuleVerdict::Fail(RULE_CODE_FILES.into()));
        let mut p = pr();
        p.closed = false;
        assert_eq!(rule_filter(&p), RuleVerdict::Fail(RULE_CLOSED.into()));
        assert_eq!(rule_filter(&p), rule_filter(&p.clone()));
    }

    #[test]
    fn code_file_classifier() {
        for yes in ["src/a.py", "lib/x.rs", "cmd/main.go", "web/App.tsx", "tests/test_a.py"] {
            assert!(is_code_file(yes), "{yes}");
        }
        for no in ["README.md", "docs/conf.py", "Cargo.lock", ".github/workflows/ci.yml", "go.sum", "Makefile", "notes.txt"] {
            assert!(!is_code_file(no), "{no}");
        }
    }

    #[test]
    fn filter_reply_and_eligibility() {
        let lm = ScriptedLm::default().rule(&["<pull_request>"], &["Reasoning...\n```python\n[True, \"bug fix, functionality exists\"]\n```"]);
        let v = lm_filter(&pr(), "readme", "tests/", &lm).unwrap();
        assert!(v.accepted);
        assert_eq!(v.reason, "bug fix, functionality exists");
        let lm = ScriptedLm::default().rule(&[], &["```python\n[False, \"docs only\"]\n```"]);
        assert!(!lm_filter(&pr(), "", "", &lm).unwrap().accepted);

        let mut bad = pr();
        bad.rule_verdict = RuleVerdict::Fail("merged".into());
        assert!(matches!(lm_filter(&bad, "", "", &lm), Err(IngestError::NotEligible(_))));
    }

    #[test]
    fn oversize_diff_is_truncated() {
        let lm = ScriptedLm::default().rule(&[], &["[True, \"x\"]"]);
        let mut p = pr();
        p.diff = format!("HEAD{}TAIL", "x".repeat(100_000));
        lm_filter(&p, "", "", &lm).unwrap();
        let prompt = &lm.prompts()[0];
        assert!(prompt.contains("HEAD") && prompt.contains("TAIL") && prompt.contains("[... truncated ...]"));
        assert!(prompt.len() < 60_000);
        assert_eq!(truncate_middle(&p.diff, DIFF_BUDGET).len(), DIFF_BUDGET - 1);
    }

    #[test]
    fn metrics() {
        let c = Confusion { tp: 43, fp: 8, tn: 42, fn_: 7 };
        assert_eq!((c.precision(), c.recall()), (84.3, 86.0));
        let all = Confusion { tp: 5, fp: 0, tn: 5, fn_: 0 };
        assert_eq!((all.precision(), all.recall()), (100.0, 100.0));
        let none = Confusion { tp: 0, fp: 0, tn: 5, fn_: 5 };
        assert!(none.precision().is_nan());
        assert_eq!(none.recall(), 0.0);
    }

    #[test]
    fn evaluate_counts() {
        let lm = ScriptedLm::default()
            .rule(&["ACCEPT-ME"], &["[True, \"ok\"]"])
            .rule(&[], &["[False, \"no\"]"]);
        let mut yes = pr();
        yes.body = "ACCEPT-ME".into();
        let mut unmerged = pr();
        unmerged.merged = false;
        let set = vec![(yes.clone(), true), (pr(), true), (pr(), false), (unmerged, false), (yes, false)];
        let e = evaluate_filter(&set, &lm, "", "").unwrap();
        assert_eq!(e.confusion, Confusion { tp: 1, fp: 1, tn: 2, fn_: 1 });
        assert_eq!(e.report.total, e.report.rule_rejected + e.report.lm_rejected + e.report.accepted);
        assert_eq!(e.report.per_rule_counts["merged"], 1);
        assert_eq!(e.confusion.total(), 5);
        assert!(matches!(evaluate_filter(&[], &lm, "", ""), Err(IngestError::EmptyInput)));
    }
}
