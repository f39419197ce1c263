//! Abstracting a source pull request into a repository-agnostic bug pattern.

use std::sync::LazyLock;

use regex::Regex;

use crate::ingest::{truncate_middle, DIFF_BUDGET};
use crate::lm::{complete_with_retries, last_fenced, prompts, render_template, LanguageModelPort, Sampling, DEFAULT_ATTEMPTS};
use crate::model::{AbstractIssue, CandidatePR};

use super::MirrorError;

const NAMES: &str = "issue type|core problem|technical context|symptoms?|root cause pattern|impact scope";

static BOLD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)^\s*(?:[-*]\s+)?(?:\*\*|__)\s*({NAMES})\s*:?\s*(?:\*\*|__)\s*:?\s*(.*)$")).unwrap()
});
static HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)^\s*#{{1,6}}\s*({NAMES})\s*:?\s*(.*)$")).unwrap());
static PLAIN: LazyLock<Regex> = LazyLock::new(|| Regex::new(&format!(r"(?i)^\s*({NAMES})\s*:\s*(.*)$")).unwrap());

fn section_index(name: &str) -> usize {
    let n = name.to_ascii_lowercase();
    let n = if n == "symptoms" { "symptom".to_string() } else { n };
    AbstractIssue::SECTIONS
        .iter()
        .position(|s| s.to_ascii_lowercase() == n)
        .expect("regex only matches known names")
}

fn heading(line: &str) -> Option<(usize, String)> {
    [&*BOLD, &*HEADING, &*PLAIN]
        .iter()
        .find_map(|re| re.captures(line))
        .map(|c| (section_index(&c[1]), c[2].trim().to_string()))
}

/// Splits the markdown into the six sections. Headings may be bold,
/// `#`-prefixed or plain `Name:` lines; absent sections stay `None`.
pub fn parse_abstract(markdown: &str) -> AbstractIssue {
    let mut sections: [Option<Vec<String>>; 6] = Default::default();
    let mut current: Option<usize> = None;
    for line in markdown.lines() {
        if let Some((idx, rest)) = heading(line) {
            let body = sections[idx].get_or_insert_with(Vec::new);
            if !rest.is_empty() {
                body.push(rest);
            }
            current = Some(idx);
        } else if let Some(idx) = current {
            sections[idx].get_or_insert_with(Vec::new).push(line.trim_end().to_string());
        }
    }
    let mut text = sections.map(|s| {
        s.map(|lines| lines.join("\n").trim().to_string())
            .filter(|t| !t.is_empty())
    });
    let take = |i: usize, t: &mut [Option<String>; 6]| t[i].take();
    AbstractIssue {
        issue_type: take(0, &mut text),
        core_problem: take(1, &mut text),
        technical_context: take(2, &mut text),
        symptom: take(3, &mut text),
        root_cause_pattern: take(4, &mut text),
        impact_scope: take(5, &mut text),
        raw_markdown: markdown.trim().to_string(),
    }
}

/// Asks the model for the bug pattern behind `pr`. The reply must contain
/// a fenced markdown block.
pub fn distill(pr: &CandidatePR, lm: &dyn LanguageModelPort, sampling: Sampling) -> Result<AbstractIssue, MirrorError> {
    let body = pr.combined_body();
    let diff = truncate_middle(&pr.diff, DIFF_BUDGET.min(lm.max_context_chars() / 2));
    let prompt = render_template(prompts::ABSTRACTION, &[("body", &body), ("diff", &diff)])?;
    let md = complete_with_retries(lm, "distill", &prompt, sampling, DEFAULT_ATTEMPTS, |text| {
        let block = last_fenced(text, &["md", "markdown"]).ok_or("no fenced markdown block")?;
        if block.trim().is_empty() {
            return Err("empty markdown block".into());
        }
        Ok(block)
    })?;
    let issue = parse_abstract(&md);
    let missing = issue.missing_sections();
    if !missing.is_empty() {
        log::warn!("{}: abstract is missing {}", pr.key(), missing.join(", "));
    }
    Ok(issue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{LmError, ScriptedLm};
    use crate::model::RuleVerdict;

    const EXAMPLE: &str = "### Bug Pattern\n\n**Issue Type**: Inconsistent Error Handling / API Response Standardization\n\n**Core Problem**: \nThe application lacks consistent error handling.\n\n**Technical Context**:\n- API endpoints\n\n**Symptom**:\n- Different error responses\n\n**Root Cause Pattern**:\n- No shared utilities\n\n**Impact Scope**:\nMultiple locations\n";

    fn pr(body: &str) -> CandidatePR {
        CandidatePR {
            source_repo: "acme/webapp".into(),
            pr_number: 10,
            title: "t".into(),
            body: body.into(),
            linked_issue_bodies: vec![],
            diff: "--- a/a.py\n+++ b/a.py\n@@ -1 +1 @@\n-x\n+y\n".into(),
            merged: true,
            closed: true,
            edits_code_files: true,
            rule_verdict: RuleVerdict::Pass,
            lm_verdict: None,
        }
    }

    #[test]
    fn six_sections() {
        let a = parse_abstract(EXAMPLE);
        assert_eq!(a.issue_type.as_deref(), Some("Inconsistent Error Handling / API Response Standardization"));
        assert_eq!(a.core_problem.as_deref(), Some("The application lacks consistent error handling."));
        assert_eq!(a.technical_context.as_deref(), Some("- API endpoints"));
        assert!(a.missing_sections().is_empty());
    }

    #[test]
    fn lenient_headings_and_missing() {
        let md = "## Issue Type\nOff-by-one\n\nCore Problem: loops stop early\n\n**Impact Scope:** pagination\n";
        let a = parse_abstract(md);
        assert_eq!(a.issue_type.as_deref(), Some("Off-by-one"));
        assert_eq!(a.core_problem.as_deref(), Some("loops stop early"));
        assert_eq!(a.impact_scope.as_deref(), Some("pagination"));
        assert_eq!(a.missing_sections(), ["Technical Context", "Symptom", "Root Cause Pattern"]);
    }

    #[test]
    fn distill_via_mock() {
        let reply = format!("Here it is:\n```md\n{EXAMPLE}```\n");
        let lm = ScriptedLm::default().rule(&["abstract the bug pattern"], &[&reply]);
        let a = distill(&pr(""), &lm, Sampling::GREEDY).unwrap();
        assert_eq!(a.issue_type.as_deref(), Some("Inconsistent Error Handling / API Response Standardization"));
        assert!(lm.prompts()[0].contains("-x\n+y"));

        let lm = ScriptedLm::default().rule(&[], &["**Issue Type**: no fence"]);
        assert!(matches!(
            distill(&pr("b"), &lm, Sampling::GREEDY),
            Err(MirrorError::Lm(LmError::Format { .. }))
        ));
    }
}
