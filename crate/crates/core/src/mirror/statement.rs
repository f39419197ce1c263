//! Problem statement synthesis and its hygiene checks.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::lm::{complete_with_retries, last_fenced, prompts, render_template, LanguageModelPort, Sampling, DEFAULT_ATTEMPTS};
use crate::patchkit::{LineKind, Patch};

use super::MirrorError;

/// Added test lines shorter than this (after trimming) are too generic to
/// count as leakage.
pub const LEAK_MIN_CHARS: usize = 12;

/// First added test line quoted verbatim in `statement`.
pub fn find_leak<'a>(statement: &str, test_patch: &'a Patch) -> Option<&'a str> {
    test_patch.added_lines().map(|(_, l)| l.text.trim()).find(|t| {
        t.chars().count() >= LEAK_MIN_CHARS && t.chars().any(char::is_alphanumeric) && statement.contains(t)
    })
}

static DEF_NAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:def|class|fn|func|function|struct|enum|trait|type|interface)\s+(?:\([^)]*\)\s*)?([A-Za-z_]\w*)").unwrap()
});
static CALL_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Za-z_]\w{3,})\s*\(").unwrap());

const COMMON_CALLS: &[&str] = &["print", "return", "self", "assert", "len", "range", "isinstance", "str", "int", "dict", "list", "format", "super", "Some", "Ok", "Err", "Vec", "String", "append", "push", "unwrap", "expect", "console", "require"];

/// Paths, file names, stems and symbols a statement may use to point at
/// the code touched by `fix_patch`.
pub fn grounding_terms(fix_patch: &Patch) -> BTreeSet<String> {
    let mut terms = BTreeSet::new();
    for f in &fix_patch.files {
        let path = f.path();
        terms.insert(path.to_string());
        let name = path.rsplit('/').next().unwrap_or(path);
        terms.insert(name.to_string());
        if let Some((stem, _)) = name.rsplit_once('.') {
            if stem.len() >= 3 {
                terms.insert(stem.to_string());
            }
        }
        for h in &f.hunks {
            for c in DEF_NAME.captures_iter(&h.section) {
                terms.insert(c[1].to_string());
            }
            for l in &h.lines {
                for c in DEF_NAME.captures_iter(&l.text) {
                    terms.insert(c[1].to_string());
                }
                if l.kind != LineKind::Context {
                    for c in CALL_NAME.captures_iter(&l.text) {
                        if !COMMON_CALLS.contains(&&c[1]) {
                            terms.insert(c[1].to_string());
                        }
                    }
                }
            }
        }
    }
    terms
}

fn mentions(statement: &str, term: &str) -> bool {
    let bytes = statement.as_bytes();
    let word = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    statement.match_indices(term).any(|(i, _)| {
        let before = i.checked_sub(1).map(|j| bytes[j]);
        let after = bytes.get(i + term.len()).copied();
        !before.is_some_and(word) && !after.is_some_and(word)
    })
}

/// Checks a candidate statement: no leaked test lines and at least one
/// reference to the fixed code.
pub fn check_statement(statement: &str, test_patch: &Patch, fix_patch: &Patch) -> Result<(), MirrorError> {
    if let Some(line) = find_leak(statement, test_patch) {
        return Err(MirrorError::TestLeakage(line.to_string()));
    }
    let terms = grounding_terms(fix_patch);
    if !terms.iter().any(|t| mentions(statement, t)) {
        return Err(MirrorError::Ungrounded(terms.into_iter().collect::<Vec<_>>().join(", ")));
    }
    Ok(())
}

/// Writes the issue a user of the target repository would file.
pub fn gen_problem_statement(
    original_issue: &str,
    test_patch: &Patch,
    fix_patch: &Patch,
    fewshot: &[&str],
    lm: &dyn LanguageModelPort,
    sampling: Sampling,
) -> Result<String, MirrorError> {
    let examples = fewshot
        .iter()
        .enumerate()
        .map(|(i, e)| format!("--- BEGIN EXAMPLE {} ---\n{}\n--- END EXAMPLE {} ---", i + 1, e.trim(), i + 1))
        .collect::<Vec<_>>()
        .join("\n\n");
    let tp = test_patch.render();
    let fp = fix_patch.render();
    let prompt = render_template(
        prompts::PROBLEM_STATEMENT,
        &[("issue", original_issue), ("test_patch", &tp), ("fix_patch", &fp), ("examples", &examples)],
    )?;
    let statement = complete_with_retries(lm, "problem_statement", &prompt, sampling, DEFAULT_ATTEMPTS, |text| {
        let s = last_fenced(text, &["md", "markdown"]).unwrap_or_else(|| text.to_string());
        let s = s.trim().to_string();
        if s.is_empty() {
            Err("empty statement".into())
        } else {
            Ok(s)
        }
    })?;
    check_statement(&statement, test_patch, fix_patch)?;
    Ok(statement)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{prompts::FEWSHOT, LmError, ScriptedLm};
    use crate::patchkit::parse_unified_diff;

    fn test_patch() -> Patch {
        parse_unified_diff("--- a/tests/test_app.py\n+++ b/tests/test_app.py\n@@ -1,1 +1,3 @@\n import x\n+def test_bad():\n+    assert handle({})[1] == 400\n").unwrap()
    }

    fn fix_patch() -> Patch {
        parse_unified_diff("--- a/src/app.py\n+++ b/src/app.py\n@@ -1,3 +1,3 @@ def handle(data):\n     if not data:\n-        return {}, 500\n+        return {}, 400\n     return data, 200\n").unwrap()
    }

    #[test]
    fn grounding() {
        let t = grounding_terms(&fix_patch());
        assert!(t.contains("src/app.py") && t.contains("app.py") && t.contains("handle"));
        assert!(check_statement("Calling `handle` with an empty payload returns 500.", &test_patch(), &fix_patch()).is_ok());
        assert!(matches!(
            check_statement("Something is broken somewhere.", &test_patch(), &fix_patch()),
            Err(MirrorError::Ungrounded(_))
        ));
        assert!(matches!(
            check_statement("The handler_x fails.", &test_patch(), &fix_patch()),
            Err(MirrorError::Ungrounded(_))
        ));
    }

    #[test]
    fn leakage() {
        let s = "In app.py this fails: assert handle({})[1] == 400";
        assert!(matches!(check_statement(s, &test_patch(), &fix_patch()), Err(MirrorError::TestLeakage(l)) if l == "assert handle({})[1] == 400"));
        assert_eq!(find_leak("def test_bad():", &test_patch()), Some("def test_bad():"));
        assert_eq!(find_leak("nothing here", &test_patch()), None);
    }

    #[test]
    fn via_mock() {
        let lm = ScriptedLm::default().rule(&["BEGIN FIX PATCH"], &["```md\n`handle` in src/app.py answers 500 for an empty payload.\n```"]);
        let s = gen_problem_statement("orig", &test_patch(), &fix_patch(), &FEWSHOT, &lm, Sampling::GREEDY).unwrap();
        assert_eq!(s, "`handle` in src/app.py answers 500 for an empty payload.");
        assert!(lm.prompts()[0].contains("BEGIN EXAMPLE 2"));

        let lm = ScriptedLm::default().rule(&[], &["   "]);
        assert!(matches!(
            gen_problem_statement("orig", &test_patch(), &fix_patch(), &[], &lm, Sampling::GREEDY),
            Err(MirrorError::Lm(LmError::Format { .. }))
        ));
    }
}
