//! The test agent (localize, then write tests) and the mirror agent
//! (localize, then break the code those tests exercise).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ingest::truncate_middle;
use crate::lm::{complete_with_retries, prompts, render_template, LanguageModelPort, Sampling, DEFAULT_ATTEMPTS};
use crate::model::{AbstractIssue, Language};
use crate::patchkit::{
    apply_patch, edits_to_patch, invert_patch, parse_sr_blocks, strip_comments, FileTree, Fuzz, LineKind, Patch,
    PatchError, SearchReplaceEdit,
};
use crate::pylit;

use super::structure::{RepoStructure, TestClassifier};
use super::MirrorError;

pub const DIFF_EXAMPLE: &str = "### mathweb/flask/app.py
<<<<<<< SEARCH
from flask import Flask
=======
import math
from flask import Flask
>>>>>>> REPLACE";

/// Per-file character budget when file contents go into a prompt.
pub const FILE_BUDGET: usize = 24_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Localization {
    pub source_files: Vec<String>,
    pub test_files: Vec<String>,
    pub diagnostics: Vec<String>,
}

fn python_value(text: &str) -> Result<serde_json::Value, String> {
    let body = crate::lm::last_fenced(text, &["python", "py", "json"]).unwrap_or_else(|| text.to_string());
    pylit::parse(body.trim())
}

fn string_list(v: &serde_json::Value) -> Result<Vec<String>, String> {
    v.as_array()
        .ok_or_else(|| format!("expected a list, got {v}"))?
        .iter()
        .filter(|x| !x.is_null())
        .map(|x| x.as_str().map(|s| s.trim().to_string()).ok_or_else(|| format!("expected a path, got {x}")))
        .collect()
}

/// Keeps real paths, in order, without repeats, up to `n`.
fn keep_real(paths: Vec<String>, structure: &RepoStructure, n: usize, what: &str, diags: &mut Vec<String>) -> Vec<String> {
    let mut out = Vec::new();
    for p in paths {
        let p = p.trim_start_matches("./").to_string();
        if !structure.contains(&p) {
            diags.push(format!("{what}: dropped nonexistent path {p}"));
        } else if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.len() > n {
        diags.push(format!("{what}: kept first {n} of {} paths", out.len()));
        out.truncate(n);
    }
    out
}

fn issue_text(a: &AbstractIssue) -> &str {
    &a.raw_markdown
}

/// Picks source files to read and test files to extend.
pub fn test_localize(
    abstract_issue: &AbstractIssue,
    structure: &RepoStructure,
    n: usize,
    lm: &dyn LanguageModelPort,
    sampling: Sampling,
) -> Result<Localization, MirrorError> {
    let n = n.max(1);
    let listing = structure.render();
    let n_text = n.to_string();
    let prompt = render_template(
        prompts::TEST_LOCALIZE,
        &[("issue", issue_text(abstract_issue)), ("structure", &listing), ("n", &n_text)],
    )?;
    let (src, tests) = complete_with_retries(lm, "test_localize", &prompt, sampling, DEFAULT_ATTEMPTS, |text| {
        let v = python_value(text)?;
        let get = |k: &str| v.get(k).map(string_list).unwrap_or_else(|| Err(format!("missing key {k}")));
        Ok((get("source_files")?, get("test_files")?))
    })?;
    let mut diagnostics = Vec::new();
    let source_files = keep_real(src, structure, n, "source_files", &mut diagnostics);
    let test_files = keep_real(tests, structure, n, "test_files", &mut diagnostics);
    for d in &diagnostics {
        log::warn!("test_localize: {d}");
    }
    if test_files.is_empty() {
        return Err(MirrorError::LocalizationEmpty(diagnostics.join("; ")));
    }
    Ok(Localization {
        source_files,
        test_files,
        diagnostics,
    })
}

/// `### path` headed file bodies, each truncated from the middle.
pub fn render_files<T: FileTree + ?Sized>(tree: &T, paths: &[String]) -> String {
    let mut out = String::new();
    for p in paths {
        if let Some(content) = tree.read(p) {
            let _ = writeln!(out, "### {p}\n{}", truncate_middle(&content, FILE_BUDGET).trim_end());
        }
    }
    out
}

fn parse_edits(text: &str) -> Result<Vec<SearchReplaceEdit>, String> {
    let edits = parse_sr_blocks(text).map_err(|e| e.to_string())?;
    if edits.is_empty() {
        return Err("no SEARCH/REPLACE blocks".into());
    }
    Ok(edits)
}

fn request_edits(lm: &dyn LanguageModelPort, what: &str, prompt: &str, sampling: Sampling) -> Result<Vec<SearchReplaceEdit>, MirrorError> {
    Ok(complete_with_retries(lm, what, prompt, sampling, DEFAULT_ATTEMPTS, parse_edits)?)
}

fn edit_paths(edits: &[SearchReplaceEdit]) -> BTreeSet<String> {
    edits.iter().map(|e| e.file_path.trim_start_matches("./").to_string()).collect()
}

/// Tests for the abstract issue that pass on the current code. Every edit
/// must target a test file or the whole reply is rejected.
pub fn gen_test_patch<T: FileTree + ?Sized>(
    abstract_issue: &AbstractIssue,
    tree: &T,
    loc: &Localization,
    classifier: &TestClassifier,
    lm: &dyn LanguageModelPort,
    sampling: Sampling,
) -> Result<Patch, MirrorError> {
    if loc.test_files.is_empty() {
        return Err(MirrorError::LocalizationEmpty("no test files".into()));
    }
    let sources = render_files(tree, &loc.source_files);
    let tests = render_files(tree, &loc.test_files);
    let prompt = render_template(
        prompts::TEST_PATCHGEN,
        &[
            ("issue", issue_text(abstract_issue)),
            ("source_files", &sources),
            ("test_files", &tests),
            ("diff_example", DIFF_EXAMPLE),
        ],
    )?;
    let edits = request_edits(lm, "test_patchgen", &prompt, sampling)?;
    let outside: Vec<String> = edit_paths(&edits).into_iter().filter(|p| !classifier.is_test(p)).collect();
    if !outside.is_empty() {
        return Err(MirrorError::TestScopeViolation(outside));
    }
    let outcome = edits_to_patch(tree, &edits)?;
    if outcome.patch.is_empty() {
        return Err(PatchError::EmptyEdit.into());
    }
    Ok(outcome.patch)
}

/// Source files the mirror agent may edit: real, non-test, at most `n`.
pub fn mirror_localize(
    abstract_issue: &AbstractIssue,
    structure: &RepoStructure,
    test_patch: &Patch,
    n: usize,
    lm: &dyn LanguageModelPort,
    sampling: Sampling,
) -> Result<Localization, MirrorError> {
    let n = n.max(1);
    let listing = structure.render();
    let rendered = test_patch.render();
    let n_text = n.to_string();
    let prompt = render_template(
        prompts::MIRROR_LOCALIZE,
        &[
            ("issue", issue_text(abstract_issue)),
            ("structure", &listing),
            ("testgen_patch", &rendered),
            ("n", &n_text),
        ],
    )?;
    let paths = complete_with_retries(lm, "mirror_localize", &prompt, sampling, DEFAULT_ATTEMPTS, |text| {
        string_list(&python_value(text)?)
    })?;
    let mut diagnostics = Vec::new();
    let mut real = Vec::new();
    for p in keep_real(paths, structure, usize::MAX, "mirror_localize", &mut diagnostics) {
        if structure.get(&p).is_some_and(|f| f.is_test) {
            diagnostics.push(format!("mirror_localize: dropped test file {p}"));
        } else {
            real.push(p);
        }
    }
    real.truncate(n);
    if real.is_empty() {
        return Err(MirrorError::LocalizationEmpty(diagnostics.join("; ")));
    }
    Ok(Localization {
        source_files: real,
        test_files: Vec::new(),
        diagnostics,
    })
}

static PY_TEST_DEF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\s*)(?:async\s+)?def\s+(test\w*)\s*\(").unwrap());
static PY_CLASS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\s*)class\s+(\w+)").unwrap());
static RS_FN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:pub\s+)?(?:async\s+)?fn\s+(\w+)").unwrap());
static GO_TEST: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^func\s+(Test\w+)\s*\(").unwrap());
static JS_TEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^\s*(?:it|test)(?:\.\w+)?\(\s*(?:'([^']*)'|"([^"]*)"|`([^`]*)`)"#).unwrap());

/// Identifiers of the tests that `test_patch` adds, as `path::name`
/// (`path::Class::name` for Python methods).
pub fn added_test_ids<T: FileTree + ?Sized>(tree: &T, test_patch: &Patch) -> Vec<String> {
    let patched = apply_patch(tree, test_patch, Fuzz::MIRRORING).ok();
    let mut out = Vec::new();
    for f in &test_patch.files {
        let path = f.path();
        let new_text = patched.as_ref().and_then(|t| t.read(path)).unwrap_or_default();
        let new_lines: Vec<&str> = new_text.lines().collect();
        for h in &f.hunks {
            let mut new_no = h.new_start;
            let mut prev_new: Option<&str> = None;
            for l in &h.lines {
                if l.kind == LineKind::Removed {
                    continue;
                }
                if l.kind == LineKind::Added {
                    if let Some(name) = test_name(path, &l.text, prev_new, &new_lines, new_no) {
                        let id = format!("{path}::{name}");
                        if !out.contains(&id) {
                            out.push(id);
                        }
                    }
                }
                prev_new = Some(&l.text);
                new_no += 1;
            }
        }
    }
    out
}

fn test_name(path: &str, line: &str, prev: Option<&str>, new_lines: &[&str], line_no: usize) -> Option<String> {
    let ext = path.rsplit_once('.').map(|(_, e)| e).unwrap_or("");
    match ext {
        "py" => {
            let c = PY_TEST_DEF.captures(line)?;
            let indent = c[1].len();
            let name = c[2].to_string();
            if indent == 0 {
                return Some(name);
            }
            let upto = line_no.saturating_sub(1).min(new_lines.len());
            let class = new_lines[..upto].iter().rev().find_map(|l| {
                PY_CLASS.captures(l).filter(|c| c[1].len() < indent).map(|c| c[2].to_string())
            });
            Some(match class {
                Some(cls) => format!("{cls}::{name}"),
                None => name,
            })
        }
        "rs" => {
            let c = RS_FN.captures(line)?;
            prev.filter(|p| p.contains("test]"))?;
            Some(c[1].to_string())
        }
        "go" => GO_TEST.captures(line).map(|c| c[1].to_string()),
        "js" | "jsx" | "ts" | "tsx" | "mjs" | "cjs" => {
            let c = JS_TEST.captures(line)?;
            c.get(1).or(c.get(2)).or(c.get(3)).map(|m| m.as_str().to_string())
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPatches {
    pub task_patch: Patch,
    pub fix_patch: Patch,
}

/// Breaks the localized source so the listed tests fail. Comments are
/// stripped from the result; the fix is its exact inverse.
#[allow(clippy::too_many_arguments)]
pub fn gen_task_patch<T: FileTree + ?Sized>(
    abstract_issue: &AbstractIssue,
    tree: &T,
    test_patch: &Patch,
    localized: &[String],
    tests_listing: &[String],
    language: Language,
    classifier: &TestClassifier,
    lm: &dyn LanguageModelPort,
    sampling: Sampling,
) -> Result<TaskPatches, MirrorError> {
    let files = render_files(tree, localized);
    let rendered = test_patch.render();
    let tests = tests_listing.join("\n");
    let prompt = render_template(
        prompts::MIRROR_PATCHGEN,
        &[
            ("issue", issue_text(abstract_issue)),
            ("files", &files),
            ("testgen_patch", &rendered),
            ("tests", &tests),
            ("diff_example", DIFF_EXAMPLE),
        ],
    )?;
    let edits = request_edits(lm, "mirror_patchgen", &prompt, sampling)?;
    let test_paths: BTreeSet<&str> = test_patch.paths().into_iter().collect();
    let inside: Vec<String> = edit_paths(&edits)
        .into_iter()
        .filter(|p| classifier.is_test(p) || test_paths.contains(p.as_str()))
        .collect();
    if !inside.is_empty() {
        return Err(MirrorError::SourceScopeViolation(inside));
    }
    let raw = edits_to_patch(tree, &edits)?.patch;
    let task_patch = match language {
        Language::Other => raw,
        lang => strip_comments(&raw, lang)?,
    };
    if task_patch.is_empty() || task_patch.hunk_count() == 0 {
        return Err(PatchError::EmptyEdit.into());
    }
    let fix_patch = invert_patch(&task_patch);
    Ok(TaskPatches { task_patch, fix_patch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ScriptedLm;
    use crate::patchkit::MemTree;

    const APP: &str = "def handle(data):\n    if not data:\n        return {\"error\": \"Invalid user data\"}, 400\n    return data, 200\n";
    const TESTS: &str = "from src.app import handle\n\n\ndef test_ok():\n    assert handle({'a': 1})[1] == 200\n";

    fn tree() -> MemTree {
        MemTree::new().with("src/app.py", APP).with("tests/test_app.py", TESTS)
    }

    fn structure() -> RepoStructure {
        RepoStructure::build(&tree(), &TestClassifier::default())
    }

    fn abs() -> AbstractIssue {
        AbstractIssue {
            raw_markdown: "**Issue Type**: wrong status".into(),
            ..Default::default()
        }
    }

    fn sr(path: &str, search: &str, replace: &str) -> String {
        format!("```\n### {path}\n<<<<<<< SEARCH\n{search}=======\n{replace}>>>>>>> REPLACE\n```\n")
    }

    fn test_edit() -> String {
        sr(
            "tests/test_app.py",
            "def test_ok():\n",
            "def test_bad_input():\n    assert handle({})[1] == 400\n\n\ndef test_ok():\n",
        )
    }

    #[test]
    fn localize_drops_and_caps() {
        let lm = ScriptedLm::default().rule(
            &["provide two list"],
            &["```python\n{\"source_files\": [\"src/app.py\", \"src/ghost.py\"], \"test_files\": [\"tests/test_app.py\", \"src/app.py\"]}\n```"],
        );
        let loc = test_localize(&abs(), &structure(), 5, &lm, Sampling::GREEDY).unwrap();
        assert_eq!(loc.source_files, ["src/app.py"]);
        assert_eq!(loc.test_files, ["tests/test_app.py", "src/app.py"]);
        assert_eq!(loc.diagnostics.len(), 1);

        let lm = ScriptedLm::default().rule(&[], &["{'source_files': ['src/app.py'], 'test_files': ['tests/test_app.py', 'src/app.py']}"]);
        let loc = test_localize(&abs(), &structure(), 1, &lm, Sampling::GREEDY).unwrap();
        assert_eq!(loc.test_files, ["tests/test_app.py"]);

        let lm = ScriptedLm::default().rule(&[], &["{'source_files': ['x.py'], 'test_files': ['y.py']}"]);
        assert!(matches!(
            test_localize(&abs(), &structure(), 5, &lm, Sampling::GREEDY),
            Err(MirrorError::LocalizationEmpty(_))
        ));
    }

    fn loc() -> Localization {
        Localization {
            source_files: vec!["src/app.py".into()],
            test_files: vec!["tests/test_app.py".into()],
            diagnostics: vec![],
        }
    }

    #[test]
    fn test_patch_scope() {
        let c = TestClassifier::default();
        let lm = ScriptedLm::default().rule(&[], &[&test_edit()]);
        let p = gen_test_patch(&abs(), &tree(), &loc(), &c, &lm, Sampling::GREEDY).unwrap();
        assert_eq!(p.paths(), ["tests/test_app.py"]);
        assert_eq!(added_test_ids(&tree(), &p), ["tests/test_app.py::test_bad_input"]);

        let bad = sr("src/app.py", "    return data, 200\n", "    return data, 201\n");
        let lm = ScriptedLm::default().rule(&[], &[&bad]);
        assert!(matches!(
            gen_test_patch(&abs(), &tree(), &loc(), &c, &lm, Sampling::GREEDY),
            Err(MirrorError::TestScopeViolation(v)) if v == ["src/app.py"]
        ));

        let mixed = format!("{}{}", test_edit(), bad);
        let lm = ScriptedLm::default().rule(&[], &[&mixed]);
        assert!(matches!(
            gen_test_patch(&abs(), &tree(), &loc(), &c, &lm, Sampling::GREEDY),
            Err(MirrorError::TestScopeViolation(_))
        ));
    }

    fn test_patch() -> Patch {
        let edits = parse_sr_blocks(&test_edit()).unwrap();
        edits_to_patch(&tree(), &edits).unwrap().patch
    }

    #[test]
    fn task_patch_is_inverted_and_stripped() {
        let c = TestClassifier::default();
        let reply = sr(
            "src/app.py",
            "        return {\"error\": \"Invalid user data\"}, 400\n",
            "        # legacy behaviour\n        return {\"error\": \"Bad input\"}, 500  # oops\n",
        );
        let lm = ScriptedLm::default().rule(&["DO NOT modify any test code"], &[&reply]);
        let listing = added_test_ids(&tree(), &test_patch());
        let tp = gen_task_patch(&abs(), &tree(), &test_patch(), &["src/app.py".into()], &listing, Language::Python, &c, &lm, Sampling::GREEDY)
            .unwrap();
        assert!(lm.prompts()[0].contains("tests/test_app.py::test_bad_input"));
        assert_eq!(tp.task_patch.hunk_count(), 1);
        let rendered = tp.task_patch.render();
        assert!(!rendered.contains('#'), "{rendered}");
        assert_eq!(tp.fix_patch, invert_patch(&tp.task_patch));
        let broken = apply_patch(&tree(), &tp.task_patch, Fuzz::STRICT).unwrap();
        assert_eq!(apply_patch(&broken, &tp.fix_patch, Fuzz::STRICT).unwrap(), tree());
    }

    #[test]
    fn task_patch_errors() {
        let c = TestClassifier::default();
        let run = |reply: &str| {
            let lm = ScriptedLm::default().rule(&[], &[reply]);
            gen_task_patch(&abs(), &tree(), &test_patch(), &["src/app.py".into()], &[], Language::Python, &c, &lm, Sampling::GREEDY)
        };
        let comment_only = sr("src/app.py", "    return data, 200\n", "    # note\n    return data, 200\n");
        assert!(matches!(run(&comment_only), Err(MirrorError::Patch(PatchError::EmptyEdit))));
        let test_edit = sr("tests/test_app.py", "def test_ok():\n", "def test_ok2():\n");
        assert!(matches!(run(&test_edit), Err(MirrorError::SourceScopeViolation(_))));
    }

    #[test]
    fn test_ids_other_languages() {
        let t = MemTree::new()
            .with("a_test.go", "package a\n")
            .with("t.rs", "mod t {\n}\n")
            .with("a.test.js", "describe('x', () => {\n});\n")
            .with("tests/test_c.py", "class TestC:\n    def test_a(self):\n        pass\n");
        let diff = "--- a/a_test.go\n+++ b/a_test.go\n@@ -1 +1,2 @@\n package a\n+func TestGet(t *testing.T) {}\n\
--- a/t.rs\n+++ b/t.rs\n@@ -1,2 +1,4 @@\n mod t {\n+    #[test]\n+    fn works() {}\n }\n\
--- a/a.test.js\n+++ b/a.test.js\n@@ -1,2 +1,3 @@\n describe('x', () => {\n+  it(\"adds\", () => {});\n });\n\
--- a/tests/test_c.py\n+++ b/tests/test_c.py\n@@ -1,3 +1,5 @@\n class TestC:\n     def test_a(self):\n         pass\n+    def test_b(self):\n+        pass\n";
        let p = crate::patchkit::parse_unified_diff(diff).unwrap();
        assert_eq!(
            added_test_ids(&t, &p),
            ["a_test.go::TestGet", "t.rs::works", "a.test.js::adds", "tests/test_c.py::TestC::test_b"]
        );
    }
}
