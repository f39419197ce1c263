//! In-process gym stand-in for offline runs.
//!
//! Commands are matched against canned logs first. Otherwise, when the toy
//! interpreter is enabled, `pytest` commands evaluate the tree's test files
//! with a small statement vocabulary and print pytest-style output:
//!
//! - `assert_contains("path", "text")` / `assert_not_contains(...)`
//! - `time.sleep(N)` advances a simulated clock
//! - `allocate(N)` requests N bytes
//! - `assert False`, `raise ...`
//!
//! Time is simulated, so runs are fast and byte-for-byte reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::patchkit::{FileTree, MemTree};

use super::exec::{ExecOutput, ExecRequest, ExecutionPort};
use super::GymError;

const TEST_COST_SECS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedRun {
    pub exit_code: i32,
    pub log: String,
    /// Simulated duration; runs past the limit are cut off.
    #[serde(default)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FakeGymExecutor {
    pub canned: BTreeMap<String, CannedRun>,
    pub toy_pytest: bool,
}

impl FakeGymExecutor {
    pub fn toy() -> Self {
        FakeGymExecutor {
            canned: BTreeMap::new(),
            toy_pytest: true,
        }
    }

    pub fn with_canned(mut self, command: &str, run: CannedRun) -> Self {
        self.canned.insert(command.to_string(), run);
        self
    }
}

impl ExecutionPort for FakeGymExecutor {
    fn run(&self, req: &ExecRequest<'_>) -> Result<ExecOutput, GymError> {
        if let Some(c) = self.canned.get(req.command) {
            let limit = req.time_limit.as_secs_f64();
            if c.wall_time_secs > limit {
                return Ok(ExecOutput {
                    exit_code: None,
                    transcript: String::new(),
                    wall_time: req.time_limit,
                    timed_out: true,
                    oom: false,
                });
            }
            return Ok(ExecOutput {
                exit_code: Some(c.exit_code),
                transcript: c.log.clone(),
                wall_time: Duration::from_secs_f64(c.wall_time_secs),
                timed_out: false,
                oom: false,
            });
        }
        if self.toy_pytest && req.command.contains("pytest") {
            return Ok(ToySession::new(req).run());
        }
        Ok(ExecOutput {
            exit_code: Some(127),
            transcript: format!("sh: 1: {}: not found\n", req.command),
            wall_time: Duration::ZERO,
            timed_out: false,
            oom: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ToyTest {
    id: String,
    skip: bool,
    body: Vec<String>,
}

static DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\s*)def (test\w*)\s*\(").unwrap());
static CLASS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^class (Test\w*)\b").unwrap());
static CONTAINS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^assert_(not_)?contains\(\s*("(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')\s*,\s*("(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')\s*\)$"#).unwrap()
});
static SLEEP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^time\.sleep\(\s*([0-9.]+)\s*\)$").unwrap());
static ALLOCATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^allocate\(\s*([0-9_]+)\s*\)$").unwrap());

fn is_test_file(path: &str) -> bool {
    let name = path.rsplit('/').next().unwrap_or(path);
    name.ends_with(".py") && (name.starts_with("test_") || name.ends_with("_test.py"))
}

fn unquote(lit: &str) -> String {
    let inner = &lit[1..lit.len() - 1];
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Reports the first unbalanced bracket, ignoring strings and comments.
fn syntax_error(src: &str) -> Option<String> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    let mut triple: Option<char> = None;
    for (no, line) in src.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if let Some(q) = triple {
                if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                    triple = None;
                    i += 3;
                } else {
                    i += if c == '\\' { 2 } else { 1 };
                }
                continue;
            }
            match c {
                '#' => break,
                '"' | '\'' => {
                    if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                        triple = Some(c);
                        i += 3;
                        continue;
                    }
                    i += 1;
                    while i < chars.len() && chars[i] != c {
                        i += if chars[i] == '\\' { 2 } else { 1 };
                    }
                    if i >= chars.len() {
                        return Some(format!("line {}: unterminated string literal", no + 1));
                    }
                }
                '(' | '[' | '{' => stack.push((c, no + 1)),
                ')' | ']' | '}' => {
                    let want = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    match stack.pop() {
                        Some((open, _)) if open == want => {}
                        _ => return Some(format!("line {}: unmatched '{c}'", no + 1)),
                    }
                }
                _ => {}
            }
            i += 1;
        }
    }
    stack
        .pop()
        .map(|(open, line)| format!("line {line}: '{open}' was never closed"))
}

fn collect(path: &str, src: &str) -> Vec<ToyTest> {
    let mut tests: Vec<ToyTest> = Vec::new();
    let mut class: Option<String> = None;
    let mut skip_next = false;
    let mut current: Option<(usize, ToyTest)> = None;
    for line in src.lines() {
        let indent = line.len() - line.trim_start().len();
        let trimmed = line.trim();
        if let Some((def_indent, t)) = current.as_mut() {
            if trimmed.is_empty() || indent > *def_indent {
                if !trimmed.is_empty() && !trimmed.starts_with('#') {
                    t.body.push(trimmed.to_string());
                }
                continue;
            }
            tests.push(current.take().unwrap().1);
        }
        if trimmed.is_empty() {
            continue;
        }
        if indent == 0 {
            class = CLASS.captures(line).map(|m| m[1].to_string());
        }
        if trimmed.starts_with("@pytest.mark.skip") {
            skip_next = true;
        } else if let Some(m) = DEF.captures(line) {
            let nested = !m[1].is_empty();
            let id = match (&class, nested) {
                (Some(c), true) => format!("{path}::{c}::{}", &m[2]),
                (_, false) => format!("{path}::{}", &m[2]),
                (None, true) => {
                    skip_next = false;
                    continue;
                }
            };
            current = Some((
                indent,
                ToyTest {
                    id,
                    skip: std::mem::take(&mut skip_next),
                    body: Vec::new(),
                },
            ));
        } else if !trimmed.starts_with('@') {
            skip_next = false;
        }
    }
    if let Some((_, t)) = current {
        tests.push(t);
    }
    tests
}

enum Outcome {
    Passed,
    Failed(String),
    Skipped,
    TimedOut,
    OutOfMemory,
}

struct ToySession<'a> {
    tree: &'a MemTree,
    limit: f64,
    memory: u64,
    clock: f64,
}

const RULE: &str = "==============================";

impl<'a> ToySession<'a> {
    fn new(req: &'a ExecRequest<'a>) -> Self {
        ToySession {
            tree: req.tree,
            limit: req.time_limit.as_secs_f64(),
            memory: req.memory_limit,
            clock: 0.0,
        }
    }

    fn exec(&mut self, test: &ToyTest) -> Outcome {
        if test.skip {
            return Outcome::Skipped;
        }
        self.clock += TEST_COST_SECS;
        for stmt in &test.body {
            if let Some(m) = CONTAINS.captures(stmt) {
                let negate = m.get(1).is_some();
                let path = unquote(&m[2]);
                let text = unquote(&m[3]);
                let found = self.tree.read(&path).is_some_and(|c| c.contains(&text));
                if found == negate {
                    let verb = if negate { "unexpectedly contains" } else { "does not contain" };
                    return Outcome::Failed(format!("AssertionError: {path} {verb} {text:?}"));
                }
            } else if let Some(m) = SLEEP.captures(stmt) {
                self.clock += m[1].parse::<f64>().unwrap_or(0.0);
                if self.clock > self.limit {
                    return Outcome::TimedOut;
                }
            } else if let Some(m) = ALLOCATE.captures(stmt) {
                if m[1].replace('_', "").parse::<u64>().unwrap_or(0) > self.memory {
                    return Outcome::OutOfMemory;
                }
            } else if stmt == "assert False" || stmt.starts_with("raise ") {
                return Outcome::Failed(format!("AssertionError: {stmt}"));
            }
        }
        Outcome::Passed
    }

    fn run(mut self) -> ExecOutput {
        let mut log = format!("{RULE} test session starts {RULE}\nplatform linux -- Python 3.11.0, pytest-7.4.0\n");
        let files: Vec<String> = self.tree.paths().into_iter().filter(|p| p.ends_with(".py")).collect();
        for path in &files {
            if let Some(err) = syntax_error(&self.tree.read(path).unwrap_or_default()) {
                let _ = write!(
                    log,
                    "collected 0 items / 1 error\n\n{RULE} ERRORS {RULE}\n____ ERROR collecting {path} ____\nE   SyntaxError: {err}\n{RULE} short test summary info {RULE}\nERROR {path} - SyntaxError: {err}\n!!!!! Interrupted: 1 error during collection !!!!!\n{RULE} 1 error in 0.05s {RULE}\n"
                );
                return self.finish(log, Some(2));
            }
        }
        let tests: Vec<ToyTest> = files
            .iter()
            .filter(|p| is_test_file(p))
            .flat_map(|p| collect(p, &self.tree.read(p).unwrap_or_default()))
            .collect();
        let _ = writeln!(log, "collected {} items\n", tests.len());

        let mut summary = String::new();
        let (mut passed, mut failed, mut skipped) = (0, 0, 0);
        for test in &tests {
            let word = match self.exec(test) {
                Outcome::Passed => {
                    passed += 1;
                    "PASSED".to_string()
                }
                Outcome::Failed(why) => {
                    failed += 1;
                    let _ = writeln!(summary, "FAILED {} - {why}", test.id);
                    "FAILED".to_string()
                }
                Outcome::Skipped => {
                    skipped += 1;
                    "SKIPPED (unconditional skip)".to_string()
                }
                Outcome::TimedOut => {
                    let _ = writeln!(log, "{} ", test.id);
                    return ExecOutput {
                        exit_code: None,
                        transcript: log,
                        wall_time: Duration::from_secs_f64(self.limit),
                        timed_out: true,
                        oom: false,
                    };
                }
                Outcome::OutOfMemory => {
                    let _ = writeln!(log, "{} Killed", test.id);
                    let mut out = self.finish(log, Some(137));
                    out.oom = true;
                    return out;
                }
            };
            let _ = writeln!(log, "{} {word}", test.id);
        }
        let _ = write!(log, "\n{RULE} short test summary info {RULE}\n{summary}");
        let mut tally = Vec::new();
        if failed > 0 {
            tally.push(format!("{failed} failed"));
        }
        if passed > 0 {
            tally.push(format!("{passed} passed"));
        }
        if skipped > 0 {
            tally.push(format!("{skipped} skipped"));
        }
        if tally.is_empty() {
            tally.push("no tests ran".to_string());
        }
        let _ = writeln!(log, "{RULE} {} in {:.2}s {RULE}", tally.join(", "), self.clock);
        let code = if failed > 0 {
            1
        } else if tests.is_empty() {
            5
        } else {
            0
        };
        self.finish(log, Some(code))
    }

    fn finish(self, transcript: String, exit_code: Option<i32>) -> ExecOutput {
        ExecOutput {
            exit_code,
            transcript,
            wall_time: Duration::from_secs_f64(self.clock),
            timed_out: false,
            oom: false,
        }
    }
}
