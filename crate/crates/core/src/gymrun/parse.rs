//! Test-log parsers. Every parser produces ids of the form
//! `relative/path::qualified::name`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;

use crate::model::{LogParserId, TestStatus};

use super::GymError;

/// Parser output before run metadata is attached.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedLog {
    pub tests: BTreeMap<String, TestStatus>,
    pub diagnostics: Vec<String>,
}

#[derive(Default)]
struct Collector {
    out: ParsedLog,
    seen: BTreeSet<(u8, String)>,
}

impl Collector {
    /// Records a status. `form` separates line styles that legitimately
    /// repeat a test (pytest prints both a progress line and a summary line).
    fn record(&mut self, form: u8, id: String, status: TestStatus) {
        if !self.seen.insert((form, id.clone())) {
            self.out
                .diagnostics
                .push(format!("duplicate result for {id}; keeping last ({status})"));
        }
        self.out.tests.insert(id, status);
    }
}

pub fn parse_log(parser: LogParserId, raw_log: &str) -> Result<ParsedLog, GymError> {
    if raw_log.trim().is_empty() {
        return Err(GymError::anomaly("empty log"));
    }
    let parsed = match parser {
        LogParserId::Pytest => parse_pytest(raw_log),
        LogParserId::CargoTest => parse_cargo(raw_log),
        LogParserId::GoTest => parse_go(raw_log),
        LogParserId::Jest => parse_jest(raw_log),
    };
    parsed.ok_or_else(|| GymError::anomaly(format!("log does not look like {parser} output")))
}

static PYTEST_SIGNATURE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^=+ (test session starts|short test summary info|.*(passed|failed|error|errors|skipped|no tests ran).*) =+$|^collected \d+ items?").unwrap()
});
static PYTEST_PROGRESS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\S+\.py::\S+(?:\[[^\]]*\])?)\s+(PASSED|FAILED|SKIPPED|ERROR|XFAIL|XPASS)\b").unwrap()
});
static PYTEST_SUMMARY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(PASSED|FAILED|SKIPPED|ERROR|XFAIL|XPASS) (\S+\.py::[^\s\[]+(?:\[[^\]]*\])?)").unwrap()
});

fn pytest_status(word: &str) -> TestStatus {
    match word {
        "PASSED" | "XFAIL" | "XPASS" => TestStatus::Passed,
        "SKIPPED" => TestStatus::Skipped,
        _ => TestStatus::Failed,
    }
}

fn parse_pytest(log: &str) -> Option<ParsedLog> {
    let mut c = Collector::default();
    let mut recognized = PYTEST_SIGNATURE.is_match(log);
    for line in log.lines() {
        let line = line.trim_end();
        if let Some(m) = PYTEST_PROGRESS.captures(line) {
            recognized = true;
            c.record(0, m[1].to_string(), pytest_status(&m[2]));
        } else if let Some(m) = PYTEST_SUMMARY.captures(line) {
            recognized = true;
            c.record(1, m[2].to_string(), pytest_status(&m[1]));
        }
    }
    recognized.then_some(c.out)
}

static CARGO_SIGNATURE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^running \d+ tests?$|^test result: |^error(\[E\d+\])?: |^\s+Compiling ").unwrap()
});
static CARGO_RUNNING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*Running (?:unittests )?(\S+)").unwrap());
static CARGO_DOC: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*Doc-tests (\S+)").unwrap());
static CARGO_TEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^test (.+?) \.\.\. (ok|FAILED|ignored)\b").unwrap());

fn parse_cargo(log: &str) -> Option<ParsedLog> {
    let mut c = Collector::default();
    let mut recognized = CARGO_SIGNATURE.is_match(log);
    let mut target = String::new();
    for line in log.lines() {
        if let Some(m) = CARGO_RUNNING.captures(line) {
            target = m[1].to_string();
        } else if let Some(m) = CARGO_DOC.captures(line) {
            target = format!("doc/{}", &m[1]);
        } else if let Some(m) = CARGO_TEST.captures(line) {
            recognized = true;
            let name = &m[1];
            let id = if target.is_empty() {
                name.to_string()
            } else {
                format!("{target}::{name}")
            };
            let status = match &m[2] {
                "ok" => TestStatus::Passed,
                "ignored" => TestStatus::Skipped,
                _ => TestStatus::Failed,
            };
            c.record(0, id, status);
        }
    }
    recognized.then_some(c.out)
}

static GO_RESULT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*--- (PASS|FAIL|SKIP): (\S+)").unwrap());
static GO_PACKAGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(ok|FAIL|\?)\s+(\S+)(?:\s|$)").unwrap());
static GO_SIGNATURE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^=== RUN |^(ok|FAIL|\?)\s+\S+|^# \S+$|^--- (PASS|FAIL|SKIP)").unwrap());

fn parse_go(log: &str) -> Option<ParsedLog> {
    let mut c = Collector::default();
    let recognized = GO_SIGNATURE.is_match(log);
    // Package lines come after their tests.
    let mut pending: Vec<(String, TestStatus)> = Vec::new();
    let flush = |c: &mut Collector, pending: &mut Vec<(String, TestStatus)>, pkg: &str| {
        for (name, status) in pending.drain(..) {
            let id = if pkg.is_empty() {
                name
            } else {
                format!("{pkg}::{name}")
            };
            c.record(0, id, status);
        }
    };
    for line in log.lines() {
        if let Some(m) = GO_RESULT.captures(line) {
            let status = match &m[1] {
                "PASS" => TestStatus::Passed,
                "SKIP" => TestStatus::Skipped,
                _ => TestStatus::Failed,
            };
            pending.push((m[2].to_string(), status));
        } else if let Some(m) = GO_PACKAGE.captures(line) {
            if m[2].starts_with('[') {
                continue;
            }
            flush(&mut c, &mut pending, &m[2]);
        }
    }
    flush(&mut c, &mut pending, "");
    recognized.then_some(c.out)
}

static JEST_FILE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(PASS|FAIL)\s+(\S+)").unwrap());
static JEST_TEST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\s*)(✓|✔|√|✕|✗|×|○|✎)\s+(?:(skipped|todo)\s+)?(.+?)(?:\s+\(\d+(?:\.\d+)?\s*m?s\))?$").unwrap());
static JEST_SIGNATURE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*(PASS|FAIL)\s+\S+|^Tests:\s+").unwrap());

fn parse_jest(log: &str) -> Option<ParsedLog> {
    let mut c = Collector::default();
    let recognized = JEST_SIGNATURE.is_match(log);
    let mut file = String::new();
    let mut describes: Vec<(usize, String)> = Vec::new();
    for line in log.lines() {
        if let Some(m) = JEST_FILE.captures(line) {
            file = m[2].to_string();
            describes.clear();
            continue;
        }
        if file.is_empty() || line.trim().is_empty() {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        describes.retain(|(d, _)| *d < indent);
        if let Some(m) = JEST_TEST.captures(line) {
            let status = match &m[2] {
                "✓" | "✔" | "√" => TestStatus::Passed,
                "○" | "✎" => TestStatus::Skipped,
                _ => TestStatus::Failed,
            };
            let mut id = file.clone();
            for (_, d) in &describes {
                id.push_str("::");
                id.push_str(d);
            }
            id.push_str("::");
            id.push_str(m[4].trim());
            c.record(0, id, status);
        } else if indent > 0 && !line.trim_start().starts_with('●') {
            describes.push((indent, line.trim().to_string()));
        } else {
            // Failure details and summaries end the listing for this file.
            file.clear();
        }
    }
    recognized.then_some(c.out)
}
