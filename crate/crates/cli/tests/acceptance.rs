//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use mirror_core::assemble::{compute_stats, synthetic_fix_patch};
use mirror_core::gymrun::{
    parse_log, run_state, run_three_logs, CannedRun, ExecRequest, ExecutionPort, FakeGymExecutor, GymError, ProcessExecutor,
    RunMeta, StatusMap, GRACE,
};
use mirror_core::model::{GymSpec, Language, LogParserId, SourceRef, TaskInstance, TestStatus};
use mirror_core::patchkit::{
    apply_patch, diff_trees, edits_to_patch, invert_patch, parse_sr_blocks, parse_unified_diff, strip_comments,
    FileTree, Fuzz, MemTree, SearchReplaceEdit,
};
use mirror_core::traj::{build_mask, ActionKind, ErrorSignatures, Role, Strategy, Trajectory, Turn};
use mirror_core::verify::{apply_rules, categorize_failure, judge, FailureCategory, Outcome, TransitionTriple};

const RULE_ORACLE_BUDGET: Duration = Duration::from_secs(5);
const RANDOM_MULTISETS: usize = 10_000;
const FUZZED_PATCHES: usize = 1_000;
const SR_FIXTURES: usize = 200;
const PRECISION_TARGET: f64 = 84.3;
const RECALL_TARGET: f64 = 86.0;
const METRIC_TOLERANCE: f64 = 0.05;
const MEAN_HUNKS_TARGET: f64 = 3.0;
const MEAN_LINES_TARGET: f64 = 38.5;
const E2E_BUDGET: Duration = Duration::from_secs(60);
const SEED: u64 = 20_240_917;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1 and 2

const STATUSES: [TestStatus; 4] = [TestStatus::Passed, TestStatus::Failed, TestStatus::Skipped, TestStatus::None];

fn letter(s: TestStatus) -> char {
    match s {
        TestStatus::Passed => 'P',
        TestStatus::Failed => 'F',
        TestStatus::Skipped => 'S',
        TestStatus::None => 'N',
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Expected {
    Accepted { f2p: BTreeSet<String>, p2p: BTreeSet<String> },
    Rejected(u8),
    Ambiguous,
}

/// Brute-force reading of the four rules over letter codes.
fn oracle(triples: &[(String, [char; 3])]) -> Expected {
    let permitted_run_test = ["PP", "FF", "SS", "NF"];
    let normal_test_fix = ["PP", "FP", "FF", "SS"];
    let pair = |a: char, b: char| format!("{a}{b}");
    for (_, [r, t, _]) in triples {
        if !permitted_run_test.contains(&pair(*r, *t).as_str()) {
            return Expected::Rejected(1);
        }
    }
    if !triples.iter().any(|(_, [_, t, f])| *t == 'F' && *f == 'P') {
        return Expected::Rejected(2);
    }
    for (_, [r, t, f]) in triples {
        let s: String = [*r, *t, *f].iter().collect();
        if s == "PPF" || s == "SSF" {
            return Expected::Rejected(3);
        }
    }
    for (_, [_, t, f]) in triples {
        if !normal_test_fix.contains(&pair(*t, *f).as_str()) {
            return Expected::Ambiguous;
        }
    }
    let mut f2p = BTreeSet::new();
    let mut p2p = BTreeSet::new();
    for (id, [r, t, f]) in triples {
        if *t == 'F' && *f == 'P' {
            f2p.insert(id.clone());
        }
        if [*r, *t, *f] == ['P', 'P', 'P'] {
            p2p.insert(id.clone());
        }
    }
    Expected::Accepted { f2p, p2p }
}

fn engine(triples: &[TransitionTriple]) -> Expected {
    let v = apply_rules(triples);
    match v.outcome {
        Outcome::Accepted => Expected::Accepted {
            f2p: v.f2p_tests,
            p2p: v.p2p_tests,
        },
        Outcome::Rejected { rule, .. } => Expected::Rejected(rule),
        Outcome::Ambiguous { .. } => Expected::Ambiguous,
    }
}

fn compare(statuses: &[(TestStatus, TestStatus, TestStatus)]) -> bool {
    let triples: Vec<TransitionTriple> = statuses
        .iter()
        .enumerate()
        .map(|(i, &(a, b, c))| TransitionTriple::new(format!("t{i}"), a, b, c))
        .collect();
    let coded: Vec<(String, [char; 3])> = statuses
        .iter()
        .enumerate()
        .map(|(i, &(a, b, c))| (format!("t{i}"), [letter(a), letter(b), letter(c)]))
        .collect();
    engine(&triples) == oracle(&coded)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut singles = 0;
    for a in STATUSES {
        for b in STATUSES {
            for c in STATUSES {
                ensure(compare(&[(a, b, c)]), format!("disagree on <{}{}{}>", letter(a), letter(b), letter(c)))?;
                singles += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for n in 0..RANDOM_MULTISETS {
        let len = rng.gen_range(1..=8);
        // Bias toward the allow-set so accepted verdicts are common.
        let set: Vec<_> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    *[
                        (TestStatus::Passed, TestStatus::Passed, TestStatus::Passed),
                        (TestStatus::None, TestStatus::Failed, TestStatus::Passed),
                        (TestStatus::Failed, TestStatus::Failed, TestStatus::Passed),
                        (TestStatus::Skipped, TestStatus::Skipped, TestStatus::Skipped),
                    ]
                    .choose(&mut rng)
                    .unwrap()
                } else {
                    (
                        *STATUSES.choose(&mut rng).unwrap(),
                        *STATUSES.choose(&mut rng).unwrap(),
                        *STATUSES.choose(&mut rng).unwrap(),
                    )
                }
            })
            .collect();
        ensure(compare(&set), format!("disagree on multiset #{n}: {set:?}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < RULE_ORACLE_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("{singles} triples + {RANDOM_MULTISETS} multisets agree, {elapsed:.2?}"))
}

fn helper_f2p() -> TransitionTriple {
    TransitionTriple::new("helper", TestStatus::None, TestStatus::Failed, TestStatus::Passed)
}

fn criterion_2() -> Check {
    use TestStatus::{Failed as F, None as N, Passed as P, Skipped as S};
    let permitted = [(P, P, P), (F, F, F), (S, S, S), (N, F, P)];
    let mut rejected = 0;
    for a in STATUSES {
        for b in STATUSES {
            let allowed = permitted.iter().find(|t| (t.0, t.1) == (a, b));
            let fix = allowed.map(|t| t.2).unwrap_or(P);
            let v = apply_rules(&[TransitionTriple::new("x", a, b, fix), helper_f2p()]);
            match allowed {
                Some(_) => ensure(v.is_accepted(), format!("<{},{}> not accepted: {:?}", letter(a), letter(b), v.outcome))?,
                None => {
                    ensure(v.rejected_rule() == Some(1), format!("<{},{}> not rule 1", letter(a), letter(b)))?;
                    rejected += 1;
                }
            }
        }
    }
    ensure(rejected == 12, format!("{rejected} pairs rejected"))?;
    let mut rule3 = Vec::new();
    for a in STATUSES {
        for b in STATUSES {
            for c in STATUSES {
                let v = apply_rules(&[TransitionTriple::new("x", a, b, c), helper_f2p()]);
                if v.rejected_rule() == Some(3) {
                    rule3.push(format!("{}{}{}", letter(a), letter(b), letter(c)));
                }
            }
        }
    }
    ensure(rule3 == ["PPF", "SSF"], format!("rule 3 fired on {rule3:?}"))?;
    Ok("4 pairs accepted, 12 rejected by rule 1; rule 3 exactly on PPF, SSF".into())
}

// ---------------------------------------------------------------- 3

const WORDS: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "return", "value", "x", "(", ")", "=", "+", "if",
];

fn random_line(rng: &mut ChaCha8Rng, tag: usize) -> String {
    let n = rng.gen_range(0..6);
    let indent = " ".repeat(4 * rng.gen_range(0..3));
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    format!("{indent}{} l{tag}", words.join(" "))
}

fn random_file(rng: &mut ChaCha8Rng, lines: usize, base: usize) -> String {
    let mut s: String = (0..lines).map(|i| random_line(rng, base + i) + "\n").collect();
    if rng.gen_bool(0.1) && s.ends_with('\n') {
        s.pop();
    }
    s
}

fn mutate(rng: &mut ChaCha8Rng, text: &str, base: usize) -> String {
    let trailing = text.ends_with('\n');
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for k in 0..rng.gen_range(1..5) {
        let at = rng.gen_range(0..=lines.len());
        match rng.gen_range(0..3) {
            0 if at < lines.len() => {
                lines.remove(at);
            }
            1 if at < lines.len() => lines[at] = random_line(rng, base + k),
            _ => lines.insert(at, random_line(rng, base + 100 + k)),
        }
    }
    let mut out = lines.join("\n");
    let keep_trailing = if rng.gen_bool(0.1) { !trailing } else { trailing };
    if keep_trailing && !out.is_empty() {
        out.push('\n');
    }
    out
}

fn fuzz_pair(rng: &mut ChaCha8Rng, n: usize) -> (MemTree, MemTree) {
    let mut old = MemTree::new();
    let mut new = MemTree::new();
    for f in 0..rng.gen_range(1..4) {
        let path = format!("pkg{}/mod_{f}.py", n % 3);
        let len = rng.gen_range(1..40);
        let text = random_file(rng, len, 1000 * f);
        match rng.gen_range(0..10) {
            0 => new.insert(&path, &text),
            1 => old.insert(&path, &text),
            _ => {
                old.insert(&path, &text);
                new.insert(&path, &mutate(rng, &text, 500 + 1000 * f));
            }
        }
    }
    (old, new)
}

fn algebra_identity(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut done = 0;
    let mut n = 0;
    while done < FUZZED_PATCHES {
        n += 1;
        let (old, new) = fuzz_pair(rng, n);
        let patch = diff_trees(&old, &new);
        if patch.is_empty() {
            continue;
        }
        let text = patch.render();
        let parsed = parse_unified_diff(&text).map_err(|e| format!("#{n}: reparse: {e}\n{text}"))?;
        let forward = apply_patch(&old, &parsed, Fuzz::STRICT).map_err(|e| format!("#{n}: apply: {e}"))?;
        ensure(forward == new, format!("#{n}: forward mismatch\n{text}"))?;
        let back = apply_patch(&forward, &invert_patch(&parsed), Fuzz::STRICT).map_err(|e| format!("#{n}: invert: {e}"))?;
        for p in old.paths().into_iter().chain(back.paths()) {
            ensure(
                old.read(&p).map(String::into_bytes) == back.read(&p).map(String::into_bytes),
                format!("#{n}: {p} differs after invert\n{text}"),
            )?;
        }
        done += 1;
    }
    Ok(done)
}

fn sr_equivalence(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for n in 0..SR_FIXTURES {
        let path = format!("src/file_{n}.py");
        let len = rng.gen_range(3..30);
        let content = random_file(rng, len, 0) + if rng.gen_bool(0.9) { "" } else { "\n" };
        let lines: Vec<&str> = content.split_inclusive('\n').collect();
        let start = rng.gen_range(0..lines.len());
        let end = rng.gen_range(start + 1..=lines.len().min(start + 5));
        let mut search: String = lines[start..end].concat();
        if !search.ends_with('\n') {
            search.push('\n');
        }
        let replace: String = (0..rng.gen_range(0..4)).map(|i| random_line(rng, 9000 + i) + "\n").collect();
        let edit = SearchReplaceEdit {
            file_path: path.clone(),
            search_block: search.clone(),
            replace_block: replace.clone(),
        };
        let edits = if n % 2 == 0 {
            let block = format!("```python\n### {path}\n<<<<<<< SEARCH\n{search}=======\n{replace}>>>>>>> REPLACE\n```\n");
            let parsed = parse_sr_blocks(&block).map_err(|e| format!("#{n}: {e}"))?;
            ensure(parsed == [edit.clone()], format!("#{n}: block parse differs: {parsed:?}"))?;
            parsed
        } else {
            vec![edit]
        };
        let tree = MemTree::new().with(&path, &content);
        let expected = if content.contains(&search) {
            content.replacen(&search, &replace, 1)
        } else {
            // Final line without a newline.
            let trimmed = search.trim_end_matches('\n');
            let r = if content.ends_with(trimmed) { replace.trim_end_matches('\n') } else { &replace };
            content.replacen(trimmed, r, 1)
        };
        let outcome = edits_to_patch(&tree, &edits).map_err(|e| format!("#{n}: {e}"))?;
        let got = apply_patch(&tree, &outcome.patch, Fuzz::STRICT).map_err(|e| format!("#{n}: {e}"))?;
        let got = got.read(&path).unwrap_or_default();
        ensure(got == expected, format!("#{n}: got {got:?}, expected {expected:?}"))?;
    }
    Ok(SR_FIXTURES)
}

#[derive(Deserialize)]
struct CommentCase {
    input: String,
    expected: Vec<String>,
}

fn comment_oracle() -> Result<usize, String> {
    let mut count = 0;
    for (file, lang, ext) in [
        ("python.json", Language::Python, "py"),
        ("rust.json", Language::Rust, "rs"),
        ("go.json", Language::Go, "go"),
        ("javascript.json", Language::JavaScript, "js"),
    ] {
        let text = fs::read_to_string(fixtures().join("comments").join(file)).map_err(|e| e.to_string())?;
        let cases: Vec<CommentCase> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        for (i, c) in cases.iter().enumerate() {
            let path = format!("snippet.{ext}");
            let patch = diff_trees(&MemTree::new(), &MemTree::new().with(&path, &c.input));
            let once = strip_comments(&patch, lang).map_err(|e| e.to_string())?;
            let twice = strip_comments(&once, lang).map_err(|e| e.to_string())?;
            ensure(once == twice, format!("{file} #{i}: not idempotent"))?;
            let got: Vec<String> = once.added_lines().map(|(_, l)| l.text.clone()).collect();
            ensure(got == c.expected, format!("{file} #{i}: got {got:?}, expected {:?}", c.expected))?;
            count += 1;
        }
    }
    Ok(count)
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let patches = algebra_identity(&mut rng)?;
    let sr = sr_equivalence(&mut rng)?;
    let comments = comment_oracle()?;
    Ok(format!(
        "apply/invert identity on {patches} patches, S/R = replacen on {sr}, {comments} comment fixtures idempotent and oracle-consistent"
    ))
}

// ---------------------------------------------------------------- 4

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_issue-mirror")
}

fn run_cli(config: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(binary())
        .arg("--config")
        .arg(config)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn criterion_4() -> Check {
    let dir = fixtures().join("filter_eval");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = tmp.path().join("report.json");
    let table = run_cli(
        &dir.join("config.toml"),
        &[
            "eval-filter",
            "--labeled",
            dir.join("labeled.jsonl").to_str().unwrap(),
            "--readme",
            dir.join("readme.md").to_str().unwrap(),
            "--tests",
            dir.join("tests.txt").to_str().unwrap(),
            "--output",
            report.to_str().unwrap(),
        ],
    )?;
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let precision = v["precision"].as_f64().ok_or("no precision")?;
    let recall = v["recall"].as_f64().ok_or("no recall")?;
    let c = &v["confusion"];
    ensure(
        (c["tp"].as_u64(), c["fn"].as_u64(), c["fp"].as_u64(), c["tn"].as_u64()) == (Some(43), Some(7), Some(8), Some(42)),
        format!("confusion {c}"),
    )?;
    ensure(
        (precision - PRECISION_TARGET).abs() <= METRIC_TOLERANCE && (recall - RECALL_TARGET).abs() <= METRIC_TOLERANCE,
        format!("precision {precision}, recall {recall}\n{table}"),
    )?;
    Ok(format!("precision {precision:.1}%, recall {recall:.1}% (TP 43, FN 7, FP 8, TN 42)"))
}

// ---------------------------------------------------------------- 5

fn gym() -> GymSpec {
    GymSpec {
        gym_id: "stats-py".into(),
        repo: "acme/stats".into(),
        base_commit: "0".repeat(40),
        language: Language::Python,
        image_ref: "stats:latest".into(),
        test_command: "pytest -rA".into(),
        log_parser_id: LogParserId::Pytest,
        time_limit: Duration::from_secs(60),
        memory_limit: 1 << 31,
        test_file_overrides: vec![],
    }
}

fn criterion_5() -> Check {
    // Means of 3.0 hunks and 38.5 changed lines.
    let shapes = [(2, 30), (3, 38), (4, 47), (3, 39)];
    let instances: Vec<TaskInstance> = shapes
        .iter()
        .enumerate()
        .map(|(i, &(hunks, lines))| TaskInstance {
            instance_id: format!("acme__stats__stats-py-{i}"),
            gym: gym(),
            source: SourceRef {
                source_repo: "other/repo".into(),
                pr_number: i as u64,
            },
            problem_statement: "p".into(),
            task_patch: String::new(),
            test_patch: String::new(),
            fix_patch: synthetic_fix_patch(&format!("src/m{i}.py"), hunks, lines),
            f2p_tests: [format!("t::f{i}")].into(),
            p2p_tests: BTreeSet::new(),
            created_at: "1970-01-01T00:00:00Z".into(),
        })
        .collect();
    let stats = compute_stats(&instances).map_err(|e| e.to_string())?;
    let row = stats.rows.iter().find(|r| r.language == "Python").ok_or("no Python row")?;
    ensure(
        row.mean_fix_hunks == MEAN_HUNKS_TARGET && row.mean_fix_lines == MEAN_LINES_TARGET,
        format!("hunks {} lines {}", row.mean_fix_hunks, row.mean_fix_lines),
    )?;
    Ok(format!("Python row: mean hunks {:.1}, mean lines {:.1}", row.mean_fix_hunks, row.mean_fix_lines))
}

// ---------------------------------------------------------------- 6

fn copy_dir(src: &Path, dst: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dst)?;
    for e in fs::read_dir(src)? {
        let e = e?;
        let to = dst.join(e.file_name());
        if e.file_type()?.is_dir() {
            if e.file_name() != "out" {
                copy_dir(&e.path(), &to)?;
            }
        } else {
            fs::copy(e.path(), to)?;
        }
    }
    Ok(())
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pipeline_run(workdir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    copy_dir(&fixtures().join("e2e"), workdir).map_err(|e| e.to_string())?;
    let config = workdir.join("config.toml");
    for step in ["collect", "mirror", "verify", "assemble"] {
        run_cli(&config, &[step])?;
    }
    Ok(snapshot(&workdir.join("out")))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_run(a.path())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = pipeline_run(b.path())?;
    let elapsed = start.elapsed();

    let dataset = String::from_utf8(first.get("dataset.jsonl").cloned().ok_or("no dataset.jsonl")?).unwrap();
    let instances = mirror_core::model::read_instances(&dataset).map_err(|e| e.to_string())?;
    ensure(!instances.is_empty(), "no accepted instances")?;
    let inst = &instances[0];
    let task = parse_unified_diff(&inst.task_patch).map_err(|e| e.to_string())?;
    ensure(invert_patch(&task).render() == inst.fix_patch, "fix_patch is not invert(task_patch)")?;

    // The f2p test must be absent, failing, then passing across the three logs.
    let f2p = inst.f2p_tests.iter().next().ok_or("empty f2p")?;
    let manifest_key = first
        .keys()
        .find(|k| k.ends_with("manifest.json"))
        .ok_or("no persisted manifest")?;
    let manifest: serde_json::Value = serde_json::from_slice(&first[manifest_key]).map_err(|e| e.to_string())?;
    let states: Vec<String> = manifest["states"]
        .as_array()
        .ok_or("manifest has no states")?
        .iter()
        .map(|s| s["tests"][f2p.as_str()].as_str().unwrap_or("NONE").to_string())
        .collect();
    ensure(states == ["NONE", "FAILED", "PASSED"], format!("{f2p}: {states:?}"))?;

    ensure(first == second, "re-run differs")?;
    ensure(elapsed < E2E_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} instance(s); {f2p} <NONE,F,P>; fix = invert(task); {} output files byte-identical on re-run; {elapsed:.2?}",
        instances.len(),
        first.len()
    ))
}

// ---------------------------------------------------------------- 7

#[derive(Deserialize)]
struct LogLabel {
    parser: LogParserId,
    category: FailureCategory,
}

fn criterion_7() -> Check {
    let dir = fixtures().join("categorize");
    let labels: BTreeMap<String, LogLabel> =
        serde_json::from_str(&fs::read_to_string(dir.join("labels.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(labels.len() == 20, format!("{} labeled logs", labels.len()))?;
    let mut per = BTreeMap::<FailureCategory, usize>::new();
    for (name, label) in &labels {
        let log = fs::read_to_string(dir.join(name)).map_err(|e| e.to_string())?;
        let status = match parse_log(label.parser, &log) {
            Ok(p) => StatusMap::new(p.tests, RunMeta::default()),
            Err(_) => StatusMap::default(),
        };
        let got = categorize_failure(&[(log.as_str(), &status)]);
        ensure(got == label.category, format!("{name}: got {got:?}, labeled {:?}", label.category))?;
        *per.entry(got).or_default() += 1;
    }
    Ok(format!("20/20 correct ({per:?})"))
}

// ---------------------------------------------------------------- 8

fn five_turns(with_error: bool) -> Trajectory {
    let (kind, obs) = if with_error {
        (ActionKind::Malformed, "ERROR: Failed to parse function call")
    } else {
        (ActionKind::Edit, "File src/app.py edited.")
    };
    Trajectory {
        instance_id: "acme__toyapp__toy-py-1".into(),
        turns: vec![
            Turn::new(Role::User, "Registering with an invalid payload returns 500."),
            Turn::action(ActionKind::Shell, "grep -n 500 src/app.py"),
            Turn::new(Role::Observation, "6:        return {\"error\": \"Bad input\"}, 500"),
            Turn::action(kind, "<function=str_replace_editor"),
            Turn::new(Role::Observation, obs),
            Turn::action(ActionKind::Finish, "submit"),
        ],
        final_patch: String::new(),
        passed_tests_after_patch: None,
    }
}

fn criterion_8() -> Check {
    let sigs = ErrorSignatures::default();
    let t = five_turns(true);
    let roles = |m: &mirror_core::traj::MaskedTrajectory| m.turns.iter().map(|x| x.turn.role).collect::<Vec<_>>();
    let ro = build_mask(&t, Strategy::ResponseOnly, &sigs);
    let em = build_mask(&t, Strategy::ErrorMasking, &sigs);
    let ep = build_mask(&t, Strategy::ErrorPruning, &sigs);
    let original: Vec<Role> = t.turns.iter().map(|x| x.role).collect();
    ensure(ro.assistant_bits() == [1, 1, 1] && roles(&ro) == original, "response-only")?;
    ensure(em.assistant_bits() == [1, 0, 1] && roles(&em) == original, "error-masking")?;
    ensure(
        ep.assistant_bits() == [1, 1]
            && roles(&ep) == [Role::User, Role::Assistant, Role::Observation, Role::Assistant]
            && ep.turns.iter().all(|m| m.turn.content != "<function=str_replace_editor"),
        format!("error-pruning: {:?}", roles(&ep)),
    )?;
    let clean = five_turns(false);
    let all: Vec<_> = [Strategy::ResponseOnly, Strategy::ErrorPruning, Strategy::ErrorMasking]
        .iter()
        .map(|&s| build_mask(&clean, s, &sigs).turns)
        .collect();
    ensure(all[0] == all[1] && all[1] == all[2], "error-free strategies differ")?;
    Ok("RO 1,1,1; EM 1,0,1; EP 4 turns 1,1; error-free all equal".into())
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Check {
    let mut g = gym();
    g.time_limit = Duration::from_secs(30);
    let limit = g.time_limit;

    // Toy interpreter: the added test sleeps past the limit.
    let base = MemTree::new()
        .with("src/app.py", "def f():\n    return 400\n")
        .with("tests/test_app.py", "def test_ok():\n    assert_contains('src/app.py', 'return 400')\n");
    let mut broken = base.clone();
    broken.insert("src/app.py", "def f():\n    return 500\n");
    let task = diff_trees(&base, &broken);
    let mut with_test = broken.clone();
    with_test.insert(
        "tests/test_app.py",
        "def test_ok():\n    assert_contains('src/app.py', 'return 400')\n\n\ndef test_slow():\n    time.sleep(45)\n    assert_contains('src/app.py', 'return 400')\n",
    );
    let test = diff_trees(&broken, &with_test);
    let fix = invert_patch(&task);
    let toy = FakeGymExecutor::toy();
    let logs = run_three_logs(&g, &base, &task, &test, &fix, &toy).map_err(|e| e.to_string())?;
    ensure(logs.fix.status.meta.timed_out, "toy run did not time out")?;
    ensure(
        Duration::from_secs_f64(logs.fix.status.meta.wall_time_secs) <= limit + GRACE,
        format!("toy wall time {}", logs.fix.status.meta.wall_time_secs),
    )?;
    let v = judge(&logs);
    ensure(v.is_ambiguous() && !v.is_accepted(), format!("toy verdict {:?}", v.outcome))?;

    // Canned run that reports more time than allowed.
    let canned = FakeGymExecutor::default().with_canned(
        "pytest -rA",
        CannedRun {
            exit_code: 0,
            log: "PASSED tests/test_app.py::test_ok\n".into(),
            wall_time_secs: 120.0,
        },
    );
    let timed_out = match run_state(&g, &base, &[], &canned) {
        Ok(r) => r.status.meta.timed_out,
        Err(GymError::ParserAnomaly { meta, .. }) => meta.timed_out,
        Err(e) => return Err(e.to_string()),
    };
    ensure(timed_out, "canned overlong run not flagged")?;

    // A real process is killed within the grace period.
    let exec = ProcessExecutor::default();
    let tree = MemTree::new().with("x.txt", "x\n");
    let req = ExecRequest {
        image_ref: "",
        tree: &tree,
        command: "sleep 30",
        time_limit: Duration::from_secs(1),
        memory_limit: 1 << 30,
    };
    let t0 = Instant::now();
    let out = exec.run(&req).map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    ensure(out.timed_out, "sleep 30 was not flagged")?;
    ensure(took <= req.time_limit + GRACE, format!("process took {took:?}"))?;
    Ok(format!(
        "toy timeout at {:.0}s of {}s limit -> Ambiguous; process killed after {took:.2?} (limit 1s + {}s grace)",
        logs.fix.status.meta.wall_time_secs,
        limit.as_secs(),
        GRACE.as_secs()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("transition-rule oracle equivalence", criterion_1),
        ("rule vignettes", criterion_2),
        ("patch algebra", criterion_3),
        ("filter metrics", criterion_4),
        ("dataset stats", criterion_5),
        ("end-to-end mock run", criterion_6),
        ("failure categorization", criterion_7),
        ("mask strategies", criterion_8),
        ("execution limits", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
