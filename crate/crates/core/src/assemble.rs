//! Dataset assembly: instance numbering, deduplication and statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{instance_id, Language, TaskInstance};
use crate::patchkit::{parse_unified_diff, LineKind, PatchError};

/// Sorted `(file, normalized line)` pairs over every added and removed line.
pub type Fingerprint = Vec<(String, String)>;

pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Fingerprint of a fix patch. Unparseable text falls back to its
/// `+`/`-` lines so distinct garbage still differs.
pub fn fix_fingerprint(fix_patch: &str) -> Fingerprint {
    let mut fp: Fingerprint = match parse_unified_diff(fix_patch) {
        Ok(p) => p
            .files
            .iter()
            .flat_map(|f| {
                f.hunks
                    .iter()
                    .flat_map(|h| h.lines.iter())
                    .filter(|l| l.kind != LineKind::Context)
                    .map(|l| (f.path().to_string(), normalize_ws(&l.text)))
            })
            .collect(),
        Err(_) => fix_patch
            .lines()
            .filter(|l| (l.starts_with('+') || l.starts_with('-')) && !l.starts_with("+++") && !l.starts_with("---"))
            .map(|l| (String::new(), normalize_ws(&l[1..])))
            .collect(),
    };
    fp.sort();
    fp
}

/// Keeps an instance only if neither its F2P set nor its fix fingerprint was
/// seen on an already kept instance. Ties go to the smallest instance_id.
pub fn dedup(instances: &[TaskInstance]) -> Vec<TaskInstance> {
    let mut sorted: Vec<&TaskInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut seen_f2p: HashSet<&BTreeSet<String>> = HashSet::new();
    let mut seen_fp: HashSet<Fingerprint> = HashSet::new();
    let mut kept = Vec::new();
    for inst in sorted {
        let fp = fix_fingerprint(&inst.fix_patch);
        if seen_f2p.contains(&inst.f2p_tests) || seen_fp.contains(&fp) {
            continue;
        }
        seen_f2p.insert(&inst.f2p_tests);
        seen_fp.insert(fp);
        kept.push(inst.clone());
    }
    kept
}

/// Numbers instances per gym in a canonical order and rewrites their ids.
pub fn assign_instance_ids(instances: &mut [TaskInstance]) {
    instances.sort_by(|a, b| {
        (&a.gym.repo, &a.gym.gym_id, &a.source.source_repo, a.source.pr_number, &a.task_patch, &a.instance_id).cmp(&(
            &b.gym.repo,
            &b.gym.gym_id,
            &b.source.source_repo,
            b.source.pr_number,
            &b.task_patch,
            &b.instance_id,
        ))
    });
    let mut counters: BTreeMap<(String, String), usize> = BTreeMap::new();
    for inst in instances.iter_mut() {
        let n = counters.entry((inst.gym.repo.clone(), inst.gym.gym_id.clone())).or_default();
        *n += 1;
        inst.instance_id = instance_id(&inst.gym.repo, &inst.gym.gym_id, *n);
    }
    instances.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub language: String,
    pub repos: usize,
    pub instances: usize,
    pub mean_fix_hunks: f64,
    pub mean_fix_lines: f64,
    pub mean_p2p: f64,
    pub mean_f2p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
}

struct Measured<'a> {
    repo: &'a str,
    hunks: usize,
    lines: usize,
    p2p: usize,
    f2p: usize,
}

fn mean(xs: impl Iterator<Item = usize>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    xs.sum::<usize>() as f64 / n as f64
}

fn stats_row(language: String, ms: &[&Measured<'_>]) -> StatsRow {
    let n = ms.len();
    StatsRow {
        language,
        repos: ms.iter().map(|m| m.repo).collect::<BTreeSet<_>>().len(),
        instances: n,
        mean_fix_hunks: mean(ms.iter().map(|m| m.hunks), n),
        mean_fix_lines: mean(ms.iter().map(|m| m.lines), n),
        mean_p2p: mean(ms.iter().map(|m| m.p2p), n),
        mean_f2p: mean(ms.iter().map(|m| m.f2p), n),
    }
}

/// Per-language means of fix hunks, changed fix lines, P2P and F2P counts.
pub fn compute_stats(instances: &[TaskInstance]) -> Result<DatasetStats, PatchError> {
    let mut measured = Vec::with_capacity(instances.len());
    for inst in instances {
        let p = parse_unified_diff(&inst.fix_patch)?;
        measured.push((
            inst.gym.language,
            Measured {
                repo: &inst.gym.repo,
                hunks: p.hunk_count(),
                lines: p.changed_line_count(),
                p2p: inst.p2p_tests.len(),
                f2p: inst.f2p_tests.len(),
            },
        ));
    }
    let mut rows = Vec::new();
    for lang in Language::DATASET.iter().chain([Language::Other].iter()) {
        let ms: Vec<&Measured<'_>> = measured.iter().filter(|(l, _)| l == lang).map(|(_, m)| m).collect();
        if !ms.is_empty() {
            rows.push(stats_row(lang.to_string(), &ms));
        }
    }
    let all: Vec<&Measured<'_>> = measured.iter().map(|(_, m)| m).collect();
    Ok(DatasetStats {
        rows,
        total: stats_row("Total".into(), &all),
    })
}

impl DatasetStats {
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>6} {:>10} {:>8} {:>8} {:>8} {:>8}\n",
            "Language", "Repos", "Instances", "#Hunks", "#Lines", "#P2P", "#F2P"
        );
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{:<12} {:>6} {:>10} {:>8.1} {:>8.1} {:>8.1} {:>8.1}",
                r.language, r.repos, r.instances, r.mean_fix_hunks, r.mean_fix_lines, r.mean_p2p, r.mean_f2p
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// Synthetic fix patch with exactly `hunks` hunks and `lines` changed lines
/// (each hunk replaces at least one line).
pub fn synthetic_fix_patch(path: &str, hunks: usize, lines: usize) -> String {
    assert!(hunks >= 1 && lines >= 2 * hunks, "need two changed lines per hunk");
    let mut out = format!("--- a/{path}\n+++ b/{path}\n");
    let per = lines / hunks;
    let mut remaining = lines;
    let mut start = 1;
    for h in 0..hunks {
        let here = if h + 1 == hunks { remaining } else { per };
        remaining -= here;
        let removed = here / 2;
        let added = here - removed;
        let _ = writeln!(out, "@@ -{start},{removed} +{start},{added} @@");
        for i in 0..removed {
            let _ = writeln!(out, "-old_{h}_{i}");
        }
        for i in 0..added {
            let _ = writeln!(out, "+new_{h}_{i}");
        }
        start += removed + 100;
    }
    out
}
