//! Builds unified-diff hunks from two versions of a file.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use similar::{capture_diff_slices, group_diff_ops, Algorithm, DiffOp};

use super::diff::{FilePatch, Hunk, HunkLine, LineKind, Patch};
use super::tree::FileTree;

pub const CONTEXT_LINES: usize = 3;

static DEFINITION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^\s*(?:export\s+)?(?:pub(?:\([^)]*\))?\s+)?(?:async\s+)?(?:def|class|fn|func|function|impl|struct|enum|trait|interface|mod)\b",
    )
    .unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Token<'a> {
    text: &'a str,
    terminated: bool,
}

fn tokens(content: &str) -> Vec<Token<'_>> {
    if content.is_empty() {
        return Vec::new();
    }
    let terminated_all = content.ends_with('\n');
    let body = content.strip_suffix('\n').unwrap_or(content);
    let parts: Vec<&str> = body.split('\n').collect();
    let last = parts.len() - 1;
    parts
        .into_iter()
        .enumerate()
        .map(|(i, text)| Token {
            text,
            terminated: i != last || terminated_all,
        })
        .collect()
}

fn section_for(old: &[Token<'_>], before: usize) -> String {
    let pick = old[..before.min(old.len())]
        .iter()
        .rev()
        .find(|t| DEFINITION.is_match(t.text))
        .or_else(|| {
            old[..before.min(old.len())].iter().rev().find(|t| {
                t.text
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_alphabetic() || c == '_' || c == '$')
            })
        });
    pick.map(|t| {
        let s = t.text.trim();
        s.chars().take(80).collect::<String>()
    })
    .unwrap_or_default()
}

fn line(kind: LineKind, t: &Token<'_>) -> HunkLine {
    HunkLine {
        kind,
        text: t.text.to_string(),
        no_eol: !t.terminated,
    }
}

/// Hunks that turn `old` into `new`, with three lines of context.
pub fn diff_hunks(old: &str, new: &str) -> Vec<Hunk> {
    let a = tokens(old);
    let b = tokens(new);
    let ops = capture_diff_slices(Algorithm::Myers, &a, &b);
    let mut hunks = Vec::new();
    for group in group_diff_ops(ops, CONTEXT_LINES) {
        let Some(first) = group.first() else { continue };
        let first_old = first.old_range().start;
        let first_new = first.new_range().start;
        let mut lines = Vec::new();
        for op in &group {
            match *op {
                DiffOp::Equal { old_index, len, .. } => {
                    lines.extend(a[old_index..old_index + len].iter().map(|t| line(LineKind::Context, t)));
                }
                DiffOp::Delete {
                    old_index, old_len, ..
                } => {
                    lines.extend(a[old_index..old_index + old_len].iter().map(|t| line(LineKind::Removed, t)));
                }
                DiffOp::Insert {
                    new_index, new_len, ..
                } => {
                    lines.extend(b[new_index..new_index + new_len].iter().map(|t| line(LineKind::Added, t)));
                }
                DiffOp::Replace {
                    old_index,
                    old_len,
                    new_index,
                    new_len,
                } => {
                    lines.extend(a[old_index..old_index + old_len].iter().map(|t| line(LineKind::Removed, t)));
                    lines.extend(b[new_index..new_index + new_len].iter().map(|t| line(LineKind::Added, t)));
                }
            }
        }
        let old_len = lines.iter().filter(|l| l.is_old_side()).count();
        let new_len = lines.iter().filter(|l| l.is_new_side()).count();
        hunks.push(Hunk {
            old_start: if old_len == 0 { first_old } else { first_old + 1 },
            old_len,
            new_start: if new_len == 0 { first_new } else { first_new + 1 },
            new_len,
            section: section_for(&a, first_old),
            lines,
        });
    }
    hunks
}

/// File patch turning `old` into `new`; `None` for either side means the
/// file is absent on that side. Returns `None` when nothing changed.
pub fn diff_file(path: &str, old: Option<&str>, new: Option<&str>) -> Option<FilePatch> {
    if old == new {
        return None;
    }
    let hunks = diff_hunks(old.unwrap_or(""), new.unwrap_or(""));
    if hunks.is_empty() && old.is_some() && new.is_some() {
        return None;
    }
    Some(FilePatch {
        old_path: old.map(|_| path.to_string()),
        new_path: new.map(|_| path.to_string()),
        hunks,
    })
}

/// Patch turning tree `old` into tree `new`, files in path order.
pub fn diff_trees<A: FileTree + ?Sized, B: FileTree + ?Sized>(old: &A, new: &B) -> Patch {
    let paths: BTreeSet<String> = old.paths().into_iter().chain(new.paths()).collect();
    let files = paths
        .iter()
        .filter_map(|p| diff_file(p, old.read(p).as_deref(), new.read(p).as_deref()))
        .collect();
    Patch { files, crlf: false }
}
