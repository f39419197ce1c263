use super::diff::{FilePatch, Hunk, HunkLine, LineKind, Patch};
use super::tree::{FileTree, MemTree};
use super::PatchError;

/// How many leading/trailing context lines of a hunk may be ignored when
/// locating it, in the manner of `patch --fuzz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fuzz(pub usize);

impl Fuzz {
    /// Exact context, used when verifying.
    pub const STRICT: Fuzz = Fuzz(0);
    /// Relaxed context, used while mirroring.
    pub const MIRRORING: Fuzz = Fuzz(2);
}

impl Default for Fuzz {
    fn default() -> Self {
        Fuzz::STRICT
    }
}

/// File content split into lines plus whether the final line is terminated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Lines {
    pub lines: Vec<String>,
    pub trailing_newline: bool,
}

impl Lines {
    pub fn split(content: &str) -> Lines {
        if content.is_empty() {
            return Lines {
                lines: Vec::new(),
                trailing_newline: true,
            };
        }
        let trailing_newline = content.ends_with('\n');
        let body = content.strip_suffix('\n').unwrap_or(content);
        Lines {
            lines: body.split('\n').map(str::to_string).collect(),
            trailing_newline,
        }
    }

    pub fn join(&self) -> String {
        if self.lines.is_empty() {
            return String::new();
        }
        let mut out = self.lines.join("\n");
        if self.trailing_newline {
            out.push('\n');
        }
        out
    }
}

/// Applies `patch` to a snapshot of `tree` and returns the patched snapshot.
/// Either every file applies or nothing does; `tree` is never modified.
pub fn apply_patch<T: FileTree + ?Sized>(
    tree: &T,
    patch: &Patch,
    fuzz: Fuzz,
) -> Result<MemTree, PatchError> {
    let mut out = tree.snapshot();
    for fp in &patch.files {
        apply_file(&mut out, fp, fuzz)?;
    }
    Ok(out)
}

fn apply_file(tree: &mut MemTree, fp: &FilePatch, fuzz: Fuzz) -> Result<(), PatchError> {
    let path = fp.path().to_string();
    let current = match &fp.old_path {
        None => {
            if tree.contains(&path) {
                return Err(PatchError::ApplyConflict {
                    file: path,
                    hunk: 0,
                    reason: "file to be created already exists".into(),
                });
            }
            String::new()
        }
        Some(old) => tree
            .read(old)
            .ok_or_else(|| PatchError::MissingTarget(old.clone()))?,
    };

    let patched = apply_hunks(&current, &fp.hunks, fuzz).map_err(|(hunk, reason)| {
        PatchError::ApplyConflict {
            file: path.clone(),
            hunk,
            reason,
        }
    })?;

    if let Some(old) = &fp.old_path {
        tree.remove(old);
    }
    match &fp.new_path {
        Some(new) => tree.insert(new, &patched),
        None if !patched.is_empty() => {
            return Err(PatchError::ApplyConflict {
                file: path,
                hunk: fp.hunks.len().saturating_sub(1),
                reason: "deleted file still has content after removal".into(),
            })
        }
        None => {}
    }
    Ok(())
}

/// Applies hunks in order to one file's content.
/// On failure returns the zero-based hunk index and a reason.
pub(crate) fn apply_hunks(
    content: &str,
    hunks: &[Hunk],
    fuzz: Fuzz,
) -> Result<String, (usize, String)> {
    let mut file = Lines::split(content);
    let mut delta: isize = 0;
    let mut cursor = 0usize;

    for (idx, hunk) in hunks.iter().enumerate() {
        let old: Vec<&HunkLine> = hunk.old_lines().collect();
        let new: Vec<&HunkLine> = hunk.new_lines().collect();
        let lead_ctx = hunk
            .lines
            .iter()
            .take_while(|l| l.kind == LineKind::Context)
            .count();
        let trail_ctx = hunk
            .lines
            .iter()
            .rev()
            .take_while(|l| l.kind == LineKind::Context)
            .count();

        let mut placed = None;
        for level in 0..=fuzz.0 {
            let lead = level.min(lead_ctx);
            let trail = level.min(trail_ctx);
            if lead + trail > old.len() || (level > 0 && lead == 0 && trail == 0) {
                continue;
            }
            let block: Vec<&str> = old[lead..old.len() - trail]
                .iter()
                .map(|l| l.text.as_str())
                .collect();
            let expected = (hunk.old_index() as isize + delta + lead as isize).max(0) as usize;
            let touches_end_required = trail == 0 && old.last().is_some_and(|l| l.no_eol);
            if let Some(pos) = locate(&file, &block, expected, cursor, touches_end_required) {
                placed = Some((pos, lead, trail, block.len()));
                break;
            }
        }
        let Some((pos, lead, trail, old_count)) = placed else {
            return Err((idx, "context does not match".into()));
        };

        let replacement: Vec<String> = new[lead.min(new.len())..new.len().saturating_sub(trail)]
            .iter()
            .map(|l| l.text.clone())
            .collect();
        let at_end = pos + old_count == file.lines.len();
        let new_count = replacement.len();
        file.lines.splice(pos..pos + old_count, replacement);
        if at_end && trail == 0 {
            file.trailing_newline = !new.last().is_some_and(|l| l.no_eol);
        }
        cursor = pos + new_count;
        delta += new_count as isize - old_count as isize;
    }
    Ok(file.join())
}

fn locate(
    file: &Lines,
    block: &[&str],
    expected: usize,
    min_pos: usize,
    must_end_unterminated: bool,
) -> Option<usize> {
    let n = file.lines.len();
    if block.len() > n {
        return None;
    }
    let max_pos = n - block.len();
    if min_pos > max_pos {
        return None;
    }
    let fits = |pos: usize| {
        let matches = file.lines[pos..pos + block.len()]
            .iter()
            .zip(block)
            .all(|(a, b)| a == b);
        if !matches {
            return false;
        }
        if must_end_unterminated {
            pos + block.len() == n && !file.trailing_newline
        } else {
            true
        }
    };
    let expected = expected.clamp(min_pos, max_pos);
    // Search outward from the expected position, nearest first.
    let span = (expected - min_pos).max(max_pos - expected);
    for d in 0..=span {
        if expected >= min_pos + d && fits(expected - d) {
            return Some(expected - d);
        }
        if d > 0 && expected + d <= max_pos && fits(expected + d) {
            return Some(expected + d);
        }
    }
    None
}

/// Produces the patch that undoes `p`: additions and removals swap, and so
/// do the old and new sides of every header.
/// Swaps added and removed lines. Each run of changes is reordered so its
/// removals come first.
fn swap_kinds(lines: &[HunkLine]) -> Vec<HunkLine> {
    let mut out: Vec<HunkLine> = Vec::with_capacity(lines.len());
    let mut run_start = 0;
    for l in lines {
        let mut l = l.clone();
        l.kind = match l.kind {
            LineKind::Added => LineKind::Removed,
            LineKind::Removed => LineKind::Added,
            LineKind::Context => LineKind::Context,
        };
        if l.kind == LineKind::Context {
            out[run_start..].sort_by_key(|x| x.kind == LineKind::Added);
            out.push(l);
            run_start = out.len();
        } else {
            out.push(l);
        }
    }
    out[run_start..].sort_by_key(|x| x.kind == LineKind::Added);
    out
}

pub fn invert_patch(p: &Patch) -> Patch {
    Patch {
        crlf: p.crlf,
        files: p
            .files
            .iter()
            .map(|f| FilePatch {
                old_path: f.new_path.clone(),
                new_path: f.old_path.clone(),
                hunks: f
                    .hunks
                    .iter()
                    .map(|h| Hunk {
                        old_start: h.new_start,
                        old_len: h.new_len,
                        new_start: h.old_start,
                        new_len: h.old_len,
                        section: h.section.clone(),
                        lines: swap_kinds(&h.lines),
                    })
                    .collect(),
            })
            .collect(),
    }
}
