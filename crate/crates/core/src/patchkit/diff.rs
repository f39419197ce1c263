//! Unified diff data model, parser and renderer.

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PatchError;

static HUNK_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$").unwrap()
});

const NO_EOL_MARKER: &str = "\\ No newline at end of file";
const DEV_NULL: &str = "/dev/null";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LineKind {
    Context,
    Added,
    Removed,
}

impl LineKind {
    fn prefix(self) -> char {
        match self {
            LineKind::Context => ' ',
            LineKind::Added => '+',
            LineKind::Removed => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    /// Line text without its terminator.
    pub text: String,
    /// The line is the last one of its file and has no trailing newline.
    pub no_eol: bool,
}

impl HunkLine {
    pub fn new(kind: LineKind, text: impl Into<String>) -> Self {
        HunkLine {
            kind,
            text: text.into(),
            no_eol: false,
        }
    }

    pub fn is_old_side(&self) -> bool {
        self.kind != LineKind::Added
    }

    pub fn is_new_side(&self) -> bool {
        self.kind != LineKind::Removed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Free text after the closing `@@`, usually the enclosing function.
    pub section: String,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    pub fn old_lines(&self) -> impl Iterator<Item = &HunkLine> {
        self.lines.iter().filter(|l| l.is_old_side())
    }

    pub fn new_lines(&self) -> impl Iterator<Item = &HunkLine> {
        self.lines.iter().filter(|l| l.is_new_side())
    }

    pub fn has_changes(&self) -> bool {
        self.lines.iter().any(|l| l.kind != LineKind::Context)
    }

    /// Zero-based index of the first old-side line this hunk covers.
    pub fn old_index(&self) -> usize {
        if self.old_len == 0 {
            self.old_start
        } else {
            self.old_start.saturating_sub(1)
        }
    }

    pub(crate) fn recount(&mut self) {
        self.old_len = self.old_lines().count();
        self.new_len = self.new_lines().count();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilePatch {
    /// `None` when the file is created by the patch.
    pub old_path: Option<String>,
    /// `None` when the file is deleted by the patch.
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FilePatch {
    /// The path this patch is about (new path unless the file is deleted).
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or_default()
    }

    pub fn is_creation(&self) -> bool {
        self.old_path.is_none()
    }

    pub fn is_deletion(&self) -> bool {
        self.new_path.is_none()
    }

    /// Recomputes `new_start` of every hunk from its `old_start` and the
    /// running line delta of the hunks before it.
    pub fn recompute_new_starts(&mut self) {
        let mut delta: isize = 0;
        for h in &mut self.hunks {
            h.recount();
            let new_index = h.old_index() as isize + delta;
            h.new_start = if h.new_len == 0 {
                new_index.max(0) as usize
            } else {
                (new_index + 1) as usize
            };
            delta += h.new_len as isize - h.old_len as isize;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Patch {
    pub files: Vec<FilePatch>,
    /// Input used CRLF line endings; they were normalized to `\n` on parse.
    #[serde(default)]
    pub crlf: bool,
}

impl Patch {
    pub fn is_empty(&self) -> bool {
        self.files.iter().all(|f| f.hunks.is_empty() && !f.is_creation() && !f.is_deletion())
    }

    pub fn paths(&self) -> Vec<&str> {
        self.files.iter().map(FilePatch::path).collect()
    }

    pub fn hunk_count(&self) -> usize {
        self.files.iter().map(|f| f.hunks.len()).sum()
    }

    /// Number of added plus removed lines.
    pub fn changed_line_count(&self) -> usize {
        self.files
            .iter()
            .flat_map(|f| &f.hunks)
            .flat_map(|h| &h.lines)
            .filter(|l| l.kind != LineKind::Context)
            .count()
    }

    pub fn added_lines(&self) -> impl Iterator<Item = (&str, &HunkLine)> {
        self.files.iter().flat_map(|f| {
            f.hunks
                .iter()
                .flat_map(|h| &h.lines)
                .filter(|l| l.kind == LineKind::Added)
                .map(move |l| (f.path(), l))
        })
    }

    /// Renders the patch as unified diff text (always `\n` line endings).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            let a = f.old_path.as_deref().map(|p| format!("a/{p}"));
            let b = f.new_path.as_deref().map(|p| format!("b/{p}"));
            let git_a = a.clone().unwrap_or_else(|| format!("a/{}", f.path()));
            let git_b = b.clone().unwrap_or_else(|| format!("b/{}", f.path()));
            let _ = writeln!(out, "diff --git {git_a} {git_b}");
            if f.is_creation() {
                out.push_str("new file mode 100644\n");
            } else if f.is_deletion() {
                out.push_str("deleted file mode 100644\n");
            }
            let _ = writeln!(out, "--- {}", a.as_deref().unwrap_or(DEV_NULL));
            let _ = writeln!(out, "+++ {}", b.as_deref().unwrap_or(DEV_NULL));
            for h in &f.hunks {
                let _ = write!(
                    out,
                    "@@ -{} +{} @@",
                    range(h.old_start, h.old_len),
                    range(h.new_start, h.new_len)
                );
                if !h.section.is_empty() {
                    out.push(' ');
                    out.push_str(&h.section);
                }
                out.push('\n');
                for l in &h.lines {
                    out.push(l.kind.prefix());
                    out.push_str(&l.text);
                    out.push('\n');
                    if l.no_eol {
                        out.push_str(NO_EOL_MARKER);
                        out.push('\n');
                    }
                }
            }
        }
        out
    }
}

fn range(start: usize, len: usize) -> String {
    if len == 1 {
        start.to_string()
    } else {
        format!("{start},{len}")
    }
}

fn strip_prefix_path(raw: &str) -> Option<String> {
    // Drop a trailing timestamp separated by a tab, as emitted by `diff -u`.
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    if raw == DEV_NULL {
        return None;
    }
    let p = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(p.to_string())
}

/// Parses unified diff text. Git extended headers are accepted and ignored;
/// binary patches are refused.
pub fn parse_unified_diff(text: &str) -> Result<Patch, PatchError> {
    if text.trim().is_empty() {
        return Err(PatchError::DiffParse {
            line_no: 0,
            message: "empty diff".into(),
        });
    }
    let crlf = text.contains("\r\n");
    let normalized;
    let text = if crlf {
        normalized = text.replace("\r\n", "\n");
        normalized.as_str()
    } else {
        text
    };

    let lines: Vec<&str> = text.split_terminator('\n').collect();
    let mut files: Vec<FilePatch> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if line.starts_with("Binary files ") || line.starts_with("GIT binary patch") {
            return Err(PatchError::BinaryUnsupported(line.to_string()));
        }
        if let Some(old) = line.strip_prefix("--- ") {
            let Some(new) = lines.get(i + 1).and_then(|l| l.strip_prefix("+++ ")) else {
                return Err(PatchError::DiffParse {
                    line_no: i + 2,
                    message: "expected `+++` after `---`".into(),
                });
            };
            let mut fp = FilePatch {
                old_path: strip_prefix_path(old),
                new_path: strip_prefix_path(new),
                hunks: Vec::new(),
            };
            if fp.old_path.is_none() && fp.new_path.is_none() {
                return Err(PatchError::DiffParse {
                    line_no: i + 1,
                    message: "both sides are /dev/null".into(),
                });
            }
            i += 2;
            while i < lines.len() && lines[i].starts_with("@@") {
                let (hunk, next) = parse_hunk(&lines, i)?;
                fp.hunks.push(hunk);
                i = next;
            }
            check_order(&fp, i)?;
            files.push(fp);
            continue;
        }
        if line.starts_with("@@") {
            return Err(PatchError::DiffParse {
                line_no: i + 1,
                message: "hunk without file header".into(),
            });
        }
        i += 1;
    }
    if files.is_empty() {
        return Err(PatchError::DiffParse {
            line_no: 0,
            message: "no file headers found".into(),
        });
    }
    Ok(Patch { files, crlf })
}

fn parse_hunk(lines: &[&str], start: usize) -> Result<(Hunk, usize), PatchError> {
    let header = lines[start];
    let caps = HUNK_HEADER.captures(header).ok_or_else(|| PatchError::DiffParse {
        line_no: start + 1,
        message: format!("malformed hunk header `{header}`"),
    })?;
    let num = |idx: usize, default: usize| -> usize {
        caps.get(idx)
            .map(|m| m.as_str().parse().unwrap_or(usize::MAX))
            .unwrap_or(default)
    };
    let mut hunk = Hunk {
        old_start: num(1, 0),
        old_len: num(2, 1),
        new_start: num(3, 0),
        new_len: num(4, 1),
        section: caps.get(5).map_or("", |m| m.as_str()).to_string(),
        lines: Vec::new(),
    };
    let (mut old_seen, mut new_seen) = (0usize, 0usize);
    let mut i = start + 1;
    while old_seen < hunk.old_len || new_seen < hunk.new_len {
        let Some(&line) = lines.get(i) else {
            return Err(PatchError::DiffParse {
                line_no: i,
                message: "hunk truncated before its declared length".into(),
            });
        };
        let (kind, text) = match line.chars().next() {
            Some(' ') => (LineKind::Context, &line[1..]),
            Some('+') => (LineKind::Added, &line[1..]),
            Some('-') => (LineKind::Removed, &line[1..]),
            // Some tools drop the single space of an empty context line.
            None => (LineKind::Context, ""),
            Some('\\') => {
                mark_no_eol(&mut hunk, i)?;
                i += 1;
                continue;
            }
            _ => {
                return Err(PatchError::DiffParse {
                    line_no: i + 1,
                    message: format!("unexpected line in hunk `{line}`"),
                })
            }
        };
        match kind {
            LineKind::Context => {
                old_seen += 1;
                new_seen += 1;
            }
            LineKind::Added => new_seen += 1,
            LineKind::Removed => old_seen += 1,
        }
        if old_seen > hunk.old_len || new_seen > hunk.new_len {
            return Err(PatchError::DiffParse {
                line_no: i + 1,
                message: "hunk body longer than its header declares".into(),
            });
        }
        hunk.lines.push(HunkLine::new(kind, text));
        i += 1;
    }
    if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
        mark_no_eol(&mut hunk, i)?;
        i += 1;
    }
    Ok((hunk, i))
}

fn mark_no_eol(hunk: &mut Hunk, idx: usize) -> Result<(), PatchError> {
    match hunk.lines.last_mut() {
        Some(l) => {
            l.no_eol = true;
            Ok(())
        }
        None => Err(PatchError::DiffParse {
            line_no: idx + 1,
            message: "no-newline marker before any hunk line".into(),
        }),
    }
}

fn check_order(fp: &FilePatch, line_no: usize) -> Result<(), PatchError> {
    for pair in fp.hunks.windows(2) {
        let prev_end = pair[0].old_index() + pair[0].old_len;
        if pair[1].old_index() < prev_end {
            return Err(PatchError::DiffParse {
                line_no,
                message: format!("overlapping or unordered hunks in {}", fp.path()),
            });
        }
    }
    Ok(())
}
