//! Removes comments from the added lines of a patch.
//!
//! Tokenizing is line based and string-literal aware for Python, Rust, Go
//! and JavaScript. Context and removed lines are never changed, so the old
//! side of the patch still matches the tree it was made for.

use crate::model::Language;

use super::diff::{LineKind, Patch};
use super::PatchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    /// Block comment with nesting depth (Rust nests, others stay at 1).
    Block(u32),
    /// Python triple-quoted string, by quote char.
    Triple(char),
    /// String that may span lines: JS template, Go raw, Rust normal string.
    Multiline(char),
    /// Rust raw string closed by `"` plus this many `#`.
    RawStr(usize),
}

/// Result of scanning one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedLine {
    /// The line with comment text removed.
    pub code: String,
    pub had_comment: bool,
}

/// Line tokenizer that carries multi-line state between calls.
#[derive(Debug, Clone)]
pub struct CommentScanner {
    lang: Language,
    state: State,
}

impl CommentScanner {
    pub fn new(lang: Language) -> Result<Self, PatchError> {
        match lang {
            Language::Other => Err(PatchError::Unsupported(lang.to_string())),
            _ => Ok(CommentScanner {
                lang,
                state: State::Code,
            }),
        }
    }

    pub fn scan(&mut self, line: &str) -> ScannedLine {
        let chars: Vec<char> = line.chars().collect();
        let mut code = String::with_capacity(line.len());
        let mut had_comment = false;
        let mut i = 0;
        let n = chars.len();
        let at = |j: usize| chars.get(j).copied();

        while i < n {
            let c = chars[i];
            match self.state {
                State::Block(depth) => {
                    had_comment = true;
                    if c == '*' && at(i + 1) == Some('/') {
                        self.state = if depth > 1 {
                            State::Block(depth - 1)
                        } else {
                            State::Code
                        };
                        i += 2;
                    } else if self.lang == Language::Rust && c == '/' && at(i + 1) == Some('*') {
                        self.state = State::Block(depth + 1);
                        i += 2;
                    } else {
                        i += 1;
                    }
                }
                State::Triple(q) => {
                    code.push(c);
                    if c == '\\' {
                        if let Some(next) = at(i + 1) {
                            code.push(next);
                        }
                        i += 2;
                    } else if c == q && at(i + 1) == Some(q) && at(i + 2) == Some(q) {
                        code.push(q);
                        code.push(q);
                        self.state = State::Code;
                        i += 3;
                    } else {
                        i += 1;
                    }
                }
                State::Multiline(q) => {
                    code.push(c);
                    let escapes = !(self.lang == Language::Go && q == '`');
                    if escapes && c == '\\' {
                        if let Some(next) = at(i + 1) {
                            code.push(next);
                        }
                        i += 2;
                    } else {
                        if c == q {
                            self.state = State::Code;
                        }
                        i += 1;
                    }
                }
                State::RawStr(hashes) => {
                    code.push(c);
                    i += 1;
                    if c == '"' && (0..hashes).all(|k| at(i + k) == Some('#')) {
                        code.extend(std::iter::repeat_n('#', hashes));
                        i += hashes;
                        self.state = State::Code;
                    }
                }
                State::Code => {
                    if let Some(skip) = self.code_char(&chars, i, &mut code, &mut had_comment) {
                        i = skip;
                    } else {
                        // Line comment: the rest of the line is dropped.
                        had_comment = true;
                        break;
                    }
                }
            }
        }
        ScannedLine { code, had_comment }
    }

    /// Handles one position in code state. Returns the next index, or
    /// `None` when a line comment starts here.
    fn code_char(
        &mut self,
        chars: &[char],
        i: usize,
        code: &mut String,
        had_comment: &mut bool,
    ) -> Option<usize> {
        let at = |j: usize| chars.get(j).copied();
        let c = chars[i];
        match self.lang {
            Language::Python => match c {
                '#' => None,
                '\'' | '"' => {
                    if at(i + 1) == Some(c) && at(i + 2) == Some(c) {
                        code.extend([c, c, c]);
                        self.state = State::Triple(c);
                        Some(i + 3)
                    } else {
                        Some(copy_simple_string(chars, i, code))
                    }
                }
                _ => {
                    code.push(c);
                    Some(i + 1)
                }
            },
            _ => {
                if c == '/' && at(i + 1) == Some('/') {
                    return None;
                }
                if c == '/' && at(i + 1) == Some('*') {
                    *had_comment = true;
                    self.state = State::Block(1);
                    return Some(i + 2);
                }
                match (self.lang, c) {
                    (Language::Rust, 'r') if !prev_is_ident(chars, i) => {
                        let hashes = chars[i + 1..].iter().take_while(|&&h| h == '#').count();
                        if at(i + 1 + hashes) == Some('"') {
                            code.push('r');
                            code.extend(std::iter::repeat_n('#', hashes));
                            code.push('"');
                            self.state = State::RawStr(hashes);
                            Some(i + 2 + hashes)
                        } else {
                            code.push(c);
                            Some(i + 1)
                        }
                    }
                    (Language::Rust, '"') => {
                        code.push(c);
                        self.state = State::Multiline('"');
                        Some(i + 1)
                    }
                    (Language::Rust, '\'') => {
                        // Char literal or lifetime.
                        let is_char = matches!((at(i + 1), at(i + 2)), (Some('\\'), _) | (Some(_), Some('\'')));
                        if is_char {
                            Some(copy_simple_string(chars, i, code))
                        } else {
                            code.push(c);
                            Some(i + 1)
                        }
                    }
                    (Language::Go, '`') | (Language::JavaScript, '`') => {
                        code.push(c);
                        self.state = State::Multiline('`');
                        Some(i + 1)
                    }
                    (_, '"') | (_, '\'') => Some(copy_simple_string(chars, i, code)),
                    _ => {
                        code.push(c);
                        Some(i + 1)
                    }
                }
            }
        }
    }
}

fn prev_is_ident(chars: &[char], i: usize) -> bool {
    i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_')
}

/// Copies a single-line quoted literal starting at `i`; returns the index
/// after the closing quote (or end of line when unterminated).
fn copy_simple_string(chars: &[char], i: usize, code: &mut String) -> usize {
    let q = chars[i];
    code.push(q);
    let mut j = i + 1;
    while j < chars.len() {
        let c = chars[j];
        code.push(c);
        if c == '\\' {
            if let Some(&next) = chars.get(j + 1) {
                code.push(next);
            }
            j += 2;
            continue;
        }
        j += 1;
        if c == q {
            break;
        }
    }
    j
}

/// Removes comments from added lines: pure comment lines disappear, trailing
/// comments are cut. Hunks left without changes are dropped and headers are
/// recomputed.
pub fn strip_comments(p: &Patch, language: Language) -> Result<Patch, PatchError> {
    CommentScanner::new(language)?;
    let mut out = p.clone();
    for file in &mut out.files {
        for hunk in &mut file.hunks {
            let mut scanner = CommentScanner::new(language)?;
            let mut kept = Vec::with_capacity(hunk.lines.len());
            for line in hunk.lines.drain(..) {
                if line.kind == LineKind::Removed {
                    kept.push(line);
                    continue;
                }
                let scanned = scanner.scan(&line.text);
                if line.kind == LineKind::Context || !scanned.had_comment {
                    kept.push(line);
                    continue;
                }
                let code = scanned.code.trim_end();
                if code.trim().is_empty() {
                    if line.no_eol {
                        if let Some(prev) = kept.iter_mut().rev().find(|l| l.is_new_side()) {
                            prev.no_eol = true;
                        }
                    }
                    continue;
                }
                let mut line = line;
                line.text = code.to_string();
                kept.push(line);
            }
            hunk.lines = kept;
        }
        file.hunks.retain(|h| h.has_changes());
        file.recompute_new_starts();
    }
    out.files
        .retain(|f| !f.hunks.is_empty() || (f.is_deletion() && !f.is_creation()));
    Ok(out)
}
