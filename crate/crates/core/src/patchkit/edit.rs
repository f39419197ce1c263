//! Search/Replace edit blocks as emitted by language models.
//!
//! ```text
//! ### path/to/file.py
//! <<<<<<< SEARCH
//! exact lines to find
//! =======
//! replacement lines
//! >>>>>>> REPLACE
//! ```

use std::collections::BTreeMap;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use super::diff::Patch;
use super::mkdiff::diff_file;
use super::tree::FileTree;
use super::PatchError;

pub const SEARCH_MARK: &str = "<<<<<<< SEARCH";
pub const DIVIDER_MARK: &str = "=======";
pub const REPLACE_MARK: &str = ">>>>>>> REPLACE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchReplaceEdit {
    pub file_path: String,
    pub search_block: String,
    pub replace_block: String,
}

impl SearchReplaceEdit {
    pub fn new(
        file_path: impl Into<String>,
        search_block: impl Into<String>,
        replace_block: impl Into<String>,
    ) -> Result<Self, PatchError> {
        let edit = SearchReplaceEdit {
            file_path: file_path.into(),
            search_block: search_block.into(),
            replace_block: replace_block.into(),
        };
        edit.validate()?;
        Ok(edit)
    }

    pub fn validate(&self) -> Result<(), PatchError> {
        if self.search_block.is_empty() {
            return Err(PatchError::InvalidEdit(format!(
                "empty search block for {}",
                self.file_path
            )));
        }
        validate_relative_path(&self.file_path)
    }
}

pub fn validate_relative_path(path: &str) -> Result<(), PatchError> {
    let p = Path::new(path);
    let ok = !path.is_empty()
        && p.components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if ok {
        Ok(())
    } else {
        Err(PatchError::InvalidEdit(format!(
            "path `{path}` is not repo-relative"
        )))
    }
}

/// Fenced code blocks in `text`: (index among all fences, body lines).
fn fenced_blocks(text: &str) -> Vec<Vec<&str>> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            match current.take() {
                Some(body) => blocks.push(body),
                None => current = Some(Vec::new()),
            }
        } else if let Some(body) = current.as_mut() {
            body.push(line);
        }
    }
    // An unterminated trailing fence still counts.
    if let Some(body) = current {
        blocks.push(body);
    }
    blocks
}

fn clean_path(line: &str) -> String {
    line.trim()
        .trim_start_matches('#')
        .trim()
        .trim_matches('`')
        .trim()
        .to_string()
}

fn join_block(lines: &[&str]) -> String {
    let mut s = String::new();
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    s
}

/// Extracts every Search/Replace edit from fenced blocks of `lm_output`.
/// A block may hold several edits; each takes the path line above it, or
/// the previous edit's path when none is given.
pub fn parse_sr_blocks(lm_output: &str) -> Result<Vec<SearchReplaceEdit>, PatchError> {
    let mut edits = Vec::new();
    let sr_blocks = fenced_blocks(lm_output)
        .into_iter()
        .filter(|b| b.iter().any(|l| is_mark(l, SEARCH_MARK) || is_mark(l, REPLACE_MARK)));
    for (block_index, body) in sr_blocks.enumerate() {
        let err = |msg: &str| PatchError::SrParse {
            block_index,
            message: msg.to_string(),
        };
        let mut path: Option<String> = None;
        let mut i = 0;
        while i < body.len() {
            let line = body[i];
            if is_mark(line, SEARCH_MARK) {
                let file_path = path.clone().ok_or_else(|| err("edit has no file path"))?;
                let divider = (i + 1..body.len())
                    .find(|&j| is_mark(body[j], DIVIDER_MARK))
                    .ok_or_else(|| err("missing ======= divider"))?;
                let end = (divider + 1..body.len())
                    .find(|&j| is_mark(body[j], REPLACE_MARK))
                    .ok_or_else(|| err("missing >>>>>>> REPLACE"))?;
                if body[i + 1..divider].iter().any(|l| is_mark(l, SEARCH_MARK))
                    || body[divider + 1..end]
                        .iter()
                        .any(|l| is_mark(l, SEARCH_MARK) || is_mark(l, DIVIDER_MARK))
                {
                    return Err(err("unbalanced sentinels"));
                }
                let edit = SearchReplaceEdit {
                    file_path,
                    search_block: join_block(&body[i + 1..divider]),
                    replace_block: join_block(&body[divider + 1..end]),
                };
                edit.validate().map_err(|e| err(&e.to_string()))?;
                edits.push(edit);
                i = end + 1;
                continue;
            }
            if is_mark(line, DIVIDER_MARK) || is_mark(line, REPLACE_MARK) {
                return Err(err("sentinel outside a SEARCH section"));
            }
            if !line.trim().is_empty() {
                path = Some(clean_path(line));
            }
            i += 1;
        }
    }
    Ok(edits)
}

fn is_mark(line: &str, mark: &str) -> bool {
    line.trim_end() == mark
}

/// A search block that matched more than once; the first match was used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguousMatch {
    pub file_path: String,
    pub occurrences: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditOutcome {
    pub patch: Patch,
    pub ambiguous: Vec<AmbiguousMatch>,
}

fn find_search(content: &str, search: &str) -> Option<(usize, usize)> {
    if let Some(pos) = content.find(search) {
        return Some((pos, search.len()));
    }
    // The search block always ends with a newline; allow it to match the
    // unterminated last line of a file.
    let trimmed = search.strip_suffix('\n')?;
    if !trimmed.is_empty() && content.ends_with(trimmed) {
        let pos = content.len() - trimmed.len();
        if pos == 0 || content.as_bytes()[pos - 1] == b'\n' {
            return Some((pos, trimmed.len()));
        }
    }
    None
}

fn excerpt(s: &str) -> String {
    let first = s.lines().next().unwrap_or_default();
    first.chars().take(60).collect()
}

/// Applies `edits` in order to copies of the touched files and returns the
/// equivalent unified diff.
pub fn edits_to_patch<T: FileTree + ?Sized>(
    tree: &T,
    edits: &[SearchReplaceEdit],
) -> Result<EditOutcome, PatchError> {
    if edits.is_empty() {
        return Err(PatchError::EmptyEdit);
    }
    let mut originals: BTreeMap<String, String> = BTreeMap::new();
    let mut current: BTreeMap<String, String> = BTreeMap::new();
    let mut ambiguous = Vec::new();
    for edit in edits {
        edit.validate()?;
        if !current.contains_key(&edit.file_path) {
            let content = tree
                .read(&edit.file_path)
                .ok_or_else(|| PatchError::MissingTarget(edit.file_path.clone()))?;
            originals.insert(edit.file_path.clone(), content.clone());
            current.insert(edit.file_path.clone(), content);
        }
        let content = current.get_mut(&edit.file_path).expect("inserted above");
        let (pos, len) =
            find_search(content, &edit.search_block).ok_or_else(|| PatchError::EditNotFound {
                file: edit.file_path.clone(),
                excerpt: excerpt(&edit.search_block),
            })?;
        let occurrences = content.matches(edit.search_block.as_str()).count();
        if occurrences > 1 {
            log::warn!(
                "search block matched {occurrences} times in {}; using the first",
                edit.file_path
            );
            ambiguous.push(AmbiguousMatch {
                file_path: edit.file_path.clone(),
                occurrences,
            });
        }
        let replacement = if len < edit.search_block.len() {
            edit.replace_block
                .strip_suffix('\n')
                .unwrap_or(&edit.replace_block)
        } else {
            edit.replace_block.as_str()
        };
        content.replace_range(pos..pos + len, replacement);
    }
    let files = originals
        .iter()
        .filter_map(|(path, old)| diff_file(path, Some(old), current.get(path).map(String::as_str)))
        .collect();
    Ok(EditOutcome {
        patch: Patch { files, crlf: false },
        ambiguous,
    })
}
