//! Unified diffs, file trees, patch application and Search/Replace edits.

mod apply;
mod comments;
mod diff;
mod edit;
mod mkdiff;
mod tree;

use thiserror::Error;

pub use apply::{apply_patch, invert_patch, Fuzz};
pub use comments::{strip_comments, CommentScanner, ScannedLine};
pub use diff::{parse_unified_diff, FilePatch, Hunk, HunkLine, LineKind, Patch};
pub use edit::{
    edits_to_patch, parse_sr_blocks, validate_relative_path, AmbiguousMatch, EditOutcome,
    SearchReplaceEdit, DIVIDER_MARK, REPLACE_MARK, SEARCH_MARK,
};
pub use mkdiff::{diff_file, diff_hunks, diff_trees, CONTEXT_LINES};
pub use tree::{DiskTree, FileTree, MemTree};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatchError {
    #[error("diff parse error at line {line_no}: {message}")]
    DiffParse { line_no: usize, message: String },
    #[error("binary patches are not supported: {0}")]
    BinaryUnsupported(String),
    #[error("hunk {hunk} of {file} does not apply: {reason}")]
    ApplyConflict {
        file: String,
        hunk: usize,
        reason: String,
    },
    #[error("target file not found: {0}")]
    MissingTarget(String),
    #[error("search block not found in {file}: {excerpt:?}")]
    EditNotFound { file: String, excerpt: String },
    #[error("no edits to apply")]
    EmptyEdit,
    #[error("malformed edit block #{block_index}: {message}")]
    SrParse { block_index: usize, message: String },
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("comment stripping is not supported for {0}")]
    Unsupported(String),
}
