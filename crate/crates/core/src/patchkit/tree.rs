use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Read access to a repository snapshot, whether on disk or in memory.
pub trait FileTree {
    fn read(&self, path: &str) -> Option<String>;
    /// All file paths, repo-relative with `/` separators, sorted.
    fn paths(&self) -> Vec<String>;

    fn contains(&self, path: &str) -> bool {
        self.read(path).is_some()
    }

    fn snapshot(&self) -> MemTree {
        MemTree {
            files: self
                .paths()
                .into_iter()
                .filter_map(|p| self.read(&p).map(|c| (p, c)))
                .collect(),
        }
    }
}

/// In-memory file tree. Cloning is the copy-on-write mechanism used by
/// patch application: the input is never mutated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemTree {
    pub files: BTreeMap<String, String>,
}

impl MemTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, path: &str, content: &str) -> Self {
        self.insert(path, content);
        self
    }

    pub fn insert(&mut self, path: &str, content: &str) {
        self.files.insert(path.to_string(), content.to_string());
    }

    pub fn remove(&mut self, path: &str) -> Option<String> {
        self.files.remove(path)
    }

    /// Loads every UTF-8 file below `root`, skipping VCS metadata.
    pub fn from_dir(root: &Path) -> io::Result<MemTree> {
        DiskTree::new(root).try_snapshot()
    }

    /// Materializes the tree below `root`, creating directories as needed.
    pub fn write_to_dir(&self, root: &Path) -> io::Result<()> {
        for (path, content) in &self.files {
            let full = root.join(path);
            if let Some(parent) = full.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(full, content)?;
        }
        Ok(())
    }
}

impl FileTree for MemTree {
    fn read(&self, path: &str) -> Option<String> {
        self.files.get(path).cloned()
    }

    fn paths(&self) -> Vec<String> {
        self.files.keys().cloned().collect()
    }

    fn contains(&self, path: &str) -> bool {
        self.files.contains_key(path)
    }

    fn snapshot(&self) -> MemTree {
        self.clone()
    }
}

/// A checkout on disk. Reads go straight to the filesystem.
#[derive(Debug, Clone)]
pub struct DiskTree {
    root: PathBuf,
}

impl DiskTree {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DiskTree { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn walk(&self, dir: &Path, out: &mut Vec<String>) -> io::Result<()> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let name = entry.file_name();
            if name == ".git" {
                continue;
            }
            let path = entry.path();
            let ty = entry.file_type()?;
            if ty.is_dir() {
                self.walk(&path, out)?;
            } else if ty.is_file() {
                if let Ok(rel) = path.strip_prefix(&self.root) {
                    let parts: Vec<String> = rel
                        .components()
                        .map(|c| c.as_os_str().to_string_lossy().into_owned())
                        .collect();
                    out.push(parts.join("/"));
                }
            }
        }
        Ok(())
    }

    pub fn try_paths(&self) -> io::Result<Vec<String>> {
        let mut out = Vec::new();
        self.walk(&self.root, &mut out)?;
        out.sort();
        Ok(out)
    }

    pub fn try_snapshot(&self) -> io::Result<MemTree> {
        let mut tree = MemTree::new();
        for p in self.try_paths()? {
            // Binary files are out of scope for text patches.
            if let Ok(content) = std::fs::read_to_string(self.root.join(&p)) {
                tree.files.insert(p, content);
            }
        }
        Ok(tree)
    }
}

impl FileTree for DiskTree {
    fn read(&self, path: &str) -> Option<String> {
        std::fs::read_to_string(self.root.join(path)).ok()
    }

    fn paths(&self) -> Vec<String> {
        self.try_paths().unwrap_or_default()
    }
}
