//! Repository listing with test-file flags and a per-file symbol outline.

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::patchkit::FileTree;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub kind: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub is_test: bool,
    pub symbols: Vec<Symbol>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoStructure {
    pub files: Vec<FileEntry>,
}

/// Decides whether a path holds tests. Paths in `overrides` (exact, or
/// prefix when the entry ends in `/`) are always test files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TestClassifier {
    pub overrides: Vec<String>,
}

const TEST_DIRS: &[&str] = &["tests", "test", "__tests__", "spec", "specs", "testing", "testdata"];

impl TestClassifier {
    pub fn new(overrides: &[String]) -> Self {
        TestClassifier {
            overrides: overrides.to_vec(),
        }
    }

    pub fn is_test(&self, path: &str) -> bool {
        if self
            .overrides
            .iter()
            .any(|o| o == path || (o.ends_with('/') && path.starts_with(o.as_str())))
        {
            return true;
        }
        is_test_path(path)
    }
}

pub fn is_test_path(path: &str) -> bool {
    let mut parts: Vec<&str> = path.split('/').collect();
    let name = parts.pop().unwrap_or_default();
    if parts.iter().any(|d| TEST_DIRS.contains(d)) {
        return true;
    }
    let (stem, ext) = name.rsplit_once('.').unwrap_or((name, ""));
    match ext {
        "py" => stem.starts_with("test_") || stem.ends_with("_test") || stem == "conftest",
        "go" => stem.ends_with("_test"),
        "rs" => stem == "tests" || stem.ends_with("_test") || stem.ends_with("_tests"),
        "js" | "jsx" | "ts" | "tsx" | "mjs" | "cjs" => stem.ends_with(".test") || stem.ends_with(".spec"),
        _ => false,
    }
}

static PY_DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\s*)(?:async\s+)?(def|class)\s+([A-Za-z_]\w*)").unwrap());
static RS_DEF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:pub(?:\([^)]*\))?\s+)?(?:async\s+|const\s+|unsafe\s+)*(fn|struct|enum|trait|mod|impl)\s*(?:<[^>]*>\s*)?([A-Za-z_][\w:]*)").unwrap()
});
static GO_DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(func|type)\s+(?:\([^)]*\)\s*)?([A-Za-z_]\w*)").unwrap());
static JS_DEF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:export\s+)?(?:default\s+)?(?:async\s+)?(?:(function)\s*\*?\s*([A-Za-z_$][\w$]*)|(class)\s+([A-Za-z_$][\w$]*)|(?:const|let|var)\s+([A-Za-z_$][\w$]*)\s*=\s*(?:async\s*)?(?:\([^)]*\)|[A-Za-z_$][\w$]*)\s*=>)").unwrap()
});

/// End line of a brace-delimited item starting at `start` (0-based index).
fn brace_end(lines: &[&str], start: usize) -> usize {
    let mut depth = 0i32;
    let mut opened = false;
    for (i, line) in lines.iter().enumerate().skip(start) {
        for c in line.chars() {
            match c {
                '{' => {
                    depth += 1;
                    opened = true;
                }
                '}' => depth -= 1,
                _ => {}
            }
        }
        if opened && depth <= 0 {
            return i;
        }
        if !opened && line.trim_end().ends_with(';') {
            return i;
        }
    }
    lines.len().saturating_sub(1).max(start)
}

fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

/// Top-level and nested definitions found by per-language patterns.
pub fn outline(path: &str, content: &str) -> Vec<Symbol> {
    let lines: Vec<&str> = content.lines().collect();
    let ext = path.rsplit_once('.').map(|(_, e)| e).unwrap_or("");
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let found: Option<(String, String, usize)> = match ext {
            "py" | "pyi" => PY_DEF.captures(line).map(|c| {
                let indent = c[1].len();
                let mut end = i;
                for (j, l) in lines.iter().enumerate().skip(i + 1) {
                    if l.trim().is_empty() {
                        continue;
                    }
                    if indent_of(l) <= indent {
                        break;
                    }
                    end = j;
                }
                (c[2].to_string(), c[3].to_string(), end)
            }),
            "rs" => RS_DEF.captures(line).map(|c| (c[1].to_string(), c[2].to_string(), brace_end(&lines, i))),
            "go" => GO_DEF.captures(line).map(|c| (c[1].to_string(), c[2].to_string(), brace_end(&lines, i))),
            "js" | "jsx" | "ts" | "tsx" | "mjs" | "cjs" => JS_DEF.captures(line).map(|c| {
                let (kind, name) = if let Some(n) = c.get(2) {
                    ("function", n.as_str())
                } else if let Some(n) = c.get(4) {
                    ("class", n.as_str())
                } else {
                    ("function", c.get(5).map_or("", |m| m.as_str()))
                };
                (kind.to_string(), name.to_string(), brace_end(&lines, i))
            }),
            _ => None,
        };
        if let Some((kind, name, end)) = found {
            out.push(Symbol {
                name,
                kind,
                start_line: i + 1,
                end_line: end + 1,
            });
        }
    }
    out
}

impl RepoStructure {
    pub fn build<T: FileTree + ?Sized>(tree: &T, classifier: &TestClassifier) -> Self {
        let files = tree
            .paths()
            .into_iter()
            .map(|path| {
                let symbols = tree.read(&path).map(|c| outline(&path, &c)).unwrap_or_default();
                FileEntry {
                    is_test: classifier.is_test(&path),
                    path,
                    symbols,
                }
            })
            .collect();
        RepoStructure { files }
    }

    pub fn contains(&self, path: &str) -> bool {
        self.files.iter().any(|f| f.path == path)
    }

    pub fn get(&self, path: &str) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.path == path)
    }

    /// Indented listing: directories end in `/`, test files are tagged and
    /// symbols are nested under their file by containment.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut open: Vec<&str> = Vec::new();
        for f in &self.files {
            let parts: Vec<&str> = f.path.split('/').collect();
            let (dirs, name) = parts.split_at(parts.len() - 1);
            let common = open.iter().zip(dirs).take_while(|(a, b)| a == b).count();
            open.truncate(common);
            for d in &dirs[common..] {
                let _ = writeln!(out, "{}{d}/", "    ".repeat(open.len()));
                open.push(d);
            }
            let depth = open.len();
            let tag = if f.is_test { " [test]" } else { "" };
            let _ = writeln!(out, "{}{}{tag}", "    ".repeat(depth), name[0]);
            let mut stack: Vec<usize> = Vec::new();
            for s in &f.symbols {
                while stack.last().is_some_and(|&end| s.start_line > end) {
                    stack.pop();
                }
                let _ = writeln!(
                    out,
                    "{}{} {} ({}-{})",
                    "    ".repeat(depth + 1 + stack.len()),
                    s.kind,
                    s.name,
                    s.start_line,
                    s.end_line
                );
                stack.push(s.end_line);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchkit::MemTree;

    #[test]
    fn test_paths() {
        for yes in [
            "tests/test_app.py",
            "pkg/test_util.py",
            "pkg/util_test.py",
            "conftest.py",
            "net/http_test.go",
            "src/__tests__/a.js",
            "web/a.test.ts",
            "web/a.spec.jsx",
            "crate/tests/it.rs",
        ] {
            assert!(is_test_path(yes), "{yes}");
        }
        for no in ["src/app.py", "src/testing_utils.rs.bak", "cmd/main.go", "web/a.ts", "src/lib.rs", "contest.py"] {
            assert!(!is_test_path(no), "{no}");
        }
        let c = TestClassifier::new(&["src/lib.rs".into(), "src/inline/".into()]);
        assert!(c.is_test("src/lib.rs") && c.is_test("src/inline/a.rs") && !c.is_test("src/main.rs"));
    }

    #[test]
    fn python_outline_nests() {
        let src = "import x\n\nclass A:\n    def f(self):\n        return 1\n\n    def g(self):\n        pass\n\ndef top():\n    pass\n";
        let syms = outline("m.py", src);
        let got: Vec<_> = syms.iter().map(|s| (s.name.as_str(), s.start_line, s.end_line)).collect();
        assert_eq!(got, [("A", 3, 8), ("f", 4, 5), ("g", 7, 8), ("top", 10, 11)]);
        let tree = MemTree::new().with("pkg/m.py", src).with("tests/test_m.py", "def test_a():\n    pass\n");
        let s = RepoStructure::build(&tree, &TestClassifier::default());
        let r = s.render();
        assert!(r.contains("pkg/\n    m.py\n        class A (3-8)\n            def f (4-5)\n"), "{r}");
        assert!(r.contains("tests/\n    test_m.py [test]\n        def test_a (1-2)"), "{r}");
    }

    #[test]
    fn brace_languages() {
        let rs = "pub struct S;\n\nimpl S {\n    pub fn new() -> Self {\n        S\n    }\n}\n";
        let got: Vec<_> = outline("a.rs", rs).iter().map(|s| (s.kind.clone(), s.name.clone(), s.end_line)).collect();
        assert_eq!(
            got,
            [("struct".into(), "S".into(), 1), ("impl".into(), "S".into(), 7), ("fn".into(), "new".into(), 6)]
        );
        let go = "package x\n\nfunc (s *S) Get(k string) int {\n\treturn 0\n}\n";
        assert_eq!(outline("x.go", go)[0].name, "Get");
        let js = "export const handler = async (req) => {\n  return 1;\n};\nclass Foo {\n}\n";
        let names: Vec<_> = outline("a.js", js).into_iter().map(|s| s.name).collect();
        assert_eq!(names, ["handler", "Foo"]);
    }
}
