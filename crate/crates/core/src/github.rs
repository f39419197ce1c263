//! GitHub access: a REST-shaped port, an offline fixture adapter, a
//! recorder that writes fixtures, and the live HTTP adapter.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GhError {
    #[error("rate limited, retry after {retry_after_secs}s")]
    RateLimited { retry_after_secs: u64 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("repository not found: {0}")]
    RepoNotFound(String),
    #[error("diff unavailable for pull request #{0}")]
    DiffUnavailable(u64),
    #[error("fixture error: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSearchResult {
    pub repo: String,
    pub stars: u64,
    pub open_issues: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullSummary {
    pub number: u64,
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub merged: bool,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub number: u64,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub is_pull_request: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub has_next: bool,
}

/// Implementations must tolerate concurrent calls.
pub trait GitHubPort: Send + Sync {
    fn search_repos(&self, query: &str, per_page: usize) -> Result<Vec<RepoSearchResult>, GhError>;
    /// Closed pull requests, 1-based pages.
    fn list_pulls(&self, repo: &str, page: u32) -> Result<Page<PullSummary>, GhError>;
    fn pull_diff(&self, repo: &str, number: u64) -> Result<String, GhError>;
    /// `None` when the issue does not exist.
    fn issue(&self, repo: &str, number: u64) -> Result<Option<IssueRecord>, GhError>;
    /// Issue numbers that cross-reference this pull request.
    fn cross_refs(&self, repo: &str, number: u64) -> Result<Vec<u64>, GhError>;
    fn readme(&self, repo: &str) -> Result<String, GhError>;
}

fn repo_dir_name(repo: &str) -> String {
    repo.replace('/', "__")
}

/// Reads a directory laid out as
///
/// ```text
/// search.json                      [RepoSearchResult]
/// repos/<owner>__<name>/pulls.json [PullSummary]
/// repos/<owner>__<name>/README.md
/// repos/<owner>__<name>/diffs/<n>.diff
/// repos/<owner>__<name>/issues/<n>.json
/// repos/<owner>__<name>/xrefs/<n>.json  [u64]
/// ```
#[derive(Debug, Clone)]
pub struct FixtureGitHub {
    root: PathBuf,
    pub page_size: usize,
}

impl FixtureGitHub {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureGitHub {
            root: root.into(),
            page_size: 2,
        }
    }

    fn repo_dir(&self, repo: &str) -> Result<PathBuf, GhError> {
        let dir = self.root.join("repos").join(repo_dir_name(repo));
        if dir.is_dir() {
            Ok(dir)
        } else {
            Err(GhError::RepoNotFound(repo.to_string()))
        }
    }

    fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, GhError> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| GhError::Fixture(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(GhError::Fixture(format!("{}: {e}", path.display()))),
        }
    }
}

impl GitHubPort for FixtureGitHub {
    fn search_repos(&self, _query: &str, per_page: usize) -> Result<Vec<RepoSearchResult>, GhError> {
        let mut all: Vec<RepoSearchResult> = Self::read_json(&self.root.join("search.json"))?.unwrap_or_default();
        all.truncate(per_page);
        Ok(all)
    }

    fn list_pulls(&self, repo: &str, page: u32) -> Result<Page<PullSummary>, GhError> {
        let dir = self.repo_dir(repo)?;
        let all: Vec<PullSummary> = Self::read_json(&dir.join("pulls.json"))?.unwrap_or_default();
        let size = self.page_size.max(1);
        let start = (page.max(1) as usize - 1) * size;
        let items: Vec<_> = all.iter().skip(start).take(size).cloned().collect();
        Ok(Page {
            has_next: start + size < all.len(),
            items,
        })
    }

    fn pull_diff(&self, repo: &str, number: u64) -> Result<String, GhError> {
        let path = self.repo_dir(repo)?.join("diffs").join(format!("{number}.diff"));
        fs::read_to_string(path).map_err(|_| GhError::DiffUnavailable(number))
    }

    fn issue(&self, repo: &str, number: u64) -> Result<Option<IssueRecord>, GhError> {
        Self::read_json(&self.repo_dir(repo)?.join("issues").join(format!("{number}.json")))
    }

    fn cross_refs(&self, repo: &str, number: u64) -> Result<Vec<u64>, GhError> {
        Ok(Self::read_json(&self.repo_dir(repo)?.join("xrefs").join(format!("{number}.json")))?.unwrap_or_default())
    }

    fn readme(&self, repo: &str) -> Result<String, GhError> {
        Ok(fs::read_to_string(self.repo_dir(repo)?.join("README.md")).unwrap_or_default())
    }
}

/// Forwards to `inner` and writes every answer into a fixture directory
/// readable by [`FixtureGitHub`].
pub struct RecordingGitHub<G> {
    inner: G,
    root: PathBuf,
    pulls: Mutex<std::collections::BTreeMap<String, Vec<PullSummary>>>,
}

impl<G: GitHubPort> RecordingGitHub<G> {
    pub fn new(inner: G, root: impl Into<PathBuf>) -> Self {
        RecordingGitHub {
            inner,
            root: root.into(),
            pulls: Mutex::new(Default::default()),
        }
    }

    fn write(&self, rel: PathBuf, text: &str) -> Result<(), GhError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| GhError::Fixture(e.to_string()))?;
        }
        fs::write(&path, text).map_err(|e| GhError::Fixture(format!("{}: {e}", path.display())))
    }

    fn repo_rel(repo: &str) -> PathBuf {
        Path::new("repos").join(repo_dir_name(repo))
    }

    fn write_json<T: Serialize>(&self, rel: PathBuf, v: &T) -> Result<(), GhError> {
        self.write(rel, &serde_json::to_string_pretty(v).expect("serialize"))
    }
}

impl<G: GitHubPort> GitHubPort for RecordingGitHub<G> {
    fn search_repos(&self, query: &str, per_page: usize) -> Result<Vec<RepoSearchResult>, GhError> {
        let r = self.inner.search_repos(query, per_page)?;
        self.write_json("search.json".into(), &r)?;
        Ok(r)
    }

    fn list_pulls(&self, repo: &str, page: u32) -> Result<Page<PullSummary>, GhError> {
        let p = self.inner.list_pulls(repo, page)?;
        let mut all = self.pulls.lock().unwrap();
        let acc = all.entry(repo.to_string()).or_default();
        acc.extend(p.items.iter().cloned());
        self.write_json(Self::repo_rel(repo).join("pulls.json"), acc)?;
        Ok(p)
    }

    fn pull_diff(&self, repo: &str, number: u64) -> Result<String, GhError> {
        let d = self.inner.pull_diff(repo, number)?;
        self.write(Self::repo_rel(repo).join("diffs").join(format!("{number}.diff")), &d)?;
        Ok(d)
    }

    fn issue(&self, repo: &str, number: u64) -> Result<Option<IssueRecord>, GhError> {
        let i = self.inner.issue(repo, number)?;
        if let Some(rec) = &i {
            self.write_json(Self::repo_rel(repo).join("issues").join(format!("{number}.json")), rec)?;
        }
        Ok(i)
    }

    fn cross_refs(&self, repo: &str, number: u64) -> Result<Vec<u64>, GhError> {
        let x = self.inner.cross_refs(repo, number)?;
        self.write_json(Self::repo_rel(repo).join("xrefs").join(format!("{number}.json")), &x)?;
        Ok(x)
    }

    fn readme(&self, repo: &str) -> Result<String, GhError> {
        let r = self.inner.readme(repo)?;
        self.write(Self::repo_rel(repo).join("README.md"), &r)?;
        Ok(r)
    }
}

/// Shared request budget: `capacity` tokens refilled at `per_sec`.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, per_sec: f64) -> Self {
        TokenBucket {
            capacity: capacity.max(1) as f64,
            per_sec: per_sec.max(1e-6),
            state: Mutex::new((capacity.max(1) as f64, Instant::now())),
        }
    }

    /// How long the caller must wait before its token is available. The
    /// token is reserved immediately.
    pub fn reserve(&self) -> Duration {
        let mut st = self.state.lock().unwrap();
        let now = Instant::now();
        let elapsed = now.duration_since(st.1).as_secs_f64();
        st.0 = (st.0 + elapsed * self.per_sec).min(self.capacity);
        st.1 = now;
        st.0 -= 1.0;
        if st.0 >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-st.0 / self.per_sec)
        }
    }

    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Wraps a port so every call takes a bucket token, and sleeps out
/// `RateLimited` answers up to `max_wait`.
pub struct Throttled<G> {
    pub inner: G,
    pub bucket: TokenBucket,
    pub max_wait: Duration,
}

impl<G: GitHubPort> Throttled<G> {
    fn call<T>(&self, f: impl Fn(&G) -> Result<T, GhError>) -> Result<T, GhError> {
        loop {
            self.bucket.acquire();
            match f(&self.inner) {
                Err(GhError::RateLimited { retry_after_secs }) if Duration::from_secs(retry_after_secs) <= self.max_wait => {
                    log::warn!("rate limited, sleeping {retry_after_secs}s");
                    std::thread::sleep(Duration::from_secs(retry_after_secs));
                }
                other => return other,
            }
        }
    }
}

impl<G: GitHubPort> GitHubPort for Throttled<G> {
    fn search_repos(&self, query: &str, per_page: usize) -> Result<Vec<RepoSearchResult>, GhError> {
        self.call(|g| g.search_repos(query, per_page))
    }
    fn list_pulls(&self, repo: &str, page: u32) -> Result<Page<PullSummary>, GhError> {
        self.call(|g| g.list_pulls(repo, page))
    }
    fn pull_diff(&self, repo: &str, number: u64) -> Result<String, GhError> {
        self.call(|g| g.pull_diff(repo, number))
    }
    fn issue(&self, repo: &str, number: u64) -> Result<Option<IssueRecord>, GhError> {
        self.call(|g| g.issue(repo, number))
    }
    fn cross_refs(&self, repo: &str, number: u64) -> Result<Vec<u64>, GhError> {
        self.call(|g| g.cross_refs(repo, number))
    }
    fn readme(&self, repo: &str) -> Result<String, GhError> {
        self.call(|g| g.readme(repo))
    }
}

/// Live REST adapter. Reads the token from `GH_TOKEN` when present.
pub struct HttpGitHub {
    agent: ureq::Agent,
    api: String,
    token: Option<String>,
}

struct Reply {
    status: u16,
    link: Option<String>,
    body: String,
}

impl HttpGitHub {
    pub fn new(api: &str, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpGitHub {
            agent,
            api: api.trim_end_matches('/').to_string(),
            token,
        }
    }

    pub fn from_env() -> Self {
        Self::new("https://api.github.com", std::env::var("GH_TOKEN").ok().filter(|t| !t.is_empty()))
    }

    fn get(&self, path: &str, query: &[(&str, String)], accept: &str) -> Result<Reply, GhError> {
        let mut req = self
            .agent
            .get(&format!("{}{path}", self.api))
            .header("Accept", accept)
            .header("User-Agent", "issue-mirror")
            .header("X-GitHub-Api-Version", "2022-11-28");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let mut resp = req.call().map_err(|e| GhError::TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let header = |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
        let link = header("link");
        if status == 403 || status == 429 {
            let remaining = header("x-ratelimit-remaining");
            let retry_after = header("retry-after").and_then(|v| v.parse().ok());
            if remaining.as_deref() == Some("0") || retry_after.is_some() || status == 429 {
                let reset = header("x-ratelimit-reset").and_then(|v| v.parse::<u64>().ok());
                let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                let secs = retry_after.or(reset.map(|r| r.saturating_sub(now))).unwrap_or(60);
                return Err(GhError::RateLimited { retry_after_secs: secs });
            }
        }
        let body = resp
            .body_mut()
            .with_config()
            .limit(64 << 20)
            .read_to_string()
            .map_err(|e| GhError::TransportError(e.to_string()))?;
        Ok(Reply { status, link, body })
    }

    fn json(&self, path: &str, query: &[(&str, String)]) -> Result<(u16, Option<String>, serde_json::Value), GhError> {
        let r = self.get(path, query, "application/vnd.github+json")?;
        let v = if r.status == 404 {
            serde_json::Value::Null
        } else if r.status >= 400 {
            return Err(GhError::TransportError(format!("HTTP {} for {path}", r.status)));
        } else {
            serde_json::from_str(&r.body).map_err(|e| GhError::TransportError(format!("{path}: {e}")))?
        };
        Ok((r.status, r.link, v))
    }
}

/// True when an RFC 8288 `Link` header carries `rel="next"`.
pub fn link_has_next(link: Option<&str>) -> bool {
    link.is_some_and(|l| l.split(',').any(|part| part.split(';').skip(1).any(|p| p.trim() == r#"rel="next""#)))
}

impl GitHubPort for HttpGitHub {
    fn search_repos(&self, query: &str, per_page: usize) -> Result<Vec<RepoSearchResult>, GhError> {
        let q = [
            ("q", query.to_string()),
            ("sort", "stars".into()),
            ("order", "desc".into()),
            ("per_page", per_page.min(100).to_string()),
        ];
        let (_, _, v) = self.json("/search/repositories", &q)?;
        Ok(v["items"]
            .as_array()
            .map(|items| {
                items
                    .iter()
                    .filter_map(|it| {
                        Some(RepoSearchResult {
                            repo: it["full_name"].as_str()?.to_string(),
                            stars: it["stargazers_count"].as_u64().unwrap_or(0),
                            open_issues: it["open_issues_count"].as_u64().unwrap_or(0),
                        })
                    })
                    .collect()
            })
            .unwrap_or_default())
    }

    fn list_pulls(&self, repo: &str, page: u32) -> Result<Page<PullSummary>, GhError> {
        let q = [
            ("state", "closed".to_string()),
            ("per_page", "100".into()),
            ("page", page.max(1).to_string()),
        ];
        let (status, link, v) = self.json(&format!("/repos/{repo}/pulls"), &q)?;
        if status == 404 {
            return Err(GhError::RepoNotFound(repo.to_string()));
        }
        let items = v
            .as_array()
            .map(|xs| {
                xs.iter()
                    .filter_map(|p| {
                        Some(PullSummary {
                            number: p["number"].as_u64()?,
                            title: p["title"].as_str().unwrap_or_default().to_string(),
                            body: p["body"].as_str().unwrap_or_default().to_string(),
                            merged: !p["merged_at"].is_null(),
                            closed: p["state"] == "closed",
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Page {
            items,
            has_next: link_has_next(link.as_deref()),
        })
    }

    fn pull_diff(&self, repo: &str, number: u64) -> Result<String, GhError> {
        let r = self.get(&format!("/repos/{repo}/pulls/{number}"), &[], "application/vnd.github.v3.diff")?;
        if r.status >= 400 || r.body.is_empty() {
            return Err(GhError::DiffUnavailable(number));
        }
        Ok(r.body)
    }

    fn issue(&self, repo: &str, number: u64) -> Result<Option<IssueRecord>, GhError> {
        let (status, _, v) = self.json(&format!("/repos/{repo}/issues/{number}"), &[])?;
        if status == 404 {
            return Ok(None);
        }
        Ok(Some(IssueRecord {
            number,
            body: v["body"].as_str().unwrap_or_default().to_string(),
            is_pull_request: v.get("pull_request").is_some(),
        }))
    }

    fn cross_refs(&self, repo: &str, number: u64) -> Result<Vec<u64>, GhError> {
        let mut out = Vec::new();
        for page in 1u32.. {
            let q = [("per_page", "100".to_string()), ("page", page.to_string())];
            let (status, link, v) = self.json(&format!("/repos/{repo}/issues/{number}/timeline"), &q)?;
            if status == 404 {
                break;
            }
            for ev in v.as_array().into_iter().flatten() {
                let src = &ev["source"]["issue"];
                if ev["event"] == "cross-referenced" && src["repository"]["full_name"] == repo {
                    if let Some(n) = src["number"].as_u64() {
                        out.push(n);
                    }
                }
            }
            if !link_has_next(link.as_deref()) {
                break;
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    fn readme(&self, repo: &str) -> Result<String, GhError> {
        let r = self.get(&format!("/repos/{repo}/readme"), &[], "application/vnd.github.raw")?;
        Ok(if r.status == 200 { r.body } else { String::new() })
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Writes a small replay directory: one repo with three PRs, one of
    /// which links issue 456.
    pub fn write_replay(root: &Path) {
        let repo = root.join("repos").join("acme__webapp");
        for sub in ["diffs", "issues", "xrefs"] {
            fs::create_dir_all(repo.join(sub)).unwrap();
        }
        let search: Vec<RepoSearchResult> = (0..25)
            .map(|i| RepoSearchResult {
                repo: format!("org{}/proj{i:02}", i % 3),
                stars: 1000 - (i as u64 % 7) * 100,
                open_issues: i as u64 % 4,
            })
            .collect();
        fs::write(root.join("search.json"), serde_json::to_string(&search).unwrap()).unwrap();
        let pulls = vec![
            PullSummary {
                number: 10,
                title: "Standardize validation errors".into(),
                body: "Fixes #456".into(),
                merged: true,
                closed: true,
            },
            PullSummary {
                number: 11,
                title: "Docs".into(),
                body: String::new(),
                merged: true,
                closed: true,
            },
            PullSummary {
                number: 12,
                title: "Refactor".into(),
                body: "see #11".into(),
                merged: false,
                closed: true,
            },
        ];
        fs::write(repo.join("pulls.json"), serde_json::to_string(&pulls).unwrap()).unwrap();
        fs::write(repo.join("README.md"), "# webapp\n").unwrap();
        fs::write(
            repo.join("diffs/10.diff"),
            "--- a/app/user.py\n+++ b/app/user.py\n@@ -1 +1 @@\n-    return {}, 500\n+    return {}, 400\n",
        )
        .unwrap();
        fs::write(repo.join("diffs/11.diff"), "--- a/README.md\n+++ b/README.md\n@@ -1 +1 @@\n-a\n+b\n").unwrap();
        fs::write(repo.join("diffs/12.diff"), "--- a/app/x.py\n+++ b/app/x.py\n@@ -1 +1 @@\n-a\n+b\n").unwrap();
        fs::write(
            repo.join("issues/456.json"),
            r#"{"number": 456, "body": "Bad input returns 500 instead of 400"}"#,
        )
        .unwrap();
        fs::write(repo.join("issues/11.json"), r#"{"number": 11, "body": "", "is_pull_request": true}"#).unwrap();
    }
}
