//! Language-model port, a scripted replay adapter and an HTTP adapter for
//! OpenAI-compatible chat endpoints.

use std::path::Path;
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ATTEMPTS: usize = 3;

/// Prompt templates with `{placeholder}` slots.
pub mod prompts {
    pub const KEYWORDS: &str = include_str!("../assets/prompts/keywords.txt");
    pub const LM_FILTER: &str = include_str!("../assets/prompts/lm_filter.txt");
    pub const ABSTRACTION: &str = include_str!("../assets/prompts/abstraction.txt");
    pub const TEST_LOCALIZE: &str = include_str!("../assets/prompts/test_localize.txt");
    pub const TEST_PATCHGEN: &str = include_str!("../assets/prompts/test_patchgen.txt");
    pub const MIRROR_LOCALIZE: &str = include_str!("../assets/prompts/mirror_localize.txt");
    pub const MIRROR_PATCHGEN: &str = include_str!("../assets/prompts/mirror_patchgen.txt");
    pub const PROBLEM_STATEMENT: &str = include_str!("../assets/prompts/problem_statement.txt");

    /// Exemplar issue statements for the problem-statement prompt.
    pub const FEWSHOT: [&str; 2] = [
        include_str!("../assets/fewshot/01_config_merge.md"),
        include_str!("../assets/fewshot/02_pagination.md"),
    ];
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unusable model output for {what} after {attempts} attempt(s): {detail}")]
    Format {
        what: String,
        attempts: usize,
        detail: String,
    },
    #[error("no scripted response matches prompt starting {0:?}")]
    NoScript(String),
    #[error("config error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Sampling {
    pub const GREEDY: Sampling = Sampling {
        temperature: 0.0,
        seed: None,
    };

    pub fn seeded(temperature: f64, seed: u64) -> Self {
        Sampling {
            temperature,
            seed: Some(seed),
        }
    }
}

pub trait LanguageModelPort: Send + Sync {
    fn complete(&self, prompt: &str, sampling: Sampling) -> Result<String, LmError>;
    fn max_context_chars(&self) -> usize;
}

/// Fills `{name}` slots the way Python's `str.format` does; `{{` and `}}`
/// are literal braces. Unknown names are an error.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, LmError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let c = rest.as_bytes()[pos];
        let after = &rest[pos + 1..];
        if after.as_bytes().first() == Some(&c) {
            out.push(c as char);
            rest = &after[1..];
            continue;
        }
        if c == b'}' {
            return Err(LmError::Config(format!("single '}}' in template near {:?}", excerpt(after))));
        }
        let end = after
            .find('}')
            .ok_or_else(|| LmError::Config("unclosed '{' in template".into()))?;
        let name = &after[..end];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| LmError::Config(format!("no value for placeholder {{{name}}}")))?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn excerpt(s: &str) -> String {
    s.chars().take(60).collect()
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?ms)^[ \t]*```[ \t]*([\w+-]*)[ \t]*\r?\n(.*?)^[ \t]*```[ \t]*$").unwrap());

/// Fenced code blocks as `(language tag, body)`, in order.
pub fn fenced_blocks(text: &str) -> Vec<(String, String)> {
    FENCE
        .captures_iter(text)
        .map(|c| (c[1].to_ascii_lowercase(), c[2].to_string()))
        .collect()
}

/// Last fenced block whose tag is one of `tags` (empty tag always matches).
pub fn last_fenced(text: &str, tags: &[&str]) -> Option<String> {
    fenced_blocks(text)
        .into_iter()
        .rev()
        .find(|(tag, _)| tag.is_empty() || tags.contains(&tag.as_str()))
        .map(|(_, body)| body)
}

/// Calls the model until `parse` accepts the output, up to `attempts` times.
/// Each retry shifts the seed so a seeded backend does not repeat itself.
pub fn complete_with_retries<T>(
    lm: &dyn LanguageModelPort,
    what: &str,
    prompt: &str,
    sampling: Sampling,
    attempts: usize,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, LmError> {
    let mut last = String::new();
    for attempt in 0..attempts.max(1) {
        let s = Sampling {
            seed: sampling.seed.map(|x| x.wrapping_add(attempt as u64 * 1_000_003)),
            ..sampling
        };
        let text = lm.complete(prompt, s)?;
        match parse(&text) {
            Ok(v) => return Ok(v),
            Err(e) => {
                log::warn!("{what}: attempt {} unusable: {e}", attempt + 1);
                last = e;
            }
        }
    }
    Err(LmError::Format {
        what: what.into(),
        attempts: attempts.max(1),
        detail: last,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Every substring must occur in the prompt.
    #[serde(rename = "match")]
    pub matches: Vec<String>,
    /// Served in order; the last one repeats.
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub rules: Vec<ScriptRule>,
}

/// Replays canned responses. The first rule whose substrings all occur in
/// the prompt answers it.
#[derive(Debug, Default)]
pub struct ScriptedLm {
    script: Script,
    served: Mutex<Vec<usize>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedLm {
    pub fn new(script: Script) -> Self {
        let n = script.rules.len();
        ScriptedLm {
            script,
            served: Mutex::new(vec![0; n]),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LmError::Config(format!("{}: {e}", path.display())))?;
        let script: Script = serde_json::from_str(&text).map_err(|e| LmError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn rule(mut self, matches: &[&str], responses: &[&str]) -> Self {
        self.script.rules.push(ScriptRule {
            matches: matches.iter().map(|s| s.to_string()).collect(),
            responses: responses.iter().map(|s| s.to_string()).collect(),
        });
        self.served.get_mut().unwrap().push(0);
        self
    }

    /// Prompts received so far.
    pub fn prompts(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl LanguageModelPort for ScriptedLm {
    fn complete(&self, prompt: &str, _sampling: Sampling) -> Result<String, LmError> {
        self.calls.lock().unwrap().push(prompt.to_string());
        let idx = self
            .script
            .rules
            .iter()
            .position(|r| r.matches.iter().all(|m| prompt.contains(m.as_str())))
            .ok_or_else(|| LmError::NoScript(excerpt(prompt)))?;
        let rule = &self.script.rules[idx];
        let mut served = self.served.lock().unwrap();
        let n = served[idx];
        served[idx] += 1;
        rule.responses
            .get(n.min(rule.responses.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| LmError::NoScript(excerpt(prompt)))
    }

    fn max_context_chars(&self) -> usize {
        400_000
    }
}

#[derive(Debug, Clone)]
pub struct HttpLmConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub max_context_chars: usize,
    pub timeout: Duration,
}

impl HttpLmConfig {
    /// Reads `LM_BASE_URL` and `LM_API_KEY`.
    pub fn from_env(model: &str) -> Result<Self, LmError> {
        let var = |k: &str| std::env::var(k).map_err(|_| LmError::Config(format!("{k} is not set")));
        Ok(HttpLmConfig {
            base_url: var("LM_BASE_URL")?,
            api_key: var("LM_API_KEY")?,
            model: model.to_string(),
            max_context_chars: 400_000,
            timeout: Duration::from_secs(600),
        })
    }
}

/// Chat-completions client.
pub struct HttpLm {
    cfg: HttpLmConfig,
    agent: ureq::Agent,
}

impl HttpLm {
    pub fn new(cfg: HttpLmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        HttpLm { cfg, agent }
    }
}

impl LanguageModelPort for HttpLm {
    fn complete(&self, prompt: &str, sampling: Sampling) -> Result<String, LmError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut body = serde_json::json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": sampling.temperature,
        });
        if let Some(seed) = sampling.seed {
            body["seed"] = seed.into();
        }
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.cfg.api_key))
            .send_json(&body)
            .map_err(|e| LmError::Transport(e.to_string()))?;
        let v: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LmError::Transport(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LmError::Transport(format!("no completion in response: {}", excerpt(&v.to_string()))))
    }

    fn max_context_chars(&self) -> usize {
        self.cfg.max_context_chars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn python_format_semantics() {
        let t = "a {x} {{literal}} {y}";
        assert_eq!(render_template(t, &[("x", "1"), ("y", "{z}")]).unwrap(), "a 1 {literal} {z}");
        assert!(render_template("{missing}", &[]).is_err());
        assert!(render_template("oops }", &[]).is_err());
    }

    #[test]
    fn every_template_renders_with_its_slots() {
        use prompts::*;
        let cases: [(&str, &[&str]); 8] = [
            (KEYWORDS, &["readme"]),
            (LM_FILTER, &["body", "diff", "readme", "test_suite"]),
            (ABSTRACTION, &["body", "diff"]),
            (TEST_LOCALIZE, &["issue", "structure", "n"]),
            (TEST_PATCHGEN, &["issue", "source_files", "test_files", "diff_example"]),
            (MIRROR_LOCALIZE, &["issue", "structure", "testgen_patch", "n"]),
            (MIRROR_PATCHGEN, &["issue", "files", "testgen_patch", "tests", "diff_example"]),
            (PROBLEM_STATEMENT, &["issue", "test_patch", "fix_patch", "examples"]),
        ];
        for (t, names) in cases {
            let vars: Vec<(&str, &str)> = names.iter().map(|n| (*n, "<v>")).collect();
            let out = render_template(t, &vars).unwrap();
            assert!(out.matches("<v>").count() >= names.len());
            for short in 0..names.len() {
                let mut fewer = vars.clone();
                fewer.remove(short);
                assert!(render_template(t, &fewer).is_err());
            }
        }
        assert!(render_template(ABSTRACTION, &[("body", ""), ("diff", "")]).unwrap().contains(r#"{"error": "Bad input"}, 500"#));
    }

    #[test]
    fn fenced_extraction() {
        let text = "prose\n```python\n[True, \"x\"]\n```\nmore\n```md\n### Bug\n```\n";
        let blocks = fenced_blocks(text);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0], ("python".into(), "[True, \"x\"]\n".into()));
        assert_eq!(last_fenced(text, &["md"]).unwrap(), "### Bug\n");
        assert_eq!(last_fenced(text, &["python"]).unwrap(), "[True, \"x\"]\n");
    }

    #[test]
    fn scripted_sequence_then_repeat() {
        let lm = ScriptedLm::default().rule(&["hello"], &["one", "two"]).rule(&[], &["fallback"]);
        let s = Sampling::GREEDY;
        assert_eq!(lm.complete("hello there", s).unwrap(), "one");
        assert_eq!(lm.complete("hello again", s).unwrap(), "two");
        assert_eq!(lm.complete("hello", s).unwrap(), "two");
        assert_eq!(lm.complete("other", s).unwrap(), "fallback");
        assert_eq!(lm.prompts().len(), 4);
        assert!(matches!(
            ScriptedLm::default().complete("x", s),
            Err(LmError::NoScript(_))
        ));
    }

    #[test]
    fn retries_then_succeeds_or_fails() {
        let lm = ScriptedLm::default().rule(&["q"], &["bad", "bad", "42"]);
        let parse = |s: &str| s.parse::<i32>().map_err(|e| e.to_string());
        assert_eq!(complete_with_retries(&lm, "num", "q", Sampling::GREEDY, 3, parse).unwrap(), 42);

        let lm = ScriptedLm::default().rule(&["q"], &["bad"]);
        let err = complete_with_retries(&lm, "num", "q", Sampling::GREEDY, 3, parse).unwrap_err();
        assert!(matches!(err, LmError::Format { attempts: 3, .. }));
        assert_eq!(lm.prompts().len(), 3);
    }

    #[test]
    fn script_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, r#"{"rules": [{"match": ["a", "b"], "responses": ["ok"]}]}"#).unwrap();
        let lm = ScriptedLm::from_file(&path).unwrap();
        assert_eq!(lm.complete("a b", Sampling::GREEDY).unwrap(), "ok");
        assert!(lm.complete("a", Sampling::GREEDY).is_err());
    }
}
