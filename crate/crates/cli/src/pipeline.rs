//! The pipeline commands. Each reads the previous stage's artifacts from the
//! output directory and checkpoints per candidate so reruns resume.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mirror_core::assemble::{assign_instance_ids, compute_stats, dedup};
use mirror_core::gymrun::{run_three_logs, ExecutionPort, GymError};
use mirror_core::ingest::{collect_many, evaluate_filter, generate_keywords, lm_filter, search_repos, FilterEvaluation};
use mirror_core::lm::LanguageModelPort;
use mirror_core::mirror::{mirror_once, CheckoutSource, DirCheckout, MirrorAttempt, RepoStructure, Stage, TestClassifier};
use mirror_core::model::{
    from_jsonl, load_gym_registry, read_instances, to_jsonl, write_instances, CandidatePR, GymSpec, Language, LmVerdict,
    SourceRef, TaskInstance,
};
use mirror_core::patchkit::{parse_unified_diff, FileTree, MemTree};
use mirror_core::traj::{build_mask, is_successful, ErrorSignatures, Strategy, Trajectory};
use mirror_core::verify::{categorize_logs, judge, render_yield_table, yield_table, AttemptResult, FailureCategory, Verdict};

use crate::config::PipelineConfig;
use crate::CliError;

const README_NAMES: [&str; 5] = ["README.md", "README.rst", "README.txt", "README", "readme.md"];

/// Writes through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

fn read_required(path: &Path) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = read_required(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("pipeline records serialize") + "\n"
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_gyms(cfg: &PipelineConfig) -> Result<Vec<GymSpec>, CliError> {
    if !cfg.gyms.exists() {
        return Err(CliError::MissingInput(cfg.gyms.clone()));
    }
    let mut gyms = load_gym_registry(&cfg.gyms)?;
    gyms.sort_by(|a, b| a.gym_id.cmp(&b.gym_id));
    Ok(gyms)
}

fn checkout(cfg: &PipelineConfig, gym: &GymSpec) -> Result<MemTree, CliError> {
    let dir = cfg.checkout_dir(&gym.gym_id)?;
    if !dir.exists() {
        return Err(CliError::MissingInput(dir.to_path_buf()));
    }
    Ok(DirCheckout::new(dir).checkout(gym)?)
}

fn readme(tree: &MemTree) -> String {
    README_NAMES.iter().find_map(|n| tree.read(n)).unwrap_or_default()
}

fn test_listing(tree: &MemTree, gym: &GymSpec) -> String {
    let structure = RepoStructure::build(tree, &TestClassifier::new(&gym.test_file_overrides));
    structure
        .files
        .iter()
        .filter(|f| f.is_test)
        .map(|f| f.path.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Per-candidate base seed: the global seed selects the generator and the
/// candidate key selects its stream.
pub fn candidate_seed(global: u64, key: &str) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(fnv1a(key));
    rng.next_u64()
}

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }
    pub fn candidates(&self, gym: &str) -> PathBuf {
        self.root.join("candidates").join(format!("{gym}.jsonl"))
    }
    pub fn collect_checkpoint(&self, gym: &str, key: &str) -> PathBuf {
        self.root.join("checkpoints").join("collect").join(gym).join(format!("{key}.json"))
    }
    pub fn attempts_dir(&self) -> PathBuf {
        self.root.join("attempts")
    }
    pub fn attempts(&self, gym: &str, key: &str) -> PathBuf {
        self.attempts_dir().join(gym).join(format!("{key}.json"))
    }
    pub fn verify(&self, gym: &str, key: &str) -> PathBuf {
        self.root.join("verify").join(gym).join(key)
    }
    pub fn instances(&self) -> PathBuf {
        self.root.join("instances.jsonl")
    }
    pub fn yield_txt(&self) -> PathBuf {
        self.root.join("yield.txt")
    }
    pub fn yield_json(&self) -> PathBuf {
        self.root.join("yield.json")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }
    pub fn stats_txt(&self) -> PathBuf {
        self.root.join("stats.txt")
    }
    pub fn stats_json(&self) -> PathBuf {
        self.root.join("stats.json")
    }
}

fn discover_repos(
    cfg: &PipelineConfig,
    gym: &GymSpec,
    readme: &str,
    lm: &dyn LanguageModelPort,
    gh: &dyn mirror_core::github::GitHubPort,
) -> Result<Vec<String>, CliError> {
    let mut repos = if cfg.github.repos.is_empty() {
        let keywords = generate_keywords(readme, lm)?;
        log::info!("{}: keywords {keywords:?}", gym.gym_id);
        search_repos(&keywords, gh)?.into_iter().map(|r| r.repo).collect()
    } else {
        cfg.github.repos.clone()
    };
    repos.retain(|r| !r.eq_ignore_ascii_case(&gym.repo));
    repos.dedup();
    Ok(repos)
}

/// Mines candidates for every gym and runs both filters.
pub fn collect(cfg: &PipelineConfig) -> Result<String, CliError> {
    let gyms = load_gyms(cfg)?;
    let lm = cfg.language_model()?;
    let gh = cfg.github()?;
    let layout = Layout::new(&cfg.output_dir);
    let pool = pool(cfg.workers)?;
    let mut summary = String::new();
    for gym in &gyms {
        let base = checkout(cfg, gym)?;
        let readme = readme(&base);
        let listing = test_listing(&base, gym);
        let repos = discover_repos(cfg, gym, &readme, lm.as_ref(), gh.as_ref())?;
        let mut candidates = Vec::new();
        for (repo, r) in collect_many(&repos, gh.as_ref(), cfg.workers) {
            match r {
                Ok(prs) => candidates.extend(prs),
                Err(e) => log::warn!("{}: skipping {repo}: {e}", gym.gym_id),
            }
        }
        let filtered: Vec<Result<CandidatePR, CliError>> = pool.install(|| {
            candidates
                .into_par_iter()
                .map(|pr| {
                    if !pr.rule_verdict.is_pass() {
                        return Ok(pr);
                    }
                    let path = layout.collect_checkpoint(&gym.gym_id, &pr.key());
                    if path.exists() {
                        return read_json(&path);
                    }
                    let mut pr = pr;
                    let verdict = match lm_filter(&pr, &readme, &listing, lm.as_ref()) {
                        Ok(v) => v,
                        Err(e) => {
                            log::warn!("{}: model filter failed: {e}", pr.key());
                            LmVerdict {
                                accepted: false,
                                reason: format!("error: {e}"),
                            }
                        }
                    };
                    pr.lm_verdict = Some(verdict);
                    write_atomic(&path, &to_pretty(&pr))?;
                    Ok(pr)
                })
                .collect()
        });
        let mut filtered = filtered.into_iter().collect::<Result<Vec<_>, _>>()?;
        filtered.sort_by(|a, b| (&a.source_repo, a.pr_number).cmp(&(&b.source_repo, b.pr_number)));
        write_atomic(&layout.candidates(&gym.gym_id), &to_jsonl(&filtered)?)?;
        let rule_rejected = filtered.iter().filter(|p| !p.rule_verdict.is_pass()).count();
        let accepted = filtered.iter().filter(|p| p.is_accepted()).count();
        summary.push_str(&format!(
            "{}: repos {}  candidates {}  rule_rejected {}  lm_rejected {}  accepted {}\n",
            gym.gym_id,
            repos.len(),
            filtered.len(),
            rule_rejected,
            filtered.len() - rule_rejected - accepted,
            accepted
        ));
    }
    Ok(summary)
}

/// Runs `k` mirroring attempts for every accepted candidate.
pub fn mirror(cfg: &PipelineConfig) -> Result<String, CliError> {
    let gyms = load_gyms(cfg)?;
    let layout = Layout::new(&cfg.output_dir);
    let inputs: Vec<PathBuf> = gyms.iter().map(|g| layout.candidates(&g.gym_id)).collect();
    if let Some(missing) = inputs.iter().find(|p| !p.exists()) {
        return Err(CliError::MissingInput(missing.clone()));
    }
    let lm = cfg.language_model()?;
    let pool = pool(cfg.workers)?;
    let mut summary = String::new();
    for (gym, input) in gyms.iter().zip(&inputs) {
        let candidates: Vec<CandidatePR> = from_jsonl(&read_required(input)?)?;
        let accepted: Vec<&CandidatePR> = candidates.iter().filter(|c| c.is_accepted()).collect();
        if accepted.is_empty() {
            summary.push_str(&format!("{}: no accepted candidates\n", gym.gym_id));
            continue;
        }
        let base = checkout(cfg, gym)?;
        let results: Vec<Result<Vec<MirrorAttempt>, CliError>> = pool.install(|| {
            accepted
                .par_iter()
                .map(|c| {
                    let path = layout.attempts(&gym.gym_id, &c.key());
                    if path.exists() {
                        return read_json(&path);
                    }
                    let mut mcfg = cfg.mirror_config();
                    mcfg.seed = candidate_seed(cfg.seed, &c.key());
                    let attempts: Vec<MirrorAttempt> =
                        (0..mcfg.k).map(|i| mirror_once(c, gym, &base, lm.as_ref(), &mcfg, i)).collect();
                    write_atomic(&path, &to_pretty(&attempts))?;
                    Ok(attempts)
                })
                .collect()
        });
        let mut by_stage: BTreeMap<String, usize> = BTreeMap::new();
        for attempts in results {
            for a in attempts? {
                let label = a.stage_reached.map(|s| format!("{s:?}")).unwrap_or_else(|| "None".into());
                *by_stage.entry(label).or_default() += 1;
            }
        }
        let stages = by_stage
            .iter()
            .map(|(k, v)| format!("{k} {v}"))
            .collect::<Vec<_>>()
            .join("  ");
        summary.push_str(&format!("{}: candidates {}  {stages}\n", gym.gym_id, accepted.len()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AttemptStatus {
    /// Mirroring stopped before a problem statement was written.
    NotExecuted {
        stage: Option<Stage>,
        error: Option<String>,
    },
    /// A patch did not apply in one of the three states.
    SanityFailed { detail: String },
    /// The executor itself failed; nothing was learned about the attempt.
    ExecError { detail: String },
    Judged {
        verdict: Verdict,
        category: Option<FailureCategory>,
    },
}

impl AttemptStatus {
    /// `None` for attempts that never reached execution.
    pub fn yield_result(&self) -> Option<AttemptResult> {
        match self {
            AttemptStatus::NotExecuted { .. } | AttemptStatus::ExecError { .. } => None,
            AttemptStatus::SanityFailed { .. } => Some(AttemptResult::Failure(FailureCategory::CompileSyntax)),
            AttemptStatus::Judged { verdict, category } => Some(match category {
                _ if verdict.is_accepted() => AttemptResult::Success,
                Some(c) => AttemptResult::Failure(*c),
                None => AttemptResult::Failure(FailureCategory::Semantic),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptVerification {
    pub sampling_index: usize,
    #[serde(flatten)]
    pub status: AttemptStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateVerification {
    pub key: String,
    pub gym_id: String,
    pub language: Language,
    pub attempts: Vec<AttemptVerification>,
    pub instances: Vec<TaskInstance>,
}

fn verify_attempt(
    att: &MirrorAttempt,
    base: &MemTree,
    exec: &dyn ExecutionPort,
    dir: &Path,
    created_at: &str,
) -> Result<(AttemptStatus, Option<TaskInstance>), CliError> {
    let (Some(task), Some(test), Some(fix), Some(statement), true) = (
        &att.task_patch,
        &att.test_patch,
        &att.fix_patch,
        &att.problem_statement,
        att.is_complete(),
    ) else {
        return Ok((
            AttemptStatus::NotExecuted {
                stage: att.stage_reached,
                error: att.error.clone(),
            },
            None,
        ));
    };
    let parsed = (parse_unified_diff(task), parse_unified_diff(test), parse_unified_diff(fix));
    let (task_p, test_p, fix_p) = match parsed {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (a, b, c) => {
            let detail = [a.err(), b.err(), c.err()]
                .into_iter()
                .flatten()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Ok((AttemptStatus::SanityFailed { detail }, None));
        }
    };
    let logs = match run_three_logs(&att.gym, base, &task_p, &test_p, &fix_p, exec) {
        Ok(l) => l,
        Err(e @ (GymError::SanityFailure { .. } | GymError::Apply { .. })) => {
            return Ok((AttemptStatus::SanityFailed { detail: e.to_string() }, None));
        }
        Err(e) => return Ok((AttemptStatus::ExecError { detail: e.to_string() }, None)),
    };
    logs.persist(&att.gym, dir).map_err(CliError::io(dir))?;
    let verdict = judge(&logs);
    write_atomic(&dir.join("verdict.json"), &(verdict.to_json() + "\n"))?;
    let instance = verdict.is_accepted().then(|| TaskInstance {
        instance_id: format!("{}-s{}", att.candidate.key(), att.sampling_index),
        gym: att.gym.clone(),
        source: SourceRef {
            source_repo: att.candidate.source_repo.clone(),
            pr_number: att.candidate.pr_number,
        },
        problem_statement: statement.clone(),
        task_patch: task.clone(),
        test_patch: test.clone(),
        fix_patch: fix.clone(),
        f2p_tests: verdict.f2p_tests.clone(),
        p2p_tests: verdict.p2p_tests.clone(),
        created_at: created_at.to_string(),
    });
    let category = (!verdict.is_accepted()).then(|| categorize_logs(&logs));
    Ok((AttemptStatus::Judged { verdict, category }, instance))
}

fn verify_candidate(
    gym: &GymSpec,
    key: &str,
    attempts: &[MirrorAttempt],
    base: &MemTree,
    exec: &dyn ExecutionPort,
    layout: &Layout,
    created_at: &str,
) -> Result<CandidateVerification, CliError> {
    let dir = layout.verify(&gym.gym_id, key);
    let checkpoint = dir.join("result.json");
    if checkpoint.exists() {
        return read_json(&checkpoint);
    }
    let mut out = CandidateVerification {
        key: key.to_string(),
        gym_id: gym.gym_id.clone(),
        language: gym.language,
        attempts: Vec::new(),
        instances: Vec::new(),
    };
    for att in attempts {
        let adir = dir.join(att.sampling_index.to_string());
        let (status, instance) = verify_attempt(att, base, exec, &adir, created_at)?;
        out.attempts.push(AttemptVerification {
            sampling_index: att.sampling_index,
            status,
        });
        out.instances.extend(instance);
    }
    write_atomic(&checkpoint, &to_pretty(&out))?;
    Ok(out)
}

fn attempt_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let key = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            files.push((key, path));
        }
    }
    files.sort();
    Ok(files)
}

/// Executes every complete attempt in the three states and judges it.
pub fn verify(cfg: &PipelineConfig) -> Result<String, CliError> {
    let gyms = load_gyms(cfg)?;
    let layout = Layout::new(&cfg.output_dir);
    let attempts_dir = layout.attempts_dir();
    if !attempts_dir.is_dir() {
        return Err(CliError::MissingInput(attempts_dir));
    }
    let exec = cfg.executor();
    let created_at = cfg.created_at();
    let pool = pool(cfg.workers)?;
    let mut results: Vec<CandidateVerification> = Vec::new();
    for gym in &gyms {
        let files = attempt_files(&attempts_dir.join(&gym.gym_id))?;
        if files.is_empty() {
            continue;
        }
        let base = checkout(cfg, gym)?;
        let done: Vec<Result<CandidateVerification, CliError>> = pool.install(|| {
            files
                .par_iter()
                .map(|(key, path)| {
                    let attempts: Vec<MirrorAttempt> = read_json(path)?;
                    verify_candidate(gym, key, &attempts, &base, exec.as_ref(), &layout, &created_at)
                })
                .collect()
        });
        for r in done {
            results.push(r?);
        }
    }
    let mut yields = Vec::new();
    let (mut not_executed, mut exec_errors) = (0, 0);
    let mut instances = Vec::new();
    for cv in &results {
        for a in &cv.attempts {
            match (&a.status, a.status.yield_result()) {
                (_, Some(r)) => yields.push((cv.language, r)),
                (AttemptStatus::ExecError { .. }, None) => exec_errors += 1,
                _ => not_executed += 1,
            }
        }
        instances.extend(cv.instances.iter().cloned());
    }
    write_atomic(&layout.instances(), &write_instances(&instances)?)?;
    let rows = yield_table(&yields);
    let mut table = render_yield_table(&rows);
    table.push_str(&format!(
        "executed {}  not_executed {not_executed}  exec_errors {exec_errors}  accepted {}\n",
        yields.len(),
        instances.len()
    ));
    write_atomic(&layout.yield_txt(), &table)?;
    write_atomic(&layout.yield_json(), &to_pretty(&rows))?;
    Ok(table)
}

/// Deduplicates verified instances, assigns final ids and writes the dataset.
pub fn assemble(cfg: &PipelineConfig) -> Result<String, CliError> {
    let layout = Layout::new(&cfg.output_dir);
    let instances = read_instances(&read_required(&layout.instances())?)?;
    let mut kept = dedup(&instances);
    assign_instance_ids(&mut kept);
    write_atomic(&layout.dataset(), &write_instances(&kept)?)?;
    let mut summary = format!("instances {}  after dedup {}\n", instances.len(), kept.len());
    if kept.is_empty() {
        write_atomic(&layout.stats_txt(), &summary)?;
        return Ok(summary);
    }
    let stats = compute_stats(&kept)?;
    summary.push_str(&stats.render_table());
    write_atomic(&layout.stats_txt(), &summary)?;
    write_atomic(&layout.stats_json(), &(stats.to_json() + "\n"))?;
    Ok(summary)
}

/// Statistics table (or JSON) for a dataset file.
pub fn stats(dataset: &Path, json: bool) -> Result<String, CliError> {
    let instances = read_instances(&read_required(dataset)?)?;
    if instances.is_empty() {
        return Err(CliError::Config(format!("{} holds no instances", dataset.display())));
    }
    let stats = compute_stats(&instances)?;
    Ok(if json { stats.to_json() + "\n" } else { stats.render_table() })
}

/// Applies a loss-masking strategy to trajectories. With a dataset, only
/// successful trajectories of known instances are kept.
pub fn mask(
    input: &Path,
    strategy: &str,
    output: &Path,
    dataset: Option<&Path>,
    signatures: Option<&Path>,
) -> Result<String, CliError> {
    let strategy: Strategy = strategy.parse()?;
    let sigs: ErrorSignatures = match signatures {
        Some(p) => read_json(p)?,
        None => ErrorSignatures::default(),
    };
    let trajectories: Vec<Trajectory> = from_jsonl(&read_required(input)?)?;
    let f2p: Option<BTreeMap<String, BTreeSet<String>>> = match dataset {
        Some(p) => Some(
            read_instances(&read_required(p)?)?
                .into_iter()
                .map(|i| (i.instance_id, i.f2p_tests))
                .collect(),
        ),
        None => None,
    };
    let mut masked = Vec::new();
    let mut skipped = 0;
    for t in &trajectories {
        if let Some(map) = &f2p {
            let keep = match map.get(&t.instance_id) {
                Some(tests) => is_successful(t, tests).unwrap_or_else(|e| {
                    log::warn!("{e}");
                    false
                }),
                None => false,
            };
            if !keep {
                skipped += 1;
                continue;
            }
        }
        masked.push(build_mask(t, strategy, &sigs));
    }
    write_atomic(output, &to_jsonl(&masked)?)?;
    let degenerate = masked.iter().filter(|m| m.degenerate).count();
    Ok(format!(
        "{strategy}: trajectories {}  kept {}  skipped {skipped}  degenerate {degenerate}\n",
        trajectories.len(),
        masked.len()
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledCandidate {
    pub candidate: CandidatePR,
    pub label: bool,
}

fn optional_text(path: Option<&Path>) -> Result<String, CliError> {
    path.map(read_required).transpose().map(Option::unwrap_or_default)
}

/// Scores the two filters against a labeled candidate set.
pub fn eval_filter(
    cfg: &PipelineConfig,
    labeled: &Path,
    readme: Option<&Path>,
    tests: Option<&Path>,
    output: Option<&Path>,
) -> Result<FilterEvaluation, CliError> {
    let items: Vec<LabeledCandidate> = from_jsonl(&read_required(labeled)?)?;
    let readme = optional_text(readme)?;
    let tests = optional_text(tests)?;
    let lm = cfg.language_model()?;
    let pairs: Vec<(CandidatePR, bool)> = items.into_iter().map(|i| (i.candidate, i.label)).collect();
    let eval = evaluate_filter(&pairs, lm.as_ref(), &readme, &tests)?;
    if let Some(out) = output {
        write_atomic(out, &to_pretty(&eval))?;
    }
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(candidate_seed(0, "a__b__1"), candidate_seed(0, "a__b__1"));
        assert_ne!(candidate_seed(0, "a__b__1"), candidate_seed(0, "a__b__2"));
        assert_ne!(candidate_seed(0, "a__b__1"), candidate_seed(1, "a__b__1"));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x/y.json");
        write_atomic(&p, "1").unwrap();
        write_atomic(&p, "2").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "2");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn yield_mapping() {
        let ne = AttemptStatus::NotExecuted { stage: None, error: None };
        assert_eq!(ne.yield_result(), None);
        let sf = AttemptStatus::SanityFailed { detail: String::new() };
        assert_eq!(sf.yield_result(), Some(AttemptResult::Failure(FailureCategory::CompileSyntax)));
    }
}
