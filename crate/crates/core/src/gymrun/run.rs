use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::GymSpec;
use crate::patchkit::{apply_patch, FileTree, Fuzz, MemTree, Patch};

use super::exec::{ExecRequest, ExecutionPort};
use super::parse::parse_log;
use super::status::{RunMeta, StatusMap};
use super::GymError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogState {
    Run,
    Test,
    Fix,
}

impl LogState {
    pub const ALL: [LogState; 3] = [LogState::Run, LogState::Test, LogState::Fix];

    /// 1-based state number.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn file_name(self) -> &'static str {
        match self {
            LogState::Run => "Run.log",
            LogState::Test => "Test.log",
            LogState::Fix => "Fix.log",
        }
    }
}

/// One executed state: the verbatim log and what the parser made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRun {
    pub raw_log: String,
    pub status: StatusMap,
    pub diagnostics: Vec<String>,
    /// Set when the log could not be parsed into at least one test.
    pub anomaly: Option<String>,
}

impl StateRun {
    fn from_anomaly(err: GymError) -> Result<StateRun, GymError> {
        match err {
            GymError::ParserAnomaly {
                reason,
                raw_log,
                meta,
            } => Ok(StateRun {
                raw_log,
                status: StatusMap::new(Default::default(), meta),
                diagnostics: Vec::new(),
                anomaly: Some(reason),
            }),
            other => Err(other),
        }
    }
}

fn apply_all<T: FileTree + ?Sized>(base: &T, patches: &[&Patch]) -> Result<MemTree, (usize, crate::patchkit::PatchError)> {
    let mut tree = base.snapshot();
    for (i, p) in patches.iter().enumerate() {
        tree = apply_patch(&tree, p, Fuzz::STRICT).map_err(|e| (i, e))?;
    }
    Ok(tree)
}

/// Applies `patches` in order to a fresh copy of `base`, runs the gym's
/// test command and parses the log. Zero parsed tests is an anomaly.
pub fn run_state<T: FileTree + ?Sized>(
    gym: &GymSpec,
    base: &T,
    patches: &[&Patch],
    exec: &dyn ExecutionPort,
) -> Result<StateRun, GymError> {
    let tree = apply_all(base, patches).map_err(|(index, source)| GymError::Apply { index, source })?;
    let out = exec.run(&ExecRequest {
        image_ref: &gym.image_ref,
        tree: &tree,
        command: &gym.test_command,
        time_limit: gym.time_limit,
        memory_limit: gym.memory_limit,
    })?;
    let meta = RunMeta {
        exit_code: out.exit_code,
        wall_time_secs: out.wall_time.as_secs_f64(),
        timed_out: out.timed_out,
        oom: out.oom,
    };
    let anomaly = |reason: String, raw_log: String| GymError::ParserAnomaly {
        reason,
        raw_log,
        meta: meta.clone(),
    };
    let parsed = match parse_log(gym.log_parser_id, &out.transcript) {
        Ok(p) => p,
        Err(GymError::ParserAnomaly { reason, .. }) => return Err(anomaly(reason, out.transcript)),
        Err(e) => return Err(e),
    };
    if parsed.tests.is_empty() {
        return Err(anomaly("zero tests parsed".into(), out.transcript));
    }
    for d in &parsed.diagnostics {
        log::warn!("{}: {d}", gym.gym_id);
    }
    Ok(StateRun {
        raw_log: out.transcript,
        status: StatusMap::new(parsed.tests, meta),
        diagnostics: parsed.diagnostics,
        anomaly: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeLogs {
    pub run: StateRun,
    pub test: StateRun,
    pub fix: StateRun,
}

impl ThreeLogs {
    pub fn get(&self, state: LogState) -> &StateRun {
        match state {
            LogState::Run => &self.run,
            LogState::Test => &self.test,
            LogState::Fix => &self.fix,
        }
    }

    pub fn any_abnormal(&self) -> bool {
        LogState::ALL.iter().any(|&s| self.get(s).status.meta.is_abnormal())
    }

    /// Writes `Run.log`, `Test.log`, `Fix.log` and `manifest.json` into `dir`.
    pub fn persist(&self, gym: &GymSpec, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut states = Vec::new();
        for s in LogState::ALL {
            let r = self.get(s);
            std::fs::write(dir.join(s.file_name()), &r.raw_log)?;
            states.push(serde_json::json!({
                "state": s,
                "log": s.file_name(),
                "meta": r.status.meta,
                "tests": r.status.tests,
                "diagnostics": r.diagnostics,
                "anomaly": r.anomaly,
            }));
        }
        let manifest = serde_json::json!({
            "gym_id": gym.gym_id,
            "test_command": gym.test_command,
            "log_parser_id": gym.log_parser_id,
            "states": states,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }
}

/// Runs the suite after task, task+test and task+test+fix, each on a fresh
/// copy of `base`. All three applications are checked before anything runs.
pub fn run_three_logs<T: FileTree + ?Sized>(
    gym: &GymSpec,
    base: &T,
    task_patch: &Patch,
    test_patch: &Patch,
    fix_patch: &Patch,
    exec: &dyn ExecutionPort,
) -> Result<ThreeLogs, GymError> {
    let states: [Vec<&Patch>; 3] = [
        vec![task_patch],
        vec![task_patch, test_patch],
        vec![task_patch, test_patch, fix_patch],
    ];
    for patches in &states {
        if let Err((index, source)) = apply_all(base, patches) {
            // Patch `index` first appears in state `index + 1`.
            let state = index as u8 + 1;
            return Err(GymError::SanityFailure { state, source });
        }
    }
    let mut runs = Vec::with_capacity(3);
    for patches in &states {
        let r = run_state(gym, base, patches, exec).or_else(StateRun::from_anomaly)?;
        runs.push(r);
    }
    let fix = runs.pop().expect("three states");
    let test = runs.pop().expect("three states");
    let run = runs.pop().expect("three states");
    Ok(ThreeLogs { run, test, fix })
}
