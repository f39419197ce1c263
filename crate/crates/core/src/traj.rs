//! Agent trajectories: success filtering and loss-mask construction.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrajError {
    #[error("no post-patch test results for {0}")]
    EvaluationUnavailable(String),
    #[error("config error: {0}")]
    ConfigError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Edit,
    Shell,
    Finish,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_kind: Option<ActionKind>,
    #[serde(default)]
    pub is_error: bool,
}

impl Turn {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Turn {
            role,
            content: content.into(),
            action_kind: None,
            is_error: false,
        }
    }

    pub fn action(kind: ActionKind, content: impl Into<String>) -> Self {
        Turn {
            action_kind: Some(kind),
            ..Turn::new(Role::Assistant, content)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance_id: String,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub final_patch: String,
    /// `None` when the submitted patch was never evaluated.
    #[serde(default)]
    pub passed_tests_after_patch: Option<BTreeSet<String>>,
}

/// True iff the trajectory ends with a finish action and the tests passing
/// after its patch include every ground-truth F2P test.
pub fn is_successful(t: &Trajectory, ground_truth_f2p: &BTreeSet<String>) -> Result<bool, TrajError> {
    let passed = t
        .passed_tests_after_patch
        .as_ref()
        .ok_or_else(|| TrajError::EvaluationUnavailable(t.instance_id.clone()))?;
    let finished = t
        .turns
        .iter()
        .rev()
        .find(|turn| turn.role == Role::Assistant)
        .is_some_and(|turn| turn.action_kind == Some(ActionKind::Finish));
    Ok(finished && passed.is_superset(ground_truth_f2p))
}

/// Observation prefixes that mark the preceding action as erroneous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSignatures {
    pub prefixes: Vec<String>,
}

impl Default for ErrorSignatures {
    fn default() -> Self {
        let p = [
            "ERROR:",
            "Error:",
            "[Error",
            "Invalid `",
            "Unrecognized command",
            "Parameter `",
            "No replacement was performed",
            "Failed to parse action",
        ];
        ErrorSignatures {
            prefixes: p.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// An assistant turn is erroneous if its action is malformed or the next
/// observation starts with a known error banner.
pub fn detect_error_turn(turn: &Turn, following_observation: &str, sigs: &ErrorSignatures) -> bool {
    if turn.action_kind == Some(ActionKind::Malformed) {
        return true;
    }
    let obs = following_observation.trim_start();
    sigs.prefixes.iter().any(|p| obs.starts_with(p.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    ResponseOnly,
    ErrorPruning,
    ErrorMasking,
}

impl FromStr for Strategy {
    type Err = TrajError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "response-only" | "responseonly" => Ok(Strategy::ResponseOnly),
            "error-pruning" | "errorpruning" => Ok(Strategy::ErrorPruning),
            "error-masking" | "errormasking" => Ok(Strategy::ErrorMasking),
            _ => Err(TrajError::ConfigError(format!("unknown mask strategy {s:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ResponseOnly => "response-only",
            Strategy::ErrorPruning => "error-pruning",
            Strategy::ErrorMasking => "error-masking",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTurn {
    #[serde(flatten)]
    pub turn: Turn,
    pub loss_mask: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTrajectory {
    pub instance_id: String,
    pub strategy: Strategy,
    /// No assistant turn is left under loss.
    pub degenerate: bool,
    pub turns: Vec<MaskedTurn>,
}

impl MaskedTrajectory {
    /// Mask bits of the assistant turns only, in order.
    pub fn assistant_bits(&self) -> Vec<u8> {
        self.turns
            .iter()
            .filter(|t| t.turn.role == Role::Assistant)
            .map(|t| t.loss_mask)
            .collect()
    }

    pub fn loss_turns(&self) -> usize {
        self.turns.iter().map(|t| t.loss_mask as usize).sum()
    }
}

/// Per-turn error flags; only assistant turns can be erroneous.
pub fn error_flags(t: &Trajectory, sigs: &ErrorSignatures) -> Vec<bool> {
    t.turns
        .iter()
        .enumerate()
        .map(|(i, turn)| {
            if turn.role != Role::Assistant {
                return false;
            }
            let obs = t
                .turns
                .get(i + 1)
                .filter(|n| n.role == Role::Observation)
                .map(|n| n.content.as_str())
                .unwrap_or("");
            turn.is_error || detect_error_turn(turn, obs, sigs)
        })
        .collect()
}

/// Builds the training sequence and its loss mask. Pruning drops an
/// erroneous assistant turn together with the observation that answers it.
pub fn build_mask(t: &Trajectory, strategy: Strategy, sigs: &ErrorSignatures) -> MaskedTrajectory {
    let errors = error_flags(t, sigs);
    let mut turns = Vec::with_capacity(t.turns.len());
    let mut skip_observation = false;
    for (turn, &err) in t.turns.iter().zip(&errors) {
        if skip_observation && turn.role == Role::Observation {
            skip_observation = false;
            continue;
        }
        skip_observation = false;
        let assistant = turn.role == Role::Assistant;
        let bit = match strategy {
            Strategy::ResponseOnly => assistant,
            Strategy::ErrorMasking => assistant && !err,
            Strategy::ErrorPruning => {
                if err {
                    skip_observation = true;
                    continue;
                }
                assistant
            }
        };
        turns.push(MaskedTurn {
            turn: turn.clone(),
            loss_mask: bit as u8,
        });
    }
    let degenerate = turns.iter().all(|t| t.loss_mask == 0);
    if degenerate {
        log::warn!("{}: degenerate sample under {strategy}", t.instance_id);
    }
    MaskedTrajectory {
        instance_id: t.instance_id.clone(),
        strategy,
        degenerate,
        turns,
    }
}
