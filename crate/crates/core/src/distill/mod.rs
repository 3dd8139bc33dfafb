//! Plan generation from ReAct-style expert trajectories.
//!
//! Three stages: pull the thoughts out of a trajectory, summarize them into a
//! pseudocode plan (rule-based offline, or through an external LLM), and check
//! the resulting corpus for format and entity consistency.

mod external;
mod offline;
mod verify;

use serde::{Deserialize, Serialize};

pub use external::{build_prompt, distill_external, distill_external_batch, extract_plan_section, LlmClientConfig};
pub use offline::{distill_offline, distill_offline_with_summary, Distilled};
pub use verify::{verify_corpus, PlanCheck, VerificationSummary};

use crate::env::EnvKind;
use crate::plan::ValidationReport;
use crate::trajectory::{reward_serde, Round, PLAN_PREFIX};
use crate::Reward;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistillError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("no thoughts to distill")]
    NoThoughts,
    #[error("no rule matches thought {0}")]
    UnmappableThought(usize),
    #[error("at least one demonstration is required")]
    NoDemonstrations,
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("plan failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
}

/// One expert episode: instruction, thought/action/observation rounds, outcome reward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord", into = "RawRecord")]
pub struct ReActRecord {
    task: String,
    rounds: Vec<Round>,
    reward: Reward,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRecord {
    task: String,
    rounds: Vec<Round>,
    #[serde(with = "reward_serde")]
    reward: Reward,
}

impl TryFrom<RawRecord> for ReActRecord {
    type Error = DistillError;

    fn try_from(raw: RawRecord) -> Result<Self, Self::Error> {
        ReActRecord::new(raw.task, raw.rounds, raw.reward)
    }
}

impl From<ReActRecord> for RawRecord {
    fn from(r: ReActRecord) -> Self {
        RawRecord {
            task: r.task,
            rounds: r.rounds,
            reward: r.reward,
        }
    }
}

impl ReActRecord {
    pub fn new(task: String, rounds: Vec<Round>, reward: Reward) -> Result<Self, DistillError> {
        if rounds.is_empty() {
            return Err(DistillError::InvalidRecord("record has no rounds".into()));
        }
        if let Some(i) = rounds
            .iter()
            .position(|r| r.thought.trim().is_empty() || r.action.trim().is_empty())
        {
            return Err(DistillError::InvalidRecord(format!(
                "round {} has an empty thought or action",
                i + 1
            )));
        }
        if reward < Reward::from_integer(0) || reward > Reward::from_integer(1) {
            return Err(DistillError::InvalidRecord(format!("reward {reward} outside [0, 1]")));
        }
        Ok(ReActRecord { task, rounds, reward })
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn reward(&self) -> Reward {
        self.reward
    }
}

/// Input to plan distillation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillRequest {
    pub task_description: String,
    pub task: String,
    pub thoughts: Vec<String>,
    /// (task, plan source) pairs shown to an external model.
    pub demonstrations: Vec<(String, String)>,
}

impl DistillRequest {
    pub fn from_record(kind: EnvKind, record: &ReActRecord) -> Self {
        DistillRequest {
            task_description: task_description(kind).to_string(),
            task: record.task.clone(),
            thoughts: extract_thoughts(record),
            demonstrations: Vec::new(),
        }
    }
}

/// Short description of each environment for distillation prompts.
pub fn task_description(kind: EnvKind) -> &'static str {
    match kind {
        EnvKind::Household => {
            "Interact with a household to solve a task. Actions: go to <receptacle>, open <receptacle>, take <object> from <receptacle>, put <object> in/on <receptacle>."
        }
        EnvKind::Shop => {
            "Shop on a web store to buy an item that matches the instruction. Actions: search <query>, click <button or item or option>."
        }
        EnvKind::Craft => {
            "Craft the target item from raw materials using the given crafting commands. Actions: get <item>, craft <item>, inventory."
        }
    }
}

/// Thought of every round, in order. A plan folded into the first thought is removed.
pub fn extract_thoughts(record: &ReActRecord) -> Vec<String> {
    record
        .rounds
        .iter()
        .enumerate()
        .map(|(i, r)| if i == 0 { strip_plan(&r.thought) } else { r.thought.clone() })
        .collect()
}

fn strip_plan(thought: &str) -> String {
    let Some(rest) = thought.trim_start().strip_prefix(PLAN_PREFIX) else {
        return thought.to_string();
    };
    rest.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("Step ") && !l.starts_with("Entities:"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::incorporate_plan;

    fn round(thought: &str) -> Round {
        Round {
            thought: thought.into(),
            action: "go to desk 1".into(),
            observation: "ok".into(),
        }
    }

    #[test]
    fn thoughts_in_order() {
        let r = ReActRecord::new(
            "t".into(),
            vec![round("a"), round("b"), round("c")],
            Reward::from_integer(1),
        )
        .unwrap();
        assert_eq!(extract_thoughts(&r), vec!["a", "b", "c"]);
    }

    #[test]
    fn plan_prefix_is_stripped() {
        let first = incorporate_plan(
            "Step 1: find_object($obj)\nEntities: obj = \"pencil\"",
            "I need to find the pencil.",
        );
        let r = ReActRecord::new(
            "t".into(),
            vec![round(&first), round("I take the pencil.")],
            Reward::from_integer(1),
        )
        .unwrap();
        let thoughts = extract_thoughts(&r);
        assert_eq!(thoughts, vec!["I need to find the pencil.", "I take the pencil."]);
        assert!(!thoughts[0].contains(PLAN_PREFIX));
    }

    #[test]
    fn empty_thought_rejected() {
        let err = ReActRecord::new("t".into(), vec![round("  ")], Reward::from_integer(1));
        assert!(matches!(err, Err(DistillError::InvalidRecord(_))));
        assert!(ReActRecord::new("t".into(), vec![], Reward::from_integer(1)).is_err());
        assert!(ReActRecord::new("t".into(), vec![round("x")], Reward::new(3, 2)).is_err());
    }

    #[test]
    fn jsonl_schema() {
        let line = r#"{"task":"put a pencil in/on the shelf","rounds":[{"thought":"I need to find the pencil.","action":"go to desk 1","observation":"..."}],"reward":1}"#;
        let r: ReActRecord = serde_json::from_str(line).unwrap();
        assert_eq!(r.rounds().len(), 1);
        assert_eq!(r.reward(), Reward::from_integer(1));
        let bad = r#"{"task":"t","rounds":[],"reward":1}"#;
        assert!(serde_json::from_str::<ReActRecord>(bad).is_err());
    }
}
