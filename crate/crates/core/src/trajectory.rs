//! Trajectory records shared by distillation, collection and the harness.
//!
//! One JSON object per line. Rewards are exact rationals written as `"n/d"`
//! strings; plain JSON numbers are accepted on input.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvKind, Goal, TaskSpec};
use crate::{Error, Reward};

/// Text that introduces a plan inside the first thought of a trajectory.
pub const PLAN_PREFIX: &str = "First, I devise a plan for solving the task:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    #[default]
    Pcode,
    Nl,
    None,
}

impl PlanMode {
    pub fn uses_plan(self) -> bool {
        !matches!(self, PlanMode::None)
    }

    pub fn name(self) -> &'static str {
        match self {
            PlanMode::Pcode => "pcode",
            PlanMode::Nl => "nl",
            PlanMode::None => "none",
        }
    }
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pcode" => Ok(PlanMode::Pcode),
            "nl" => Ok(PlanMode::Nl),
            "none" => Ok(PlanMode::None),
            other => Err(format!("unknown plan mode `{other}` (expected pcode|nl|none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Round {
    pub thought: String,
    pub action: String,
    pub observation: String,
}

/// Serde adapter writing a [`Reward`] as `"n/d"`.
pub mod reward_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::Reward;

    pub fn serialize<S: Serializer>(r: &Reward, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Int(i64),
        Float(f64),
    }

    pub fn parse(text: &str) -> Option<Reward> {
        let text = text.trim();
        match text.split_once('/') {
            Some((n, d)) => {
                let d: i64 = d.trim().parse().ok()?;
                (d != 0).then_some(())?;
                Some(Reward::new(n.trim().parse().ok()?, d))
            }
            None => text.parse::<i64>().ok().map(Reward::from_integer),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Reward, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Text(t) => parse(&t).ok_or_else(|| de::Error::custom(format!("bad reward `{t}`"))),
            Raw::Int(i) => Ok(Reward::from_integer(i)),
            Raw::Float(f) => Reward::approximate_float(f).ok_or_else(|| de::Error::custom("bad reward")),
        }
    }

    pub mod opt {
        use serde::{Deserialize, Deserializer, Serializer};

        use crate::Reward;

        pub fn serialize<S: Serializer>(r: &Option<Reward>, s: S) -> Result<S::Ok, S::Error> {
            match r {
                Some(r) => super::serialize(r, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Reward>, D::Error> {
            #[derive(Deserialize)]
            struct W(#[serde(with = "super")] Reward);
            Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
        }
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        use crate::Reward;

        pub fn serialize<S: Serializer>(rs: &Option<Vec<Reward>>, s: S) -> Result<S::Ok, S::Error> {
            match rs {
                None => s.serialize_none(),
                Some(rs) => {
                    let mut seq = s.serialize_seq(Some(rs.len()))?;
                    for r in rs {
                        seq.serialize_element(&format!("{}/{}", r.numer(), r.denom()))?;
                    }
                    seq.end()
                }
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Reward>>, D::Error> {
            #[derive(Deserialize)]
            struct W(#[serde(with = "super")] Reward);
            Ok(Option::<Vec<W>>::deserialize(d)?.map(|v| v.into_iter().map(|w| w.0).collect()))
        }
    }
}

/// A complete episode, replayable from its task fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub env: EnvKind,
    pub seed: u64,
    pub goal: Goal,
    pub max_turns: u32,
    /// Task instruction.
    pub task: String,
    pub plan_mode: PlanMode,
    #[serde(default)]
    pub plan: Option<String>,
    #[serde(default)]
    pub degraded_plan: bool,
    pub initial_observation: String,
    pub rounds: Vec<Round>,
    #[serde(with = "reward_serde")]
    pub reward: Reward,
    #[serde(default, with = "reward_serde::opt", skip_serializing_if = "Option::is_none")]
    pub r_d: Option<Reward>,
    #[serde(default, with = "reward_serde::opt", skip_serializing_if = "Option::is_none")]
    pub r_f: Option<Reward>,
    #[serde(default, with = "reward_serde::vec", skip_serializing_if = "Option::is_none")]
    pub r_f_samples: Option<Vec<Reward>>,
}

impl Trajectory {
    pub fn spec(&self) -> TaskSpec {
        TaskSpec {
            id: self.task_id.clone(),
            env_kind: self.env,
            instruction: self.task.clone(),
            goal: self.goal.clone(),
            seed: self.seed,
            max_turns: self.max_turns,
        }
    }

    pub fn invalid_actions(&self) -> usize {
        self.rounds
            .iter()
            .filter(|r| r.observation == crate::env::NOTHING_HAPPENS)
            .count()
    }
}

/// Thought text with a plan folded into it, as stored in plan-incorporated data.
pub fn incorporate_plan(plan: &str, thought: &str) -> String {
    format!("{PLAN_PREFIX}\n{plan}\n{thought}")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub trajectories: usize,
    pub mismatches: Vec<String>,
}

/// Re-executes every action in a fresh environment and compares observations and reward.
pub fn replay(env: &Env, trajectories: &[Trajectory]) -> ReplayReport {
    let mut report = ReplayReport {
        trajectories: trajectories.len(),
        mismatches: Vec::new(),
    };
    for t in trajectories {
        if let Err(msg) = replay_one(env, t) {
            report.mismatches.push(format!("{}: {msg}", t.task_id));
        }
    }
    report
}

fn replay_one(env: &Env, t: &Trajectory) -> Result<(), String> {
    let (mut state, obs) = env.reset(&t.spec()).map_err(|e| e.to_string())?;
    if obs != t.initial_observation {
        return Err("initial observation differs".into());
    }
    for (i, round) in t.rounds.iter().enumerate() {
        let (next, result) = env.step(&state, &round.action).map_err(|e| format!("round {}: {e}", i + 1))?;
        if result.observation != round.observation {
            return Err(format!("round {} observation differs", i + 1));
        }
        state = next;
    }
    match state.final_reward {
        Some(r) if state.done && r == t.reward => Ok(()),
        Some(r) if state.done => Err(format!("reward {r} != recorded {}", t.reward)),
        _ => Err("episode did not finish".into()),
    }
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), Error> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_strings() {
        assert_eq!(reward_serde::parse("3/5"), Some(Reward::new(3, 5)));
        assert_eq!(reward_serde::parse("1"), Some(Reward::from_integer(1)));
        assert_eq!(reward_serde::parse("1/0"), None);
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct W(#[serde(with = "reward_serde")] Reward);
        assert_eq!(serde_json::to_string(&W(Reward::new(1, 2))).unwrap(), "\"1/2\"");
        assert_eq!(serde_json::from_str::<W>("0.5").unwrap(), W(Reward::new(1, 2)));
        assert_eq!(serde_json::from_str::<W>("1").unwrap(), W(Reward::from_integer(1)));
    }

    #[test]
    fn plan_mode_parsing() {
        assert_eq!("nl".parse::<PlanMode>().unwrap(), PlanMode::Nl);
        assert!("code".parse::<PlanMode>().is_err());
    }

    #[test]
    fn incorporated_thought_starts_with_prefix() {
        let t = incorporate_plan("Step 1: go_home()", "I go home.");
        assert!(t.starts_with(PLAN_PREFIX));
        assert!(t.ends_with("\nI go home."));
    }
}
