//! Expert demonstrations: oracle action sequences with templated thoughts,
//! plus both plan forms distilled from those thoughts.

use serde::{Deserialize, Serialize};

use crate::distill::{distill_offline_with_summary, extract_thoughts, DistillRequest, ReActRecord};
use crate::env::{oracle_expert, strip_index, Env, EnvKind, Goal, TaskSpec};
use crate::plan::render_plan;
use crate::policy::Vocab;
use crate::trajectory::{incorporate_plan, PlanMode, Round, Trajectory};
use crate::{Error, Reward};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertDemo {
    pub spec: TaskSpec,
    pub initial_observation: String,
    pub rounds: Vec<Round>,
    #[serde(with = "crate::trajectory::reward_serde")]
    pub reward: Reward,
    /// Rendered pseudocode plan.
    pub pcode: String,
    /// Natural-language summary the pseudocode was formatted from.
    pub nl: String,
}

impl ExpertDemo {
    pub fn record(&self) -> ReActRecord {
        ReActRecord::new(self.spec.instruction.clone(), self.rounds.clone(), self.reward)
            .expect("expert rounds are non-empty")
    }

    pub fn plan_text(&self, mode: PlanMode) -> Option<&str> {
        match mode {
            PlanMode::Pcode => Some(&self.pcode),
            PlanMode::Nl => Some(&self.nl),
            PlanMode::None => None,
        }
    }

    pub fn trajectory(&self, mode: PlanMode) -> Trajectory {
        let s = &self.spec;
        Trajectory {
            task_id: s.id.clone(),
            env: s.env_kind,
            seed: s.seed,
            goal: s.goal.clone(),
            max_turns: s.max_turns,
            task: s.instruction.clone(),
            plan_mode: mode,
            plan: self.plan_text(mode).map(str::to_string),
            degraded_plan: false,
            initial_observation: self.initial_observation.clone(),
            rounds: self.rounds.clone(),
            reward: self.reward,
            r_d: None,
            r_f: None,
            r_f_samples: None,
        }
    }

    /// Training record with the plan folded into the first thought.
    pub fn sft_record(&self, mode: PlanMode) -> ReActRecord {
        let mut rounds = self.rounds.clone();
        if let Some(plan) = self.plan_text(mode) {
            rounds[0].thought = incorporate_plan(plan, &rounds[0].thought);
        }
        ReActRecord::new(self.spec.instruction.clone(), rounds, self.reward).expect("expert rounds are non-empty")
    }

    /// Re-derives plans from a recorded trajectory's thoughts.
    pub fn from_trajectory(t: &Trajectory) -> Result<Self, Error> {
        let record = ReActRecord::new(t.task.clone(), t.rounds.clone(), t.reward)?;
        let mut rounds = t.rounds.clone();
        rounds[0].thought = extract_thoughts(&record).swap_remove(0);
        let distilled = distill_offline_with_summary(&DistillRequest {
            thoughts: extract_thoughts(&record),
            ..DistillRequest::from_record(t.env, &record)
        })?;
        Ok(ExpertDemo {
            spec: t.spec(),
            initial_observation: t.initial_observation.clone(),
            rounds,
            reward: t.reward,
            pcode: render_plan(&distilled.plan),
            nl: distilled.nl_plan,
        })
    }
}

/// Thought that an expert would state before `action`.
pub fn expert_thought(goal: &Goal, action: &str, holding: bool) -> String {
    let words: Vec<&str> = action.split_whitespace().collect();
    let tail = |from: usize| words.get(from..).unwrap_or_default().join(" ");
    match goal {
        Goal::Household { object, .. } => match words.first().copied() {
            Some("go") => {
                let loc = tail(2);
                let loc = strip_index(&loc);
                if holding {
                    format!("Now I go to the {loc}.")
                } else {
                    format!("I need to find the {object}, so I go to the {loc}.")
                }
            }
            Some("open") => format!("I open the {}.", strip_index(&tail(1))),
            Some("take") => format!("I take the {object}."),
            Some("put") => {
                let at = words.iter().position(|w| *w == "in/on").map_or(words.len(), |i| i + 1);
                format!("I put it in/on the {}.", strip_index(&tail(at)))
            }
            _ => format!("I examine the {}.", tail(1)),
        },
        Goal::Shop { .. } => match (words.first().copied(), tail(1)) {
            (Some("search"), q) => format!("I search for a {q}."),
            (_, c) if c == "buy now" => "I buy the item.".to_string(),
            (_, c) if c.contains(' ') => format!("I click the {c}."),
            (_, c) => format!("I select the {c} option."),
        },
        Goal::Craft { .. } => match words.first().copied() {
            Some("get") => format!("I get the {}.", tail(1)),
            Some("craft") => format!("I craft the {}.", tail(1)),
            _ => "I check the inventory.".to_string(),
        },
    }
}

/// Oracle demonstration for `spec`, or `None` when the task is unsolvable.
pub fn synthesize_expert(env: &Env, spec: &TaskSpec) -> Result<Option<ExpertDemo>, Error> {
    let Some(oracle) = oracle_expert(env, spec)? else {
        return Ok(None);
    };
    let (_, initial_observation) = env.reset(spec)?;
    let mut holding = false;
    let rounds: Vec<Round> = oracle
        .actions
        .iter()
        .zip(&oracle.observations)
        .map(|(action, observation)| {
            let thought = expert_thought(&spec.goal, action, holding);
            holding = (holding || action.starts_with("take ")) && !action.starts_with("put ");
            Round {
                thought,
                action: action.clone(),
                observation: observation.clone(),
            }
        })
        .collect();
    let thoughts: Vec<String> = rounds.iter().map(|r| r.thought.clone()).collect();
    let distilled = distill_offline_with_summary(&DistillRequest {
        task_description: crate::distill::task_description(spec.env_kind).to_string(),
        task: spec.instruction.clone(),
        thoughts,
        demonstrations: Vec::new(),
    })?;
    Ok(Some(ExpertDemo {
        spec: spec.clone(),
        initial_observation,
        rounds,
        reward: oracle.reward,
        pcode: render_plan(&distilled.plan),
        nl: distilled.nl_plan,
    }))
}

/// Demonstrations for every solvable task, in task order.
pub fn synthesize_experts(env: &Env, specs: &[TaskSpec]) -> Result<Vec<ExpertDemo>, Error> {
    let demos = crate::collect::par_map(specs, |s| synthesize_expert(env, s))?;
    Ok(demos.into_iter().flatten().collect())
}

/// Output vocabulary: every admissible action plus the expert thoughts and plans.
pub fn build_vocab(env: &Env, kind: EnvKind, demos: &[ExpertDemo]) -> Vocab {
    let mut texts = env.action_vocabulary(kind);
    for d in demos {
        texts.extend(d.rounds.iter().map(|r| r.thought.clone()));
        texts.push(d.pcode.clone());
        texts.push(d.nl.clone());
    }
    Vocab::from_texts(texts)
}
