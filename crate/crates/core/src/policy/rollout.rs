use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::Segment;
use super::params::PolicyParams;
use super::score::EpisodeContext;
use crate::env::{outcome_reward, Env, EnvError, EnvState, TaskSpec};
use crate::plan::parse_plan;
use crate::trajectory::{PlanMode, Round, Trajectory};
use crate::{Reward, Scalar};

/// Token caps per segment; hitting one closes the segment.
pub const MAX_PLAN_TOKENS: usize = 160;
pub const MAX_THOUGHT_TOKENS: usize = 24;
pub const MAX_ACTION_TOKENS: usize = 16;

/// Where the plan of an episode comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanSource {
    /// Sampled from the policy.
    Generate,
    /// Fixed text, not scored.
    Given(String),
    /// No plan at all.
    Absent,
}

#[derive(Debug, Clone)]
pub struct RolloutRequest<'a> {
    pub spec: &'a TaskSpec,
    pub plan_mode: PlanMode,
    pub plan: PlanSource,
    /// Rounds replayed verbatim before sampling starts.
    pub prefix: &'a [Round],
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLogprob {
    pub segment: Segment,
    /// 1-based round; 0 for the plan.
    pub round: usize,
    pub logprob: f64,
}

/// A finished episode with the log-probability of every sampled segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub plan: Option<String>,
    pub degraded_plan: bool,
    pub initial_observation: String,
    pub rounds: Vec<Round>,
    pub logprob_by_segment: Vec<SegmentLogprob>,
    pub final_state: EnvState,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RolloutError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("replayed observation differs from the recorded prefix at round {round}")]
    PrefixReplayMismatch { round: usize },
}

impl Rollout {
    pub fn reward(&self) -> Reward {
        outcome_reward(&self.final_state).unwrap_or_else(|_| Reward::from_integer(0))
    }

    pub fn total_logprob(&self) -> f64 {
        self.logprob_by_segment.iter().map(|s| s.logprob).sum()
    }

    pub fn into_trajectory(self, spec: &TaskSpec, plan_mode: PlanMode) -> Trajectory {
        let reward = self.reward();
        Trajectory {
            task_id: spec.id.clone(),
            env: spec.env_kind,
            seed: spec.seed,
            goal: spec.goal.clone(),
            max_turns: spec.max_turns,
            task: spec.instruction.clone(),
            plan_mode,
            plan: self.plan,
            degraded_plan: self.degraded_plan,
            initial_observation: self.initial_observation,
            rounds: self.rounds,
            reward,
            r_d: None,
            r_f: None,
            r_f_samples: None,
        }
    }
}

impl<T: Scalar> PolicyParams<T> {
    /// Plays one episode to completion or the turn limit.
    pub fn rollout(&self, env: &Env, req: &RolloutRequest<'_>) -> Result<Rollout, RolloutError> {
        let vocab = self.vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let mut logprobs = Vec::new();
        let (mut state, initial_observation) = env.reset(req.spec)?;

        let plan = match (&req.plan, req.plan_mode.uses_plan()) {
            (_, false) | (PlanSource::Absent, _) => None,
            (PlanSource::Given(text), true) => Some(text.clone()),
            (PlanSource::Generate, true) => {
                let ctx = EpisodeContext::new(vocab, &req.spec.instruction, None, "");
                let (tokens, lp) =
                    self.sample_segment(Segment::Plan, &ctx.plan_context(), req.temperature, MAX_PLAN_TOKENS, &mut rng);
                logprobs.push(SegmentLogprob {
                    segment: Segment::Plan,
                    round: 0,
                    logprob: lp.to_f64_lossy(),
                });
                Some(vocab.decode(&tokens))
            }
        };
        let degraded_plan = req.plan_mode == PlanMode::Pcode && plan.as_deref().is_some_and(|p| parse_plan(p).is_err());
        let ctx = EpisodeContext::new(vocab, &req.spec.instruction, plan.as_deref(), &initial_observation);

        let mut rounds: Vec<Round> = Vec::new();
        for (i, recorded) in req.prefix.iter().enumerate() {
            if state.done {
                break;
            }
            let (next, result) = env.step(&state, &recorded.action)?;
            if result.observation != recorded.observation {
                return Err(RolloutError::PrefixReplayMismatch { round: i + 1 });
            }
            state = next;
            rounds.push(recorded.clone());
        }

        while !state.done {
            let index = rounds.len() + 1;
            let round_ctx = ctx.round_context(vocab, index, rounds.last());
            let (thought, lp_t) =
                self.sample_segment(Segment::Thought, &round_ctx, req.temperature, MAX_THOUGHT_TOKENS, &mut rng);
            let action_ctx = EpisodeContext::action_context(&round_ctx, &thought);
            let (action, lp_a) =
                self.sample_segment(Segment::Action, &action_ctx, req.temperature, MAX_ACTION_TOKENS, &mut rng);
            logprobs.push(SegmentLogprob {
                segment: Segment::Thought,
                round: index,
                logprob: lp_t.to_f64_lossy(),
            });
            logprobs.push(SegmentLogprob {
                segment: Segment::Action,
                round: index,
                logprob: lp_a.to_f64_lossy(),
            });
            let action_text = vocab.decode(&action);
            let (next, result) = env.step(&state, &action_text)?;
            state = next;
            rounds.push(Round {
                thought: vocab.decode(&thought),
                action: action_text,
                observation: result.observation,
            });
        }

        Ok(Rollout {
            plan,
            degraded_plan,
            initial_observation,
            rounds,
            logprob_by_segment: logprobs,
            final_state: state,
        })
    }
}
