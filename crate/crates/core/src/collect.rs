//! Base-agent exploration and the two contrastive datasets: whole
//! (plan, trajectory) pairs ranked by outcome, and suffix pairs sharing the
//! expert's first round, ranked by plan-following reward.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Env, TaskSpec};
use crate::policy::{PlanSource, PolicyParams, RolloutError, RolloutRequest};
use crate::reward::{plan_driven_reward, plan_following_reward, FollowRequest, RewardError, RewardRecord, FOLLOW_PREFIX_ROUNDS};
use crate::trajectory::{reward_serde, PlanMode, Round, Trajectory};
use crate::{Reward, Scalar};

/// Settings for plan-following estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowSettings {
    pub samples: u32,
    pub temperature: f64,
    pub seed: u64,
}

/// An expert demonstration with its rewards. `trajectory.plan` holds the plan text for plan modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertEntry {
    pub trajectory: Trajectory,
    pub r_d: RewardRecord,
    /// Absent for episodes shorter than the follow prefix.
    pub r_f: Option<RewardRecord>,
}

impl ExpertEntry {
    /// Attaches the outcome reward and, when the episode is long enough, the
    /// plan-following reward of its first rounds under `scorer`.
    pub fn new<T: Scalar>(
        trajectory: Trajectory,
        scorer: &PolicyParams<T>,
        env: &Env,
        follow: FollowSettings,
    ) -> Result<Self, RewardError> {
        let r_d = RewardRecord::plan_driven(trajectory.reward);
        let r_f = if trajectory.rounds.len() >= FOLLOW_PREFIX_ROUNDS {
            Some(follow_reward(scorer, env, &trajectory, &trajectory.rounds[..FOLLOW_PREFIX_ROUNDS], follow)?)
        } else {
            None
        };
        let mut trajectory = trajectory;
        trajectory.r_d = Some(r_d.value);
        trajectory.r_f = r_f.as_ref().map(|r| r.value);
        trajectory.r_f_samples = r_f.as_ref().and_then(|r| r.sample_rewards.clone());
        Ok(ExpertEntry { trajectory, r_d, r_f })
    }
}

fn follow_reward<T: Scalar>(
    scorer: &PolicyParams<T>,
    env: &Env,
    t: &Trajectory,
    prefix: &[Round],
    follow: FollowSettings,
) -> Result<RewardRecord, RewardError> {
    let spec = t.spec();
    plan_following_reward(
        scorer,
        env,
        &FollowRequest {
            spec: &spec,
            plan_mode: t.plan_mode,
            plan: t.plan.as_deref(),
            prefix,
            samples: follow.samples,
            seed: follow.seed,
            temperature: follow.temperature,
        },
    )
}

/// Greedy episode of the base agent from scratch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exploration {
    pub trajectory: Trajectory,
    pub r_d: RewardRecord,
}

/// Greedy continuation of the base agent after the expert's first round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowExploration {
    /// Expert round 1 followed by the agent's rounds.
    pub trajectory: Trajectory,
    pub r_f: RewardRecord,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CollectError {
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Plan generated, then the episode rolled out, both at `temperature` (0 is greedy).
pub fn explore_full<T: Scalar>(
    base: &PolicyParams<T>,
    env: &Env,
    spec: &TaskSpec,
    plan_mode: PlanMode,
    temperature: f64,
) -> Result<Exploration, CollectError> {
    let rollout = base.rollout(
        env,
        &RolloutRequest {
            spec,
            plan_mode,
            plan: if plan_mode.uses_plan() { PlanSource::Generate } else { PlanSource::Absent },
            prefix: &[],
            temperature,
            seed: spec.seed,
        },
    )?;
    let r_d = plan_driven_reward(&rollout.final_state)?;
    let mut trajectory = rollout.into_trajectory(spec, plan_mode);
    trajectory.r_d = Some(r_d.value);
    Ok(Exploration { trajectory, r_d })
}

/// Why an entry produced no exploration or no pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SkipReason {
    Tie,
    TooShort,
    MissingExploration,
    DegradedWinner,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub task_id: String,
    /// `dp`, `df` or `explore`.
    pub stage: String,
    pub reason: SkipReason,
}

impl Skip {
    fn new(task_id: &str, stage: &str, reason: SkipReason) -> Self {
        Skip {
            task_id: task_id.to_string(),
            stage: stage.to_string(),
            reason,
        }
    }
}

/// Continuation from after the expert's round 1 under the base agent at
/// `temperature`, scored by
/// the plan-following reward of its first two rounds under `scorer`.
/// Returns a skip when the expert episode is too short or the continuation ends
/// before a second round.
pub fn explore_from_round1<T: Scalar>(
    base: &PolicyParams<T>,
    scorer: &PolicyParams<T>,
    env: &Env,
    entry: &ExpertEntry,
    temperature: f64,
    follow: FollowSettings,
) -> Result<Result<FollowExploration, Skip>, CollectError> {
    let expert = &entry.trajectory;
    if expert.rounds.len() < FOLLOW_PREFIX_ROUNDS {
        return Ok(Err(Skip::new(&expert.task_id, "explore", SkipReason::TooShort)));
    }
    let spec = expert.spec();
    let rollout = base.rollout(
        env,
        &RolloutRequest {
            spec: &spec,
            plan_mode: expert.plan_mode,
            plan: expert.plan.clone().map_or(PlanSource::Absent, PlanSource::Given),
            prefix: &expert.rounds[..1],
            temperature,
            seed: spec.seed,
        },
    )?;
    if rollout.rounds.len() < FOLLOW_PREFIX_ROUNDS {
        return Ok(Err(Skip::new(&expert.task_id, "explore", SkipReason::TooShort)));
    }
    let mut trajectory = rollout.into_trajectory(&spec, expert.plan_mode);
    let r_f = follow_reward(scorer, env, &trajectory, &trajectory.rounds[..FOLLOW_PREFIX_ROUNDS], follow)?;
    trajectory.r_f = Some(r_f.value);
    trajectory.r_f_samples = r_f.sample_rewards.clone();
    Ok(Ok(FollowExploration { trajectory, r_f }))
}

/// Runs `f` over `items` in parallel, keeping input order.
pub fn par_map<I: Sync, O: Send, E: Send>(
    items: &[I],
    f: impl Fn(&I) -> Result<O, E> + Sync + Send,
) -> Result<Vec<O>, E> {
    items.par_iter().map(f).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPair {
    pub task_id: String,
    pub u: String,
    pub winner: Trajectory,
    pub loser: Trajectory,
    #[serde(with = "reward_serde")]
    pub winner_r_d: Reward,
    #[serde(with = "reward_serde")]
    pub loser_r_d: Reward,
    pub winner_is_agent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowPair {
    pub task_id: String,
    pub u: String,
    pub plan: Option<String>,
    pub initial_observation: String,
    pub shared_round1: Round,
    pub winner_suffix: Vec<Round>,
    pub loser_suffix: Vec<Round>,
    #[serde(with = "reward_serde")]
    pub winner_r_f: Reward,
    #[serde(with = "reward_serde")]
    pub loser_r_f: Reward,
    pub winner_is_agent: bool,
}

/// Expert against agent on outcome reward, for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub task_id: String,
    #[serde(with = "reward_serde")]
    pub expert: Reward,
    #[serde(with = "reward_serde")]
    pub agent: Reward,
}

fn by_task<X>(items: &[X], id: impl Fn(&X) -> &str) -> BTreeMap<&str, &X> {
    items.iter().map(|x| (id(x), x)).collect()
}

fn sorted_experts(experts: &[ExpertEntry]) -> Vec<&ExpertEntry> {
    let mut v: Vec<&ExpertEntry> = experts.iter().collect();
    v.sort_by(|a, b| a.trajectory.task_id.cmp(&b.trajectory.task_id));
    v
}

/// Outcome comparisons for every expert task that has an exploration.
pub fn compare_outcomes(experts: &[ExpertEntry], explorations: &[Exploration]) -> Vec<Comparison> {
    let explored = by_task(explorations, |e| &e.trajectory.task_id);
    sorted_experts(experts)
        .into_iter()
        .filter_map(|x| {
            let agent = explored.get(x.trajectory.task_id.as_str())?;
            Some(Comparison {
                task_id: x.trajectory.task_id.clone(),
                expert: x.r_d.value,
                agent: agent.r_d.value,
            })
        })
        .collect()
}

/// Whole-trajectory pairs: the side with strictly higher outcome wins. Ties,
/// missing explorations and degraded-plan winners are skipped.
pub fn build_plan_pairs(experts: &[ExpertEntry], explorations: &[Exploration]) -> (Vec<PlanPair>, Vec<Skip>) {
    let explored = by_task(explorations, |e| &e.trajectory.task_id);
    let mut pairs = Vec::new();
    let mut skips = Vec::new();
    for x in sorted_experts(experts) {
        let id = x.trajectory.task_id.as_str();
        let Some(agent) = explored.get(id) else {
            skips.push(Skip::new(id, "dp", SkipReason::MissingExploration));
            continue;
        };
        let (e, a) = (x.r_d.value, agent.r_d.value);
        if e == a {
            skips.push(Skip::new(id, "dp", SkipReason::Tie));
            continue;
        }
        let agent_wins = a > e;
        let (winner, loser) = if agent_wins {
            (&agent.trajectory, &x.trajectory)
        } else {
            (&x.trajectory, &agent.trajectory)
        };
        if winner.degraded_plan {
            skips.push(Skip::new(id, "dp", SkipReason::DegradedWinner));
            continue;
        }
        pairs.push(PlanPair {
            task_id: id.to_string(),
            u: x.trajectory.task.clone(),
            winner: winner.clone(),
            loser: loser.clone(),
            winner_r_d: e.max(a),
            loser_r_d: e.min(a),
            winner_is_agent: agent_wins,
        });
    }
    (pairs, skips)
}

/// Suffix pairs after the shared expert round 1: the side with strictly higher
/// plan-following reward wins.
pub fn build_follow_pairs(experts: &[ExpertEntry], explorations: &[FollowExploration]) -> (Vec<FollowPair>, Vec<Skip>) {
    let explored = by_task(explorations, |e| &e.trajectory.task_id);
    let mut pairs = Vec::new();
    let mut skips = Vec::new();
    for x in sorted_experts(experts) {
        let id = x.trajectory.task_id.as_str();
        let Some(expert_rf) = &x.r_f else {
            skips.push(Skip::new(id, "df", SkipReason::TooShort));
            continue;
        };
        let Some(agent) = explored.get(id) else {
            skips.push(Skip::new(id, "df", SkipReason::MissingExploration));
            continue;
        };
        let (e, a) = (expert_rf.value, agent.r_f.value);
        if e == a {
            skips.push(Skip::new(id, "df", SkipReason::Tie));
            continue;
        }
        let agent_wins = a > e;
        let expert_suffix = x.trajectory.rounds[1..].to_vec();
        let agent_suffix = agent.trajectory.rounds[1..].to_vec();
        let (winner_suffix, loser_suffix) = if agent_wins {
            (agent_suffix, expert_suffix)
        } else {
            (expert_suffix, agent_suffix)
        };
        pairs.push(FollowPair {
            task_id: id.to_string(),
            u: x.trajectory.task.clone(),
            plan: x.trajectory.plan.clone(),
            initial_observation: x.trajectory.initial_observation.clone(),
            shared_round1: x.trajectory.rounds[0].clone(),
            winner_suffix,
            loser_suffix,
            winner_r_f: e.max(a),
            loser_r_f: e.min(a),
            winner_is_agent: agent_wins,
        });
    }
    (pairs, skips)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

/// Agent-beats-expert, expert-beats-agent and equal counts.
pub fn win_loss_tally(comparisons: &[Comparison]) -> Tally {
    let mut t = Tally::default();
    for c in comparisons {
        match c.agent.cmp(&c.expert) {
            std::cmp::Ordering::Greater => t.wins += 1,
            std::cmp::Ordering::Less => t.losses += 1,
            std::cmp::Ordering::Equal => t.ties += 1,
        }
    }
    t
}
