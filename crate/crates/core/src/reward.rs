//! Planning-oriented rewards: the outcome of a (plan, trajectory) pair, and the
//! Monte-Carlo value of continuing a fixed prefix under a frozen scorer policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{outcome_reward, Env, EnvError, EnvState, TaskSpec};
use crate::policy::{PlanSource, PolicyParams, RolloutError, RolloutRequest};
use crate::trajectory::{reward_serde, PlanMode, Round};
use crate::{Reward, Scalar};

/// Rounds that make up the plan-following prefix.
pub const FOLLOW_PREFIX_ROUNDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    PlanDriven,
    PlanFollowing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub kind: RewardKind,
    #[serde(with = "reward_serde")]
    pub value: Reward,
    pub sample_count: u32,
    #[serde(with = "reward_serde::vec")]
    pub sample_rewards: Option<Vec<Reward>>,
}

impl RewardRecord {
    pub fn plan_driven(value: Reward) -> Self {
        RewardRecord {
            kind: RewardKind::PlanDriven,
            value,
            sample_count: 1,
            sample_rewards: None,
        }
    }

    /// Exact mean of `samples`.
    pub fn plan_following(samples: Vec<Reward>) -> Result<Self, RewardError> {
        if samples.is_empty() {
            return Err(RewardError::NoSamples);
        }
        let sum: Reward = samples.iter().copied().sum();
        Ok(RewardRecord {
            kind: RewardKind::PlanFollowing,
            value: sum / Reward::from_integer(samples.len() as i64),
            sample_count: samples.len() as u32,
            sample_rewards: Some(samples),
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("episode has not finished")]
    EpisodeNotFinished,
    #[error("at least one continuation sample is required")]
    NoSamples,
    #[error("replayed observation differs from the recorded prefix at round {round}")]
    PrefixReplayMismatch { round: usize },
    #[error(transparent)]
    Env(EnvError),
}

impl From<RolloutError> for RewardError {
    fn from(e: RolloutError) -> Self {
        match e {
            RolloutError::PrefixReplayMismatch { round } => RewardError::PrefixReplayMismatch { round },
            RolloutError::Env(e) => RewardError::Env(e),
        }
    }
}

/// Outcome reward of a finished episode.
pub fn plan_driven_reward(state: &EnvState) -> Result<RewardRecord, RewardError> {
    outcome_reward(state)
        .map(RewardRecord::plan_driven)
        .map_err(|_| RewardError::EpisodeNotFinished)
}

/// Inputs of a plan-following estimate.
#[derive(Debug, Clone)]
pub struct FollowRequest<'a> {
    pub spec: &'a TaskSpec,
    pub plan_mode: PlanMode,
    pub plan: Option<&'a str>,
    /// Recorded rounds replayed before sampling; normally the first two.
    pub prefix: &'a [Round],
    pub samples: u32,
    pub seed: u64,
    pub temperature: f64,
}

/// Mean outcome of `samples` continuations after the prefix, sample `i`
/// seeded with `seed + i`. Samples run in parallel; the result does not
/// depend on scheduling.
pub fn plan_following_reward<T: Scalar>(
    scorer: &PolicyParams<T>,
    env: &Env,
    req: &FollowRequest<'_>,
) -> Result<RewardRecord, RewardError> {
    if req.samples == 0 {
        return Err(RewardError::NoSamples);
    }
    let plan = match req.plan {
        Some(p) => PlanSource::Given(p.to_string()),
        None => PlanSource::Absent,
    };
    let rewards: Vec<Reward> = (0..req.samples)
        .into_par_iter()
        .map(|i| {
            scorer
                .rollout(
                    env,
                    &RolloutRequest {
                        spec: req.spec,
                        plan_mode: req.plan_mode,
                        plan: plan.clone(),
                        prefix: req.prefix,
                        temperature: req.temperature,
                        seed: req.seed.wrapping_add(u64::from(i)),
                    },
                )
                .map(|r| r.reward())
        })
        .collect::<Result<_, _>>()?;
    RewardRecord::plan_following(rewards)
}
