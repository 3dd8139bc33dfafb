//! Deterministic, seeded text environments behind one episodic contract.
//!
//! Three kinds mirror the benchmark shapes: a binary-reward household
//! (pick-and-place), a dense-reward shop, and a binary-reward crafting world.
//! Every function here is pure: `step` returns a new state and never mutates
//! its input.

mod craft;
mod household;
mod oracle;
mod shop;
mod world;

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use craft::{CraftBook, Recipe, RecipeInput};
pub use household::{HouseholdWorld, Location, ObjectDef};
pub use oracle::{oracle_expert, OracleResult};
pub use shop::{Catalog, Item};
pub use world::{TaskSet, Worlds};

use crate::Reward;

/// Observation returned for any rejected action.
pub const NOTHING_HAPPENS: &str = "Nothing happens.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Household,
    Shop,
    Craft,
}

impl EnvKind {
    pub fn default_max_turns(self) -> u32 {
        match self {
            EnvKind::Household => 20,
            EnvKind::Shop => 10,
            EnvKind::Craft => 20,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Household => "household",
            EnvKind::Shop => "shop",
            EnvKind::Craft => "craft",
        }
    }

    /// Binary kinds only ever pay 0 or 1.
    pub fn is_binary(self) -> bool {
        !matches!(self, EnvKind::Shop)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "household" => Ok(EnvKind::Household),
            "shop" => Ok(EnvKind::Shop),
            "craft" => Ok(EnvKind::Craft),
            other => Err(format!("unknown environment kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Goal {
    Household { object: String, destination: String },
    Shop { category: String, band: String, attributes: Vec<String> },
    Craft { target: String },
}

impl Goal {
    pub fn kind(&self) -> EnvKind {
        match self {
            Goal::Household { .. } => EnvKind::Household,
            Goal::Shop { .. } => EnvKind::Shop,
            Goal::Craft { .. } => EnvKind::Craft,
        }
    }

    /// Natural-language task instruction `u` for this goal.
    pub fn instruction(&self) -> String {
        match self {
            Goal::Household { object, destination } => {
                format!("put a {object} in/on the {}", strip_index(destination))
            }
            Goal::Shop { category, band, attributes } => {
                if attributes.is_empty() {
                    format!("buy a {band} {category}")
                } else {
                    format!("buy a {band} {category} that is {}", attributes.join(" and "))
                }
            }
            Goal::Craft { target } => format!("craft a {target}"),
        }
    }
}

/// "desk 1" -> "desk"
pub(crate) fn strip_index(name: &str) -> &str {
    match name.rsplit_once(' ') {
        Some((head, tail)) if tail.chars().all(|c| c.is_ascii_digit()) => head,
        _ => name,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub env_kind: EnvKind,
    pub instruction: String,
    pub goal: Goal,
    pub seed: u64,
    pub max_turns: u32,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, goal: Goal, seed: u64) -> Self {
        let env_kind = goal.kind();
        TaskSpec {
            id: id.into(),
            env_kind,
            instruction: goal.instruction(),
            goal,
            seed,
            max_turns: env_kind.default_max_turns(),
        }
    }

    pub fn with_max_turns(mut self, max_turns: u32) -> Self {
        self.max_turns = max_turns;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("unknown goal: {0}")]
    UnknownGoal(String),
    #[error("goal kind {goal} does not match task kind {task}")]
    KindMismatch { task: EnvKind, goal: EnvKind },
    #[error("max_turns must be positive")]
    ZeroTurns,
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("episode not finished")]
    EpisodeNotFinished,
}

/// Per-kind world state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WorldState {
    Household(household::HouseholdState),
    Shop(shop::ShopState),
    Craft(craft::CraftState),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    pub(crate) world: WorldState,
    pub turn_counter: u32,
    pub max_turns: u32,
    pub done: bool,
    pub final_reward: Option<Reward>,
}

impl EnvState {
    /// Digest of the goal-relevant world state (turn counter excluded).
    pub fn world_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.world.hash(&mut h);
        h.finish()
    }

    pub fn kind(&self) -> EnvKind {
        match self.world {
            WorldState::Household(_) => EnvKind::Household,
            WorldState::Shop(_) => EnvKind::Shop,
            WorldState::Craft(_) => EnvKind::Craft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: String,
    pub valid: bool,
    pub done: bool,
    #[serde(default, with = "crate::trajectory::reward_serde::opt")]
    pub reward_if_done: Option<Reward>,
}

/// Outcome of a kind-specific transition before turn bookkeeping.
pub(crate) struct Transition {
    pub world: WorldState,
    pub observation: String,
    /// `Some(r)` when the action ends the episode with reward `r`.
    pub terminal: Option<Reward>,
}

/// Environment facade over a set of world definitions.
#[derive(Debug, Clone)]
pub struct Env {
    worlds: Worlds,
}

impl Env {
    pub fn new(worlds: Worlds) -> Self {
        Env { worlds }
    }

    pub fn bundled() -> Self {
        Env::new(Worlds::bundled())
    }

    pub fn worlds(&self) -> &Worlds {
        &self.worlds
    }

    pub fn reset(&self, spec: &TaskSpec) -> Result<(EnvState, String), EnvError> {
        if spec.max_turns == 0 {
            return Err(EnvError::ZeroTurns);
        }
        if spec.goal.kind() != spec.env_kind {
            return Err(EnvError::KindMismatch {
                task: spec.env_kind,
                goal: spec.goal.kind(),
            });
        }
        let (world, obs) = match &spec.goal {
            Goal::Household { object, destination } => {
                let (s, o) = self.worlds.household.reset(object, destination, spec.seed)?;
                (WorldState::Household(s), o)
            }
            Goal::Shop { category, band, attributes } => {
                let (s, o) = self.worlds.shop.reset(category, band, attributes, spec.seed)?;
                (WorldState::Shop(s), o)
            }
            Goal::Craft { target } => {
                let (s, o) = self.worlds.craft.reset(target, spec.seed)?;
                (WorldState::Craft(s), o)
            }
        };
        Ok((
            EnvState {
                world,
                turn_counter: 0,
                max_turns: spec.max_turns,
                done: false,
                final_reward: None,
            },
            obs,
        ))
    }

    pub fn step(&self, state: &EnvState, action: &str) -> Result<(EnvState, StepResult), EnvError> {
        if state.done {
            return Err(EnvError::EpisodeFinished);
        }
        let action = normalize_action(action);
        let transition = match &state.world {
            WorldState::Household(s) => self.worlds.household.step(s, &action),
            WorldState::Shop(s) => self.worlds.shop.step(s, &action),
            WorldState::Craft(s) => self.worlds.craft.step(s, &action),
        };
        let (world, observation, terminal, valid) = match transition {
            Some(t) => (t.world, t.observation, t.terminal, true),
            None => (state.world.clone(), NOTHING_HAPPENS.to_string(), None, false),
        };
        let turn_counter = state.turn_counter + 1;
        let (done, final_reward) = match terminal {
            Some(r) => (true, Some(r)),
            None if turn_counter >= state.max_turns => (true, Some(Reward::from_integer(0))),
            None => (false, None),
        };
        let next = EnvState {
            world,
            turn_counter,
            max_turns: state.max_turns,
            done,
            final_reward,
        };
        Ok((
            next,
            StepResult {
                observation,
                valid,
                done,
                reward_if_done: final_reward,
            },
        ))
    }

    /// Every currently admissible action, sorted.
    pub fn action_space(&self, state: &EnvState) -> Vec<String> {
        if state.done {
            return Vec::new();
        }
        let mut actions = match &state.world {
            WorldState::Household(s) => self.worlds.household.actions(s),
            WorldState::Shop(s) => self.worlds.shop.actions(s),
            WorldState::Craft(s) => self.worlds.craft.actions(s),
        };
        actions.sort();
        actions.dedup();
        actions
    }

    /// Every action string the world could ever admit, for vocabulary building.
    pub fn action_vocabulary(&self, kind: EnvKind) -> Vec<String> {
        match kind {
            EnvKind::Household => self.worlds.household.all_actions(),
            EnvKind::Shop => self.worlds.shop.all_actions(),
            EnvKind::Craft => self.worlds.craft.all_actions(),
        }
    }
}

pub fn outcome_reward(state: &EnvState) -> Result<Reward, EnvError> {
    match (state.done, state.final_reward) {
        (true, Some(r)) => Ok(r),
        _ => Err(EnvError::EpisodeNotFinished),
    }
}

pub(crate) fn normalize_action(action: &str) -> String {
    action.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Seeded RNG for world construction; mixes in the kind so kinds never share streams.
pub(crate) fn world_rng(kind: EnvKind, seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let salt = match kind {
        EnvKind::Household => 0x486f_7573_6568_6f6c,
        EnvKind::Shop => 0x5368_6f70_5368_6f70,
        EnvKind::Craft => 0x4372_6166_7443_7261,
    };
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ salt)
}
