use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CraftBook, EnvKind, Goal, HouseholdWorld, TaskSpec};
use crate::Error;

const HOUSEHOLD_JSON: &str = include_str!("../../data/worlds/household.json");
const SHOP_JSON: &str = include_str!("../../data/worlds/shop.json");
const CRAFT_JSON: &str = include_str!("../../data/worlds/craft.json");

const HOUSEHOLD_TASKS: &str = include_str!("../../data/tasks/household.json");
const SHOP_TASKS: &str = include_str!("../../data/tasks/shop.json");
const CRAFT_TASKS: &str = include_str!("../../data/tasks/craft.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Worlds {
    pub household: HouseholdWorld,
    pub shop: super::Catalog,
    pub craft: CraftBook,
}

impl Worlds {
    pub fn bundled() -> Self {
        Worlds {
            household: serde_json::from_str(HOUSEHOLD_JSON).expect("bundled household world"),
            shop: serde_json::from_str(SHOP_JSON).expect("bundled shop catalog"),
            craft: serde_json::from_str(CRAFT_JSON).expect("bundled craft recipes"),
        }
    }

    /// Replace one kind's world with a definition loaded from `path`.
    pub fn with_override(mut self, kind: EnvKind, path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match kind {
            EnvKind::Household => self.household = serde_json::from_str(&text)?,
            EnvKind::Shop => self.shop = serde_json::from_str(&text)?,
            EnvKind::Craft => self.craft = serde_json::from_str(&text)?,
        }
        Ok(self)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct TaskEntry {
    id: String,
    goal: Goal,
    seed: u64,
    #[serde(default)]
    max_turns: Option<u32>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TaskFile {
    train: Vec<TaskEntry>,
    heldout: Vec<TaskEntry>,
}

/// Training tasks (expert data source) and held-out evaluation tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    pub train: Vec<TaskSpec>,
    pub heldout: Vec<TaskSpec>,
}

impl TaskSet {
    pub fn bundled(kind: EnvKind) -> Self {
        let text = match kind {
            EnvKind::Household => HOUSEHOLD_TASKS,
            EnvKind::Shop => SHOP_TASKS,
            EnvKind::Craft => CRAFT_TASKS,
        };
        Self::from_json(text).expect("bundled task set")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let file: TaskFile = serde_json::from_str(text)?;
        let convert = |entries: Vec<TaskEntry>| -> Vec<TaskSpec> {
            entries
                .into_iter()
                .map(|e| {
                    let spec = TaskSpec::new(e.id, e.goal, e.seed);
                    match e.max_turns {
                        Some(m) => spec.with_max_turns(m),
                        None => spec,
                    }
                })
                .collect()
        };
        Ok(TaskSet {
            train: convert(file.train),
            heldout: convert(file.heldout),
        })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
