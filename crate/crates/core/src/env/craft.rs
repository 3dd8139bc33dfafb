use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EnvError, Transition, WorldState};
use crate::Reward;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeInput {
    pub item: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub output: String,
    #[serde(default = "one")]
    pub count: u32,
    pub inputs: Vec<RecipeInput>,
}

fn one() -> u32 {
    1
}

/// Crafting world: raw materials obtainable with `get`, everything else crafted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CraftBook {
    pub base: Vec<String>,
    pub recipes: Vec<Recipe>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CraftState {
    inventory: BTreeMap<String, u32>,
    target: String,
}

impl CraftBook {
    fn recipe(&self, output: &str) -> Option<&Recipe> {
        self.recipes.iter().find(|r| r.output == output)
    }

    /// Recipes needed for `target`, dependencies first.
    fn recipe_tree(&self, target: &str, out: &mut Vec<String>) {
        if out.iter().any(|o| o == target) {
            return;
        }
        if let Some(r) = self.recipe(target) {
            for i in &r.inputs {
                self.recipe_tree(&i.item, out);
            }
            out.push(target.to_string());
        }
    }

    pub(crate) fn reset(&self, target: &str, _seed: u64) -> Result<(CraftState, String), EnvError> {
        if self.recipe(target).is_none() {
            return Err(EnvError::UnknownGoal(format!("no recipe for `{target}`")));
        }
        let mut tree = Vec::new();
        self.recipe_tree(target, &mut tree);
        let mut obs = String::from("Crafting commands:");
        for out in &tree {
            let r = self.recipe(out).expect("tree holds recipe outputs");
            let ins: Vec<String> = r.inputs.iter().map(|i| format!("{} {}", i.count, i.item)).collect();
            obs.push_str(&format!(" craft {} {} using {}.", r.count, r.output, ins.join(", ")));
        }
        let state = CraftState {
            inventory: BTreeMap::new(),
            target: target.to_string(),
        };
        Ok((state, obs))
    }

    fn craftable(&self, s: &CraftState, r: &Recipe) -> bool {
        r.inputs
            .iter()
            .all(|i| s.inventory.get(&i.item).copied().unwrap_or(0) >= i.count)
    }

    pub(crate) fn actions(&self, s: &CraftState) -> Vec<String> {
        let mut out = vec!["inventory".to_string()];
        out.extend(self.base.iter().map(|b| format!("get {b}")));
        for r in &self.recipes {
            if self.craftable(s, r) {
                out.push(format!("craft {}", r.output));
            }
        }
        out
    }

    pub(crate) fn all_actions(&self) -> Vec<String> {
        let mut out = vec!["inventory".to_string()];
        out.extend(self.base.iter().map(|b| format!("get {b}")));
        out.extend(self.recipes.iter().map(|r| format!("craft {}", r.output)));
        out
    }

    pub(crate) fn step(&self, s: &CraftState, action: &str) -> Option<Transition> {
        let mut next = s.clone();
        let observation = if action == "inventory" {
            if s.inventory.is_empty() {
                "Inventory: empty".to_string()
            } else {
                let items: Vec<String> = s.inventory.iter().map(|(k, v)| format!("[{k}] ({v})")).collect();
                format!("Inventory: {}", items.join(" "))
            }
        } else if let Some(item) = action.strip_prefix("get ") {
            if !self.base.iter().any(|b| b == item) {
                return None;
            }
            *next.inventory.entry(item.to_string()).or_insert(0) += 1;
            format!("Got 1 {item}.")
        } else {
            let item = action.strip_prefix("craft ")?;
            let r = self.recipe(item)?;
            if !self.craftable(s, r) {
                return None;
            }
            for i in &r.inputs {
                let have = next.inventory.get_mut(&i.item).expect("checked by craftable");
                *have -= i.count;
                if *have == 0 {
                    next.inventory.remove(&i.item);
                }
            }
            *next.inventory.entry(r.output.clone()).or_insert(0) += r.count;
            format!("Crafted {} {}.", r.count, r.output)
        };
        let terminal = next
            .inventory
            .contains_key(&next.target)
            .then(|| Reward::from_integer(1));
        Some(Transition {
            world: WorldState::Craft(next),
            observation,
            terminal,
        })
    }
}
