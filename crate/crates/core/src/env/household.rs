use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{world_rng, EnvError, EnvKind, Transition, WorldState};
use crate::Reward;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    #[serde(default)]
    pub openable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDef {
    pub name: String,
    /// Candidate starting locations; the task seed picks one.
    pub homes: Vec<String>,
}

/// Pick-and-place world definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdWorld {
    pub locations: Vec<Location>,
    pub objects: Vec<ObjectDef>,
    /// Number of extra objects scattered per episode.
    #[serde(default)]
    pub distractors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HouseholdState {
    /// Index into `locations`; `None` is the middle of the room.
    agent_at: Option<usize>,
    holding: Option<String>,
    /// object -> location index
    placement: BTreeMap<String, usize>,
    opened: Vec<bool>,
    goal_object: String,
    goal_destination: usize,
}

fn instance(object: &str) -> String {
    format!("{object} 1")
}

impl HouseholdWorld {
    fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    pub(crate) fn reset(
        &self,
        object: &str,
        destination: &str,
        seed: u64,
    ) -> Result<(HouseholdState, String), EnvError> {
        let def = self
            .objects
            .iter()
            .find(|o| o.name == object)
            .ok_or_else(|| EnvError::UnknownGoal(format!("object `{object}`")))?;
        let dest = self
            .location_index(destination)
            .ok_or_else(|| EnvError::UnknownGoal(format!("location `{destination}`")))?;
        let homes: Vec<usize> = def
            .homes
            .iter()
            .filter_map(|h| self.location_index(h))
            .filter(|&h| h != dest)
            .collect();
        if homes.is_empty() {
            return Err(EnvError::UnknownGoal(format!(
                "`{object}` has no starting location other than `{destination}`"
            )));
        }

        let mut rng = world_rng(EnvKind::Household, seed);
        let mut placement = BTreeMap::new();
        placement.insert(object.to_string(), homes[rng.gen_range(0..homes.len())]);

        let mut others: Vec<&ObjectDef> = self.objects.iter().filter(|o| o.name != object).collect();
        others.shuffle(&mut rng);
        for o in others.into_iter().take(self.distractors) {
            let spots: Vec<usize> = o.homes.iter().filter_map(|h| self.location_index(h)).collect();
            if !spots.is_empty() {
                placement.insert(o.name.clone(), spots[rng.gen_range(0..spots.len())]);
            }
        }

        let state = HouseholdState {
            agent_at: None,
            holding: None,
            placement,
            opened: vec![false; self.locations.len()],
            goal_object: object.to_string(),
            goal_destination: dest,
        };
        let names: Vec<String> = self.locations.iter().map(|l| format!("a {}", l.name)).collect();
        let obs = format!(
            "You are in the middle of a room. Looking quickly around you, you see {}.",
            join_list(&names)
        );
        Ok((state, obs))
    }

    fn accessible(&self, s: &HouseholdState, loc: usize) -> bool {
        !self.locations[loc].openable || s.opened[loc]
    }

    fn contents(&self, s: &HouseholdState, loc: usize) -> String {
        let items: Vec<String> = s
            .placement
            .iter()
            .filter(|(_, &l)| l == loc)
            .map(|(o, _)| format!("a {}", instance(o)))
            .collect();
        if items.is_empty() {
            "nothing".to_string()
        } else {
            join_list(&items)
        }
    }

    pub(crate) fn actions(&self, s: &HouseholdState) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.locations.iter().enumerate() {
            if s.agent_at != Some(i) {
                out.push(format!("go to {}", l.name));
            }
        }
        if let Some(here) = s.agent_at {
            let name = &self.locations[here].name;
            if !self.accessible(s, here) {
                out.push(format!("open {name}"));
            } else {
                match &s.holding {
                    None => {
                        for (o, _) in s.placement.iter().filter(|(_, &l)| l == here) {
                            out.push(format!("take {} from {name}", instance(o)));
                        }
                    }
                    Some(o) => out.push(format!("put {} in/on {name}", instance(o))),
                }
            }
        }
        out
    }

    pub(crate) fn all_actions(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.locations {
            out.push(format!("go to {}", l.name));
            if l.openable {
                out.push(format!("open {}", l.name));
            }
            for o in &self.objects {
                out.push(format!("take {} from {}", instance(&o.name), l.name));
                out.push(format!("put {} in/on {}", instance(&o.name), l.name));
            }
        }
        out
    }

    pub(crate) fn step(&self, s: &HouseholdState, action: &str) -> Option<Transition> {
        if let Some(loc) = action.strip_prefix("go to ") {
            let i = self.location_index(loc)?;
            if s.agent_at == Some(i) {
                return None;
            }
            let mut next = s.clone();
            next.agent_at = Some(i);
            let obs = if self.accessible(s, i) {
                format!("You arrive at the {loc}. On the {loc}, you see {}.", self.contents(s, i))
            } else {
                format!("You arrive at the {loc}. The {loc} is closed.")
            };
            return Some(self.transition(next, obs, None));
        }
        if let Some(loc) = action.strip_prefix("open ") {
            let i = self.location_index(loc)?;
            if s.agent_at != Some(i) || !self.locations[i].openable || s.opened[i] {
                return None;
            }
            let mut next = s.clone();
            next.opened[i] = true;
            let obs = format!("You open the {loc}. In it, you see {}.", self.contents(&next, i));
            return Some(self.transition(next, obs, None));
        }
        if let Some(rest) = action.strip_prefix("take ") {
            let (obj, loc) = rest.split_once(" from ")?;
            let obj = obj.strip_suffix(" 1")?;
            let i = self.location_index(loc)?;
            if s.agent_at != Some(i) || s.holding.is_some() || !self.accessible(s, i) {
                return None;
            }
            if s.placement.get(obj) != Some(&i) {
                return None;
            }
            let mut next = s.clone();
            next.placement.remove(obj);
            next.holding = Some(obj.to_string());
            let obs = format!("You pick up the {} from the {loc}.", instance(obj));
            return Some(self.transition(next, obs, None));
        }
        if let Some(rest) = action.strip_prefix("put ") {
            let (obj, loc) = rest.split_once(" in/on ")?;
            let obj = obj.strip_suffix(" 1")?;
            let i = self.location_index(loc)?;
            if s.agent_at != Some(i) || s.holding.as_deref() != Some(obj) || !self.accessible(s, i) {
                return None;
            }
            let mut next = s.clone();
            next.holding = None;
            next.placement.insert(obj.to_string(), i);
            let obs = format!("You put the {} in/on the {loc}.", instance(obj));
            let success = obj == s.goal_object && i == s.goal_destination;
            let terminal = success.then(|| Reward::from_integer(1));
            return Some(self.transition(next, obs, terminal));
        }
        None
    }

    fn transition(&self, next: HouseholdState, observation: String, terminal: Option<Reward>) -> Transition {
        Transition {
            world: WorldState::Household(next),
            observation,
            terminal,
        }
    }
}

pub(crate) fn join_list(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        n => format!("{}, and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}

#[cfg(test)]
mod tests {
    use crate::env::{outcome_reward, Env, Goal, TaskSpec};
    use crate::Reward;

    fn spec(object: &str, dest: &str) -> TaskSpec {
        TaskSpec::new(
            "t",
            Goal::Household {
                object: object.into(),
                destination: dest.into(),
            },
            3,
        )
    }

    #[test]
    fn go_take_put_succeeds() {
        let env = Env::bundled();
        let (s, obs) = env.reset(&spec("pencil", "shelf 1")).unwrap();
        assert!(obs.starts_with("You are in the middle of a room."));
        let fresh = env.action_space(&s);
        for l in &env.worlds().household.locations {
            assert!(fresh.contains(&format!("go to {}", l.name)));
        }
        let (s, r) = env.step(&s, "go to desk 1").unwrap();
        assert!(r.valid, "{}", r.observation);
        assert!(r.observation.contains("pencil 1"), "{}", r.observation);
        let (s, r) = env.step(&s, "take pencil 1 from desk 1").unwrap();
        assert!(r.valid);
        let (s, r) = env.step(&s, "go to shelf 1").unwrap();
        assert!(r.valid);
        let (s, r) = env.step(&s, "put pencil 1 in/on shelf 1").unwrap();
        assert!(r.done && r.valid);
        assert_eq!(outcome_reward(&s).unwrap(), Reward::from_integer(1));
    }

    #[test]
    fn closed_receptacles_need_opening() {
        let env = Env::bundled();
        let (s, _) = env.reset(&spec("cd", "desk 1")).unwrap();
        let (s, r) = env.step(&s, "go to drawer 1").unwrap();
        assert!(r.observation.ends_with("The drawer 1 is closed."));
        let (s, r) = env.step(&s, "take cd 1 from drawer 1").unwrap();
        assert!(!r.valid);
        let (_, r) = env.step(&s, "open drawer 1").unwrap();
        assert!(r.valid);
        assert!(r.observation.contains("cd 1"));
    }

    #[test]
    fn wrong_place_does_not_finish() {
        let env = Env::bundled();
        let (s, _) = env.reset(&spec("pencil", "shelf 1")).unwrap();
        let (s, _) = env.step(&s, "go to desk 1").unwrap();
        let (s, _) = env.step(&s, "take pencil 1 from desk 1").unwrap();
        let (s, _) = env.step(&s, "go to countertop 1").unwrap();
        let (s, r) = env.step(&s, "put pencil 1 in/on countertop 1").unwrap();
        assert!(r.valid && !r.done);
        assert!(!s.done);
    }

    #[test]
    fn unknown_goal() {
        let env = Env::bundled();
        assert!(env.reset(&spec("unicorn", "desk 1")).is_err());
        assert!(env.reset(&spec("pencil", "moon 1")).is_err());
    }
}
