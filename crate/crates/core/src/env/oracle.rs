use std::collections::{HashSet, VecDeque};

use super::{outcome_reward, Env, EnvError, EnvState, TaskSpec, WorldState};
use crate::Reward;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub reward: Reward,
}

/// Breadth-first search over admissible actions for the best reachable reward.
///
/// Among sequences reaching the maximum reward, returns the shortest; ties go to
/// the lexicographically smallest action sequence (children are expanded in
/// sorted order and states are deduplicated on first visit, which preserves
/// that order). Returns `None` when no sequence within `max_turns` ends the
/// episode with positive reward.
pub fn oracle_expert(env: &Env, spec: &TaskSpec) -> Result<Option<OracleResult>, EnvError> {
    let (root, _) = env.reset(spec)?;
    let one = Reward::from_integer(1);
    let mut best: Option<(Reward, usize)> = None;
    let mut nodes: Vec<(usize, String, String)> = Vec::new();
    let mut seen: HashSet<WorldState> = HashSet::from([root.world.clone()]);
    let mut queue: VecDeque<(EnvState, Option<usize>)> = VecDeque::from([(root, None)]);

    while let Some((state, parent)) = queue.pop_front() {
        for action in env.action_space(&state) {
            let (next, result) = env.step(&state, &action)?;
            nodes.push((parent.map_or(usize::MAX, |p| p), action, result.observation));
            let id = nodes.len() - 1;
            if next.done {
                let r = outcome_reward(&next)?;
                if r > Reward::from_integer(0) && best.is_none_or(|(b, _)| r > b) {
                    best = Some((r, id));
                    if r == one {
                        return Ok(Some(unwind(&nodes, id, r)));
                    }
                }
                continue;
            }
            if seen.insert(next.world.clone()) {
                queue.push_back((next, Some(id)));
            }
        }
    }
    Ok(best.map(|(r, id)| unwind(&nodes, id, r)))
}

fn unwind(nodes: &[(usize, String, String)], mut id: usize, reward: Reward) -> OracleResult {
    let mut actions = Vec::new();
    let mut observations = Vec::new();
    loop {
        let (parent, a, o) = &nodes[id];
        actions.push(a.clone());
        observations.push(o.clone());
        if *parent == usize::MAX {
            break;
        }
        id = *parent;
    }
    actions.reverse();
    observations.reverse();
    OracleResult {
        actions,
        observations,
        reward,
    }
}
