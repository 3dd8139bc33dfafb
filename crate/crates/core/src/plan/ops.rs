use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ast::{PCodePlan, PlanStep};
use super::render::render_step;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubstituteError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
}

/// Rebind entity values, leaving every step untouched.
pub fn substitute_entities(
    plan: &PCodePlan,
    bindings: &BTreeMap<String, String>,
) -> Result<PCodePlan, SubstituteError> {
    if let Some(unknown) = bindings.keys().find(|k| plan.entity(k).is_none()) {
        return Err(SubstituteError::UnknownEntity(unknown.clone()));
    }
    let mut out = plan.clone();
    for e in &mut out.entities {
        if let Some(v) = bindings.get(&e.name) {
            e.value = v.clone();
        }
    }
    Ok(out)
}

/// Hex SHA-256 over the canonical step lines; entities are excluded.
pub fn skeleton_hash(plan: &PCodePlan) -> String {
    let mut hasher = Sha256::new();
    for step in &plan.steps {
        hasher.update(render_step(step).as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepChange {
    Inserted(PlanStep),
    Deleted(PlanStep),
    Modified { before: PlanStep, after: PlanStep },
}

impl StepChange {
    pub fn id(&self) -> u32 {
        match self {
            StepChange::Inserted(s) | StepChange::Deleted(s) => s.id,
            StepChange::Modified { after, .. } => after.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityChange {
    Added { name: String, value: String },
    Removed { name: String, value: String },
    Changed { name: String, before: String, after: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDiff {
    pub steps: Vec<StepChange>,
    pub entities: Vec<EntityChange>,
}

impl PlanDiff {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty() && self.entities.is_empty()
    }
}

/// Steps are matched by id, entities by name. Output is ordered by id/name.
pub fn diff_plans(a: &PCodePlan, b: &PCodePlan) -> PlanDiff {
    let by_id = |p: &PCodePlan| -> BTreeMap<u32, PlanStep> {
        p.steps.iter().map(|s| (s.id, s.clone())).collect()
    };
    let (sa, sb) = (by_id(a), by_id(b));
    let ids: BTreeSet<u32> = sa.keys().chain(sb.keys()).copied().collect();
    let mut steps = Vec::new();
    for id in ids {
        match (sa.get(&id), sb.get(&id)) {
            (Some(x), Some(y)) if x != y => steps.push(StepChange::Modified {
                before: x.clone(),
                after: y.clone(),
            }),
            (Some(x), None) => steps.push(StepChange::Deleted(x.clone())),
            (None, Some(y)) => steps.push(StepChange::Inserted(y.clone())),
            _ => {}
        }
    }

    let by_name = |p: &PCodePlan| -> BTreeMap<String, String> {
        p.entities.iter().map(|e| (e.name.clone(), e.value.clone())).collect()
    };
    let (ea, eb) = (by_name(a), by_name(b));
    let names: BTreeSet<&String> = ea.keys().chain(eb.keys()).collect();
    let mut entities = Vec::new();
    for name in names {
        match (ea.get(name), eb.get(name)) {
            (Some(x), Some(y)) if x != y => entities.push(EntityChange::Changed {
                name: name.clone(),
                before: x.clone(),
                after: y.clone(),
            }),
            (Some(x), None) => entities.push(EntityChange::Removed {
                name: name.clone(),
                value: x.clone(),
            }),
            (None, Some(y)) => entities.push(EntityChange::Added {
                name: name.clone(),
                value: y.clone(),
            }),
            _ => {}
        }
    }
    PlanDiff { steps, entities }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_plan;

    fn figure_plan() -> PCodePlan {
        parse_plan(
            "Step 1: locations = find_receptacles()\nStep 2: for loc in locations: obj = look_for(loc, $target)\nStep 3: examine_with(obj, $tool)\nEntities: target = \"book\", tool = \"desklamp\"",
        )
        .unwrap()
    }

    #[test]
    fn substitution_keeps_steps() {
        let p = figure_plan();
        let m = BTreeMap::from([("target".to_string(), "pencil".to_string())]);
        let q = substitute_entities(&p, &m).unwrap();
        assert_eq!(q.steps, p.steps);
        assert_eq!(q.entity("target").unwrap().value, "pencil");
        assert_eq!(skeleton_hash(&p), skeleton_hash(&q));
        let d = diff_plans(&p, &q);
        assert!(d.steps.is_empty());
        assert_eq!(
            d.entities,
            vec![EntityChange::Changed {
                name: "target".into(),
                before: "book".into(),
                after: "pencil".into()
            }]
        );
    }

    #[test]
    fn empty_bindings_identity() {
        let p = figure_plan();
        assert_eq!(substitute_entities(&p, &BTreeMap::new()).unwrap(), p);
    }

    #[test]
    fn unknown_binding_rejected() {
        let m = BTreeMap::from([("lamp".to_string(), "x".to_string())]);
        assert_eq!(
            substitute_entities(&figure_plan(), &m),
            Err(SubstituteError::UnknownEntity("lamp".into()))
        );
    }

    #[test]
    fn hash_sees_step_names() {
        let p = figure_plan();
        let mut q = p.clone();
        q.steps[2].name = "inspect_with".into();
        assert_ne!(skeleton_hash(&p), skeleton_hash(&q));
        assert_eq!(skeleton_hash(&p).len(), 64);
    }

    #[test]
    fn diff_identity_and_edits() {
        let p = figure_plan();
        assert!(diff_plans(&p, &p).is_empty());
        let mut q = p.clone();
        q.steps.remove(0);
        q.steps[1].name = "use".into();
        q.steps.push(PlanStep::call(4, "done", vec![]));
        let d = diff_plans(&p, &q);
        let ids: Vec<u32> = d.steps.iter().map(StepChange::id).collect();
        assert_eq!(ids, vec![1, 3, 4]);
        assert!(matches!(d.steps[0], StepChange::Deleted(_)));
        assert!(matches!(d.steps[1], StepChange::Modified { .. }));
        assert!(matches!(d.steps[2], StepChange::Inserted(_)));
    }
}
