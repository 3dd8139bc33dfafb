use serde::{Deserialize, Serialize};

use super::{extract_thoughts, ReActRecord};
use crate::plan::{validate_plan, PCodePlan, ValidationReport};

/// Outcome for one (record, plan) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanCheck {
    pub index: usize,
    pub format: ValidationReport,
    /// Entity literals found in neither the instruction nor any thought.
    pub inconsistent_entities: Vec<String>,
}

impl PlanCheck {
    pub fn passed(&self) -> bool {
        self.format.is_clean() && self.inconsistent_entities.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub checks: Vec<PlanCheck>,
    pub pass_rate: f64,
}

impl VerificationSummary {
    pub fn failures(&self) -> impl Iterator<Item = &PlanCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// Format rules plus entity consistency: every literal must occur in the task or a thought.
pub fn verify_corpus(plans: &[(ReActRecord, PCodePlan)]) -> VerificationSummary {
    let checks: Vec<PlanCheck> = plans
        .iter()
        .enumerate()
        .map(|(index, (record, plan))| {
            let thoughts = extract_thoughts(record);
            let task = record.task().to_lowercase();
            let inconsistent_entities = plan
                .entities
                .iter()
                .filter(|e| {
                    let lit = e.value.to_lowercase();
                    !task.contains(&lit) && !thoughts.iter().any(|t| t.to_lowercase().contains(&lit))
                })
                .map(|e| e.value.clone())
                .collect();
            PlanCheck {
                index,
                format: validate_plan(plan),
                inconsistent_entities,
            }
        })
        .collect();
    let passed = checks.iter().filter(|c| c.passed()).count();
    let pass_rate = if checks.is_empty() {
        1.0
    } else {
        passed as f64 / checks.len() as f64
    };
    VerificationSummary { checks, pass_rate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_plan;
    use crate::trajectory::Round;
    use crate::Reward;

    fn record(thoughts: &[&str]) -> ReActRecord {
        let rounds = thoughts
            .iter()
            .map(|t| Round {
                thought: t.to_string(),
                action: "look".into(),
                observation: String::new(),
            })
            .collect();
        ReActRecord::new("put a pencil in/on the desk".into(), rounds, Reward::from_integer(1)).unwrap()
    }

    #[test]
    fn all_valid() {
        let plan = parse_plan("Step 1: find_object($obj)\nEntities: obj = \"pencil\"").unwrap();
        let s = verify_corpus(&[(record(&["I need to find the pencil."]), plan)]);
        assert_eq!(s.pass_rate, 1.0);
    }

    #[test]
    fn missing_literal_flagged() {
        let plan = parse_plan("Step 1: find_object($tool)\nEntities: tool = \"hammer\"").unwrap();
        let s = verify_corpus(&[(record(&["I need to find the pencil."]), plan)]);
        assert_eq!(s.pass_rate, 0.0);
        assert_eq!(s.checks[0].inconsistent_entities, vec!["hammer"]);
    }

    #[test]
    fn format_failure_counts() {
        let mut plan = parse_plan("Step 1: a()\nStep 2: b()").unwrap();
        plan.steps[1].id = 1;
        let ok = parse_plan("Step 1: a()").unwrap();
        let s = verify_corpus(&[(record(&["x"]), plan), (record(&["x"]), ok)]);
        assert_eq!(s.pass_rate, 0.5);
        assert_eq!(s.failures().count(), 1);
    }
}
