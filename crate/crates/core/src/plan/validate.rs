use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{is_identifier, Argument, ControlFlow, PCodePlan};

/// Format rules a plan is checked against. Ids are stable and appear in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    EmptyPlan,
    NonPositiveId,
    DupStepId,
    NonIncreasingId,
    BadStepName,
    BadIdentifier,
    BadCondition,
    DanglingElse,
    UnresolvedEntityRef,
    DupEntity,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::EmptyPlan => "EMPTY_PLAN",
            Rule::NonPositiveId => "NON_POSITIVE_ID",
            Rule::DupStepId => "DUP_STEP_ID",
            Rule::NonIncreasingId => "NON_INCREASING_ID",
            Rule::BadStepName => "BAD_STEP_NAME",
            Rule::BadIdentifier => "BAD_IDENTIFIER",
            Rule::BadCondition => "BAD_CONDITION",
            Rule::DanglingElse => "DANGLING_ELSE",
            Rule::UnresolvedEntityRef => "UNRESOLVED_ENTITY_REF",
            Rule::DupEntity => "DUP_ENTITY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, rule: Rule, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            rule,
            location: location.into(),
            message: message.into(),
        });
    }
}

/// `RULE_ID<TAB>location<TAB>message`, one line per violation.
impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}\t{}\t{}", v.rule.id(), v.location, v.message.replace(['\t', '\n'], " "))?;
        }
        Ok(())
    }
}

fn condition_ok(cond: &str) -> bool {
    !cond.trim().is_empty() && cond == cond.trim() && !cond.contains([':', '#', '\n', '\r'])
}

pub fn validate_plan(plan: &PCodePlan) -> ValidationReport {
    let mut report = ValidationReport::default();
    if plan.steps.is_empty() {
        report.push(Rule::EmptyPlan, "plan", "plan has no steps");
    }

    let mut seen_entities = HashSet::new();
    for e in &plan.entities {
        let loc = format!("entity {}", e.name);
        if !is_identifier(&e.name) {
            report.push(Rule::BadIdentifier, &loc, format!("`{}` is not an identifier", e.name));
        }
        if !seen_entities.insert(e.name.as_str()) {
            report.push(Rule::DupEntity, &loc, "entity declared more than once");
        }
    }

    let mut seen_ids = HashSet::new();
    let mut prev_id: Option<u32> = None;
    let mut prev_is_if = false;
    let mut returns: HashSet<&str> = HashSet::new();
    for (i, step) in plan.steps.iter().enumerate() {
        let loc = format!("step {}", i + 1);
        if step.id == 0 {
            report.push(Rule::NonPositiveId, &loc, "step id must be positive");
        }
        if !seen_ids.insert(step.id) {
            report.push(Rule::DupStepId, &loc, format!("step id {} repeated", step.id));
        } else if prev_id.is_some_and(|p| step.id <= p) {
            report.push(
                Rule::NonIncreasingId,
                &loc,
                format!("step id {} does not increase", step.id),
            );
        }
        prev_id = Some(step.id);

        if !is_identifier(&step.name) {
            report.push(Rule::BadStepName, &loc, format!("`{}` is not an identifier", step.name));
        }
        for r in &step.return_values {
            if !is_identifier(r) {
                report.push(Rule::BadIdentifier, &loc, format!("return value `{r}`"));
            }
        }
        match &step.control_flow {
            ControlFlow::If(c) | ControlFlow::While(c) if !condition_ok(c) => {
                report.push(Rule::BadCondition, &loc, format!("condition `{c}`"));
            }
            ControlFlow::For { var, iterable } => {
                for id in [var, iterable] {
                    if !is_identifier(id) {
                        report.push(Rule::BadIdentifier, &loc, format!("loop identifier `{id}`"));
                    }
                }
            }
            ControlFlow::Else if !prev_is_if => {
                report.push(Rule::DanglingElse, &loc, "else must follow an if step");
            }
            _ => {}
        }
        for arg in &step.parameters {
            match arg {
                Argument::Identifier(v) if !is_identifier(v) => {
                    report.push(Rule::BadIdentifier, &loc, format!("argument `{v}`"));
                }
                Argument::EntityRef(v) => {
                    if !is_identifier(v) {
                        report.push(Rule::BadIdentifier, &loc, format!("argument `${v}`"));
                    } else if !seen_entities.contains(v.as_str()) && !returns.contains(v.as_str()) {
                        report.push(Rule::UnresolvedEntityRef, &loc, format!("`${v}` is not declared"));
                    }
                }
                _ => {}
            }
        }
        returns.extend(step.return_values.iter().map(String::as_str));
        prev_is_if = matches!(step.control_flow, ControlFlow::If(_));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{parse_plan, PlanEntity, PlanStep};

    fn three_step() -> PCodePlan {
        parse_plan(
            "Step 1: find_object($obj)\nStep 2: take_object($obj)\nStep 3: put_object($obj, $dest)\nEntities: obj = \"pencil\", dest = \"desk\"",
        )
        .unwrap()
    }

    #[test]
    fn valid_plan_is_clean() {
        let r = validate_plan(&three_step());
        assert!(r.is_clean(), "{r}");
        assert_eq!(r.to_string(), "");
    }

    #[test]
    fn each_rule_fires() {
        let mut p = three_step();
        p.steps[1].id = 1;
        assert!(validate_plan(&p).has(Rule::DupStepId));

        let mut p = three_step();
        p.steps[2].id = 2;
        p.steps[1].id = 3;
        assert!(validate_plan(&p).has(Rule::NonIncreasingId));

        let mut p = three_step();
        p.steps[0].id = 0;
        assert!(validate_plan(&p).has(Rule::NonPositiveId));

        let mut p = three_step();
        p.steps[0].name = "find object".into();
        assert!(validate_plan(&p).has(Rule::BadStepName));

        let mut p = three_step();
        p.steps[2].control_flow = ControlFlow::Else;
        assert!(validate_plan(&p).has(Rule::DanglingElse));

        let mut p = three_step();
        p.steps[0].control_flow = ControlFlow::If("a: b".into());
        assert!(validate_plan(&p).has(Rule::BadCondition));

        let mut p = three_step();
        p.entities.pop();
        assert!(validate_plan(&p).has(Rule::UnresolvedEntityRef));

        let mut p = three_step();
        p.entities.push(PlanEntity::new("obj", "pen"));
        assert!(validate_plan(&p).has(Rule::DupEntity));

        let mut p = three_step();
        p.steps[0].return_values.push("9lives".into());
        assert!(validate_plan(&p).has(Rule::BadIdentifier));

        assert!(validate_plan(&PCodePlan::default()).has(Rule::EmptyPlan));
    }

    #[test]
    fn report_lines_are_tab_separated() {
        let mut p = three_step();
        p.steps.push(PlanStep::call(3, "x", vec![]));
        let text = validate_plan(&p).to_string();
        assert_eq!(text, "DUP_STEP_ID\tstep 4\tstep id 3 repeated\n");
    }
}
