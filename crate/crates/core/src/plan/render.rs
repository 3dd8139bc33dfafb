use std::fmt::Write;

use super::ast::{Argument, ControlFlow, PCodePlan, PlanStep};

/// Canonical source form of a plan. `parse_plan(render_plan(p)) == p` for valid plans.
pub fn render_plan(plan: &PCodePlan) -> String {
    let mut out = String::new();
    for (i, step) in plan.steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&render_step(step));
    }
    if !plan.entities.is_empty() {
        out.push_str("\nEntities: ");
        for (i, e) in plan.entities.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{} = {}", e.name, quote(&e.value));
        }
    }
    out
}

pub fn render_step(step: &PlanStep) -> String {
    let mut out = format!("Step {}: ", step.id);
    match &step.control_flow {
        ControlFlow::None => {}
        ControlFlow::If(cond) => {
            let _ = write!(out, "if {cond}: ");
        }
        ControlFlow::Else => out.push_str("else: "),
        ControlFlow::For { var, iterable } => {
            let _ = write!(out, "for {var} in {iterable}: ");
        }
        ControlFlow::While(cond) => {
            let _ = write!(out, "while {cond}: ");
        }
    }
    if !step.return_values.is_empty() {
        out.push_str(&step.return_values.join(", "));
        out.push_str(" = ");
    }
    out.push_str(&step.name);
    out.push('(');
    for (i, arg) in step.parameters.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        match arg {
            Argument::Identifier(v) => out.push_str(v),
            Argument::Literal(v) => out.push_str(&quote(v)),
            Argument::EntityRef(v) => {
                out.push('$');
                out.push_str(v);
            }
        }
    }
    out.push(')');
    out
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{parse_plan, PlanEntity};

    #[test]
    fn minimal_plan() {
        let plan = PCodePlan {
            steps: vec![PlanStep::call(1, "go_home", vec![])],
            entities: vec![],
        };
        assert_eq!(render_plan(&plan), "Step 1: go_home()");
    }

    #[test]
    fn else_gets_its_own_line() {
        let plan = parse_plan("Step 1: if lamp is on: use($lamp)\nStep 2: else: toggle($lamp)\nEntities: lamp = \"desklamp\"")
            .unwrap();
        let text = render_plan(&plan);
        assert_eq!(
            text,
            "Step 1: if lamp is on: use($lamp)\nStep 2: else: toggle($lamp)\nEntities: lamp = \"desklamp\""
        );
    }

    #[test]
    fn escapes_round_trip() {
        let plan = PCodePlan {
            steps: vec![PlanStep::call(
                1,
                "say",
                vec![Argument::Literal("a \"b\" \\ c\nd".into())],
            )],
            entities: vec![PlanEntity::new("e", "tab\there")],
        };
        assert_eq!(parse_plan(&render_plan(&plan)).unwrap(), plan);
    }
}
