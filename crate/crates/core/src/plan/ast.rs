use serde::{Deserialize, Serialize};

/// One argument of a step call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Argument {
    /// Bare identifier: a loop variable or a prior step's return value.
    Identifier(String),
    /// Quoted string literal (stored unescaped).
    Literal(String),
    /// `$name` reference to a declared entity or a prior return value.
    EntityRef(String),
}

impl Argument {
    pub fn value(&self) -> &str {
        match self {
            Argument::Identifier(v) | Argument::Literal(v) | Argument::EntityRef(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ControlFlow {
    #[default]
    None,
    If(String),
    Else,
    For { var: String, iterable: String },
    While(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanStep {
    pub id: u32,
    pub name: String,
    pub parameters: Vec<Argument>,
    pub return_values: Vec<String>,
    pub control_flow: ControlFlow,
}

impl PlanStep {
    /// A plain call step with no returns and no control flow.
    pub fn call(id: u32, name: impl Into<String>, parameters: Vec<Argument>) -> Self {
        PlanStep {
            id,
            name: name.into(),
            parameters,
            return_values: Vec::new(),
            control_flow: ControlFlow::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanEntity {
    pub name: String,
    pub value: String,
}

impl PlanEntity {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        PlanEntity {
            name: name.into(),
            value: value.into(),
        }
    }
}

/// Abstract planning steps plus the task-specific entities that specialize them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PCodePlan {
    pub steps: Vec<PlanStep>,
    pub entities: Vec<PlanEntity>,
}

impl PCodePlan {
    pub fn entity(&self, name: &str) -> Option<&PlanEntity> {
        self.entities.iter().find(|e| e.name == name)
    }

    /// Words a step contributes once its `$refs` are replaced by entity values.
    ///
    /// Used by the policy as the "current sub-goal" context of a round.
    pub fn resolved_step_words(&self, index: usize) -> Vec<String> {
        let Some(step) = self.steps.get(index) else {
            return Vec::new();
        };
        let mut words = vec![step.name.clone()];
        for arg in &step.parameters {
            let text = match arg {
                Argument::EntityRef(name) => self
                    .entity(name)
                    .map(|e| e.value.as_str())
                    .unwrap_or(name.as_str()),
                other => other.value(),
            };
            words.extend(text.split_whitespace().map(str::to_string));
        }
        words
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_rule() {
        assert!(is_identifier("find_object"));
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }

    #[test]
    fn resolved_words_substitute_entities() {
        let plan = PCodePlan {
            steps: vec![PlanStep::call(
                1,
                "put_object",
                vec![
                    Argument::EntityRef("obj".into()),
                    Argument::EntityRef("dest".into()),
                ],
            )],
            entities: vec![
                PlanEntity::new("obj", "pencil"),
                PlanEntity::new("dest", "desk 1"),
            ],
        };
        assert_eq!(
            plan.resolved_step_words(0),
            vec!["put_object", "pencil", "desk", "1"]
        );
        assert!(plan.resolved_step_words(3).is_empty());
    }
}
