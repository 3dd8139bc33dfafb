//! Pseudocode plans: ordered abstract steps plus task-specific entities.
//!
//! Text format, one step per line:
//!
//! ```text
//! Step 1: locations = find_receptacles()
//! Step 2: for loc in locations: obj = look_for(loc, $target)
//! Step 3: examine_with(obj, $tool)
//! Entities: target = "book", tool = "desklamp"
//! ```
//!
//! `$name` arguments refer to an entity or a prior step's return value.
//! Conditions after `if`/`while` are kept as opaque text. `#` starts a comment.

mod ast;
mod ops;
mod parse;
mod render;
mod validate;

pub use ast::{Argument, ControlFlow, PCodePlan, PlanEntity, PlanStep};
pub use ops::{
    diff_plans, skeleton_hash, substitute_entities, EntityChange, PlanDiff, StepChange,
    SubstituteError,
};
pub use parse::{parse_plan, parse_plan_lenient, ParseError, ParseErrorKind};
pub use render::{render_plan, render_step};
pub use validate::{validate_plan, Rule, ValidationReport, Violation};
