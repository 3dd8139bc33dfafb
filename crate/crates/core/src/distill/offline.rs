use super::{DistillError, DistillRequest};
use crate::plan::{Argument, PCodePlan, PlanEntity, PlanStep};

/// What a matched verb turns into.
struct VerbRule {
    verbs: &'static [&'static str],
    step: &'static str,
    shape: Shape,
}

#[derive(Clone, Copy)]
enum Shape {
    /// One noun phrase after the verb, lifted into an entity with this role.
    Object(&'static str),
    /// `<object or "it"> in/on <destination>`.
    Placement,
    /// No arguments.
    Bare,
}

const RULES: &[VerbRule] = &[
    VerbRule { verbs: &["find", "locate", "look"], step: "find_object", shape: Shape::Object("obj") },
    VerbRule { verbs: &["take", "pick", "grab"], step: "take_object", shape: Shape::Object("obj") },
    VerbRule { verbs: &["put", "place"], step: "put_object", shape: Shape::Placement },
    VerbRule { verbs: &["go", "walk", "head"], step: "go_to", shape: Shape::Object("loc") },
    VerbRule { verbs: &["open"], step: "open_receptacle", shape: Shape::Object("loc") },
    VerbRule { verbs: &["examine", "inspect", "check"], step: "examine", shape: Shape::Object("obj") },
    VerbRule { verbs: &["search"], step: "search_item", shape: Shape::Object("query") },
    VerbRule { verbs: &["click"], step: "click_item", shape: Shape::Object("item") },
    VerbRule { verbs: &["select", "choose"], step: "select_option", shape: Shape::Object("option") },
    VerbRule { verbs: &["buy", "purchase"], step: "buy_item", shape: Shape::Bare },
    VerbRule { verbs: &["craft", "make"], step: "craft_item", shape: Shape::Object("target") },
    VerbRule { verbs: &["get", "fetch", "collect", "gather"], step: "get_item", shape: Shape::Object("ingredient") },
];

const SKIP: &[&str] = &["the", "a", "an", "some", "for", "to", "at", "up", "my", "this", "that", "into", "onto"];
const STOP: &[&str] = &[
    "in", "on", "in/on", "into", "onto", "from", "with", "using", "and", "then", "it", "because", "so", "which",
    "option", "now",
];

/// Plan plus the natural-language summary it was formatted from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distilled {
    pub plan: PCodePlan,
    pub nl_plan: String,
}

/// Rule-based summary of thoughts into a plan. Deterministic.
pub fn distill_offline(req: &DistillRequest) -> Result<PCodePlan, DistillError> {
    distill_offline_with_summary(req).map(|d| d.plan)
}

pub fn distill_offline_with_summary(req: &DistillRequest) -> Result<Distilled, DistillError> {
    if req.thoughts.is_empty() {
        return Err(DistillError::NoThoughts);
    }
    let mut entities = Entities::default();
    let mut steps = Vec::new();
    let mut nl = Vec::new();
    let mut last_obj: Option<String> = None;

    for (index, thought) in req.thoughts.iter().enumerate() {
        let words = words(thought);
        let Some((pos, rule)) = words
            .iter()
            .enumerate()
            .find_map(|(i, w)| RULES.iter().find(|r| r.verbs.contains(&w.as_str())).map(|r| (i, r)))
        else {
            return Err(DistillError::UnmappableThought(index));
        };
        let tail = &words[pos + 1..];
        let id = steps.len() as u32 + 1;
        let (params, sentence) = match rule.shape {
            Shape::Bare => (Vec::new(), "Buy the item.".to_string()),
            Shape::Object(role) => {
                let np = noun_phrase(tail).ok_or(DistillError::UnmappableThought(index))?;
                if role == "obj" {
                    last_obj = Some(np.clone());
                }
                let name = entities.bind(role, &np);
                (vec![Argument::EntityRef(name)], nl_sentence(rule.step, &np))
            }
            Shape::Placement => {
                let split = tail.iter().position(|w| matches!(w.as_str(), "in" | "on" | "in/on" | "into" | "onto"));
                let Some(split) = split else {
                    return Err(DistillError::UnmappableThought(index));
                };
                let object = match noun_phrase(&tail[..split]) {
                    Some(np) => np,
                    None if tail[..split].iter().any(|w| w == "it") => {
                        last_obj.clone().ok_or(DistillError::UnmappableThought(index))?
                    }
                    None => return Err(DistillError::UnmappableThought(index)),
                };
                let dest = noun_phrase(&tail[split + 1..]).ok_or(DistillError::UnmappableThought(index))?;
                last_obj = Some(object.clone());
                let obj_name = entities.bind("obj", &object);
                let dest_name = entities.bind("dest", &dest);
                (
                    vec![Argument::EntityRef(obj_name), Argument::EntityRef(dest_name)],
                    format!("Put the {object} in/on the {dest}."),
                )
            }
        };
        steps.push(PlanStep::call(id, rule.step, params));
        nl.push(format!("Step {id}. {sentence}"));
    }

    Ok(Distilled {
        plan: PCodePlan {
            steps,
            entities: entities.list,
        },
        nl_plan: nl.join("\n"),
    })
}

fn nl_sentence(step: &str, np: &str) -> String {
    match step {
        "find_object" => format!("Find the {np}."),
        "take_object" => format!("Take the {np}."),
        "go_to" => format!("Go to the {np}."),
        "open_receptacle" => format!("Open the {np}."),
        "examine" => format!("Examine the {np}."),
        "search_item" => format!("Search for {np}."),
        "click_item" => format!("Click the {np}."),
        "select_option" => format!("Select {np}."),
        "craft_item" => format!("Craft {np}."),
        "get_item" => format!("Get {np}."),
        _ => format!("Do {step} with {np}."),
    }
}

fn words(thought: &str) -> Vec<String> {
    thought
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| matches!(c, '.' | ',' | ';' | '!' | '?' | ':' | '"' | '\''))
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Leading determiners skipped, then words up to the first stop word.
fn noun_phrase(words: &[String]) -> Option<String> {
    let start = words.iter().position(|w| !SKIP.contains(&w.as_str()))?;
    let np: Vec<&str> = words[start..]
        .iter()
        .take_while(|w| !STOP.contains(&w.as_str()))
        .map(String::as_str)
        .collect();
    (!np.is_empty()).then(|| np.join(" "))
}

/// Entity table keyed by literal: the first role a literal is seen in names it.
#[derive(Default)]
struct Entities {
    list: Vec<PlanEntity>,
}

impl Entities {
    fn bind(&mut self, role: &str, literal: &str) -> String {
        if let Some(e) = self.list.iter().find(|e| e.value == literal) {
            return e.name.clone();
        }
        let taken = self.list.iter().filter(|e| strip_counter(&e.name) == role).count();
        let name = if taken == 0 {
            role.to_string()
        } else {
            format!("{role}{}", taken + 1)
        };
        self.list.push(PlanEntity::new(name.clone(), literal));
        name
    }
}

fn strip_counter(name: &str) -> &str {
    name.trim_end_matches(|c: char| c.is_ascii_digit())
}
