use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{DistillError, DistillRequest};
use crate::http::{post_json, Endpoint, HttpError};
use crate::plan::{parse_plan_lenient, validate_plan, PCodePlan};

const SECTION: &str = "[P-code Plan]:";

/// Connection settings for the plan-writing model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Upper bound on requests in flight during a batch.
    pub max_in_flight: usize,
}

impl LlmClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        LlmClientConfig {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            max_in_flight: 4,
        }
    }

    /// Reads `PGPO_LLM_ENDPOINT` and `PGPO_LLM_TOKEN`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("PGPO_LLM_ENDPOINT").ok().filter(|s| !s.is_empty())?;
        let mut cfg = LlmClientConfig::new(endpoint);
        cfg.token = std::env::var("PGPO_LLM_TOKEN").ok().filter(|s| !s.is_empty());
        Some(cfg)
    }

    fn http(&self) -> Endpoint {
        Endpoint {
            url: self.endpoint.clone(),
            token: self.token.clone(),
            timeout: self.timeout,
            max_attempts: self.max_attempts,
        }
    }
}

#[derive(Serialize)]
struct LlmRequest<'a> {
    prompt: &'a str,
    temperature: f64,
}

#[derive(Deserialize)]
struct LlmResponse {
    text: String,
}

/// One-shot summarization prompt.
pub fn build_prompt(req: &DistillRequest) -> Result<String, DistillError> {
    let (demo_task, demo_plan) = req.demonstrations.first().ok_or(DistillError::NoDemonstrations)?;
    let mut p = String::new();
    p.push_str(
        "You are given a task and the solution trajectory of an agent. Summarize the step-by-step [Plan] in natural language, \
         then rewrite it as a pseudocode plan. Each line has the form \"Step <id>: [control] [returns =] name(args)\"; \
         arguments that refer to task-specific entities start with $, and a final \"Entities:\" line binds every entity to a literal.\n",
    );
    p.push_str("Here is one example.\n");
    p.push_str(&format!("[Task]: {demo_task}\n{SECTION}\n{demo_plan}\n"));
    p.push_str("Now is your turn.\n");
    p.push_str(&format!("[Task Description]: {}\n", req.task_description));
    p.push_str(&format!("[Task]: {}\n", req.task));
    p.push_str("[Solution Trajectory]:\n");
    for (i, t) in req.thoughts.iter().enumerate() {
        p.push_str(&format!("Thought {}: {t}\n", i + 1));
    }
    p.push_str("[NL Plan]:\n");
    p.push_str(SECTION);
    Ok(p)
}

/// Text after the last `[P-code Plan]:` marker, up to the next bracketed section.
pub fn extract_plan_section(text: &str) -> Option<&str> {
    let start = text.rfind(SECTION)? + SECTION.len();
    let rest = &text[start..];
    let end = rest
        .find("\n[")
        .unwrap_or(rest.len());
    let section = rest[..end].trim();
    (!section.is_empty()).then_some(section)
}

pub fn distill_external(req: &DistillRequest, cfg: &LlmClientConfig) -> Result<PCodePlan, DistillError> {
    let prompt = build_prompt(req)?;
    let resp: LlmResponse = post_json(
        &cfg.http(),
        &LlmRequest {
            prompt: &prompt,
            temperature: 0.0,
        },
    )
    .map_err(|e| match e {
        HttpError::Transport { attempts, message } => DistillError::Transport { attempts, message },
        HttpError::Malformed(m) => DistillError::MalformedResponse(m),
    })?;
    let section = extract_plan_section(&resp.text)
        .ok_or_else(|| DistillError::MalformedResponse("no [P-code Plan] section".into()))?;
    let plan = parse_plan_lenient(section).map_err(|e| DistillError::MalformedResponse(e.to_string()))?;
    let report = validate_plan(&plan);
    if !report.is_clean() {
        return Err(DistillError::ValidationFailed(report));
    }
    Ok(plan)
}

/// Distills every request with at most `cfg.max_in_flight` requests outstanding. Output order matches input.
pub fn distill_external_batch(
    reqs: &[DistillRequest],
    cfg: &LlmClientConfig,
) -> Vec<Result<PCodePlan, DistillError>> {
    let next = AtomicUsize::new(0);
    let workers = cfg.max_in_flight.clamp(1, reqs.len().max(1));
    let mut results: Vec<Option<Result<PCodePlan, DistillError>>> = vec![None; reqs.len()];
    let collected = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= reqs.len() {
                            break out;
                        }
                        out.push((i, distill_external(&reqs[i], cfg)));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("distill worker panicked")).collect::<Vec<_>>()
    });
    for (i, r) in collected {
        results[i] = Some(r);
    }
    results.into_iter().map(|r| r.expect("every index visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::stub;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    fn req() -> DistillRequest {
        DistillRequest {
            task_description: "household".into(),
            task: "put a pencil in/on the shelf".into(),
            thoughts: vec!["I need to find the pencil.".into(), "I take the pencil.".into()],
            demonstrations: vec![(
                "put a book in/on the desk".into(),
                "Step 1: find_object($obj)\nEntities: obj = \"book\"".into(),
            )],
        }
    }

    fn cfg(url: String) -> LlmClientConfig {
        let mut c = LlmClientConfig::new(url);
        c.timeout = Duration::from_secs(5);
        c.max_attempts = 2;
        c
    }

    #[test]
    fn prompt_layout() {
        let p = build_prompt(&req()).unwrap();
        assert!(p.contains("Here is one example."));
        assert!(p.contains("Now is your turn."));
        assert!(p.contains("Thought 2: I take the pencil."));
        assert!(p.ends_with(SECTION));
        let mut r = req();
        r.demonstrations.clear();
        assert_eq!(build_prompt(&r), Err(DistillError::NoDemonstrations));
    }

    #[test]
    fn section_extraction() {
        assert_eq!(
            extract_plan_section("[NL Plan]: x\n[P-code Plan]:\nStep 1: a()\n[Other]: y"),
            Some("Step 1: a()")
        );
        assert_eq!(extract_plan_section("no plan here"), None);
    }

    #[test]
    fn stub_valid_plan() {
        let s = stub::serve(|body| {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            assert_eq!(v["temperature"], 0.0);
            (200, serde_json::json!({"text": "[P-code Plan]:\nStep 1: find_object($obj)\nEntities: obj = \"pencil\""}).to_string())
        });
        let plan = distill_external(&req(), &cfg(s.url)).unwrap();
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.entity("obj").unwrap().value, "pencil");
    }

    #[test]
    fn stub_prose() {
        let s = stub::serve(|_| (200, r#"{"text":"I think you should find the pencil."}"#.into()));
        assert!(matches!(distill_external(&req(), &cfg(s.url)), Err(DistillError::MalformedResponse(_))));
    }

    #[test]
    fn stub_duplicate_ids() {
        let s = stub::serve(|_| {
            (200, serde_json::json!({"text": "[P-code Plan]:\nStep 1: a()\nStep 1: b()"}).to_string())
        });
        match distill_external(&req(), &cfg(s.url)) {
            Err(DistillError::ValidationFailed(report)) => assert!(report.has(crate::plan::Rule::DupStepId)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_bounds_in_flight() {
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (l, p) = (live.clone(), peak.clone());
        let s = stub::serve(move |_| {
            let now = l.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            l.fetch_sub(1, Ordering::SeqCst);
            (200, serde_json::json!({"text": "[P-code Plan]:\nStep 1: a()"}).to_string())
        });
        let mut c = cfg(s.url);
        c.max_in_flight = 3;
        let reqs = vec![req(); 7];
        let out = distill_external_batch(&reqs, &c);
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|r| r.is_ok()));
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}
