use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::http::{post_json, Endpoint, HttpError};
use crate::trajectory::Round;

/// Remote policy server. Reported log-probabilities are taken at face value
/// once they pass the range check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyEndpoint {
    pub url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
}

impl PolicyEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        PolicyEndpoint {
            url: url.into(),
            token: None,
            timeout: Duration::from_secs(60),
            max_attempts: 3,
        }
    }

    /// Reads `PGPO_POLICY_ENDPOINT`.
    pub fn from_env() -> Option<Self> {
        std::env::var("PGPO_POLICY_ENDPOINT")
            .ok()
            .filter(|s| !s.is_empty())
            .map(PolicyEndpoint::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Plan,
    Continue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub mode: PolicyMode,
    pub u: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Round>>,
    pub temperature: f64,
}

/// What the server generated, with one log-probability per generated segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    #[serde(default)]
    pub plan: Option<String>,
    #[serde(default)]
    pub thought: Option<String>,
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub logprob_by_segment: BTreeMap<String, f64>,
}

pub fn external_policy_call(endpoint: &PolicyEndpoint, request: &PolicyRequest) -> Result<Fragment, PolicyError> {
    let http = Endpoint {
        url: endpoint.url.clone(),
        token: endpoint.token.clone(),
        timeout: endpoint.timeout,
        max_attempts: endpoint.max_attempts,
    };
    let fragment: Fragment = post_json(&http, request).map_err(|e| match e {
        HttpError::Transport { attempts, message } => PolicyError::Transport { attempts, message },
        HttpError::Malformed(m) => PolicyError::MalformedResponse(m),
    })?;
    let required: &[(&str, &Option<String>)] = match request.mode {
        PolicyMode::Plan => &[("plan", &fragment.plan)],
        PolicyMode::Continue => &[("thought", &fragment.thought), ("action", &fragment.action)],
    };
    for (segment, text) in required {
        if text.is_none() {
            return Err(PolicyError::MalformedResponse(format!("missing `{segment}` text")));
        }
        match fragment.logprob_by_segment.get(*segment) {
            None => return Err(PolicyError::MalformedResponse(format!("missing `{segment}` logprob"))),
            Some(lp) if !lp.is_finite() || *lp > 0.0 => {
                return Err(PolicyError::MalformedResponse(format!("`{segment}` logprob {lp} outside (-inf, 0]")))
            }
            Some(_) => {}
        }
    }
    Ok(fragment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::stub;

    fn request(mode: PolicyMode) -> PolicyRequest {
        PolicyRequest {
            mode,
            u: "put a pencil in/on the shelf".into(),
            plan: None,
            history: None,
            temperature: 0.0,
        }
    }

    fn endpoint(url: String) -> PolicyEndpoint {
        PolicyEndpoint {
            timeout: Duration::from_secs(5),
            max_attempts: 2,
            ..PolicyEndpoint::new(url)
        }
    }

    #[test]
    fn echo_server() {
        let s = stub::serve(|body| {
            let req: PolicyRequest = serde_json::from_str(body).unwrap();
            let out = serde_json::json!({
                "thought": format!("I read: {}", req.u),
                "action": "go to desk 1",
                "logprob_by_segment": {"thought": -1.5, "action": -0.25}
            });
            (200, out.to_string())
        });
        let f = external_policy_call(&endpoint(s.url), &request(PolicyMode::Continue)).unwrap();
        assert_eq!(f.thought.as_deref(), Some("I read: put a pencil in/on the shelf"));
        assert_eq!(f.logprob_by_segment["action"], -0.25);
    }

    #[test]
    fn missing_logprob() {
        let s = stub::serve(|_| (200, r#"{"plan":"Step 1: a()"}"#.into()));
        let r = external_policy_call(&endpoint(s.url), &request(PolicyMode::Plan));
        assert!(matches!(r, Err(PolicyError::MalformedResponse(_))));
    }

    #[test]
    fn positive_logprob_rejected() {
        let s = stub::serve(|_| (200, r#"{"plan":"Step 1: a()","logprob_by_segment":{"plan":0.5}}"#.into()));
        let r = external_policy_call(&endpoint(s.url), &request(PolicyMode::Plan));
        assert!(matches!(r, Err(PolicyError::MalformedResponse(_))));
    }

    #[test]
    fn timeout_reports_attempts() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let ep = PolicyEndpoint {
            timeout: Duration::from_millis(150),
            max_attempts: 2,
            ..PolicyEndpoint::new(url)
        };
        let r = external_policy_call(&ep, &request(PolicyMode::Plan));
        drop(listener);
        assert!(matches!(r, Err(PolicyError::Transport { attempts: 2, .. })), "{r:?}");
    }
}
