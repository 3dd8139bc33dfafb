//! Minimal JSON-over-HTTP POST with bounded retries.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum HttpError {
    /// Connection, timeout or 5xx failure after all attempts.
    Transport { attempts: u32, message: String },
    /// Server answered but the body did not decode, or a 4xx status.
    Malformed(String),
}

#[derive(Debug, Clone)]
pub(crate) struct Endpoint {
    pub url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
}

pub(crate) fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    endpoint: &Endpoint,
    body: &Req,
) -> Result<Resp, HttpError> {
    let agent = ureq::AgentBuilder::new().timeout(endpoint.timeout).build();
    let attempts = endpoint.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 1..=attempts {
        let mut req = agent.post(&endpoint.url).set("Content-Type", "application/json");
        if let Some(token) = &endpoint.token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(resp) => {
                let text = resp
                    .into_string()
                    .map_err(|e| HttpError::Malformed(format!("unreadable body: {e}")))?;
                return serde_json::from_str(&text).map_err(|e| HttpError::Malformed(e.to_string()));
            }
            Err(ureq::Error::Status(code, resp)) if code < 500 => {
                let text = resp.into_string().unwrap_or_default();
                return Err(HttpError::Malformed(format!("status {code}: {text}")));
            }
            Err(e) => {
                last = e.to_string();
                if attempt < attempts {
                    std::thread::sleep(Duration::from_millis(20 * u64::from(attempt)));
                }
            }
        }
    }
    Err(HttpError::Transport {
        attempts,
        message: last,
    })
}

#[cfg(test)]
pub(crate) mod stub {
    //! One-thread HTTP server answering every request with a canned body.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    pub(crate) struct Stub {
        pub url: String,
        pub hits: Arc<AtomicUsize>,
    }

    /// `respond` maps the request body to (status, response body).
    pub(crate) fn serve<F>(respond: F) -> Stub
    where
        F: Fn(&str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                counter.fetch_add(1, Ordering::SeqCst);
                let (status, out) = respond(&String::from_utf8_lossy(&body));
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                    out.len()
                );
            }
        });
        Stub { url, hits }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Deserialize)]
    struct Echo {
        text: String,
    }

    #[test]
    fn round_trip() {
        let s = stub::serve(|body| (200, serde_json::json!({ "text": body }).to_string()));
        let ep = Endpoint {
            url: s.url,
            token: Some("t".into()),
            timeout: Duration::from_secs(5),
            max_attempts: 1,
        };
        let r: Echo = post_json(&ep, &serde_json::json!({"a": 1})).unwrap();
        assert_eq!(r.text, r#"{"a":1}"#);
    }

    #[test]
    fn retries_on_server_error() {
        let s = stub::serve(|_| (503, "{}".into()));
        let ep = Endpoint {
            url: s.url,
            token: None,
            timeout: Duration::from_secs(5),
            max_attempts: 3,
        };
        let r: Result<Echo, _> = post_json(&ep, &1);
        assert!(matches!(r, Err(HttpError::Transport { attempts: 3, .. })));
        assert_eq!(s.hits.load(std::sync::atomic::Ordering::SeqCst), 3);
    }

    #[test]
    fn unreachable_is_transport() {
        let ep = Endpoint {
            url: "http://127.0.0.1:9/".into(),
            token: None,
            timeout: Duration::from_millis(200),
            max_attempts: 2,
        };
        let r: Result<Echo, _> = post_json(&ep, &1);
        assert!(matches!(r, Err(HttpError::Transport { attempts: 2, .. })));
    }
}
