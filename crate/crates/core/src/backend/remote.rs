use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use log::{debug, warn};
use regex::Regex;
use serde_json::json;

use super::{split_tags, BackendError, ModelBackend, Query, QueryContext, SignalValue};

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Full URL of a chat-completions style endpoint.
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: String,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8080/v1/chat/completions".into(),
            auth_env: "MESA_API_KEY".into(),
            model: "default".into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            backoff_base: Duration::from_secs(1),
            max_in_flight: 4,
        }
    }
}

/// Sleep before each retry: base, 2·base, 4·base, ...
pub fn backoff_schedule(base: Duration, max_retries: u32) -> Vec<Duration> {
    (0..max_retries).map(|i| base * 2u32.saturating_pow(i)).collect()
}

fn field_regex(field: &str) -> Regex {
    Regex::new(&format!(r"(?im)^\W*{field}\s*[:=]\s*(.+?)\s*$")).expect("static regex")
}

/// Extracts `confidence: <number>`, clamping out-of-range values into [0, 1].
pub fn parse_confidence(text: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)confidence\W{0,3}\s*[:=]\s*(-?\d+(?:\.\d+)?|-?\.\d+)").expect("static regex")
    });
    let raw: f64 = re.captures(text)?.get(1)?.as_str().parse().ok()?;
    if !raw.is_finite() {
        return None;
    }
    if !(0.0..=1.0).contains(&raw) {
        warn!("remote confidence {raw} outside [0, 1]; clamping");
    }
    Some(raw.clamp(0.0, 1.0))
}

/// Extracts `answer: <text>`, or the whole trimmed reply when no such line exists.
pub fn parse_answer(text: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| field_regex("answer"));
    match re.captures(text) {
        Some(c) => Some(c[1].to_string()),
        None => Some(text.trim().to_string()).filter(|s| !s.is_empty()),
    }
}

pub fn parse_tags(text: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| field_regex("tags"));
    let c = re.captures(text)?;
    let tags = split_tags(&c[1]);
    Some(tags.into_iter().collect::<Vec<_>>().join(","))
}

fn prompt_for(ctx: &QueryContext<'_>, query: &Query) -> String {
    let task = &ctx.task.prompt;
    let conf = "Reply with one line of the form `confidence: <number between 0 and 1>`.";
    match query {
        Query::SelfConfidence => format!(
            "Task: {task}\nHow likely is it that you can answer this correctly from your own \
             knowledge alone, without tools, skills, or verification? {conf}"
        ),
        Query::PostOffloadConfidence => format!(
            "Task: {task}\nYou have now consulted an external source for this task. How likely is \
             it that your current answer is correct? {conf}"
        ),
        Query::SourceConfidence(ch) => format!(
            "Task: {task}\nHow likely is it that the external channel `{ch}` would produce a \
             correct result for this task? {conf}"
        ),
        Query::Probe(card) => format!(
            "Task: {task}\nWithout loading the skill `{card}`, make a brief attempt at the task. \
             How likely is it that your attempt is correct? {conf}"
        ),
        Query::Reflection => format!(
            "Task: {task}\nReconsider your first approach to this task once. How likely is it \
             that the first approach was right? {conf}"
        ),
        Query::Answer(v) => format!(
            "Task: {task}\nSolve the task using the `{v}` strategy. Reply with one line of the \
             form `answer: <final answer>`."
        ),
        Query::SelfReportTags => format!(
            "Task: {task}\nDoes this task look like any of: trap (a known cognitive trap), \
             trivial, time-sensitive? Reply with one line `tags: <comma-separated tags>` \
             (empty if none)."
        ),
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Client for an HTTP chat-completions endpoint.
pub struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    slots: Slots,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

pub fn remote_backend(cfg: RemoteConfig) -> RemoteBackend {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let slots = Slots {
        free: Mutex::new(cfg.max_in_flight.max(1)),
        cv: Condvar::new(),
    };
    RemoteBackend { cfg, agent, slots }
}

impl RemoteBackend {
    fn attempt(&self, body: &str, token: Option<&str>) -> Result<String, Attempt> {
        let _slot = self.slots.acquire();
        let mut req = self
            .agent
            .post(&self.cfg.endpoint)
            .header("content-type", "application/json");
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        debug!("POST {} body={body} (authorization redacted)", self.cfg.endpoint);
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(Attempt::Retry(BackendError::Timeout { attempts: 1 })),
            Err(e) => return Err(Attempt::Retry(BackendError::Transport(e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => Attempt::Retry(BackendError::Timeout { attempts: 1 }),
            e => Attempt::Retry(BackendError::Transport(e.to_string())),
        })?;
        debug!("response status={status} body={text}");
        match status {
            200..=299 => Ok(text),
            401 | 403 => Err(Attempt::Fatal(BackendError::Auth(format!("HTTP {status}")))),
            429 | 500..=599 => Err(Attempt::Retry(BackendError::Transport(format!("HTTP {status}")))),
            _ => Err(Attempt::Fatal(BackendError::Transport(format!("HTTP {status}")))),
        }
    }

    fn extract(query: &Query, reply: &str) -> Result<SignalValue, BackendError> {
        let content: serde_json::Value = serde_json::from_str(reply).map_err(|e| BackendError::Malformed {
            key: query.key(),
            message: format!("response is not JSON: {e}"),
        })?;
        let text = content
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| BackendError::Malformed {
                key: query.key(),
                message: "no choices[0].message.content".into(),
            })?;
        let value = match query {
            Query::Answer(_) => parse_answer(text).map(SignalValue::Text),
            Query::SelfReportTags => parse_tags(text).map(SignalValue::Text),
            _ => parse_confidence(text).map(SignalValue::Number),
        };
        value.ok_or_else(|| BackendError::Malformed {
            key: query.key(),
            message: format!("no parseable field in {text:?}"),
        })
    }
}

impl ModelBackend for RemoteBackend {
    fn query(&self, ctx: &QueryContext<'_>, query: &Query) -> Result<SignalValue, BackendError> {
        let token = std::env::var(&self.cfg.auth_env).ok();
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": "You are a careful assistant. Follow the reply format exactly."},
                {"role": "user", "content": prompt_for(ctx, query)},
            ],
        })
        .to_string();
        let mut waits = backoff_schedule(self.cfg.backoff_base, self.cfg.max_retries).into_iter();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let err = match self.attempt(&body, token.as_deref()) {
                Ok(reply) => match Self::extract(query, &reply) {
                    Ok(v) => return Ok(v),
                    Err(e) => e,
                },
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => e,
            };
            match waits.next() {
                Some(wait) => {
                    warn!("remote query {query} failed ({err}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                }
                None => {
                    return Err(match err {
                        BackendError::Timeout { .. } => BackendError::Timeout { attempts },
                        e => e,
                    })
                }
            }
        }
    }
}
