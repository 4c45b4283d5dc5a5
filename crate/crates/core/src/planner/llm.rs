//! Planner backed by an OpenAI-compatible chat-completions endpoint, plus an
//! offline replay of recorded exchanges.
//!
//! Every exchange can be appended to a JSONL log; each line is
//! `{"instance", "round", "request", "status", "response"}` where `request`
//! is the JSON body sent and `response` the raw reply body. The same format
//! feeds [`ReplayBackend`].

use super::{
    BackendError, BackendMode, PlanDecision, PlanDraft, PlanQuery, PlannerBackend, PrimaryFunction,
};
use crate::instance::InstanceId;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

const SYSTEM_PROMPT: &str = "You are a city planner assigning land use to building parcels. \
Reply with one JSON object and nothing else. Either {\"keep\": true} to keep your previous plan, \
or an object with exactly these string keys: primary_function (one of residential, commercial, \
public_service, healthcare, education, industrial, other), secondary_function (for example store, \
hospital, school), size_class (one of low_rise, mid_rise, high_rise), style, reasoning.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_ms: u64,
    /// Requests per instance before giving up.
    pub max_attempts: u32,
    pub temperature: f64,
    /// Append every exchange to this JSONL file.
    pub record: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4".into(),
            api_key_env: "CITYCRAFT_LLM_API_KEY".into(),
            timeout_ms: 60_000,
            max_attempts: 3,
            temperature: 0.0,
            record: None,
        }
    }
}

/// A reply after structural validation.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedReply {
    Keep,
    Plan(PlanDraft),
    /// Well-formed except for the primary function, which is carried raw.
    BadFunction(PlanDraft, String),
}

const PLAN_KEYS: [&str; 5] = [
    "primary_function",
    "secondary_function",
    "size_class",
    "style",
    "reasoning",
];

/// Locate the JSON object in a reply that may be fenced or wrapped in prose.
fn extract_object(content: &str) -> Option<Map<String, Value>> {
    let trimmed = content.trim();
    if let Ok(Value::Object(m)) = serde_json::from_str(trimmed) {
        return Some(m);
    }
    let start = trimmed.find('{')?;
    let end = trimmed.rfind('}')?;
    match serde_json::from_str(trimmed.get(start..=end)?) {
        Ok(Value::Object(m)) => Some(m),
        _ => None,
    }
}

/// Validate a model reply against the strict plan key set.
pub fn parse_reply(content: &str) -> Result<ParsedReply, String> {
    let obj = extract_object(content).ok_or("no JSON object in reply")?;
    if obj.get("keep") == Some(&Value::Bool(true)) {
        return Ok(ParsedReply::Keep);
    }
    for k in obj.keys() {
        if k != "keep" && !PLAN_KEYS.contains(&k.as_str()) {
            return Err(format!("unexpected key '{k}'"));
        }
    }
    let mut fields = BTreeMap::new();
    for k in PLAN_KEYS {
        match obj.get(k) {
            Some(Value::String(s)) => {
                fields.insert(k, s.clone());
            }
            Some(_) => return Err(format!("key '{k}' is not a string")),
            None => return Err(format!("missing key '{k}'")),
        }
    }
    let size_class = fields["size_class"].parse().map_err(|e: String| e)?;
    let raw_fn = fields["primary_function"].clone();
    let parsed_fn = raw_fn.parse::<PrimaryFunction>();
    let draft = PlanDraft {
        primary_function: parsed_fn.clone().unwrap_or(PrimaryFunction::Other),
        secondary_function: fields["secondary_function"].clone(),
        size_class,
        style: fields["style"].clone(),
        reasoning: fields["reasoning"].clone(),
    };
    Ok(match parsed_fn {
        Ok(_) => ParsedReply::Plan(draft),
        Err(_) => ParsedReply::BadFunction(draft, raw_fn),
    })
}

/// Pull `choices[0].message.content` out of a chat-completions body.
fn message_content(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("reply body is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "reply has no choices[0].message.content".to_string())
}

/// The user message: dossier, neighbor plans, prompt and prior plan.
pub fn user_message(query: &PlanQuery<'_>) -> String {
    let neighbors: Vec<Value> = query
        .neighbors
        .iter()
        .map(|n| {
            json!({
                "id": n.id,
                "contact": n.count,
                "plan": n.plan.map(|p| json!({
                    "primary_function": p.primary_function,
                    "secondary_function": p.secondary_function,
                    "size_class": p.size_class,
                    "style": p.style,
                })),
            })
        })
        .collect();
    let prior = query.prior.map(|p| {
        json!({
            "primary_function": p.primary_function,
            "secondary_function": p.secondary_function,
            "size_class": p.size_class,
            "style": p.style,
            "reasoning": p.reasoning,
        })
    });
    let body = json!({
        "global_prompt": query.prompt.text(),
        "round": query.round,
        "instance": query.dossier,
        "neighbors": neighbors,
        "previous_plan": prior,
    });
    let ask = if query.prior.is_some() {
        "Given your previous plan and reasoning, keep it or make a new plan."
    } else {
        "Make a plan for this instance."
    };
    format!("{ask}\n{body}")
}

pub struct LlmBackend {
    config: LlmConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    recorder: Option<Mutex<std::fs::File>>,
}

impl std::fmt::Debug for LlmBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<set>"))
            .finish()
    }
}

enum Attempt {
    Reply(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl LlmBackend {
    pub fn new(config: LlmConfig) -> std::io::Result<Self> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let recorder = match &config.record {
            Some(path) => Some(Mutex::new(
                std::fs::OpenOptions::new().create(true).append(true).open(path)?,
            )),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            api_key,
            recorder,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn record(&self, query: &PlanQuery<'_>, request: &Value, status: u16, response: &str) {
        if let Some(rec) = &self.recorder {
            let line = json!({
                "instance": query.dossier.id,
                "round": query.round,
                "request": request,
                "status": status,
                "response": response,
            });
            let mut f = rec.lock().unwrap_or_else(|e| e.into_inner());
            // logging is best effort; a failed write must not fail planning
            let _ = writeln!(f, "{line}");
        }
    }

    fn send(&self, query: &PlanQuery<'_>, request: &Value) -> Attempt {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send(request.to_string()) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => {
                return Attempt::Retry(BackendError::Timeout(format!("{t:?}")))
            }
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(t)) => {
                return Attempt::Retry(BackendError::Timeout(format!("{t:?}")))
            }
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        self.record(query, request, status, &body);
        match status {
            401 | 403 => Attempt::Fatal(BackendError::AuthFailure(format!("HTTP {status}"))),
            200..=299 => Attempt::Reply(body),
            500..=599 | 429 => Attempt::Retry(BackendError::Transport(format!("HTTP {status}"))),
            _ => Attempt::Fatal(BackendError::Transport(format!("HTTP {status}: {body}"))),
        }
    }
}

/// Shared retry policy: malformed replies and bad functions are retried;
/// a bad function that survives every attempt becomes `other`.
fn resolve<F>(max_attempts: u32, has_prior: bool, mut next: F) -> Result<PlanDecision, BackendError>
where
    F: FnMut() -> Attempt,
{
    let mut last = BackendError::MalformedReply("no attempts made".into());
    let mut fallback = None;
    for _ in 0..max_attempts.max(1) {
        match next() {
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retry(e) => last = e,
            Attempt::Reply(body) => {
                let content = match message_content(&body) {
                    Ok(c) => c,
                    Err(e) => {
                        last = BackendError::MalformedReply(format!("{e}: {body}"));
                        continue;
                    }
                };
                match parse_reply(&content) {
                    Ok(ParsedReply::Keep) if has_prior => return Ok(PlanDecision::Keep),
                    Ok(ParsedReply::Keep) => {
                        last = BackendError::MalformedReply(format!("keep without prior plan: {content}"))
                    }
                    Ok(ParsedReply::Plan(d)) => return Ok(PlanDecision::Plan(d)),
                    Ok(ParsedReply::BadFunction(d, _)) => fallback = Some(d),
                    Err(e) => last = BackendError::MalformedReply(format!("{e}: {content}")),
                }
            }
        }
    }
    match fallback {
        Some(d) => Ok(PlanDecision::Plan(d)),
        None => Err(last),
    }
}

impl PlannerBackend for LlmBackend {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn mode(&self) -> BackendMode {
        BackendMode::Stochastic
    }

    fn plan(&self, query: &PlanQuery<'_>) -> Result<PlanDecision, BackendError> {
        let request = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": user_message(query)},
            ],
        });
        resolve(self.config.max_attempts, query.prior.is_some(), || self.send(query, &request))
    }
}

#[derive(Debug, Deserialize)]
struct Exchange {
    instance: InstanceId,
    round: u32,
    #[serde(default = "ok_status")]
    status: u16,
    response: String,
}

fn ok_status() -> u16 {
    200
}

/// Answers queries from a recorded exchange log, keyed by instance and round.
/// Exchanges for one key are consumed in log order under the same retry
/// policy as the live backend.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    exchanges: BTreeMap<(InstanceId, u32), Vec<(u16, String)>>,
    max_attempts: u32,
}

impl ReplayBackend {
    pub fn from_reader<R: BufRead>(input: R) -> Result<Self, String> {
        let mut exchanges: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            exchanges
                .entry((ex.instance, ex.round))
                .or_default()
                .push((ex.status, ex.response));
        }
        Ok(Self {
            exchanges,
            max_attempts: 3,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, String> {
        let f = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn len(&self) -> usize {
        self.exchanges.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &(InstanceId, u32)> {
        self.exchanges.keys()
    }
}

impl PlannerBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn mode(&self) -> BackendMode {
        BackendMode::Deterministic
    }

    fn plan(&self, query: &PlanQuery<'_>) -> Result<PlanDecision, BackendError> {
        let key = (query.dossier.id, query.round);
        let Some(recorded) = self.exchanges.get(&key) else {
            return Err(BackendError::MalformedReply(format!(
                "no recorded reply for {} in round {}",
                key.0, key.1
            )));
        };
        let mut it = recorded.iter();
        resolve(self.max_attempts, query.prior.is_some(), || match it.next() {
            Some((401 | 403, _)) => Attempt::Fatal(BackendError::AuthFailure("recorded".into())),
            Some((200..=299, body)) => Attempt::Reply(body.clone()),
            Some((s, _)) => Attempt::Retry(BackendError::Transport(format!("recorded HTTP {s}"))),
            None => Attempt::Retry(BackendError::MalformedReply("recorded replies exhausted".into())),
        })
    }
}
