//! Completion gateways: scripted transcripts for tests and replay, an HTTP
//! chat-completions client for live runs, and a recorder that turns a live session
//! into a replayable transcript.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transcript exhausted (request tag {tag:?})")]
    TranscriptExhausted { tag: String },
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("environment variable {0} holding the API key is not set")]
    MissingCredentials(String),
    #[error("HTTP request failed: {0}")]
    Http(String),
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("transcript line {line}: {source}")]
    Transcript { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub model: String,
    /// Correlation id; scripted transcripts match on it.
    pub tag: String,
}

/// Model and sampling settings shared by every request of one kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestOptions {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for RequestOptions {
    fn default() -> Self {
        Self { model: "gpt-4o-mini".into(), temperature: 1.0, max_tokens: None }
    }
}

impl RequestOptions {
    pub fn request(&self, prompt: String, tag: String) -> LlmRequest {
        LlmRequest { prompt, temperature: self.temperature, max_tokens: self.max_tokens, model: self.model.clone(), tag }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Scripted,
    Live,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmResponse {
    pub text: String,
    pub latency: Duration,
    pub usage: Option<Usage>,
    pub source: ResponseSource,
}

pub trait LlmGateway: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// One recorded exchange. `tag` and `prompt` are optional in hand-written scripts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LlmError::Transcript { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> Result<(), LlmError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut file, e).map_err(|e| LlmError::Other(e.to_string()))?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

/// Plays back a transcript. A request takes the first unused entry with its tag;
/// failing that, the first unused untagged entry.
pub struct ScriptedLlm {
    entries: Vec<TranscriptEntry>,
    used: Mutex<Vec<bool>>,
}

impl ScriptedLlm {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let used = Mutex::new(vec![false; entries.len()]);
        Self { entries, used }
    }

    /// Untagged entries answered strictly in order.
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            responses
                .into_iter()
                .map(|r| TranscriptEntry { tag: None, prompt: None, response: r.into(), timestamp: None })
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(read_transcript(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.used.lock().expect("scripted gateway lock").iter().filter(|u| !**u).count()
    }
}

impl LlmGateway for ScriptedLlm {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if request.prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let started = Instant::now();
        let mut used = self.used.lock().expect("scripted gateway lock");
        let unused = |i: &usize| !used[*i];
        let idx = (0..self.entries.len())
            .filter(unused)
            .find(|&i| self.entries[i].tag.as_deref() == Some(request.tag.as_str()))
            .or_else(|| (0..self.entries.len()).filter(unused).find(|&i| self.entries[i].tag.is_none()))
            .ok_or_else(|| LlmError::TranscriptExhausted { tag: request.tag.clone() })?;
        used[idx] = true;
        Ok(LlmResponse {
            text: self.entries[idx].response.clone(),
            latency: started.elapsed(),
            usage: None,
            source: ResponseSource::Scripted,
        })
    }
}

type Responder = dyn Fn(&LlmRequest) -> Result<String, LlmError> + Send + Sync;

/// Gateway backed by a closure; handy for deterministic synthetic responders.
pub struct FnLlm {
    responder: Box<Responder>,
}

impl FnLlm {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&LlmRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self { responder: Box::new(f) }
    }
}

impl LlmGateway for FnLlm {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if request.prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let started = Instant::now();
        let text = (self.responder)(request)?;
        Ok(LlmResponse { text, latency: started.elapsed(), usage: None, source: ResponseSource::Scripted })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    /// Full chat-completions URL.
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "COEVO_API_KEY".into(),
            max_retries: 5,
            initial_backoff_ms: 1000,
            timeout_secs: 300,
        }
    }
}

/// Chat-completions client with exponential backoff on 429 and 5xx responses and on
/// transport errors.
pub struct HttpLlm {
    settings: HttpSettings,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpLlm {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(settings: HttpSettings) -> Result<Self, LlmError> {
        let api_key = std::env::var(&settings.api_key_env)
            .map_err(|_| LlmError::MissingCredentials(settings.api_key_env.clone()))?;
        Ok(Self::with_key(settings, api_key))
    }

    pub fn with_key(settings: HttpSettings, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .build()
            .into();
        Self { settings, api_key, agent }
    }

    fn attempt(&self, body: &Value) -> Result<Value, (bool, String)> {
        let resp = self
            .agent
            .post(&self.settings.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => return Err((true, e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, format!("status {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((false, format!("status {status}: {}", truncate(&text, 500))));
        }
        resp.body_mut().read_json::<Value>().map_err(|e| (false, e.to_string()))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl LlmGateway for HttpLlm {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if request.prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let mut body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        });
        if let Some(m) = request.max_tokens {
            body["max_tokens"] = json!(m);
        }
        let started = Instant::now();
        let mut backoff = Duration::from_millis(self.settings.initial_backoff_ms);
        let mut attempt = 0;
        let value = loop {
            match self.attempt(&body) {
                Ok(v) => break v,
                Err((retryable, msg)) if retryable && attempt < self.settings.max_retries => {
                    attempt += 1;
                    log::warn!("LLM request {} failed ({msg}); retry {attempt} in {backoff:?}", request.tag);
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                Err((_, msg)) => return Err(LlmError::Http(msg)),
            }
        };
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))?
            .to_owned();
        let usage = value.get("usage").and_then(|u| {
            Some(Usage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(LlmResponse { text, latency: started.elapsed(), usage, source: ResponseSource::Live })
    }
}

/// Wraps a gateway and keeps every exchange for `write_transcript`.
pub struct RecordingLlm<G> {
    inner: G,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<G: LlmGateway> RecordingLlm<G> {
    pub fn new(inner: G) -> Self {
        Self { inner, entries: Mutex::new(Vec::new()) }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("recorder lock").clone()
    }

    /// Writes the session as a transcript that `ScriptedLlm` replays by tag.
    pub fn record_transcript(&self, path: &Path) -> Result<(), LlmError> {
        let entries = self.entries();
        let mut tags = HashSet::new();
        if let Some(dup) = entries.iter().filter_map(|e| e.tag.as_ref()).find(|t| !tags.insert(*t)) {
            log::warn!("transcript tag {dup:?} occurs more than once; replay falls back to order");
        }
        write_transcript(path, &entries)
    }
}

impl<G: LlmGateway> LlmGateway for RecordingLlm<G> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let resp = self.inner.complete(request)?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).ok();
        self.entries.lock().expect("recorder lock").push(TranscriptEntry {
            tag: Some(request.tag.clone()),
            prompt: Some(request.prompt.clone()),
            response: resp.text.clone(),
            timestamp,
        });
        Ok(resp)
    }
}

impl<G: LlmGateway + ?Sized> LlmGateway for Box<G> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<G: LlmGateway + ?Sized> LlmGateway for &G {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str) -> LlmRequest {
        LlmRequest { prompt: "p".into(), temperature: 1.0, max_tokens: None, model: "m".into(), tag: tag.into() }
    }

    #[test]
    fn scripted_runs_out() {
        let llm = ScriptedLlm::from_responses(["<code>A</code>"]);
        assert_eq!(llm.complete(&req("a")).unwrap().text, "<code>A</code>");
        assert!(matches!(llm.complete(&req("b")), Err(LlmError::TranscriptExhausted { .. })));
    }

    #[test]
    fn tags_take_priority_over_order() {
        let entry = |tag: Option<&str>, r: &str| TranscriptEntry {
            tag: tag.map(str::to_owned),
            prompt: None,
            response: r.into(),
            timestamp: None,
        };
        let llm = ScriptedLlm::new(vec![entry(Some("x"), "X"), entry(None, "free"), entry(Some("y"), "Y")]);
        assert_eq!(llm.complete(&req("y")).unwrap().text, "Y");
        assert_eq!(llm.complete(&req("z")).unwrap().text, "free");
        assert_eq!(llm.complete(&req("x")).unwrap().text, "X");
        assert_eq!(llm.remaining(), 0);
    }

    #[test]
    fn empty_prompt_is_rejected() {
        let llm = ScriptedLlm::from_responses(["a"]);
        let mut r = req("t");
        r.prompt.clear();
        assert!(matches!(llm.complete(&r), Err(LlmError::EmptyPrompt)));
    }

    #[test]
    fn missing_key_is_reported() {
        let settings = HttpSettings { api_key_env: "COEVO_TEST_SURELY_UNSET_KEY".into(), ..HttpSettings::default() };
        assert!(matches!(HttpLlm::from_env(settings), Err(LlmError::MissingCredentials(_))));
    }
}
