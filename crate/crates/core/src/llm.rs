//! Chat-completion gateway: OpenAI-compatible HTTP client, an offline scripted
//! completer, and the token estimator shared by passage caps and context budgets.

use std::fmt;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::normalize_date;
use crate::transport::{join_url, millis, with_retries, Attempt, InFlight, RetryPolicy};

/// Reply of the scripted completer when the prompt holds no matching fact.
pub const INSUFFICIENT_CONTEXT: &str = "INSUFFICIENT CONTEXT";

pub const BASE_MODEL: &str = "gpt-3.5-turbo";
pub const ENHANCED_MODEL: &str = "gpt-3.5-turbo-1106";

/// Token estimate: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub endpoint: String,
    pub temperature: f64,
    #[serde(rename = "timeout_ms", with = "millis")]
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl ModelProfile {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint: "https://api.openai.com/v1".to_string(),
            temperature: 0.0,
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
        }
    }

    pub fn base() -> Self {
        Self::new(BASE_MODEL)
    }

    pub fn enhanced() -> Self {
        Self::new(ENHANCED_MODEL)
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.timeout.is_zero() {
            return Err(LlmError::InvalidRequest("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<ChatMessage>,
    pub answer: String,
    pub latency_ms: f64,
    pub usage: Option<TokenUsage>,
    pub retries: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("upstream unavailable: {0}")]
    UpstreamUnavailable(String),
    #[error("upstream rejected the request (HTTP {status}): {body}")]
    UpstreamRejected { status: u16, body: String },
    #[error("upstream timed out: {0}")]
    Timeout(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Anything that turns a message list into an answer.
pub trait Completer: Send + Sync {
    fn complete(
        &self,
        profile: &ModelProfile,
        messages: &[ChatMessage],
    ) -> Result<ChatExchange, LlmError>;
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Client for `POST {endpoint}/chat/completions`.
pub struct OpenAiCompleter {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: InFlight,
}

impl fmt::Debug for OpenAiCompleter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiCompleter")
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish_non_exhaustive()
    }
}

impl OpenAiCompleter {
    pub fn new(api_key: Option<String>) -> Self {
        Self::with_max_in_flight(api_key, 4)
    }

    pub fn with_max_in_flight(api_key: Option<String>, max_in_flight: usize) -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
            api_key: api_key.filter(|k| !k.is_empty()),
            gate: InFlight::new(max_in_flight),
        }
    }

    fn attempt(
        &self,
        url: &str,
        body: &[u8],
        timeout: Duration,
    ) -> Attempt<(String, Option<TokenUsage>), LlmError> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout(e.to_string())),
            Err(e) => return Attempt::Retry(LlmError::UpstreamUnavailable(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout(e.to_string())),
            Err(e) => return Attempt::Retry(LlmError::UpstreamUnavailable(e.to_string())),
        };
        if status.is_success() {
            match serde_json::from_str::<ChatResponse>(&text) {
                Ok(parsed) => match parsed.choices.into_iter().next() {
                    Some(choice) => {
                        Attempt::Done((choice.message.content.unwrap_or_default(), parsed.usage))
                    }
                    None => Attempt::Retry(LlmError::UpstreamUnavailable(
                        "response carried no choices".into(),
                    )),
                },
                Err(e) => Attempt::Retry(LlmError::UpstreamUnavailable(format!(
                    "malformed response: {e}"
                ))),
            }
        } else if status.as_u16() == 429 || status.is_server_error() {
            Attempt::Retry(LlmError::UpstreamUnavailable(format!("HTTP {status}")))
        } else {
            Attempt::Fail(LlmError::UpstreamRejected {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            })
        }
    }
}

impl Completer for OpenAiCompleter {
    fn complete(
        &self,
        profile: &ModelProfile,
        messages: &[ChatMessage],
    ) -> Result<ChatExchange, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::InvalidRequest("message list is empty".into()));
        }
        profile.validate()?;
        let url = join_url(&profile.endpoint, "chat/completions");
        // Serialized once so every retry sends the same bytes.
        let body = serde_json::to_vec(&ChatRequest {
            model: &profile.name,
            messages,
            temperature: profile.temperature,
        })
        .map_err(|e| LlmError::InvalidRequest(e.to_string()))?;

        let _permit = self.gate.acquire();
        let start = Instant::now();
        let (result, retries) = with_retries(&profile.retry, || {
            self.attempt(&url, &body, profile.timeout)
        });
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        let (answer, usage) = result?;
        Ok(ChatExchange {
            messages: messages.to_vec(),
            answer,
            latency_ms,
            usage,
            retries,
        })
    }
}

/// Rule-based completer that answers only from facts in the prompt's context.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedCompleter;

impl Completer for ScriptedCompleter {
    fn complete(
        &self,
        _profile: &ModelProfile,
        messages: &[ChatMessage],
    ) -> Result<ChatExchange, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::InvalidRequest("message list is empty".into()));
        }
        Ok(scripted_complete(messages))
    }
}

static PASSAGE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^For the quarter ending (\d{4}-\d{2}-\d{2}), (.+) \(([A-Z.\-]{1,6})\) reported (.+)$",
    )
    .unwrap()
});
static FACT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(.+) of (-?\d+(?:\.\d+)?) USD$").unwrap());
static QUESTION_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d{4}-\d{2}-\d{2}|\d{4}/\d{1,2}/\d{1,2}").unwrap());

struct ContextFact<'a> {
    period: &'a str,
    company: &'a str,
    ticker: &'a str,
    indicator: &'a str,
    amount: &'a str,
}

fn context_facts(context: &str) -> Vec<ContextFact<'_>> {
    let mut facts = Vec::new();
    for line in context.lines() {
        let Some(c) = PASSAGE_LINE.captures(line.trim()) else {
            continue;
        };
        let (period, company, ticker) = (
            c.get(1).unwrap().as_str(),
            c.get(2).unwrap().as_str(),
            c.get(3).unwrap().as_str(),
        );
        let body = c.get(4).unwrap().as_str();
        let body = body.strip_suffix('.').unwrap_or(body);
        for part in body.split("; ") {
            if let Some(f) = FACT.captures(part) {
                facts.push(ContextFact {
                    period,
                    company,
                    ticker,
                    indicator: f.get(1).unwrap().as_str(),
                    amount: f.get(2).unwrap().as_str(),
                });
            }
        }
    }
    facts
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Splits a user message into `(context, question)`.
fn split_prompt(content: &str) -> (&str, &str) {
    match content.strip_prefix("Context:\n") {
        Some(rest) => match rest.rfind("\n\nQuestion: ") {
            Some(at) => (&rest[..at], &rest[at + "\n\nQuestion: ".len()..]),
            None => (rest, ""),
        },
        None => ("", content),
    }
}

fn scripted_answer(messages: &[ChatMessage]) -> String {
    let Some(user) = messages.iter().rev().find(|m| m.role == Role::User) else {
        return INSUFFICIENT_CONTEXT.to_string();
    };
    let (context, question) = split_prompt(&user.content);
    let Some(period) = QUESTION_DATE
        .find(question)
        .and_then(|m| normalize_date(m.as_str()).ok())
        .map(|d| d.to_string())
    else {
        return INSUFFICIENT_CONTEXT.to_string();
    };
    let q_lower = question.to_lowercase();
    let q_squashed = squash(question);
    let q_words: Vec<&str> = question
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '.' || c == '-'))
        .map(|w| w.trim_end_matches('.'))
        .collect();

    // Longest entity and indicator matches win, then earliest context line.
    let mut best: Option<((usize, usize), &str)> = None;
    for fact in context_facts(context) {
        if fact.period != period {
            continue;
        }
        let company_hit = q_lower.contains(&fact.company.to_lowercase());
        let ticker_hit = q_words.contains(&fact.ticker);
        if !(company_hit || ticker_hit) {
            continue;
        }
        let indicator = squash(fact.indicator);
        if indicator.is_empty() || !q_squashed.contains(&indicator) {
            continue;
        }
        let entity_len = if company_hit {
            fact.company.len()
        } else {
            fact.ticker.len()
        };
        let score = (indicator.len(), entity_len);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, fact.amount));
        }
    }
    best.map_or_else(|| INSUFFICIENT_CONTEXT.to_string(), |(_, a)| a.to_string())
}

/// Deterministic answer derived solely from the prompt.
pub fn scripted_complete(messages: &[ChatMessage]) -> ChatExchange {
    let start = Instant::now();
    let answer = scripted_answer(messages);
    ChatExchange {
        messages: messages.to_vec(),
        answer,
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
        usage: None,
        retries: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPLE: &str =
        "For the quarter ending 2023-03-31, Apple Inc. (AAPL) reported Revenue of 100000000 USD.";
    const QUESTION: &str = "What was Apple Inc.'s Revenue for the quarter ending 2023-03-31?";

    fn rag_prompt(context: &str, question: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system("Answer strictly from the provided context."),
            ChatMessage::user(format!("Context:\n{context}\n\nQuestion: {question}")),
        ]
    }

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("a"), 1);
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens(&"x".repeat(1023)), 256);
        assert_eq!(estimate_tokens("ééé"), 1);
    }

    #[test]
    fn scripted_reads_table_passage() {
        let ex = scripted_complete(&rag_prompt(APPLE, QUESTION));
        assert_eq!(ex.answer, "100000000");
    }

    #[test]
    fn scripted_needs_context() {
        let ex = scripted_complete(&rag_prompt("", QUESTION));
        assert_eq!(ex.answer, INSUFFICIENT_CONTEXT);
        let ex = scripted_complete(&[ChatMessage::user(QUESTION)]);
        assert_eq!(ex.answer, INSUFFICIENT_CONTEXT);
    }

    #[test]
    fn scripted_picks_asked_indicator() {
        let ctx = "For the quarter ending 2023-03-31, Apple Inc. (AAPL) reported Assets of 5 USD.\n\n\
                   For the quarter ending 2023-03-31, Apple Inc. (AAPL) reported NetIncome of -7.5 USD; Revenue of 42 USD.";
        let ex = scripted_complete(&rag_prompt(ctx, QUESTION));
        assert_eq!(ex.answer, "42");
        let q = "What was AAPL's NetIncome for the quarter ending 2023/3/31?";
        assert_eq!(scripted_complete(&rag_prompt(ctx, q)).answer, "-7.5");
    }

    #[test]
    fn scripted_rejects_other_period_or_company() {
        let q = "What was Apple Inc.'s Revenue for the quarter ending 2022-12-31?";
        assert_eq!(
            scripted_complete(&rag_prompt(APPLE, q)).answer,
            INSUFFICIENT_CONTEXT
        );
        let q = "What was Microsoft Corp's Revenue for the quarter ending 2023-03-31?";
        assert_eq!(
            scripted_complete(&rag_prompt(APPLE, q)).answer,
            INSUFFICIENT_CONTEXT
        );
    }

    #[test]
    fn scripted_prefers_longer_indicator() {
        let ctx = "For the quarter ending 2023-03-31, Apple Inc. (AAPL) reported Income of 1 USD; Net Income of 2 USD.";
        let q = "What was Apple Inc.'s Net Income for the quarter ending 2023-03-31?";
        assert_eq!(scripted_complete(&rag_prompt(ctx, q)).answer, "2");
    }

    #[test]
    fn scripted_completer_rejects_empty_messages() {
        let err = ScriptedCompleter
            .complete(&ModelProfile::base(), &[])
            .unwrap_err();
        assert!(matches!(err, LlmError::InvalidRequest(_)));
    }

    #[test]
    fn empty_messages_rejected_locally() {
        let client = OpenAiCompleter::new(None);
        let err = client
            .complete(
                &ModelProfile::base().with_endpoint("http://127.0.0.1:9"),
                &[],
            )
            .unwrap_err();
        assert!(matches!(err, LlmError::InvalidRequest(_)));
    }

    #[test]
    fn debug_redacts_key() {
        let client = OpenAiCompleter::new(Some("sk-very-secret".into()));
        assert!(!format!("{client:?}").contains("sk-very-secret"));
    }

    #[test]
    fn profile_validation() {
        let mut p = ModelProfile::base();
        p.temperature = -0.1;
        assert!(p.validate().is_err());
        let mut p = ModelProfile::base();
        p.timeout = Duration::ZERO;
        assert!(p.validate().is_err());
        assert!(ModelProfile::enhanced().validate().is_ok());
    }
}
