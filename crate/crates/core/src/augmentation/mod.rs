//! Paraphrase generation and keyword extraction through an external
//! instruction-following language model, with an offline deterministic
//! stub, and minority-class balancing built on top of either.

mod parse;
mod stub;

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifiers::Label;
use crate::corpus::{Corpus, CorpusError, LabeledExample};
use crate::embedding::Modality;
use crate::textprep::{clean_text, CleanText};

pub use parse::{extract_string_array, ParseFailure};
pub use stub::StubAugmenter;

pub const REPHRASE_TEMPLATE: &str = include_str!("../../templates/rephrase.txt");
pub const KEYWORDS_TEMPLATE: &str = include_str!("../../templates/keywords.txt");
pub const DEFAULT_VARIANTS: usize = 10;
pub const MAX_KEYWORDS: usize = 8;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("language model endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("malformed response after {attempts} attempt(s): {detail}")]
    MalformedResponse { attempts: usize, detail: String },
    #[error("no usable output left after filtering")]
    EmptyAfterFiltering,
    #[error("ran out of paraphrases: {needed} more minority examples needed")]
    InsufficientVariants { needed: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T, E = AugmentError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmClientConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout_s: f64,
    pub max_retries: usize,
    pub temperature: f64,
    /// Cap on simultaneous requests in [`rephrase_many`].
    pub max_concurrency: usize,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            model_name: "Mistral-7B-Instruct".into(),
            timeout_s: 60.0,
            max_retries: 2,
            temperature: 0.7,
            max_concurrency: 4,
            api_key: None,
        }
    }
}

impl LlmClientConfig {
    /// Defaults overridden by `MODGUARD_LLM_URL` and `MODGUARD_LLM_KEY`.
    pub fn from_env() -> Self {
        Self {
            endpoint_url: std::env::var("MODGUARD_LLM_URL").unwrap_or_default(),
            api_key: std::env::var("MODGUARD_LLM_KEY").ok().filter(|k| !k.is_empty()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.endpoint_url.is_empty() {
            return Err(AugmentError::InvalidInput("no endpoint url (set MODGUARD_LLM_URL)".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(AugmentError::InvalidInput(format!("timeout must be positive, got {}", self.timeout_s)));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(AugmentError::InvalidInput(format!("bad temperature {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RephraseResult {
    pub original: CleanText,
    pub variants: Vec<String>,
    /// Last raw model output, kept for audit.
    pub raw_response: String,
}

/// Something that can paraphrase and extract keywords.
pub trait Augmenter: Send + Sync {
    fn rephrase(&self, text: &CleanText, n: usize) -> Result<RephraseResult>;
    fn extract_keywords(&self, text: &CleanText) -> Result<Vec<String>>;
}

pub(crate) fn check_request(text: &CleanText, n: usize) -> Result<()> {
    if text.is_empty() {
        return Err(AugmentError::InvalidInput("text is empty".into()));
    }
    if n == 0 {
        return Err(AugmentError::InvalidInput("n must be at least 1".into()));
    }
    Ok(())
}

pub fn render(template: &str, text: &str, n: usize) -> String {
    template.replace("{n}", &n.to_string()).replace("{text}", text)
}

pub fn template_hash(template: &str) -> String {
    hex::encode(Sha256::digest(template.as_bytes()))
}

/// Trims, drops empties, duplicates and verbatim copies of `original`, keeps
/// at most `n`.
pub fn filter_variants(original: &str, raw: Vec<String>, n: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    raw.into_iter()
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty() && v != original.trim() && seen.insert(v.clone()))
        .take(n)
        .collect()
}

/// Lowercases, deduplicates in order, keeps at most [`MAX_KEYWORDS`].
pub fn filter_keywords(raw: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    raw.into_iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty() && seen.insert(k.clone()))
        .take(MAX_KEYWORDS)
        .collect()
}

/// Transport failure classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Unreachable(String),
    /// Reached the server but got no usable completion text.
    BadResponse(String),
}

/// One chat-completion round trip returning the first choice's text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, cfg: &LlmClientConfig, prompt: &str) -> std::result::Result<String, TransportError>;
}

/// Blocking HTTP transport for chat-completion style endpoints.
#[derive(Debug, Default, Clone, Copy)]
pub struct HttpTransport;

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

/// First choice text from `choices[0].message.content` or `choices[0].text`.
pub fn completion_text(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    let choice = v.get("choices")?.get(0)?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(|t| t.as_str())
        .map(str::to_string)
}

impl ChatTransport for HttpTransport {
    fn complete(&self, cfg: &LlmClientConfig, prompt: &str) -> std::result::Result<String, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let body = ChatRequest {
            model: &cfg.model_name,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: cfg.temperature,
        };
        let mut req = agent.post(&cfg.endpoint_url);
        if let Some(key) = &cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Unreachable(format!("HTTP {status}")));
        }
        completion_text(&text).ok_or_else(|| TransportError::BadResponse("no choices[0] text".into()))
    }
}

/// Language-model client: renders the fixed templates, parses the JSON
/// array out of the reply, filters it, and retries malformed or failed
/// calls up to `max_retries` times.
pub struct LlmClient {
    pub config: LlmClientConfig,
    transport: Box<dyn ChatTransport>,
}

impl LlmClient {
    pub fn new(config: LlmClientConfig) -> Result<Self> {
        Self::with_transport(config, Box::new(HttpTransport))
    }

    pub fn with_transport(config: LlmClientConfig, transport: Box<dyn ChatTransport>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, transport })
    }

    fn ask<T>(&self, prompt: &str, mut accept: impl FnMut(Vec<String>) -> Result<T>) -> Result<(T, String)> {
        let attempts = self.config.max_retries + 1;
        let mut last = AugmentError::EmptyAfterFiltering;
        for attempt in 1..=attempts {
            last = match self.transport.complete(&self.config, prompt) {
                Err(TransportError::Unreachable(e)) => AugmentError::EndpointUnreachable(e),
                Err(TransportError::BadResponse(detail)) => AugmentError::MalformedResponse { attempts: attempt, detail },
                Ok(raw) => match extract_string_array(&raw) {
                    Err(f) => AugmentError::MalformedResponse { attempts: attempt, detail: f.to_string() },
                    Ok(items) => match accept(items) {
                        Ok(v) => return Ok((v, raw)),
                        Err(e) => e,
                    },
                },
            };
            log::debug!("language model attempt {attempt}/{attempts} failed: {last}");
        }
        Err(last)
    }
}

impl Augmenter for LlmClient {
    fn rephrase(&self, text: &CleanText, n: usize) -> Result<RephraseResult> {
        check_request(text, n)?;
        let prompt = render(REPHRASE_TEMPLATE, text.as_str(), n);
        let (variants, raw_response) = self.ask(&prompt, |items| {
            let v = filter_variants(text.as_str(), items, n);
            if v.is_empty() {
                Err(AugmentError::EmptyAfterFiltering)
            } else {
                Ok(v)
            }
        })?;
        Ok(RephraseResult { original: text.clone(), variants, raw_response })
    }

    fn extract_keywords(&self, text: &CleanText) -> Result<Vec<String>> {
        check_request(text, 1)?;
        let prompt = render(KEYWORDS_TEMPLATE, text.as_str(), MAX_KEYWORDS);
        let (kw, _) = self.ask(&prompt, |items| {
            let k = filter_keywords(items);
            if k.is_empty() {
                Err(AugmentError::EmptyAfterFiltering)
            } else {
                Ok(k)
            }
        })?;
        Ok(kw)
    }
}

/// Rephrases every text, at most `max_concurrency` requests in flight.
/// Results are in input order.
pub fn rephrase_many(
    client: &dyn Augmenter,
    texts: &[CleanText],
    n: usize,
    max_concurrency: usize,
) -> Vec<Result<RephraseResult>> {
    let workers = max_concurrency.max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let out: std::sync::Mutex<Vec<Option<Result<RephraseResult>>>> =
        std::sync::Mutex::new((0..texts.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.min(texts.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= texts.len() {
                    break;
                }
                let r = client.rephrase(&texts[i], n);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(|r| r.expect("every index visited")).collect()
}

/// Examples needed to lift the minority to `target_ratio` of the majority.
pub fn examples_needed(majority: usize, minority: usize, target_ratio: f64) -> usize {
    let want = (target_ratio * majority as f64 - 1e-9).ceil().max(0.0) as usize;
    want.saturating_sub(minority)
}

/// Adds paraphrases of minority-class text examples, one variant per
/// original per round, until `minority / majority >= target_ratio`. New
/// examples are `synthetic` with `source` set to the original id; input
/// examples are kept unchanged and in order.
pub fn balance_corpus(corpus: &Corpus, client: &dyn Augmenter, target_ratio: f64) -> Result<Corpus> {
    if !(target_ratio.is_finite() && target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(AugmentError::InvalidInput(format!("target_ratio must be in (0, 1], got {target_ratio}")));
    }
    let stats = corpus.stats();
    let (minority, majority): (Label, u64) =
        if stats.label_0 <= stats.label_1 { (0, stats.label_1) } else { (1, stats.label_0) };
    let have = stats.label_0.min(stats.label_1) as usize;
    let mut needed = examples_needed(majority as usize, have, target_ratio);
    if needed == 0 {
        return Ok(corpus.clone());
    }
    let originals: Vec<&LabeledExample> = corpus
        .iter()
        .filter(|e| e.label == minority && !e.synthetic && e.modality == Modality::Text)
        .collect();
    if originals.is_empty() {
        return Err(AugmentError::InsufficientVariants { needed });
    }

    let mut ids: HashSet<String> = corpus.iter().map(|e| e.id.clone()).collect();
    let mut cache: Vec<Option<Vec<String>>> = vec![None; originals.len()];
    let mut added = Vec::new();
    let mut round = 0;
    while needed > 0 {
        let mut progressed = false;
        for (o, orig) in originals.iter().enumerate() {
            if needed == 0 {
                break;
            }
            if cache[o].is_none() {
                let text = clean_text(orig.text.as_deref().unwrap_or(""));
                cache[o] = Some(client.rephrase(&text, DEFAULT_VARIANTS)?.variants);
            }
            let Some(variant) = cache[o].as_ref().and_then(|v| v.get(round)) else { continue };
            let cleaned = clean_text(variant);
            if cleaned.is_empty() {
                continue;
            }
            let mut k = round;
            let id = loop {
                let candidate = format!("{}-syn{k}", orig.id);
                if !ids.contains(&candidate) {
                    break candidate;
                }
                k += 1;
            };
            ids.insert(id.clone());
            added.push(LabeledExample {
                synthetic: true,
                source: orig.id.clone(),
                ..LabeledExample::text(id, cleaned.into_string(), minority, "")
            });
            needed -= 1;
            progressed = true;
        }
        if !progressed {
            return Err(AugmentError::InsufficientVariants { needed });
        }
        round += 1;
    }
    let mut examples = corpus.examples().to_vec();
    examples.extend(added);
    Ok(Corpus::new(examples)?)
}
