//! Chat-completion backend.
//!
//! Sends the refinement prompt to `{base_url}/chat/completions` with
//! temperature 0 and pipes the reply through the strict response parser.
//! Every exchange is kept as a [`Transcript`] for audit.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::build_prompt;
use super::response::parse_candidate_response_with;
use super::{CandidateGenerator, CandidateSource, GenerationFailure, RefinementCandidate, RefinementContext};

pub const ENV_BASE_URL: &str = "RULEFORGE_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "RULEFORGE_LLM_API_KEY";
pub const ENV_MODEL: &str = "RULEFORGE_LLM_MODEL";

const SYSTEM_MESSAGE: &str =
    "You are a careful assistant that edits safety rules written in a small formal grammar. Follow the output format exactly.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("missing environment variable(s): {}", .0.join(", "))]
pub struct MissingEnv(pub Vec<&'static str>);

impl LlmConfig {
    /// Reads the three `RULEFORGE_LLM_*` variables through `get`.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<LlmConfig, MissingEnv> {
        let mut missing = Vec::new();
        let mut read = |name: &'static str| {
            let v = get(name).filter(|v| !v.trim().is_empty());
            if v.is_none() {
                missing.push(name);
            }
            v.unwrap_or_default()
        };
        let base_url = read(ENV_BASE_URL);
        let api_key = read(ENV_API_KEY);
        let model = read(ENV_MODEL);
        if !missing.is_empty() {
            return Err(MissingEnv(missing));
        }
        Ok(LlmConfig { base_url, api_key, model, timeout: Duration::from_secs(120) })
    }

    pub fn from_env() -> Result<LlmConfig, MissingEnv> {
        LlmConfig::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub fn build_request(model: &str, prompt: &str) -> Value {
    json!({
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": SYSTEM_MESSAGE},
            {"role": "user", "content": prompt},
        ],
    })
}

/// Extracts `choices[0].message.content`.
pub fn parse_response_body(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    if let Some(err) = v.get("error") {
        return Err(format!("backend error: {err}"));
    }
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "response has no choices[0].message.content".to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub attempt: u32,
    pub request: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct LlmGenerator {
    config: LlmConfig,
    agent: ureq::Agent,
    pub transcripts: Vec<Transcript>,
}

impl LlmGenerator {
    pub fn new(config: LlmConfig) -> LlmGenerator {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LlmGenerator { config, agent, transcripts: Vec::new() }
    }

    fn post(&self, request: &Value) -> Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.config.endpoint())
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(request)
            .map_err(|e| format!("transport error: {e}"))?;
        let status = resp.status();
        let body = resp.body_mut().read_to_string().map_err(|e| format!("transport error: {e}"))?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {body}"));
        }
        Ok(body)
    }
}

impl CandidateGenerator for LlmGenerator {
    fn source(&self) -> CandidateSource {
        CandidateSource::Llm
    }

    fn generate(&mut self, ctx: &RefinementContext, attempt: u32) -> Result<RefinementCandidate, GenerationFailure> {
        let request = build_request(&self.config.model, &build_prompt(ctx));
        let mut transcript = Transcript { attempt, request: request.clone(), response: None, error: None };
        let outcome = self.post(&request).and_then(|body| {
            transcript.response = Some(body.clone());
            parse_response_body(&body)
        });
        let result = match outcome {
            Err(summary) => {
                transcript.error = Some(summary.clone());
                Err(GenerationFailure::Transport { summary })
            }
            Ok(content) => match parse_candidate_response_with(&content, &ctx.odd, &ctx.whitelist) {
                Ok(parsed) => Ok(parsed.into_candidate(&ctx.target.ast, CandidateSource::Llm, attempt)),
                Err(response) => {
                    transcript.error = Some(response.summary.clone());
                    Err(GenerationFailure::Rejected { response })
                }
            },
        };
        self.transcripts.push(transcript);
        result
    }
}
