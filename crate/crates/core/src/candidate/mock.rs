//! Scripted generator for offline tests.

use serde::{Deserialize, Serialize};

use super::response::parse_candidate_response_with;
use super::{CandidateGenerator, CandidateSource, GenerationFailure, RefinementCandidate, RefinementContext};

/// Replays raw responses in order; the last one repeats once the script
/// runs out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockGenerator {
    pub responses: Vec<String>,
    #[serde(skip)]
    next: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MockScriptError {
    #[error("mock script: {0}")]
    Json(String),
    #[error("mock script has no responses")]
    Empty,
}

impl MockGenerator {
    pub fn new(responses: Vec<String>) -> Result<MockGenerator, MockScriptError> {
        if responses.is_empty() {
            return Err(MockScriptError::Empty);
        }
        Ok(MockGenerator { responses, next: 0 })
    }

    /// Accepts a bare JSON array of strings or `{"responses": [...]}`.
    pub fn from_json(text: &str) -> Result<MockGenerator, MockScriptError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Script {
            Bare(Vec<String>),
            Wrapped { responses: Vec<String> },
        }
        let script: Script = serde_json::from_str(text).map_err(|e| MockScriptError::Json(e.to_string()))?;
        match script {
            Script::Bare(r) | Script::Wrapped { responses: r } => MockGenerator::new(r),
        }
    }
}

impl CandidateGenerator for MockGenerator {
    fn source(&self) -> CandidateSource {
        CandidateSource::Mock
    }

    fn generate(&mut self, ctx: &RefinementContext, attempt: u32) -> Result<RefinementCandidate, GenerationFailure> {
        let raw = &self.responses[self.next.min(self.responses.len() - 1)];
        self.next += 1;
        match parse_candidate_response_with(raw, &ctx.odd, &ctx.whitelist) {
            Ok(parsed) => Ok(parsed.into_candidate(&ctx.target.ast, CandidateSource::Mock, attempt)),
            Err(response) => Err(GenerationFailure::Rejected { response }),
        }
    }
}
