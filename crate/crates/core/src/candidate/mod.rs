//! Refinement candidates: context, generators and change logs.
//!
//! Three generators share the [`CandidateGenerator`] trait: a deterministic
//! grammar-mutation search, an HTTP chat-completion backend and a scripted
//! mock. Whatever the source, candidate text goes through
//! [`parse_candidate_response`] or is built directly as an AST, so every
//! returned candidate is grammar-valid and vocabulary-clean.

pub mod deterministic;
pub mod edit;
pub mod llm;
pub mod mock;
pub mod prompt;
pub mod response;

use serde::{Deserialize, Serialize};

pub use deterministic::DeterministicGenerator;
pub use edit::{classify_replacement, diff, replay, Edit, EditKind, EditPath, ReplayError};
pub use llm::{LlmConfig, LlmGenerator, Transcript};
pub use mock::MockGenerator;
pub use prompt::{build_prompt, FORMAT_EXEMPLAR};
pub use response::{parse_candidate_response, ParsedResponse, RejectedResponse, RejectionKind};

use crate::counterfactual::EvidenceFile;
use crate::grammar::{OddSpec, RuleAst, Whitelist, GRAMMAR_DOC};
use crate::semantics::{LabeledRun, PolarizedRule, DEFAULT_EPS_EQ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    Deterministic,
    #[serde(rename = "LLM")]
    Llm,
    Mock,
}

/// Everything a generator may look at for one refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementContext {
    pub grammar_doc: String,
    pub odd: OddSpec,
    pub whitelist: Whitelist,
    pub target: PolarizedRule,
    pub historical: Vec<PolarizedRule>,
    pub evidence: EvidenceFile,
    /// Labeled runs used to score deterministic candidates.
    pub dataset: Vec<LabeledRun>,
    pub eps_eq: f64,
    pub failure_summary: Option<String>,
    /// Candidates already rejected in this loop.
    pub rejected: Vec<RuleAst>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("target rule `{0}` also appears among the historical rules")]
    TargetInHistorical(String),
    #[error("historical rule id `{0}` appears twice")]
    DuplicateHistorical(String),
}

impl RefinementContext {
    pub fn new(
        target: PolarizedRule,
        historical: Vec<PolarizedRule>,
        evidence: EvidenceFile,
        odd: OddSpec,
        dataset: Vec<LabeledRun>,
    ) -> Result<RefinementContext, ContextError> {
        for (i, h) in historical.iter().enumerate() {
            if h.id == target.id {
                return Err(ContextError::TargetInHistorical(h.id.clone()));
            }
            if historical[..i].iter().any(|o| o.id == h.id) {
                return Err(ContextError::DuplicateHistorical(h.id.clone()));
            }
        }
        Ok(RefinementContext {
            grammar_doc: GRAMMAR_DOC.to_string(),
            odd,
            whitelist: Whitelist::default(),
            target,
            historical,
            evidence,
            dataset,
            eps_eq: DEFAULT_EPS_EQ,
            failure_summary: None,
            rejected: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementCandidate {
    #[serde(rename = "rule", with = "crate::grammar::text_serde")]
    pub ast: RuleAst,
    pub explanation: String,
    pub change_log: Vec<Edit>,
    pub source: CandidateSource,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GenerationFailure {
    NoEvidence,
    NoImprovingEdit { summary: String },
    Transport { summary: String },
    Rejected { response: RejectedResponse },
}

impl GenerationFailure {
    pub fn summary(&self) -> String {
        match self {
            GenerationFailure::NoEvidence => "evidence has no counterfactual pairs".into(),
            GenerationFailure::NoImprovingEdit { summary } | GenerationFailure::Transport { summary } => {
                summary.clone()
            }
            GenerationFailure::Rejected { response } => response.summary.clone(),
        }
    }
}

impl std::fmt::Display for GenerationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.summary())
    }
}

impl std::error::Error for GenerationFailure {}

pub trait CandidateGenerator {
    fn source(&self) -> CandidateSource;

    /// `attempt` counts from 1.
    fn generate(&mut self, ctx: &RefinementContext, attempt: u32) -> Result<RefinementCandidate, GenerationFailure>;
}

pub fn generate_candidate(
    generator: &mut dyn CandidateGenerator,
    ctx: &RefinementContext,
    attempt: u32,
) -> Result<RefinementCandidate, GenerationFailure> {
    if ctx.evidence.pairs.is_empty() {
        return Err(GenerationFailure::NoEvidence);
    }
    generator.generate(ctx, attempt)
}
