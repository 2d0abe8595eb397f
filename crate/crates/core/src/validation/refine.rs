//! The generate → validate → re-prompt loop.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::checks::{check_preserved_consistency, check_target_resolution, CheckError, PreservedReport, ResolutionReport};
use super::contradiction::{check_contradiction, ContradictionBudget, ContradictionStatus};
use crate::candidate::edit::Edit;
use crate::candidate::{
    generate_candidate, CandidateGenerator, CandidateSource, ContextError, GenerationFailure, RefinementContext,
};
use crate::counterfactual::{build_evidence, EvidenceError, Oracle, SearchLimits};
use crate::grammar::{check_vocabulary_with, print_rule, OddSpec, RuleAst};
use crate::semantics::{decisiveness, Binding, LabeledRun, PolarizedRule, SemanticsError, DEFAULT_EPS_EQ};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub max_attempts: u32,
    pub limits: SearchLimits,
    pub contradiction: ContradictionBudget,
    pub eps_eq: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            max_attempts: 5,
            limits: SearchLimits::default(),
            contradiction: ContradictionBudget::default(),
            eps_eq: DEFAULT_EPS_EQ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionReport {
    pub status: ContradictionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Binding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opposing_rule_id: Option<String>,
}

/// Outcome of one attempt. Stage fields stay `None` when an earlier stage
/// rejected the candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub attempt: u32,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_failure: Option<GenerationFailure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contradiction: Option<ContradictionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preserved: Option<PreservedReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ResolutionReport>,
    pub new_inconsistencies: Option<usize>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_summary: Option<String>,
}

impl ValidationReport {
    fn new(attempt: u32, source: CandidateSource) -> ValidationReport {
        ValidationReport {
            attempt,
            source,
            candidate: None,
            generation_failure: None,
            vocabulary: Vec::new(),
            contradiction: None,
            preserved: None,
            resolution: None,
            new_inconsistencies: None,
            accepted: false,
            failure_summary: None,
        }
    }

    fn reject(mut self, summary: String) -> ValidationReport {
        self.failure_summary = Some(summary);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub rule_id: String,
    #[serde(with = "crate::grammar::text_serde")]
    pub original: RuleAst,
    #[serde(with = "crate::grammar::text_serde")]
    pub refined: RuleAst,
    pub change_log: Vec<Edit>,
    pub explanation: String,
    pub attempts: u32,
    pub dg_before: f64,
    pub dg_after: f64,
    pub reports: Vec<ValidationReport>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("rule `{0}` is not inconsistent on the dataset")]
    NotInconsistent(String),
    #[error("target rule `{0}` is not in the rule set")]
    TargetNotInRuleset(String),
    #[error("max_attempts must be at least 1")]
    NoAttempts,
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("refinement exhausted after {} attempt(s)", reports.len())]
    Exhausted { reports: Vec<ValidationReport> },
}

impl From<CheckError> for RefineError {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::TargetNotInRuleset(id) => RefineError::TargetNotInRuleset(id),
            CheckError::Semantics(e) => RefineError::Semantics(e),
        }
    }
}

/// Everything the loop needs besides the generator.
pub struct RefineInputs<'a> {
    pub target_id: &'a str,
    pub ruleset: &'a [PolarizedRule],
    pub dataset: &'a [LabeledRun],
    pub oracle: &'a dyn Oracle,
    pub odd: &'a OddSpec,
    pub dataset_ref: &'a str,
}

/// Builds the evidence and refinement context for the target.
pub fn prepare(inputs: &RefineInputs<'_>, config: &RefineConfig) -> Result<RefinementContext, RefineError> {
    let target = inputs
        .ruleset
        .iter()
        .find(|r| r.id == inputs.target_id)
        .ok_or_else(|| RefineError::TargetNotInRuleset(inputs.target_id.to_string()))?;
    if decisiveness(target, inputs.dataset, config.eps_eq)?.n_mismatch == 0 {
        return Err(RefineError::NotInconsistent(target.id.clone()));
    }
    let evidence = build_evidence(
        target,
        inputs.dataset,
        inputs.oracle,
        inputs.odd,
        config.limits,
        config.eps_eq,
        inputs.dataset_ref,
    )?;
    let historical = inputs.ruleset.iter().filter(|r| r.id != target.id).cloned().collect();
    let mut ctx =
        RefinementContext::new(target.clone(), historical, evidence, inputs.odd.clone(), inputs.dataset.to_vec())?;
    ctx.eps_eq = config.eps_eq;
    Ok(ctx)
}

/// Runs the loop with a context from [`prepare`].
pub fn refine_with_context(
    ctx: &mut RefinementContext,
    ruleset: &[PolarizedRule],
    generator: &mut dyn CandidateGenerator,
    config: &RefineConfig,
) -> Result<RefinementOutcome, RefineError> {
    if config.max_attempts == 0 {
        return Err(RefineError::NoAttempts);
    }
    let target = ctx.target.clone();
    let opposing: Vec<PolarizedRule> =
        ruleset.iter().filter(|r| r.id != target.id && r.polarity != target.polarity).cloned().collect();
    let seeds: Vec<Binding> = ctx.dataset.iter().map(|r| r.x.clone()).collect();
    let dg_before = decisiveness(&target, &ctx.dataset, ctx.eps_eq)?.dg;

    let mut reports = Vec::new();
    for attempt in 1..=config.max_attempts {
        let mut report = ValidationReport::new(attempt, generator.source());
        let candidate = match generate_candidate(generator, ctx, attempt) {
            Ok(c) => c,
            Err(failure) => {
                let summary = failure.summary();
                report.generation_failure = Some(failure);
                reports.push(report.reject(summary.clone()));
                ctx.failure_summary = Some(summary);
                continue;
            }
        };
        let ast = candidate.ast.clone();
        report.candidate = Some(print_rule(&ast));

        let report = validate_candidate(report, &ast, &target, ruleset, &opposing, &seeds, ctx, config)?;
        if report.accepted {
            reports.push(report);
            let substituted = PolarizedRule::new(target.id.clone(), target.polarity, ast.clone());
            let dg_after = decisiveness(&substituted, &ctx.dataset, ctx.eps_eq)?.dg;
            return Ok(RefinementOutcome {
                rule_id: target.id.clone(),
                original: target.ast.clone(),
                refined: ast,
                change_log: candidate.change_log,
                explanation: candidate.explanation,
                attempts: attempt,
                dg_before,
                dg_after,
                reports,
            });
        }
        ctx.failure_summary = report.failure_summary.clone();
        ctx.rejected.push(ast);
        reports.push(report);
    }
    Err(RefineError::Exhausted { reports })
}

#[allow(clippy::too_many_arguments)]
fn validate_candidate(
    mut report: ValidationReport,
    ast: &RuleAst,
    target: &PolarizedRule,
    ruleset: &[PolarizedRule],
    opposing: &[PolarizedRule],
    seeds: &[Binding],
    ctx: &RefinementContext,
    config: &RefineConfig,
) -> Result<ValidationReport, RefineError> {
    let violations = check_vocabulary_with(ast, &ctx.odd, &ctx.whitelist);
    if !violations.is_empty() {
        report.vocabulary = violations.iter().map(ToString::to_string).collect();
        let summary = format!("vocabulary violation: {}", report.vocabulary.join("; "));
        return Ok(report.reject(summary));
    }

    let candidate = PolarizedRule::new(target.id.clone(), target.polarity, ast.clone());
    let checks = check_contradiction(&candidate, opposing, &ctx.odd, &config.contradiction, seeds, ctx.eps_eq)
        .expect("opposing rules are filtered by polarity");
    match checks.into_iter().find(|c| c.status != ContradictionStatus::Clear) {
        Some(bad) => {
            let summary = match (&bad.status, &bad.witness) {
                (ContradictionStatus::Flagged, Some(w)) => format!(
                    "contradiction: the candidate and {} rule `{}` both hold at {}",
                    target.polarity.opposite().as_str(),
                    bad.opposing_rule_id,
                    format_binding(w)
                ),
                _ => format!(
                    "contradiction: overlap with {} rule `{}` could not be ruled out",
                    target.polarity.opposite().as_str(),
                    bad.opposing_rule_id
                ),
            };
            report.contradiction = Some(ContradictionReport {
                status: bad.status,
                witness: bad.witness,
                opposing_rule_id: Some(bad.opposing_rule_id),
            });
            return Ok(report.reject(summary));
        }
        None => {
            report.contradiction =
                Some(ContradictionReport { status: ContradictionStatus::Clear, witness: None, opposing_rule_id: None })
        }
    }

    let preserved = check_preserved_consistency(ast, &target.id, ruleset, &ctx.dataset, ctx.eps_eq)?;
    let resolution = check_target_resolution(ast, target, &ctx.dataset, ctx.eps_eq)?;
    report.new_inconsistencies = Some(preserved.new_inconsistencies);
    report.resolution = Some(resolution);
    let broken = preserved.broken_rule_ids.clone();
    let new_bad = preserved.new_inconsistencies;
    report.preserved = Some(preserved);

    if !broken.is_empty() {
        return Ok(report.reject(format!("preserved consistency: breaks rule(s) {}", broken.join(", "))));
    }
    if resolution.mismatch_after >= resolution.mismatch_before {
        return Ok(report.reject(format!(
            "resolution: mismatches {} -> {}, no reduction",
            resolution.mismatch_before, resolution.mismatch_after
        )));
    }
    if new_bad > 0 {
        return Ok(report.reject(format!("semantic validation: {new_bad} new inconsistent run(s)")));
    }
    report.accepted = true;
    Ok(report)
}

fn format_binding(b: &Binding) -> String {
    let parts: Vec<String> = b.iter().map(|(k, v)| format!("{k}={}", crate::grammar::format_number(*v))).collect();
    format!("({})", parts.join(", "))
}

/// Evidence, context and loop in one call.
pub fn refine(
    inputs: &RefineInputs<'_>,
    generator: &mut dyn CandidateGenerator,
    config: &RefineConfig,
) -> Result<RefinementOutcome, RefineError> {
    let mut ctx = prepare(inputs, config)?;
    refine_with_context(&mut ctx, inputs.ruleset, generator, config)
}

fn render_attempt(out: &mut String, r: &ValidationReport) {
    let verdict = if r.accepted { "accepted" } else { "rejected" };
    let _ = writeln!(out, "Attempt {} ({:?}): {verdict}", r.attempt, r.source);
    if let Some(c) = &r.candidate {
        let _ = writeln!(out, "  candidate: {c}");
    }
    if let Some(c) = &r.contradiction {
        let _ = writeln!(out, "  contradiction: {:?}", c.status);
    }
    if let Some(res) = &r.resolution {
        let _ = writeln!(out, "  mismatches: {} -> {}", res.mismatch_before, res.mismatch_after);
    }
    if let Some(n) = r.new_inconsistencies {
        let _ = writeln!(out, "  new inconsistencies: {n}");
    }
    if let Some(s) = &r.failure_summary {
        let _ = writeln!(out, "  failure: {s}");
    }
}

/// Human-readable change log, explanation and attempt history.
pub fn render_report(outcome: &RefinementOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Rule {}", outcome.rule_id);
    let _ = writeln!(out, "  original: {}", print_rule(&outcome.original));
    let _ = writeln!(out, "  refined:  {}", print_rule(&outcome.refined));
    let _ = writeln!(out, "  DG: {:.4} -> {:.4}", outcome.dg_before, outcome.dg_after);
    let _ = writeln!(out, "\nChange log:");
    for edit in &outcome.change_log {
        let _ = writeln!(out, "  - {edit}");
    }
    let _ = writeln!(out, "\nExplanation:\n  {}\n", outcome.explanation);
    for r in &outcome.reports {
        render_attempt(&mut out, r);
    }
    out
}

/// Attempt history for a loop that ran out of attempts.
pub fn render_exhausted(reports: &[ValidationReport]) -> String {
    let mut out = format!("Refinement exhausted after {} attempt(s)\n", reports.len());
    for r in reports {
        render_attempt(&mut out, r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidate::{DeterministicGenerator, MockGenerator};
    use crate::grammar::parse_rule;
    use crate::scenario::{make_paper_fixture, Fixture, SafetyOracle};

    fn run(fx: &Fixture, generator: &mut dyn CandidateGenerator, max_attempts: u32) -> Result<RefinementOutcome, RefineError> {
        let ruleset = fx.ruleset();
        let oracle = SafetyOracle::new(fx.config.clone());
        let inputs = RefineInputs {
            target_id: "r1",
            ruleset: &ruleset,
            dataset: &fx.dataset,
            oracle: &oracle,
            odd: &fx.config.odd,
            dataset_ref: "fixture",
        };
        refine(&inputs, generator, &RefineConfig { max_attempts, ..RefineConfig::default() })
    }

    #[test]
    fn deterministic_accepts_first_attempt() {
        let fx = make_paper_fixture(42).unwrap();
        let out = run(&fx, &mut DeterministicGenerator, 5).unwrap();
        assert_eq!(out.attempts, 1);
        assert_eq!(out.refined, parse_rule("(dist_front < 4.1) and (ego_speed > 0)").unwrap());
        assert_eq!(out.dg_after, 1.0);
        assert_eq!(format!("{:.2}", out.dg_before), "0.86");
        let r = &out.reports[0];
        assert!(r.accepted);
        assert_eq!(r.contradiction.as_ref().unwrap().status, ContradictionStatus::Clear);
        let text = render_report(&out);
        assert!(text.contains("ThresholdAdjust"), "{text}");
    }

    #[test]
    fn mock_recovers_on_second_attempt() {
        let fx = make_paper_fixture(42).unwrap();
        let mut mock =
            MockGenerator::new(vec!["RULE: (ARG3 > 1)".into(), "RULE: (dist_front < 4.1) and (ego_speed > 0)".into()]).unwrap();
        let out = run(&fx, &mut mock, 5).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(out.reports.len(), 2);
        assert!(out.reports[0].failure_summary.as_deref().unwrap().contains("UnknownVariable"));
    }

    #[test]
    fn garbage_exhausts() {
        let fx = make_paper_fixture(42).unwrap();
        let mut mock = MockGenerator::new(vec!["[['ARG1', '>', 0], ['ARG2', '<', 5]]".into()]).unwrap();
        match run(&fx, &mut mock, 3) {
            Err(RefineError::Exhausted { reports }) => {
                assert_eq!(reports.len(), 3);
                assert!(reports.iter().all(|r| !r.accepted && r.failure_summary.is_some()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_candidate_is_flagged() {
        let fx = make_paper_fixture(42).unwrap();
        let mut mock = MockGenerator::new(vec!["RULE: (dist_front < 6) and (ego_speed > 0)".into()]).unwrap();
        let Err(RefineError::Exhausted { reports }) = run(&fx, &mut mock, 1) else { panic!() };
        let c = reports[0].contradiction.as_ref().unwrap();
        assert_eq!(c.status, ContradictionStatus::Flagged);
        assert_eq!(c.opposing_rule_id.as_deref(), Some("f1"));
        let w = c.witness.as_ref().unwrap();
        assert!(w["dist_front"] > 5.0 && w["dist_front"] < 6.0 && w["ego_speed"] > 0.0);
    }

    #[test]
    fn consistent_target_is_refused() {
        let fx = make_paper_fixture(42).unwrap();
        let mut ruleset = fx.ruleset();
        ruleset[0].ast = parse_rule("(dist_front < 4.1) and (ego_speed > 0)").unwrap();
        let oracle = SafetyOracle::new(fx.config.clone());
        let inputs = RefineInputs {
            target_id: "r1",
            ruleset: &ruleset,
            dataset: &fx.dataset,
            oracle: &oracle,
            odd: &fx.config.odd,
            dataset_ref: "fixture",
        };
        assert_eq!(
            refine(&inputs, &mut DeterministicGenerator, &RefineConfig::default()),
            Err(RefineError::NotInconsistent("r1".into()))
        );
    }
}
