//! Dataset-level checks on a candidate that replaces the target rule.

use serde::{Deserialize, Serialize};

use crate::grammar::RuleAst;
use crate::semantics::{classify_dataset, decisiveness, ConsistencyVerdict, LabeledRun, PolarizedRule, SemanticsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub mismatch_before: usize,
    pub mismatch_after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreservedReport {
    pub broken_rule_ids: Vec<String>,
    /// Runs where the candidate is Inconsistent and the target was not.
    pub new_inconsistencies: usize,
    pub new_inconsistent_runs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckError {
    #[error("target rule `{0}` is not in the rule set")]
    TargetNotInRuleset(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

pub fn check_target_resolution(
    candidate: &RuleAst,
    target: &PolarizedRule,
    dataset: &[LabeledRun],
    eps_eq: f64,
) -> Result<ResolutionReport, SemanticsError> {
    let substituted = PolarizedRule::new(target.id.clone(), target.polarity, candidate.clone());
    Ok(ResolutionReport {
        mismatch_before: decisiveness(target, dataset, eps_eq)?.n_mismatch,
        mismatch_after: decisiveness(&substituted, dataset, eps_eq)?.n_mismatch,
    })
}

/// Substitutes `candidate` for the rule with `target_id` and re-classifies.
///
/// A rule's own verdicts never depend on its neighbours, so breakage is
/// judged on the set: a rule is broken when, on a run where it was
/// Consistent, the substituted rule now holds with the opposite verdict
/// while the original target did not.
pub fn check_preserved_consistency(
    candidate: &RuleAst,
    target_id: &str,
    ruleset: &[PolarizedRule],
    dataset: &[LabeledRun],
    eps_eq: f64,
) -> Result<PreservedReport, CheckError> {
    let target = ruleset
        .iter()
        .find(|r| r.id == target_id)
        .ok_or_else(|| CheckError::TargetNotInRuleset(target_id.to_string()))?;
    let substituted = PolarizedRule::new(target.id.clone(), target.polarity, candidate.clone());
    let before = classify_dataset(target, dataset, eps_eq)?;
    let after = classify_dataset(&substituted, dataset, eps_eq)?;
    let newly_bad: Vec<usize> = (0..dataset.len())
        .filter(|&i| after[i] == ConsistencyVerdict::Inconsistent && before[i] != ConsistencyVerdict::Inconsistent)
        .collect();

    let mut broken_rule_ids = Vec::new();
    for rule in ruleset.iter().filter(|r| r.id != target_id && r.polarity != target.polarity) {
        let verdicts = classify_dataset(rule, dataset, eps_eq)?;
        if newly_bad.iter().any(|&i| verdicts[i] == ConsistencyVerdict::Consistent) {
            broken_rule_ids.push(rule.id.clone());
        }
    }
    Ok(PreservedReport { broken_rule_ids, new_inconsistencies: newly_bad.len(), new_inconsistent_runs: newly_bad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_rule;
    use crate::scenario::make_paper_fixture;
    use crate::semantics::{Outcome, Polarity, DEFAULT_EPS_EQ};

    #[test]
    fn refined_rule_preserves_everything() {
        let fx = make_paper_fixture(42).unwrap();
        let star = parse_rule("(dist_front < 4.1) and (ego_speed > 0)").unwrap();
        let ruleset = fx.ruleset();
        let report = check_preserved_consistency(&star, "r1", &ruleset, &fx.dataset, DEFAULT_EPS_EQ).unwrap();
        assert!(report.broken_rule_ids.is_empty());
        assert_eq!(report.new_inconsistencies, 0);
        let res = check_target_resolution(&star, &fx.baseline_rule, &fx.dataset, DEFAULT_EPS_EQ).unwrap();
        assert_eq!(res, ResolutionReport { mismatch_before: 27, mismatch_after: 0 });
    }

    #[test]
    fn identity_substitution() {
        let fx = make_paper_fixture(42).unwrap();
        let base = &fx.baseline_rule;
        let report = check_preserved_consistency(&base.ast, "r1", &fx.ruleset(), &fx.dataset, DEFAULT_EPS_EQ).unwrap();
        assert_eq!(report.new_inconsistencies, 0);
        let res = check_target_resolution(&base.ast, base, &fx.dataset, DEFAULT_EPS_EQ).unwrap();
        assert_eq!(res.mismatch_before, res.mismatch_after);
    }

    #[test]
    fn over_broad_candidate() {
        let fx = make_paper_fixture(42).unwrap();
        let broad = parse_rule("(ego_speed > 0)").unwrap();
        let report = check_preserved_consistency(&broad, "r1", &fx.ruleset(), &fx.dataset, DEFAULT_EPS_EQ).unwrap();
        // Fail runs the broad rule newly covers: ego > 0 outside the baseline's dist_front < 5
        let expected = fx
            .dataset
            .iter()
            .filter(|r| r.y == Outcome::Fail && r.x["ego_speed"] > 0.0 && r.x["dist_front"] >= 5.0)
            .count();
        assert!(expected > 0);
        assert_eq!(report.new_inconsistencies, expected);
        // f1 always co-holds on such runs; f2 only if one is deep and fast
        let f2_hit = fx.dataset.iter().any(|r| {
            r.y == Outcome::Fail && r.x["dist_front"] >= 10.0 && r.x["ego_speed"] >= 10.0
        });
        let mut expected_ids = vec!["f1".to_string()];
        if f2_hit {
            expected_ids.push("f2".to_string());
        }
        assert_eq!(report.broken_rule_ids, expected_ids);
    }

    #[test]
    fn widening_increases_mismatches() {
        let fx = make_paper_fixture(42).unwrap();
        let wide = parse_rule("(dist_front < 50) and (ego_speed > 0)").unwrap();
        let res = check_target_resolution(&wide, &fx.baseline_rule, &fx.dataset, DEFAULT_EPS_EQ).unwrap();
        assert!(res.mismatch_after > res.mismatch_before);
    }

    #[test]
    fn missing_target() {
        let fx = make_paper_fixture(1).unwrap();
        let other = PolarizedRule::new("x", Polarity::Fail, parse_rule("(ego_speed > 1)").unwrap());
        assert_eq!(
            check_preserved_consistency(&other.ast, "nope", &fx.ruleset(), &fx.dataset, DEFAULT_EPS_EQ),
            Err(CheckError::TargetNotInRuleset("nope".into()))
        );
    }
}
