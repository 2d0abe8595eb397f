//! Automatable refinement metrics: decisiveness gain, semantic validity,
//! grammar compliance and a change-minimality proxy.

use std::collections::BTreeSet;
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::grammar::parser::parse_tokens;
use crate::grammar::{check_vocabulary, parse_rule, tokenize, OddSpec, ParseError, RelOp, Relation, RuleAst, TokenKind};
use crate::semantics::{decisiveness, LabeledRun, PolarizedRule, SemanticsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticValidity {
    pub sv: f64,
    pub n_invalid: usize,
    pub n_pred: usize,
    pub violations: Vec<String>,
}

/// `sv = 1 - n_invalid / n_pred`, a relation being invalid when it carries
/// at least one vocabulary violation.
pub fn semantic_validity(ast: &RuleAst, odd: &OddSpec) -> SemanticValidity {
    let violations = check_vocabulary(ast, odd);
    let invalid: BTreeSet<(usize, usize)> = violations.iter().map(|v| (v.at().disjunct, v.at().relation)).collect();
    let n_pred = ast.relation_count();
    let n_invalid = invalid.len();
    let sv = if n_pred == 0 { 0.0 } else { 1.0 - n_invalid as f64 / n_pred as f64 };
    SemanticValidity { sv, n_invalid, n_pred, violations: violations.iter().map(ToString::to_string).collect() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarCompliance {
    pub gc: f64,
    pub n_viol: usize,
    pub n_tok: usize,
    /// Input had no tokens at all.
    pub empty: bool,
    /// Lexemes counted as violations, in discard order.
    pub discarded: Vec<String>,
}

/// `gc = 1 - n_viol / n_tok`. Garbage tokens are violations outright; the
/// rest are parsed with recovery that drops the offending token (the last
/// one at end of input) and retries, one violation per drop.
pub fn grammar_compliance(raw: &str) -> GrammarCompliance {
    let all = tokenize(raw);
    let n_tok = all.len();
    if n_tok == 0 {
        return GrammarCompliance { gc: 0.0, n_viol: 0, n_tok: 0, empty: true, discarded: Vec::new() };
    }
    let (garbage, mut tokens): (Vec<_>, Vec<_>) = all.into_iter().partition(|t| t.kind == TokenKind::Garbage);
    let mut discarded: Vec<String> = garbage.into_iter().map(|t| t.lexeme).collect();
    while !tokens.is_empty() {
        match parse_tokens(&tokens, raw.len()) {
            Ok(_) => break,
            Err(ParseError { token_index, .. }) => {
                let at = token_index.min(tokens.len() - 1);
                discarded.push(tokens.remove(at).lexeme);
            }
        }
    }
    let n_viol = discarded.len();
    GrammarCompliance { gc: 1.0 - n_viol as f64 / n_tok as f64, n_viol, n_tok, empty: false, discarded }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmBand {
    Low,
    OverConstrained,
    Conservative,
    Optimal,
}

impl CmBand {
    /// Score range `[lo, hi]` of the band.
    pub fn range(self) -> (f64, f64) {
        match self {
            CmBand::Optimal => (1.0, 1.0),
            CmBand::Conservative => (0.7, 0.8),
            CmBand::OverConstrained => (0.4, 0.5),
            CmBand::Low => (0.1, 0.2),
        }
    }
}

impl fmt::Display for CmBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStats {
    pub n_original: usize,
    pub n_refined: usize,
    pub unchanged: usize,
    pub removed_redundant: usize,
    pub removed: usize,
    pub threshold_shifted: usize,
    pub operator_changed: usize,
    pub rewritten: usize,
    pub added_existing_vars: usize,
    pub added_new_vars: usize,
}

impl EditStats {
    pub fn added(&self) -> usize {
        self.added_existing_vars + self.added_new_vars
    }

    /// Original predicates kept verbatim or dropped as redundant.
    pub fn preserved_fraction(&self) -> f64 {
        if self.n_original == 0 {
            return 1.0;
        }
        (self.unchanged + self.removed_redundant) as f64 / self.n_original as f64
    }

    /// Touched predicates over original plus added ones.
    pub fn changed_fraction(&self) -> f64 {
        let total = self.n_original + self.added();
        if total == 0 {
            return 0.0;
        }
        (self.n_original - self.unchanged - self.removed_redundant + self.added()) as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeMinimality {
    pub cm: f64,
    pub band: CmBand,
    pub edit_stats: EditStats,
}

struct Pred<'a> {
    disjunct: usize,
    rel: &'a Relation,
    vars: BTreeSet<&'a str>,
    redundant: bool,
}

fn preds(ast: &RuleAst) -> Vec<Pred<'_>> {
    ast.disjuncts
        .iter()
        .enumerate()
        .flat_map(|(d, conj)| {
            let redundant = conj.redundant_relations();
            conj.relations.iter().enumerate().map(move |(r, rel)| {
                let mut vars = BTreeSet::new();
                rel.collect_vars(&mut vars);
                Pred { disjunct: d, rel, vars, redundant: redundant.contains(&r) }
            })
        })
        .collect()
}

fn norm_op(rel: &Relation) -> RelOp {
    rel.as_bound().map_or(rel.op, |b| b.op)
}

fn same_relation(a: &Relation, b: &Relation) -> bool {
    a == b || matches!((a.as_bound(), b.as_bound()), (Some(x), Some(y)) if x == y)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Match {
    Unchanged,
    Shifted,
    OpChanged,
    Rewritten,
}

type Stage = dyn Fn(&Pred<'_>, &Pred<'_>) -> Option<Match>;

/// Greedy alignment: identical predicates, then same variables and
/// operator, then same variables. Returns a match per refined predicate.
fn align(orig: &[Pred<'_>], refined: &[Pred<'_>]) -> Vec<Option<(usize, Match)>> {
    let mut used = vec![false; orig.len()];
    let mut out: Vec<Option<(usize, Match)>> = vec![None; refined.len()];
    let stages: [&Stage; 3] = [
        &|o, r| same_relation(o.rel, r.rel).then_some(Match::Unchanged),
        &|o, r| {
            (o.vars == r.vars && norm_op(o.rel) == norm_op(r.rel)).then(|| {
                if o.rel.as_bound().is_some() && r.rel.as_bound().is_some() {
                    Match::Shifted
                } else {
                    Match::Rewritten
                }
            })
        },
        &|o, r| {
            (o.vars == r.vars).then(|| match (o.rel.as_bound(), r.rel.as_bound()) {
                (Some(_), Some(_)) => Match::OpChanged,
                _ => Match::Rewritten,
            })
        },
    ];
    for stage in stages {
        for (j, r) in refined.iter().enumerate() {
            if out[j].is_some() {
                continue;
            }
            // prefer a partner in the same disjunct
            let pick = (0..orig.len())
                .filter(|&i| !used[i])
                .filter_map(|i| stage(&orig[i], r).map(|m| (i, m)))
                .min_by_key(|&(i, _)| (orig[i].disjunct != r.disjunct, i));
            if let Some((i, m)) = pick {
                used[i] = true;
                out[j] = Some((i, m));
            }
        }
    }
    out
}

fn sides(ast: &RuleAst, var: &str) -> (bool, bool) {
    ast.relations().filter_map(Relation::as_bound).filter(|b| b.var == var).fold((false, false), |(lo, hi), b| {
        (lo || b.op.is_lower_bound(), hi || b.op.is_upper_bound())
    })
}

pub fn change_minimality(original: &RuleAst, refined: &RuleAst) -> ChangeMinimality {
    let orig = preds(original);
    let refd = preds(refined);
    let matches = align(&orig, &refd);
    let orig_vars: BTreeSet<&str> = original.variables();

    let mut s = EditStats { n_original: orig.len(), n_refined: refd.len(), ..EditStats::default() };
    let mut matched = vec![false; orig.len()];
    let mut touched_vars: BTreeSet<&str> = BTreeSet::new();
    let mut added_vars: BTreeSet<&str> = BTreeSet::new();
    for (j, m) in matches.iter().enumerate() {
        match m {
            Some((i, kind)) => {
                matched[*i] = true;
                match kind {
                    Match::Unchanged => s.unchanged += 1,
                    Match::Shifted => s.threshold_shifted += 1,
                    Match::OpChanged => s.operator_changed += 1,
                    Match::Rewritten => s.rewritten += 1,
                }
                if *kind != Match::Unchanged {
                    touched_vars.extend(refd[j].vars.iter().copied());
                }
            }
            None if refd[j].vars.is_subset(&orig_vars) => {
                s.added_existing_vars += 1;
                added_vars.extend(refd[j].vars.iter().copied());
            }
            None => s.added_new_vars += 1,
        }
    }
    for (p, _) in orig.iter().zip(&matched).filter(|(_, m)| !**m) {
        if p.redundant {
            s.removed_redundant += 1;
        } else {
            s.removed += 1;
        }
    }

    let introduces_new_var = refined.variables().iter().any(|v| !orig_vars.contains(v));
    // a one-sided variable whose bound moved and gained an opposite bound
    let narrowed = added_vars.intersection(&touched_vars).any(|v| {
        let (lo, hi) = sides(original, v);
        lo != hi && sides(refined, v) == (true, true)
    });
    let only_removals_and_shifts = s.operator_changed == 0 && s.rewritten == 0 && s.added() == 0;

    let band = if s.unchanged == s.n_original && s.n_refined == s.n_original {
        CmBand::Optimal
    } else if introduces_new_var {
        CmBand::Low
    } else if narrowed {
        CmBand::OverConstrained
    } else if s.changed_fraction() > 0.5 {
        CmBand::Low
    } else if only_removals_and_shifts && s.preserved_fraction() >= 2.0 / 3.0 {
        CmBand::Optimal
    } else {
        CmBand::Conservative
    };
    let cm = match band {
        CmBand::Optimal => 1.0,
        _ => {
            let (lo, hi) = band.range();
            let mid = (lo + hi) / 2.0;
            mid + (hi - lo) * (s.preserved_fraction() - 0.5)
        }
    };
    ChangeMinimality { cm: crate::decimal::round_to(cm, 4), band, edit_stats: s }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rule_id: String,
    pub dg_before: f64,
    pub dg_after: f64,
    pub dg_gain: f64,
    pub sv: SemanticValidity,
    pub gc: GrammarCompliance,
    pub cm: ChangeMinimality,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("refined rule does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// All metrics for a refinement of `original` given as raw text.
pub fn compute_metrics(
    original: &PolarizedRule,
    refined_text: &str,
    dataset: &[LabeledRun],
    odd: &OddSpec,
    eps_eq: f64,
) -> Result<MetricsReport, MetricsError> {
    let gc = grammar_compliance(refined_text);
    let refined = parse_rule(refined_text)?;
    let after = PolarizedRule::new(original.id.clone(), original.polarity, refined.clone());
    let dg_before = decisiveness(original, dataset, eps_eq)?.dg;
    let dg_after = decisiveness(&after, dataset, eps_eq)?.dg;
    Ok(MetricsReport {
        rule_id: original.id.clone(),
        dg_before,
        dg_after,
        dg_gain: dg_after - dg_before,
        sv: semantic_validity(&refined, odd),
        gc,
        cm: change_minimality(&original.ast, &refined),
    })
}

/// Side-by-side table with GC, SV, I, CM and DG columns. I is never
/// computed and shows `n/a`.
pub fn render_table(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0).max(3);
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>4}  {:>6}  {:<15}  {:>13}\n", "Run", "GC", "SV", "I", "CM", "Band", "DG");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.2}  {:>6.2}  {:>4}  {:>6.2}  {:<15}  {:>5.2} -> {:.2}",
            name, m.gc.gc, m.sv.sv, "n/a", m.cm.cm, m.cm.band, m.dg_before, m.dg_after
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::printer::tests::arb_rule;
    use crate::grammar::{print_rule, OddVariable};
    use proptest::prelude::*;

    fn p(s: &str) -> RuleAst {
        parse_rule(s).unwrap()
    }

    fn arg_odd() -> OddSpec {
        OddSpec::new(vec![OddVariable::new("ARG1", 0.0, 10.0, 1.0), OddVariable::new("ARG2", 0.0, 20.0, 1.0)]).unwrap()
    }

    #[test]
    fn sv_counts() {
        assert_eq!(semantic_validity(&p("(ARG1 > 0) and (ARG3 < 2)"), &arg_odd()).sv, 0.5);
        assert_eq!(semantic_validity(&p("1 < ARG1 < 2"), &arg_odd()).sv, 1.0);
        let both_bad = semantic_validity(&p("(ARG3 > 50)"), &arg_odd());
        assert_eq!((both_bad.n_invalid, both_bad.n_pred, both_bad.violations.len()), (1, 1, 1));
        let out_of_range = semantic_validity(&p("(ARG1 > 50) and (ARG2 < 3)"), &arg_odd());
        assert_eq!((out_of_range.n_invalid, out_of_range.sv), (1, 0.5));
    }

    #[test]
    fn gc_counts() {
        let g = grammar_compliance("(ARG1 > 0) and and (ARG2 > 3)");
        assert_eq!((g.n_viol, g.n_tok), (1, 12));
        assert_eq!(g.discarded, vec!["and".to_string()]);
        let g = grammar_compliance("(dist_front < 5.0) and (ego_speed > 0)");
        assert_eq!((g.gc, g.n_tok), (1.0, 11));
        let empty = grammar_compliance("   ");
        assert!(empty.empty && empty.gc == 0.0);
        let trailing = grammar_compliance("(ARG1 > 0) and");
        assert_eq!(trailing.n_viol, 1);
        let tuple = grammar_compliance("[[('greater_than_func','ARG1','0')]]");
        assert!(tuple.gc < 1.0 && tuple.discarded.iter().any(|l| l.contains('[')));
    }

    #[test]
    fn cm_anchor_examples() {
        let pruned = change_minimality(&p("(ARG2 > 3) and (ARG2 > 5)"), &p("ARG2 > 5"));
        assert_eq!((pruned.band, pruned.cm), (CmBand::Optimal, 1.0));
        assert_eq!(pruned.edit_stats.removed_redundant, 1);
        let upper = change_minimality(&p("ARG2 > 5"), &p("(5 < ARG2) and (ARG2 < 9)"));
        assert_eq!(upper.band, CmBand::Conservative);
        let narrowed = change_minimality(&p("ARG1 > 0"), &p("1 < ARG1 < 2"));
        assert_eq!(narrowed.band, CmBand::OverConstrained);
        assert!((0.4..=0.5).contains(&narrowed.cm));
    }

    #[test]
    fn cm_other_bands() {
        let r1 = p("(dist_front < 5.0) and (ego_speed > 0)");
        let star = change_minimality(&r1, &p("(dist_front < 4.1) and (ego_speed > 0)"));
        assert_eq!(star.edit_stats.threshold_shifted, 1);
        assert_eq!(star.band, CmBand::Conservative);
        let rewrite = change_minimality(&r1, &p("(lane_offset > 1)"));
        assert_eq!(rewrite.band, CmBand::Low);
        assert!((0.1..=0.2).contains(&rewrite.cm));
    }

    #[test]
    fn metrics_on_fixture() {
        let fx = crate::scenario::make_paper_fixture(42).unwrap();
        let m = compute_metrics(
            &fx.baseline_rule,
            "(dist_front < 4.1) and (ego_speed > 0)",
            &fx.dataset,
            &fx.config.odd,
            crate::semantics::DEFAULT_EPS_EQ,
        )
        .unwrap();
        assert_eq!(m.dg_after, 1.0);
        assert_eq!(format!("{:.4}", m.dg_gain), "0.1364");
        assert_eq!((m.sv.sv, m.gc.gc), (1.0, 1.0));
        let table = render_table(&[("local".into(), m)]);
        assert!(table.lines().next().unwrap().contains("CM"));
        assert!(table.contains("n/a"));
    }

    proptest! {
        #[test]
        fn printed_rules_are_compliant(ast in arb_rule()) {
            let g = grammar_compliance(&print_rule(&ast));
            prop_assert_eq!(g.n_viol, 0);
            prop_assert_eq!(g.gc, 1.0);
        }

        #[test]
        fn cm_identity(ast in arb_rule()) {
            let c = change_minimality(&ast, &ast);
            prop_assert_eq!(c.band, CmBand::Optimal);
            prop_assert_eq!(c.cm, 1.0);
        }

        #[test]
        fn scores_match_counts(ast in arb_rule()) {
            let sv = semantic_validity(&ast, &arg_odd());
            prop_assert_eq!(sv.sv, 1.0 - sv.n_invalid as f64 / sv.n_pred as f64);
            let c = change_minimality(&p("(ARG1 > 1) and (ARG2 < 4)"), &ast);
            prop_assert!((0.0..=1.0).contains(&c.cm));
        }

        #[test]
        fn dropping_invalid_predicate_never_lowers_sv(ast in arb_rule()) {
            let odd = arg_odd();
            let before = semantic_validity(&ast, &odd);
            let violations = check_vocabulary(&ast, &odd);
            if let Some(v) = violations.first() {
                let at = v.at();
                let mut smaller = ast.clone();
                smaller.disjuncts[at.disjunct].relations.remove(at.relation);
                smaller.disjuncts.retain(|c| !c.relations.is_empty());
                if !smaller.disjuncts.is_empty() {
                    prop_assert!(semantic_validity(&smaller, &odd).sv >= before.sv);
                }
            }
        }
    }
}
