//! Offline generator: single grammar edits guided by counterfactual pairs.
//!
//! Edits are enumerated in a fixed order (threshold moves, operator
//! strictness flips, added bounds, removals), each candidate has redundant
//! bounds pruned, and the winner minimizes dataset mismatches, then change
//! log length, then enumeration order.

use std::fmt::Write;

use super::edit::diff;
use super::{CandidateGenerator, CandidateSource, GenerationFailure, RefinementCandidate, RefinementContext};
use crate::counterfactual::EvidencePair;
use crate::decimal;
use crate::grammar::{check_vocabulary_with, format_number, print_relation, Conjunct, Expr, RelOp, Relation, RuleAst};
use crate::semantics::{decisiveness, PolarizedRule};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeterministicGenerator;

/// Midpoint of `a` and `b` at the step's decimal precision, with one more
/// place when rounding lands on either end.
pub fn midpoint(a: f64, b: f64, step: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mid = (a + b) / 2.0;
    let places = decimal::places(step).max(decimal::places(a)).max(decimal::places(b));
    let m = decimal::round_to(mid, places);
    if lo < m && m < hi {
        m
    } else {
        decimal::round_to(mid, places + 1)
    }
}

struct Proposal {
    ast: RuleAst,
    note: String,
}

fn replace_relation(ast: &RuleAst, d: usize, r: usize, rel: Relation) -> RuleAst {
    let mut out = ast.clone();
    out.disjuncts[d].relations[r] = rel;
    out
}

fn bound_positions<'a>(ast: &'a RuleAst, var: &'a str) -> impl Iterator<Item = (usize, usize, &'a Relation)> + 'a {
    ast.disjuncts.iter().enumerate().flat_map(move |(d, c)| {
        c.relations
            .iter()
            .enumerate()
            .filter(move |(_, rel)| rel.as_bound().is_some_and(|b| b.var == var))
            .map(move |(r, rel)| (d, r, rel))
    })
}

fn pair_note(ep: &EvidencePair, f: &str) -> String {
    let p = &ep.pair;
    format!(
        "{f} = {} ({}) vs {} ({}) in run {}",
        format_number(p.x[f]),
        p.y,
        format_number(p.x_cf[f]),
        p.y_cf,
        ep.run_index
    )
}

fn proposals(ctx: &RefinementContext) -> Vec<Proposal> {
    let target = &ctx.target.ast;
    let mut pairs: Vec<&EvidencePair> = ctx.evidence.pairs.iter().collect();
    pairs.sort_by_key(|p| (p.pair.l1_steps, p.run_index));
    // (pair, feature, midpoint) for every changed ODD feature
    let mut changes = Vec::new();
    for ep in &pairs {
        for (f, _) in ep.pair.changed_features() {
            if let Some(var) = ctx.odd.get(f) {
                changes.push((*ep, f, midpoint(ep.pair.x[f], ep.pair.x_cf[f], var.step)));
            }
        }
    }

    let mut out = Vec::new();
    for &(ep, f, m) in &changes {
        for (d, r, rel) in bound_positions(target, f) {
            if let Some(moved) = rel.with_constant(m) {
                let note = format!(
                    "moved {} to {} at the midpoint of {}",
                    print_relation(rel),
                    print_relation(&moved),
                    pair_note(ep, f)
                );
                out.push(Proposal { ast: replace_relation(target, d, r, moved), note });
            }
        }
    }
    for &(ep, f, _) in &changes {
        for (d, r, rel) in bound_positions(target, f) {
            if let Some(op) = rel.op.toggled_strictness() {
                let flipped = Relation::new(rel.lhs.clone(), op, rel.rhs.clone());
                let note = format!("replaced {} with {} ({})", print_relation(rel), print_relation(&flipped), pair_note(ep, f));
                out.push(Proposal { ast: replace_relation(target, d, r, flipped), note });
            }
        }
    }
    for &(ep, f, m) in &changes {
        let op = if ep.pair.x_cf[f] < ep.pair.x[f] { RelOp::Lt } else { RelOp::Gt };
        let added = Relation::new(Expr::var(f), op, Expr::Const(m));
        for d in 0..target.disjuncts.len() {
            let mut ast = target.clone();
            ast.disjuncts[d].relations.push(added.clone());
            let note = format!("added {} to disjunct {d} ({})", print_relation(&added), pair_note(ep, f));
            out.push(Proposal { ast, note });
        }
    }
    for (d, conj) in target.disjuncts.iter().enumerate() {
        if conj.relations.len() > 1 {
            for r in 0..conj.relations.len() {
                let mut ast = target.clone();
                let removed = ast.disjuncts[d].relations.remove(r);
                out.push(Proposal { ast, note: format!("removed {}", print_relation(&removed)) });
            }
        }
    }
    if target.disjuncts.len() > 1 {
        for d in 0..target.disjuncts.len() {
            let mut ast = target.clone();
            ast.disjuncts.remove(d);
            out.push(Proposal { ast, note: format!("removed disjunct {d}") });
        }
    }
    out
}

fn pruned(ast: &RuleAst) -> RuleAst {
    RuleAst::new(ast.disjuncts.iter().map(Conjunct::pruned).collect())
}

impl CandidateGenerator for DeterministicGenerator {
    fn source(&self) -> CandidateSource {
        CandidateSource::Deterministic
    }

    fn generate(&mut self, ctx: &RefinementContext, attempt: u32) -> Result<RefinementCandidate, GenerationFailure> {
        let target = &ctx.target;
        let score = |ast: &RuleAst| {
            let rule = PolarizedRule::new(target.id.clone(), target.polarity, ast.clone());
            decisiveness(&rule, &ctx.dataset, ctx.eps_eq).map(|r| r.n_mismatch).ok()
        };
        let Some(before) = score(&target.ast) else {
            return Err(GenerationFailure::NoImprovingEdit {
                summary: "no improving edit: the dataset cannot be scored".into(),
            });
        };

        let mut seen: Vec<RuleAst> = Vec::new();
        let mut best: Option<(usize, usize, RuleAst, String)> = None;
        for proposal in proposals(ctx) {
            let ast = pruned(&proposal.ast);
            if ast == target.ast
                || ast.validate().is_err()
                || seen.contains(&ast)
                || ctx.rejected.contains(&ast)
                || !check_vocabulary_with(&ast, &ctx.odd, &ctx.whitelist).is_empty()
            {
                continue;
            }
            seen.push(ast.clone());
            let Some(n_mismatch) = score(&ast) else { continue };
            let edits = diff(&target.ast, &ast).len();
            if best.as_ref().is_none_or(|(bm, be, _, _)| (n_mismatch, edits) < (*bm, *be)) {
                best = Some((n_mismatch, edits, ast, proposal.note));
            }
        }

        match best {
            Some((after, _, ast, note)) if after < before => {
                let change_log = diff(&target.ast, &ast);
                let mut explanation = String::new();
                let _ = write!(explanation, "{}: {note}.", change_log[0].kind);
                if change_log.len() > 1 {
                    let _ = write!(explanation, " Pruned {} redundant bound(s).", change_log.len() - 1);
                }
                let _ = write!(explanation, " Mismatches on the dataset: {before} -> {after}.");
                Ok(RefinementCandidate {
                    ast,
                    explanation,
                    change_log,
                    source: CandidateSource::Deterministic,
                    attempt,
                })
            }
            Some((after, ..)) => Err(GenerationFailure::NoImprovingEdit {
                summary: format!("no improving edit: the best single edit leaves {after} of {before} mismatches"),
            }),
            None => Err(GenerationFailure::NoImprovingEdit {
                summary: "no improving edit: no untried edit applies".into(),
            }),
        }
    }
}
