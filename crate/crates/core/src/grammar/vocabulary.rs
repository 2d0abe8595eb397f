use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, RelOp, RuleAst};
use super::odd::OddSpec;
use super::printer::format_number;

/// Where a violation sits: disjunct index and relation index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationPath {
    pub disjunct: usize,
    pub relation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum VocabularyViolation {
    UnknownVariable { name: String, at: RelationPath },
    OutOfRangeBound { var: String, value: f64, min: f64, max: f64, at: RelationPath },
    DisallowedOperator { op: RelOp, at: RelationPath },
}

impl VocabularyViolation {
    pub fn at(&self) -> RelationPath {
        match self {
            VocabularyViolation::UnknownVariable { at, .. }
            | VocabularyViolation::OutOfRangeBound { at, .. }
            | VocabularyViolation::DisallowedOperator { at, .. } => *at,
        }
    }
}

impl fmt::Display for VocabularyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VocabularyViolation::UnknownVariable { name, .. } => write!(f, "UnknownVariable {name}"),
            VocabularyViolation::OutOfRangeBound { var, value, min, max, .. } => write!(
                f,
                "OutOfRangeBound {} for {var} outside [{}, {}]",
                format_number(*value),
                format_number(*min),
                format_number(*max)
            ),
            VocabularyViolation::DisallowedOperator { op, .. } => write!(f, "DisallowedOperator {op}"),
        }
    }
}

/// Relational operators a rule may use. Defaults to every operator of the
/// grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Whitelist {
    pub relops: Vec<RelOp>,
}

impl Default for Whitelist {
    fn default() -> Self {
        Whitelist { relops: RelOp::ALL.to_vec() }
    }
}

fn unknown_vars(expr: &Expr, odd: &OddSpec, at: RelationPath, out: &mut Vec<VocabularyViolation>) {
    match expr {
        Expr::Var(name) if odd.get(name).is_none() => {
            out.push(VocabularyViolation::UnknownVariable { name: name.clone(), at })
        }
        Expr::Bin(b) => {
            unknown_vars(&b.l, odd, at, out);
            unknown_vars(&b.r, odd, at, out);
        }
        _ => {}
    }
}

pub fn check_vocabulary_with(ast: &RuleAst, odd: &OddSpec, whitelist: &Whitelist) -> Vec<VocabularyViolation> {
    let mut out = Vec::new();
    for (d, conj) in ast.disjuncts.iter().enumerate() {
        for (r, rel) in conj.relations.iter().enumerate() {
            let at = RelationPath { disjunct: d, relation: r };
            unknown_vars(&rel.lhs, odd, at, &mut out);
            unknown_vars(&rel.rhs, odd, at, &mut out);
            if let Some(bound) = rel.as_bound() {
                if let Some(var) = odd.get(bound.var) {
                    if !var.contains(bound.value) {
                        out.push(VocabularyViolation::OutOfRangeBound {
                            var: var.name.clone(),
                            value: bound.value,
                            min: var.min,
                            max: var.max,
                            at,
                        });
                    }
                }
            }
            if !whitelist.relops.contains(&rel.op) {
                out.push(VocabularyViolation::DisallowedOperator { op: rel.op, at });
            }
        }
    }
    out
}

/// One violation per unknown variable occurrence and per directly compared
/// constant outside its variable's range. Empty means vocabulary-clean.
pub fn check_vocabulary(ast: &RuleAst, odd: &OddSpec) -> Vec<VocabularyViolation> {
    check_vocabulary_with(ast, odd, &Whitelist::default())
}
