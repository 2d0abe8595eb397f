//! Rule evaluation, rule/outcome consistency and decisiveness.
//!
//! A rule holds on `x` when some disjunct has all of its relations true.
//! A holding rule issues the verdict of its polarity; that verdict is
//! consistent when it matches the observed outcome. A rule that does not
//! hold is inconclusive and the outcome is ignored.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{print_relation, Expr, RuleAst};

/// Variable name to value.
pub type Binding = BTreeMap<String, f64>;

pub const DEFAULT_EPS_EQ: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Pass => Outcome::Fail,
            Outcome::Fail => Outcome::Pass,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "Pass",
            Outcome::Fail => "Fail",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRun {
    pub x: Binding,
    pub y: Outcome,
}

impl LabeledRun {
    pub fn new(x: Binding, y: Outcome) -> LabeledRun {
        LabeledRun { x, y }
    }
}

/// Rule-set membership: pass rules assign `Pass` when they hold, fail rules
/// assign `Fail`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pass,
    Fail,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Pass => "pass",
            Polarity::Fail => "fail",
        }
    }

    pub fn verdict(self) -> Outcome {
        match self {
            Polarity::Pass => Outcome::Pass,
            Polarity::Fail => Outcome::Fail,
        }
    }

    pub fn opposite(self) -> Polarity {
        match self {
            Polarity::Pass => Polarity::Fail,
            Polarity::Fail => Polarity::Pass,
        }
    }
}

/// Serializes as `{"id", "polarity", "text"}` with the rule in canonical DSL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizedRule {
    pub id: String,
    pub polarity: Polarity,
    #[serde(rename = "text", with = "crate::grammar::text_serde")]
    pub ast: RuleAst,
}

impl PolarizedRule {
    pub fn new(id: impl Into<String>, polarity: Polarity, ast: RuleAst) -> PolarizedRule {
        PolarizedRule { id: id.into(), polarity, ast }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConsistencyVerdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub disjunct: usize,
    pub relation: usize,
    pub text: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub holds: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// `None` when a division by zero occurs anywhere in the expression.
fn eval_expr(expr: &Expr, x: &Binding) -> Option<f64> {
    match expr {
        Expr::Var(name) => Some(x[name]),
        Expr::Const(v) => Some(*v),
        Expr::Bin(b) => {
            let l = eval_expr(&b.l, x)?;
            let r = eval_expr(&b.r, x)?;
            match b.op {
                crate::grammar::ArithOp::Add => Some(l + r),
                crate::grammar::ArithOp::Sub => Some(l - r),
                crate::grammar::ArithOp::Mul => Some(l * r),
                crate::grammar::ArithOp::Div if r == 0.0 => None,
                crate::grammar::ArithOp::Div => Some(l / r),
            }
        }
    }
}

pub fn check_bound(ast: &RuleAst, x: &Binding) -> Result<(), SemanticsError> {
    match ast.variables().into_iter().find(|v| !x.contains_key(*v)) {
        Some(missing) => Err(SemanticsError::UnboundVariable(missing.to_string())),
        None => Ok(()),
    }
}

/// Evaluates with short-circuiting; diagnostics cover the relations that
/// were actually evaluated. A relation that divides by zero is false.
pub fn evaluate_detailed(ast: &RuleAst, x: &Binding, eps_eq: f64) -> Result<Evaluation, SemanticsError> {
    check_bound(ast, x)?;
    let mut diagnostics = Vec::new();
    let holds = ast.disjuncts.iter().enumerate().any(|(d, conj)| {
        conj.relations.iter().enumerate().all(|(r, rel)| {
            match (eval_expr(&rel.lhs, x), eval_expr(&rel.rhs, x)) {
                (Some(l), Some(rv)) => rel.op.holds(l, rv, eps_eq),
                _ => {
                    diagnostics.push(Diagnostic {
                        disjunct: d,
                        relation: r,
                        text: print_relation(rel),
                        message: "division by zero".into(),
                    });
                    false
                }
            }
        })
    });
    Ok(Evaluation { holds, diagnostics })
}

pub fn evaluate(ast: &RuleAst, x: &Binding, eps_eq: f64) -> Result<bool, SemanticsError> {
    evaluate_detailed(ast, x, eps_eq).map(|e| e.holds)
}

/// Consistency of a polarized rule on a labeled run.
pub fn classify_consistency(
    rule: &PolarizedRule,
    run: &LabeledRun,
    eps_eq: f64,
) -> Result<ConsistencyVerdict, SemanticsError> {
    let holds = evaluate(&rule.ast, &run.x, eps_eq)?;
    Ok(classify_holding(rule.polarity, holds, run.y))
}

pub fn classify_holding(polarity: Polarity, holds: bool, y: Outcome) -> ConsistencyVerdict {
    if !holds {
        ConsistencyVerdict::Inconclusive
    } else if polarity.verdict() == y {
        ConsistencyVerdict::Consistent
    } else {
        ConsistencyVerdict::Inconsistent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisivenessReport {
    pub rule_id: String,
    pub dg: f64,
    pub n: usize,
    pub n_mismatch: usize,
    pub n_consistent: usize,
    pub n_inconclusive: usize,
    /// Indices of inconsistent runs, ascending.
    pub mismatches: Vec<usize>,
    /// The rule never held; its dg of 1.0 is vacuous.
    pub fully_inconclusive: bool,
    pub diagnostics: usize,
}

pub fn classify_dataset(
    rule: &PolarizedRule,
    dataset: &[LabeledRun],
    eps_eq: f64,
) -> Result<Vec<ConsistencyVerdict>, SemanticsError> {
    dataset.iter().map(|run| classify_consistency(rule, run, eps_eq)).collect()
}

/// `dg = 1 - n_mismatch / n`.
pub fn decisiveness(
    rule: &PolarizedRule,
    dataset: &[LabeledRun],
    eps_eq: f64,
) -> Result<DecisivenessReport, SemanticsError> {
    if dataset.is_empty() {
        return Err(SemanticsError::EmptyDataset);
    }
    let mut report = DecisivenessReport {
        rule_id: rule.id.clone(),
        dg: 0.0,
        n: dataset.len(),
        n_mismatch: 0,
        n_consistent: 0,
        n_inconclusive: 0,
        mismatches: Vec::new(),
        fully_inconclusive: false,
        diagnostics: 0,
    };
    for (i, run) in dataset.iter().enumerate() {
        let eval = evaluate_detailed(&rule.ast, &run.x, eps_eq)?;
        report.diagnostics += eval.diagnostics.len();
        match classify_holding(rule.polarity, eval.holds, run.y) {
            ConsistencyVerdict::Consistent => report.n_consistent += 1,
            ConsistencyVerdict::Inconclusive => report.n_inconclusive += 1,
            ConsistencyVerdict::Inconsistent => {
                report.n_mismatch += 1;
                report.mismatches.push(i);
            }
        }
    }
    report.dg = 1.0 - report.n_mismatch as f64 / report.n as f64;
    report.fully_inconclusive = report.n_inconclusive == report.n;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesetDecisiveness {
    pub rules: Vec<DecisivenessReport>,
    /// Mean dg over rules with at least one definitive verdict.
    pub aggregate_dg: Option<f64>,
}

pub fn ruleset_decisiveness(
    rules: &[PolarizedRule],
    dataset: &[LabeledRun],
    eps_eq: f64,
) -> Result<RulesetDecisiveness, SemanticsError> {
    let reports = rules
        .iter()
        .map(|r| decisiveness(r, dataset, eps_eq))
        .collect::<Result<Vec<_>, _>>()?;
    let definitive: Vec<f64> = reports.iter().filter(|r| !r.fully_inconclusive).map(|r| r.dg).collect();
    let aggregate_dg = if definitive.is_empty() {
        None
    } else {
        Some(definitive.iter().sum::<f64>() / definitive.len() as f64)
    };
    Ok(RulesetDecisiveness { rules: reports, aggregate_dg })
}
