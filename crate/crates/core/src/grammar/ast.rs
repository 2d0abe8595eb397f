//! Rule AST in disjunctive-over-conjunctive shape.
//!
//! A rule is a disjunction of conjuncts, each conjunct a conjunction of
//! relations `lhs rop rhs` over arithmetic expressions. The JSON interchange
//! form is
//!
//! ```text
//! {"or":[{"and":[{"lhs":{"var":"x"},"op":"<","rhs":{"const":5.0}}]}]}
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::is_identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl RelOp {
    pub const ALL: [RelOp; 6] = [RelOp::Lt, RelOp::Le, RelOp::Gt, RelOp::Ge, RelOp::Eq, RelOp::Ne];

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }

    /// The operator obtained by swapping operands: `a < b` is `b > a`.
    pub fn mirrored(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Gt,
            RelOp::Le => RelOp::Ge,
            RelOp::Gt => RelOp::Lt,
            RelOp::Ge => RelOp::Le,
            other => other,
        }
    }

    /// Strict <-> non-strict counterpart. `None` for `==`/`!=`.
    pub fn toggled_strictness(self) -> Option<RelOp> {
        match self {
            RelOp::Lt => Some(RelOp::Le),
            RelOp::Le => Some(RelOp::Lt),
            RelOp::Gt => Some(RelOp::Ge),
            RelOp::Ge => Some(RelOp::Gt),
            _ => None,
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, RelOp::Lt | RelOp::Gt)
    }

    /// Whether `var op c` bounds the variable from below.
    pub fn is_lower_bound(self) -> bool {
        matches!(self, RelOp::Gt | RelOp::Ge)
    }

    pub fn is_upper_bound(self) -> bool {
        matches!(self, RelOp::Lt | RelOp::Le)
    }

    pub fn holds(self, lhs: f64, rhs: f64, eps_eq: f64) -> bool {
        match self {
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
            RelOp::Eq => (lhs - rhs).abs() <= eps_eq,
            RelOp::Ne => (lhs - rhs).abs() > eps_eq,
        }
    }
}

impl fmt::Display for RelOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinExpr {
    pub op: ArithOp,
    pub l: Expr,
    pub r: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expr {
    Var(String),
    Const(f64),
    Bin(Box<BinExpr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn bin(op: ArithOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(Box::new(BinExpr { op, l, r }))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Expr::Var(name) => Some(name),
            _ => None,
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Var(name) => {
                out.insert(name);
            }
            Expr::Const(_) => {}
            Expr::Bin(b) => {
                b.l.collect_vars(out);
                b.r.collect_vars(out);
            }
        }
    }

    fn validate(&self) -> Result<(), AstError> {
        match self {
            Expr::Var(name) if !is_identifier(name) => Err(AstError::BadIdentifier(name.clone())),
            Expr::Const(v) if !v.is_finite() => Err(AstError::NonFiniteConstant),
            Expr::Bin(b) => {
                b.l.validate()?;
                b.r.validate()
            }
            _ => Ok(()),
        }
    }
}

/// `var rop const`, normalized so the variable is on the left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound<'a> {
    pub var: &'a str,
    pub op: RelOp,
    pub value: f64,
}

impl Bound<'_> {
    /// Whether every value satisfying `self` also satisfies `other`, for
    /// one-sided bounds on the same variable and side.
    pub fn implies(&self, other: &Bound<'_>) -> bool {
        if self.var != other.var {
            return false;
        }
        let strict_enough = self.op.is_strict() || !other.op.is_strict();
        if self.op.is_lower_bound() && other.op.is_lower_bound() {
            self.value > other.value || (self.value == other.value && strict_enough)
        } else if self.op.is_upper_bound() && other.op.is_upper_bound() {
            self.value < other.value || (self.value == other.value && strict_enough)
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub lhs: Expr,
    pub op: RelOp,
    pub rhs: Expr,
}

impl Relation {
    pub fn new(lhs: Expr, op: RelOp, rhs: Expr) -> Relation {
        Relation { lhs, op, rhs }
    }

    /// Recognizes the `Var rop Const` / `Const rop Var` shapes.
    pub fn as_bound(&self) -> Option<Bound<'_>> {
        match (&self.lhs, &self.rhs) {
            (Expr::Var(var), Expr::Const(value)) => Some(Bound { var, op: self.op, value: *value }),
            (Expr::Const(value), Expr::Var(var)) => {
                Some(Bound { var, op: self.op.mirrored(), value: *value })
            }
            _ => None,
        }
    }

    /// Replaces the constant of a bound-shaped relation, keeping orientation.
    pub fn with_constant(&self, value: f64) -> Option<Relation> {
        match (&self.lhs, &self.rhs) {
            (Expr::Var(_), Expr::Const(_)) => {
                Some(Relation::new(self.lhs.clone(), self.op, Expr::Const(value)))
            }
            (Expr::Const(_), Expr::Var(_)) => {
                Some(Relation::new(Expr::Const(value), self.op, self.rhs.clone()))
            }
            _ => None,
        }
    }

    pub fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        self.lhs.collect_vars(out);
        self.rhs.collect_vars(out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conjunct {
    #[serde(rename = "and")]
    pub relations: Vec<Relation>,
}

impl Conjunct {
    pub fn new(relations: Vec<Relation>) -> Conjunct {
        Conjunct { relations }
    }

    /// Indices of bound relations implied by another bound in the same
    /// conjunct. Of two equivalent bounds the later one is redundant.
    pub fn redundant_relations(&self) -> Vec<usize> {
        let bounds: Vec<Option<Bound<'_>>> = self.relations.iter().map(Relation::as_bound).collect();
        (0..bounds.len())
            .filter(|&i| {
                let Some(bi) = &bounds[i] else { return false };
                bounds.iter().enumerate().any(|(j, bj)| {
                    j != i && bj.as_ref().is_some_and(|bj| bj.implies(bi) && (j < i || !bi.implies(bj)))
                })
            })
            .collect()
    }

    /// Drops the relations reported by [`Conjunct::redundant_relations`].
    pub fn pruned(&self) -> Conjunct {
        let drop = self.redundant_relations();
        let relations =
            self.relations.iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, r)| r.clone()).collect();
        Conjunct { relations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleAst {
    #[serde(rename = "or")]
    pub disjuncts: Vec<Conjunct>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AstError {
    #[error("rule has no disjuncts")]
    NoDisjuncts,
    #[error("disjunct {0} has no relations")]
    EmptyConjunct(usize),
    #[error("invalid identifier `{0}`")]
    BadIdentifier(String),
    #[error("constant is not a finite number")]
    NonFiniteConstant,
}

impl RuleAst {
    pub fn new(disjuncts: Vec<Conjunct>) -> RuleAst {
        RuleAst { disjuncts }
    }

    /// A rule made of a single relation.
    pub fn single(relation: Relation) -> RuleAst {
        RuleAst::new(vec![Conjunct::new(vec![relation])])
    }

    /// Checks the structural invariants. Deserialized ASTs must pass this
    /// before use.
    pub fn validate(&self) -> Result<(), AstError> {
        if self.disjuncts.is_empty() {
            return Err(AstError::NoDisjuncts);
        }
        for (i, conj) in self.disjuncts.iter().enumerate() {
            if conj.relations.is_empty() {
                return Err(AstError::EmptyConjunct(i));
            }
            for rel in &conj.relations {
                rel.lhs.validate()?;
                rel.rhs.validate()?;
            }
        }
        Ok(())
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.disjuncts.iter().flat_map(|c| c.relations.iter())
    }

    pub fn relation_count(&self) -> usize {
        self.disjuncts.iter().map(|c| c.relations.len()).sum()
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for rel in self.relations() {
            rel.collect_vars(&mut out);
        }
        out
    }
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::printer::print_rule(self))
    }
}
