//! Interval arithmetic with open/closed endpoints and three-valued relation
//! decisions, plus a compiled rule form for fast point and box evaluation.

use crate::grammar::{ArithOp, Expr, OddSpec, RelOp, Relation, RuleAst};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi, lo_open: false, hi_open: false }
    }

    pub fn point(v: f64) -> Interval {
        Interval::closed(v, v)
    }

    pub fn entire() -> Interval {
        Interval::closed(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_open { v > self.lo } else { v >= self.lo };
        let below = if self.hi_open { v < self.hi } else { v <= self.hi };
        above && below
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// A member of the interval: a closed endpoint when there is one.
    pub fn representative(&self) -> f64 {
        if !self.lo_open {
            self.lo
        } else if !self.hi_open {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) / 2.0
        }
    }

    fn hull(values: [f64; 4]) -> Interval {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::closed(lo.next_down(), hi.next_up())
    }

    /// Closed hull of `self op other`, rounded outward. Division by an
    /// interval touching zero gives the entire line; `None` means the
    /// divisor is exactly zero everywhere.
    pub fn apply(self, op: ArithOp, other: Interval) -> Option<Interval> {
        let (a, b) = (self, other);
        let mul = |x: f64, y: f64| if x == 0.0 || y == 0.0 { 0.0 } else { x * y };
        Some(match op {
            ArithOp::Add => Interval::closed((a.lo + b.lo).next_down(), (a.hi + b.hi).next_up()),
            ArithOp::Sub => Interval::closed((a.lo - b.hi).next_down(), (a.hi - b.lo).next_up()),
            ArithOp::Mul => Interval::hull([mul(a.lo, b.lo), mul(a.lo, b.hi), mul(a.hi, b.lo), mul(a.hi, b.hi)]),
            ArithOp::Div => {
                if b.lo == 0.0 && b.hi == 0.0 {
                    return None;
                }
                if b.lo <= 0.0 && b.hi >= 0.0 {
                    Interval::entire()
                } else {
                    let q = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x / y };
                    Interval::hull([q(a.lo, b.lo), q(a.lo, b.hi), q(a.hi, b.lo), q(a.hi, b.hi)])
                }
            }
        })
    }
}

/// Three-valued truth over a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tri {
    True,
    False,
    Maybe,
}

impl Tri {
    fn not(self) -> Tri {
        match self {
            Tri::True => Tri::False,
            Tri::False => Tri::True,
            Tri::Maybe => Tri::Maybe,
        }
    }

    pub fn and(self, other: Tri) -> Tri {
        match (self, other) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Maybe,
        }
    }
}

/// `l < r` for all / no members.
fn less(l: &Interval, r: &Interval) -> Tri {
    if l.hi < r.lo || (l.hi == r.lo && (l.hi_open || r.lo_open)) {
        Tri::True
    } else if l.lo >= r.hi {
        Tri::False
    } else {
        Tri::Maybe
    }
}

fn less_eq(l: &Interval, r: &Interval) -> Tri {
    if l.hi <= r.lo {
        Tri::True
    } else if l.lo > r.hi || (l.lo == r.hi && (l.lo_open || r.hi_open)) {
        Tri::False
    } else {
        Tri::Maybe
    }
}

fn approx_eq(l: &Interval, r: &Interval, eps: f64) -> Tri {
    // an open endpoint at exactly `eps` distance is never reached
    let apart = |gap: f64, open: bool| gap > eps || (gap == eps && open);
    if apart(l.lo - r.hi, l.lo_open || r.hi_open) || apart(r.lo - l.hi, r.lo_open || l.hi_open) {
        Tri::False
    } else if l.hi - r.lo <= eps && r.hi - l.lo <= eps {
        Tri::True
    } else {
        Tri::Maybe
    }
}

pub fn decide(op: RelOp, l: &Interval, r: &Interval, eps: f64) -> Tri {
    match op {
        RelOp::Lt => less(l, r),
        RelOp::Le => less_eq(l, r),
        RelOp::Gt => less(r, l),
        RelOp::Ge => less_eq(r, l),
        RelOp::Eq => approx_eq(l, r, eps),
        RelOp::Ne => approx_eq(l, r, eps).not(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CExpr {
    Var(usize),
    Const(f64),
    Bin(ArithOp, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    fn compile(e: &Expr, odd: &OddSpec) -> Option<CExpr> {
        Some(match e {
            Expr::Var(name) => CExpr::Var(odd.index_of(name)?),
            Expr::Const(v) => CExpr::Const(*v),
            Expr::Bin(b) => CExpr::Bin(b.op, Box::new(CExpr::compile(&b.l, odd)?), Box::new(CExpr::compile(&b.r, odd)?)),
        })
    }

    fn eval(&self, x: &[f64]) -> Option<f64> {
        match self {
            CExpr::Var(i) => Some(x[*i]),
            CExpr::Const(v) => Some(*v),
            CExpr::Bin(op, l, r) => {
                let (l, r) = (l.eval(x)?, r.eval(x)?);
                match op {
                    ArithOp::Add => Some(l + r),
                    ArithOp::Sub => Some(l - r),
                    ArithOp::Mul => Some(l * r),
                    ArithOp::Div if r == 0.0 => None,
                    ArithOp::Div => Some(l / r),
                }
            }
        }
    }

    fn eval_box(&self, b: &[Interval]) -> Option<Interval> {
        match self {
            CExpr::Var(i) => Some(b[*i]),
            CExpr::Const(v) => Some(Interval::point(*v)),
            CExpr::Bin(op, l, r) => l.eval_box(b)?.apply(*op, r.eval_box(b)?),
        }
    }
}

/// A relation compiled against ODD variable indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRelation {
    lhs: CExpr,
    op: RelOp,
    rhs: CExpr,
    /// `(variable index, op, constant)` for `Var rop Const` shapes.
    pub bound: Option<(usize, RelOp, f64)>,
}

impl CompiledRelation {
    fn compile(rel: &Relation, odd: &OddSpec) -> Option<CompiledRelation> {
        let bound = rel.as_bound().and_then(|b| Some((odd.index_of(b.var)?, b.op, b.value)));
        Some(CompiledRelation {
            lhs: CExpr::compile(&rel.lhs, odd)?,
            op: rel.op,
            rhs: CExpr::compile(&rel.rhs, odd)?,
            bound,
        })
    }

    pub fn eval(&self, x: &[f64], eps: f64) -> bool {
        match (self.lhs.eval(x), self.rhs.eval(x)) {
            (Some(l), Some(r)) => self.op.holds(l, r, eps),
            _ => false,
        }
    }

    pub fn eval_box(&self, b: &[Interval], eps: f64) -> Tri {
        match (self.lhs.eval_box(b), self.rhs.eval_box(b)) {
            (Some(l), Some(r)) => decide(self.op, &l, &r, eps),
            _ => Tri::False,
        }
    }
}

/// A rule over dense ODD-ordered value vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRule {
    pub disjuncts: Vec<Vec<CompiledRelation>>,
}

impl CompiledRule {
    /// `None` if the rule names a variable outside the ODD.
    pub fn compile(ast: &RuleAst, odd: &OddSpec) -> Option<CompiledRule> {
        let disjuncts = ast
            .disjuncts
            .iter()
            .map(|c| c.relations.iter().map(|r| CompiledRelation::compile(r, odd)).collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()?;
        Some(CompiledRule { disjuncts })
    }

    pub fn eval(&self, x: &[f64], eps: f64) -> bool {
        self.disjuncts.iter().any(|c| c.iter().all(|r| r.eval(x, eps)))
    }

    pub fn eval_box(&self, b: &[Interval], eps: f64) -> Tri {
        let mut any_maybe = false;
        for conj in &self.disjuncts {
            let mut t = Tri::True;
            for rel in conj {
                t = t.and(rel.eval_box(b, eps));
                if t == Tri::False {
                    break;
                }
            }
            match t {
                Tri::True => return Tri::True,
                Tri::Maybe => any_maybe = true,
                Tri::False => {}
            }
        }
        if any_maybe {
            Tri::Maybe
        } else {
            Tri::False
        }
    }

    pub fn relations(&self) -> impl Iterator<Item = &CompiledRelation> {
        self.disjuncts.iter().flatten()
    }
}
