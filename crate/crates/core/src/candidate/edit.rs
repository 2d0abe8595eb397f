//! Change logs: structural diff between two rules and its replay.
//!
//! Edits apply in sequence; each path refers to the rule as it stands when
//! that edit is applied.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{parse_rule, print_conjunct, print_relation, Conjunct, Expr, Relation, RuleAst};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditKind {
    ThresholdAdjust,
    OperatorReplace,
    AddConjunct,
    RemoveConjunct,
    AddDisjunct,
    RemoveDisjunct,
}

impl EditKind {
    pub const ALL: [EditKind; 6] = [
        EditKind::ThresholdAdjust,
        EditKind::OperatorReplace,
        EditKind::AddConjunct,
        EditKind::RemoveConjunct,
        EditKind::AddDisjunct,
        EditKind::RemoveDisjunct,
    ];
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Disjunct index, plus the relation index for relation-level edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditPath {
    pub disjunct: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub kind: EditKind,
    pub path: EditPath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
}

impl Edit {
    fn relation(kind: EditKind, disjunct: usize, relation: usize, before: Option<&Relation>, after: Option<&Relation>) -> Edit {
        Edit {
            kind,
            path: EditPath { disjunct, relation: Some(relation) },
            before: before.map(print_relation),
            after: after.map(print_relation),
        }
    }

    fn disjunct(kind: EditKind, disjunct: usize, before: Option<&Conjunct>, after: Option<&Conjunct>) -> Edit {
        Edit {
            kind,
            path: EditPath { disjunct, relation: None },
            before: before.map(print_conjunct),
            after: after.map(print_conjunct),
        }
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at disjunct {}", self.kind, self.path.disjunct)?;
        if let Some(r) = self.path.relation {
            write!(f, ", relation {r}")?;
        }
        match (&self.before, &self.after) {
            (Some(b), Some(a)) => write!(f, ": {b} -> {a}"),
            (Some(b), None) => write!(f, ": removed {b}"),
            (None, Some(a)) => write!(f, ": added {a}"),
            (None, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("edit {index}: path out of bounds")]
    BadPath { index: usize },
    #[error("edit {index}: missing or unparsable `after` fragment")]
    BadFragment { index: usize },
    #[error("edit {index}: path shape does not match {kind}")]
    KindMismatch { index: usize, kind: EditKind },
}

/// Structure of an expression with constants blanked out.
fn same_shape_ignoring_constants(a: &Expr, b: &Expr) -> bool {
    match (a, b) {
        (Expr::Const(_), Expr::Const(_)) => true,
        (Expr::Var(x), Expr::Var(y)) => x == y,
        (Expr::Bin(x), Expr::Bin(y)) => {
            x.op == y.op && same_shape_ignoring_constants(&x.l, &y.l) && same_shape_ignoring_constants(&x.r, &y.r)
        }
        _ => false,
    }
}

/// Kind of a one-relation replacement, if it is one of the in-place kinds.
pub fn classify_replacement(old: &Relation, new: &Relation) -> Option<EditKind> {
    if old == new {
        return None;
    }
    if old.lhs == new.lhs && old.rhs == new.rhs {
        return Some(EditKind::OperatorReplace);
    }
    if old.op == new.op
        && same_shape_ignoring_constants(&old.lhs, &new.lhs)
        && same_shape_ignoring_constants(&old.rhs, &new.rhs)
    {
        return Some(EditKind::ThresholdAdjust);
    }
    None
}

enum Step {
    Pair(usize, usize),
    Del(usize),
    Ins(usize),
}

/// LCS alignment of `old` and `new`. Unmatched items between anchors are
/// paired positionally when `pairable`, otherwise deleted or inserted.
fn align<T: PartialEq>(old: &[T], new: &[T], pairable: impl Fn(&T, &T) -> bool) -> Vec<Step> {
    let (n, m) = (old.len(), new.len());
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if old[i] == new[j] { lcs[i + 1][j + 1] + 1 } else { lcs[i + 1][j].max(lcs[i][j + 1]) };
        }
    }
    let mut anchors = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if old[i] == new[j] {
            anchors.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    anchors.push((n, m));

    let mut steps = Vec::new();
    let (mut oi, mut nj) = (0, 0);
    for (ai, aj) in anchors {
        let (olds, news) = (oi..ai, nj..aj);
        let mut paired = 0;
        for (o, nw) in olds.clone().zip(news.clone()) {
            if !pairable(&old[o], &new[nw]) {
                break;
            }
            steps.push(Step::Pair(o, nw));
            paired += 1;
        }
        steps.extend(olds.skip(paired).map(Step::Del));
        steps.extend(news.skip(paired).map(Step::Ins));
        oi = ai + 1;
        nj = aj + 1;
    }
    steps
}

/// Splits steps into in-place pairs, removals (descending) and insertions
/// (ascending). Applied in that order every index is valid: after the
/// removals the survivors sit in their final relative order.
fn partition(steps: Vec<Step>) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    let (mut pairs, mut dels, mut ins) = (Vec::new(), Vec::new(), Vec::new());
    for step in steps {
        match step {
            Step::Pair(o, n) => pairs.push((o, n)),
            Step::Del(o) => dels.push(o),
            Step::Ins(n) => ins.push(n),
        }
    }
    dels.reverse();
    (pairs, dels, ins)
}

fn relation_edits(d: usize, old: &Conjunct, new: &Conjunct, edits: &mut Vec<Edit>) {
    let steps = align(&old.relations, &new.relations, |a, b| classify_replacement(a, b).is_some());
    let (pairs, dels, ins) = partition(steps);
    for (o, n) in pairs {
        let (a, b) = (&old.relations[o], &new.relations[n]);
        let kind = classify_replacement(a, b).expect("paired relations are classifiable");
        edits.push(Edit::relation(kind, d, o, Some(a), Some(b)));
    }
    for o in dels {
        edits.push(Edit::relation(EditKind::RemoveConjunct, d, o, Some(&old.relations[o]), None));
    }
    for n in ins {
        edits.push(Edit::relation(EditKind::AddConjunct, d, n, None, Some(&new.relations[n])));
    }
}

/// Change log turning `old` into `new`; `replay(old, &diff(old, new))`
/// reproduces `new`.
pub fn diff(old: &RuleAst, new: &RuleAst) -> Vec<Edit> {
    let steps = align(&old.disjuncts, &new.disjuncts, |_, _| true);
    let (pairs, dels, ins) = partition(steps);
    let mut edits = Vec::new();
    for (o, n) in pairs {
        relation_edits(o, &old.disjuncts[o], &new.disjuncts[n], &mut edits);
    }
    for o in dels {
        edits.push(Edit::disjunct(EditKind::RemoveDisjunct, o, Some(&old.disjuncts[o]), None));
    }
    for n in ins {
        edits.push(Edit::disjunct(EditKind::AddDisjunct, n, None, Some(&new.disjuncts[n])));
    }
    edits
}

fn parse_relation(text: &str) -> Option<Relation> {
    let ast = parse_rule(text).ok()?;
    match ast.disjuncts.as_slice() {
        [c] if c.relations.len() == 1 => Some(c.relations[0].clone()),
        _ => None,
    }
}

fn parse_conjunct(text: &str) -> Option<Conjunct> {
    let mut ast = parse_rule(text).ok()?;
    (ast.disjuncts.len() == 1).then(|| ast.disjuncts.remove(0))
}

/// Applies `edits` in order. Relation-level `after` fragments must hold one
/// relation; `AddDisjunct` fragments one conjunct.
pub fn replay(ast: &RuleAst, edits: &[Edit]) -> Result<RuleAst, ReplayError> {
    let mut out = ast.clone();
    for (index, edit) in edits.iter().enumerate() {
        let d = edit.path.disjunct;
        let bad_path = ReplayError::BadPath { index };
        let fragment = ReplayError::BadFragment { index };
        match (edit.kind, edit.path.relation) {
            (EditKind::ThresholdAdjust | EditKind::OperatorReplace, Some(r)) => {
                let rel = edit.after.as_deref().and_then(parse_relation).ok_or(fragment)?;
                let slot = out.disjuncts.get_mut(d).and_then(|c| c.relations.get_mut(r)).ok_or(bad_path)?;
                *slot = rel;
            }
            (EditKind::AddConjunct, Some(r)) => {
                let rel = edit.after.as_deref().and_then(parse_relation).ok_or(fragment)?;
                let conj = out.disjuncts.get_mut(d).ok_or(bad_path.clone())?;
                if r > conj.relations.len() {
                    return Err(bad_path);
                }
                conj.relations.insert(r, rel);
            }
            (EditKind::RemoveConjunct, Some(r)) => {
                let conj = out.disjuncts.get_mut(d).ok_or(bad_path.clone())?;
                if r >= conj.relations.len() {
                    return Err(bad_path);
                }
                conj.relations.remove(r);
            }
            (EditKind::AddDisjunct, None) => {
                let conj = edit.after.as_deref().and_then(parse_conjunct).ok_or(fragment)?;
                if d > out.disjuncts.len() {
                    return Err(bad_path);
                }
                out.disjuncts.insert(d, conj);
            }
            (EditKind::RemoveDisjunct, None) => {
                if d >= out.disjuncts.len() {
                    return Err(bad_path);
                }
                out.disjuncts.remove(d);
            }
            (kind, _) => return Err(ReplayError::KindMismatch { index, kind }),
        }
    }
    Ok(out)
}
