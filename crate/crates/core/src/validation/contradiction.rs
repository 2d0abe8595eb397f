//! Satisfiability of `a ∧ b` over the ODD box.
//!
//! Witness search runs first (dataset points, a coarse grid over the
//! variables the rules use, a grid of critical values around the rules'
//! constants, seeded uniform samples). If none hits, interval
//! branch-and-prune either refutes every sub-box (Clear), finds a box on
//! which both rules certainly hold (Flagged), or runs out of budget
//! (Unknown). Every witness is re-checked with [`evaluate`].

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::interval::{CompiledRule, Interval, Tri};
use crate::grammar::{OddSpec, RelOp, RuleAst};
use crate::semantics::{evaluate, Binding, PolarizedRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionBudget {
    /// Points per grid stage.
    pub grid_cap: usize,
    pub samples: usize,
    /// Bisections along any branch.
    pub max_depth: u32,
    /// Boxes examined by branch-and-prune.
    pub max_boxes: usize,
    pub seed: u64,
}

impl Default for ContradictionBudget {
    fn default() -> Self {
        ContradictionBudget { grid_cap: 100_000, samples: 10_000, max_depth: 12, max_boxes: 50_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContradictionStatus {
    Clear,
    Flagged,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecidedBy {
    DatasetPoint,
    Grid,
    CriticalPoints,
    Sampling,
    BranchAndPrune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub opposing_rule_id: String,
    pub status: ContradictionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Binding>,
    pub decided_by: Option<DecidedBy>,
    pub boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContradictionError {
    #[error("rule `{0}` has the same polarity as the candidate")]
    SamePolarity(String),
}

struct Problem<'a> {
    a: &'a RuleAst,
    b: &'a RuleAst,
    ca: CompiledRule,
    cb: CompiledRule,
    odd: &'a OddSpec,
    used: Vec<usize>,
    eps: f64,
}

impl Problem<'_> {
    fn fast(&self, x: &[f64]) -> bool {
        self.ca.eval(x, self.eps) && self.cb.eval(x, self.eps)
    }

    fn binding(&self, x: &[f64]) -> Binding {
        self.odd.variables.iter().zip(x).map(|(v, val)| (v.name.clone(), *val)).collect()
    }

    /// Confirms a candidate witness with the reference evaluator.
    fn verify(&self, x: &[f64]) -> Option<Binding> {
        let b = self.binding(x);
        let ok = evaluate(self.a, &b, self.eps).unwrap_or(false) && evaluate(self.b, &b, self.eps).unwrap_or(false);
        ok.then_some(b)
    }

    fn base_point(&self) -> Vec<f64> {
        self.odd.variables.iter().map(|v| v.min).collect()
    }

    /// Enumerates the product of per-variable value lists for `used`,
    /// thinning the longest lists until the product fits `cap`.
    fn product_search(&self, mut axes: Vec<Vec<f64>>, cap: usize) -> Option<Binding> {
        if axes.iter().any(Vec::is_empty) {
            return None;
        }
        let size = |axes: &[Vec<f64>]| axes.iter().fold(1usize, |acc, a| acc.saturating_mul(a.len()));
        while size(&axes) > cap.max(1) {
            let longest = (0..axes.len()).max_by_key(|&i| axes[i].len()).expect("non-empty axes");
            let axis = &axes[longest];
            let last = *axis.last().expect("non-empty axis");
            let mut thinned: Vec<f64> = axis.iter().step_by(2).copied().collect();
            if *thinned.last().expect("non-empty") != last {
                thinned.push(last);
            }
            if thinned.len() == axis.len() {
                break;
            }
            axes[longest] = thinned;
        }
        let mut x = self.base_point();
        let mut idx = vec![0usize; axes.len()];
        loop {
            for (k, &var) in self.used.iter().enumerate() {
                x[var] = axes[k][idx[k]];
            }
            if self.fast(&x) {
                if let Some(w) = self.verify(&x) {
                    return Some(w);
                }
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return None;
                }
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn grid_axes(&self) -> Vec<Vec<f64>> {
        self.used.iter().map(|&i| self.odd.variables[i].grid().collect()).collect()
    }

    fn critical_axes(&self) -> Vec<Vec<f64>> {
        self.used
            .iter()
            .map(|&i| {
                let var = &self.odd.variables[i];
                let mut values = vec![var.min, var.max];
                for rel in self.ca.relations().chain(self.cb.relations()) {
                    if let Some((j, _, c)) = rel.bound {
                        if j == i {
                            values.extend([c - var.step, c, c + var.step]);
                        }
                    }
                }
                let mut values: Vec<f64> = values.into_iter().filter(|v| var.contains(*v)).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                let mids: Vec<f64> = values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
                values.extend(mids);
                values.sort_by(f64::total_cmp);
                values.dedup();
                values
            })
            .collect()
    }

    fn sample(&self, n: usize, seed: u64) -> Option<Binding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.base_point();
        for _ in 0..n {
            for &i in &self.used {
                let v = &self.odd.variables[i];
                x[i] = if v.min < v.max { rng.random_range(v.min..=v.max) } else { v.min };
            }
            if self.fast(&x) {
                if let Some(w) = self.verify(&x) {
                    return Some(w);
                }
            }
        }
        None
    }
}

/// `iv` intersected with the interval from `lo` to `hi`.
fn clip(iv: Interval, lo: f64, lo_open: bool, hi: f64, hi_open: bool) -> Interval {
    let (lo, lo_open) = if lo > iv.lo {
        (lo, lo_open)
    } else if lo < iv.lo {
        (iv.lo, iv.lo_open)
    } else {
        (lo, lo_open || iv.lo_open)
    };
    let (hi, hi_open) = if hi < iv.hi {
        (hi, hi_open)
    } else if hi > iv.hi {
        (iv.hi, iv.hi_open)
    } else {
        (hi, hi_open || iv.hi_open)
    };
    Interval { lo, hi, lo_open, hi_open }
}

/// Pieces of `iv` cut so that `var op c` is decided on each piece.
fn guided_pieces(iv: Interval, op: RelOp, c: f64, eps: f64) -> Vec<Interval> {
    let inf = f64::INFINITY;
    let pieces = match op {
        RelOp::Lt | RelOp::Ge => vec![clip(iv, -inf, false, c, true), clip(iv, c, false, inf, false)],
        RelOp::Gt | RelOp::Le => vec![clip(iv, -inf, false, c, false), clip(iv, c, true, inf, false)],
        RelOp::Eq | RelOp::Ne => vec![
            clip(iv, -inf, false, c - eps, true),
            clip(iv, c - eps, false, c + eps, false),
            clip(iv, c + eps, true, inf, false),
        ],
    };
    pieces.into_iter().filter(|p| !p.is_empty()).collect()
}

enum BoxResult {
    Refuted,
    Witness(Binding),
    Unknown,
}

fn branch_and_prune(p: &Problem<'_>, budget: &ContradictionBudget) -> (BoxResult, usize) {
    let root: Vec<Interval> = p.odd.variables.iter().map(|v| Interval::closed(v.min, v.max)).collect();
    let mut stack = vec![(root, 0u32)];
    let mut boxes = 0usize;
    let mut undecided = false;
    while let Some((bx, depth)) = stack.pop() {
        if boxes >= budget.max_boxes {
            return (BoxResult::Unknown, boxes);
        }
        boxes += 1;
        let ta = p.ca.eval_box(&bx, p.eps);
        let verdict = if ta == Tri::False { Tri::False } else { ta.and(p.cb.eval_box(&bx, p.eps)) };
        match verdict {
            Tri::False => continue,
            Tri::True => {
                let x: Vec<f64> = bx.iter().map(Interval::representative).collect();
                if let Some(w) = p.verify(&x) {
                    return (BoxResult::Witness(w), boxes);
                }
            }
            Tri::Maybe => {}
        }

        // split at a constant of an undecided bound, if any
        let guided = p.ca.relations().chain(p.cb.relations()).find_map(|rel| {
            let (i, op, c) = rel.bound?;
            let pieces = guided_pieces(bx[i], op, c, p.eps);
            (pieces.len() >= 2 && rel.eval_box(&bx, p.eps) == Tri::Maybe).then_some((i, pieces))
        });
        if let Some((i, pieces)) = guided {
            for piece in pieces.into_iter().rev() {
                let mut child = bx.clone();
                child[i] = piece;
                stack.push((child, depth));
            }
            continue;
        }

        if depth >= budget.max_depth {
            undecided = true;
            continue;
        }
        let widest = p
            .used
            .iter()
            .copied()
            .filter(|&i| bx[i].width() > 0.0)
            .max_by(|&i, &j| {
                let rel = |k: usize| {
                    let v = &p.odd.variables[k];
                    bx[k].width() / (v.max - v.min).max(f64::MIN_POSITIVE)
                };
                rel(i).total_cmp(&rel(j)).then(j.cmp(&i))
            });
        let Some(i) = widest else {
            undecided = true;
            continue;
        };
        let iv = bx[i];
        let mid = iv.lo + (iv.hi - iv.lo) / 2.0;
        let left = Interval { hi: mid, hi_open: false, ..iv };
        let right = Interval { lo: mid, lo_open: true, ..iv };
        for piece in [right, left] {
            if !piece.is_empty() {
                let mut child = bx.clone();
                child[i] = piece;
                stack.push((child, depth + 1));
            }
        }
    }
    (if undecided { BoxResult::Unknown } else { BoxResult::Refuted }, boxes)
}

/// Decides whether `a` and `b` can hold together somewhere in the ODD box.
/// `seeds` are tried first as witnesses.
pub fn check_pair(
    a: &RuleAst,
    b: &RuleAst,
    odd: &OddSpec,
    budget: &ContradictionBudget,
    seeds: &[Binding],
    eps_eq: f64,
) -> (ContradictionStatus, Option<Binding>, Option<DecidedBy>, usize) {
    let (Some(ca), Some(cb)) = (CompiledRule::compile(a, odd), CompiledRule::compile(b, odd)) else {
        return (ContradictionStatus::Unknown, None, None, 0);
    };
    let used: BTreeSet<usize> =
        a.variables().union(&b.variables()).filter_map(|name| odd.index_of(name)).collect();
    let p = Problem { a, b, ca, cb, odd, used: used.into_iter().collect(), eps: eps_eq };
    let flagged = |w: Binding, by| (ContradictionStatus::Flagged, Some(w), Some(by), 0);

    for seed in seeds {
        let x: Option<Vec<f64>> = odd.variables.iter().map(|v| seed.get(&v.name).copied()).collect();
        if let Some(x) = x {
            if p.fast(&x) {
                if let Some(w) = p.verify(&x) {
                    return flagged(w, DecidedBy::DatasetPoint);
                }
            }
        }
    }
    if let Some(w) = p.product_search(p.grid_axes(), budget.grid_cap) {
        return flagged(w, DecidedBy::Grid);
    }
    if let Some(w) = p.product_search(p.critical_axes(), budget.grid_cap) {
        return flagged(w, DecidedBy::CriticalPoints);
    }
    if let Some(w) = p.sample(budget.samples, budget.seed) {
        return flagged(w, DecidedBy::Sampling);
    }
    match branch_and_prune(&p, budget) {
        (BoxResult::Refuted, n) => (ContradictionStatus::Clear, None, Some(DecidedBy::BranchAndPrune), n),
        (BoxResult::Witness(w), n) => (ContradictionStatus::Flagged, Some(w), Some(DecidedBy::BranchAndPrune), n),
        (BoxResult::Unknown, n) => (ContradictionStatus::Unknown, None, None, n),
    }
}

/// One check per opposing rule, in the given order.
pub fn check_contradiction(
    candidate: &PolarizedRule,
    opposing: &[PolarizedRule],
    odd: &OddSpec,
    budget: &ContradictionBudget,
    seeds: &[Binding],
    eps_eq: f64,
) -> Result<Vec<PairCheck>, ContradictionError> {
    if let Some(same) = opposing.iter().find(|r| r.polarity == candidate.polarity) {
        return Err(ContradictionError::SamePolarity(same.id.clone()));
    }
    Ok(opposing
        .iter()
        .map(|rule| {
            let (status, witness, decided_by, boxes) = check_pair(&candidate.ast, &rule.ast, odd, budget, seeds, eps_eq);
            PairCheck { opposing_rule_id: rule.id.clone(), status, witness, decided_by, boxes }
        })
        .collect())
}
