//! Minimal-change counterfactual search and evidence assembly.
//!
//! Starting from an input `x` observed with outcome `y`, the search expands
//! an L1 ball on the ODD grid (distance counted in per-feature steps) and
//! returns the first probe whose oracle outcome differs from `y`.
//!
//! Probes at radius `k` are all offset vectors with `sum |o_i| = k`,
//! ordered first by the set of features they touch (lexicographic over ODD
//! feature order, so `[0] < [0,1] < [0,2] < [1]`), then by the signed
//! offsets in numeric order (negative before positive). Probes that leave
//! the ODD box are skipped without querying the oracle.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::grammar::{print_rule, OddSpec};
use crate::semantics::{
    decisiveness, Binding, LabeledRun, Outcome, Polarity, PolarizedRule, SemanticsError,
};

pub const DEFAULT_QUERY_BUDGET: u64 = 10_000;
pub const DEFAULT_MAX_RADIUS_STEPS: u32 = 20;
pub const EVIDENCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("`{var}` = {value} is outside the ODD")]
    OutOfDomain { var: String, value: f64 },
    #[error("variable `{0}` is not bound")]
    Unbound(String),
    #[error("{0}")]
    Other(String),
}

/// Ground-truth labeling of inputs, standing in for re-executing the
/// system. Must be deterministic.
pub trait Oracle {
    fn label(&self, x: &Binding) -> Result<Outcome, OracleError>;
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn label(&self, x: &Binding) -> Result<Outcome, OracleError> {
        (**self).label(x)
    }
}

/// Adapts a closure into an [`Oracle`].
pub struct FnOracle<F>(pub F);

impl<F: Fn(&Binding) -> Outcome> Oracle for FnOracle<F> {
    fn label(&self, x: &Binding) -> Result<Outcome, OracleError> {
        Ok((self.0)(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub max_radius_steps: u32,
    /// Oracle queries allowed per search.
    pub query_budget: u64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { max_radius_steps: DEFAULT_MAX_RADIUS_STEPS, query_budget: DEFAULT_QUERY_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("no counterfactual within radius {max_radius} ({queries} queries)")]
    NotFound { max_radius: u32, queries: u64 },
    #[error("query budget exhausted part-way through radius {radius}")]
    BudgetExceeded { radius: u32, queries: u64 },
    #[error("invalid search input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualPair {
    pub x: Binding,
    pub y: Outcome,
    pub x_cf: Binding,
    pub y_cf: Outcome,
    /// `x_cf - x` for every ODD feature.
    pub delta: Binding,
    /// Raw-unit L1 norm of `delta`.
    pub l1: f64,
    /// L1 norm in grid steps.
    pub l1_steps: u32,
}

impl CounterfactualPair {
    /// Features with a non-zero perturbation, in `delta` key order.
    pub fn changed_features(&self) -> impl Iterator<Item = (&str, f64)> {
        self.delta.iter().filter(|(_, d)| **d != 0.0).map(|(k, d)| (k.as_str(), *d))
    }
}

/// Visits every signed composition of `remaining` over `len` slots (each
/// non-zero) in lexicographic numeric order.
fn signed_compositions<R>(
    slots: &mut Vec<i64>,
    len: usize,
    remaining: i64,
    visit: &mut dyn FnMut(&[i64]) -> ControlFlow<R>,
) -> ControlFlow<R> {
    let left = len - slots.len();
    if left == 1 {
        for v in [-remaining, remaining] {
            slots.push(v);
            let flow = visit(slots);
            slots.pop();
            flow?;
        }
        return ControlFlow::Continue(());
    }
    let max = remaining - (left as i64 - 1);
    let values = (1..=max).rev().map(|m| -m).chain(1..=max);
    for v in values {
        slots.push(v);
        let flow = signed_compositions(slots, len, remaining - v.abs(), visit);
        slots.pop();
        flow?;
    }
    ControlFlow::Continue(())
}

type Visit<'a, R> = dyn FnMut(&[usize], &[i64]) -> ControlFlow<R> + 'a;

fn supports<R>(
    d: usize,
    k: usize,
    start: usize,
    support: &mut Vec<usize>,
    visit: &mut Visit<'_, R>,
) -> ControlFlow<R> {
    for a in start..d {
        support.push(a);
        if support.len() <= k {
            let snapshot = support.clone();
            let mut slots = Vec::with_capacity(snapshot.len());
            signed_compositions(&mut slots, snapshot.len(), k as i64, &mut |offs| visit(&snapshot, offs))?;
            supports(d, k, a + 1, support, visit)?;
        }
        support.pop();
    }
    ControlFlow::Continue(())
}

/// Visits the offsets at L1 radius `k` (in steps) over `d` features in the
/// search order. Each visit receives `(feature indices, signed offsets)`.
pub fn for_each_offset<R>(
    d: usize,
    k: u32,
    mut visit: impl FnMut(&[usize], &[i64]) -> ControlFlow<R>,
) -> ControlFlow<R> {
    if k == 0 {
        return ControlFlow::Continue(());
    }
    supports(d, k as usize, 0, &mut Vec::new(), &mut visit)
}

fn feature_places(odd: &OddSpec, x: &Binding, i: usize) -> u32 {
    let var = &odd.variables[i];
    decimal::places(var.step).max(decimal::places(x[&var.name]))
}

fn validate_input(x: &Binding, odd: &OddSpec) -> Result<(), SearchError> {
    for var in &odd.variables {
        match x.get(&var.name) {
            None => return Err(SearchError::InvalidInput(format!("`{}` is not bound", var.name))),
            Some(v) if !var.contains(*v) => {
                return Err(SearchError::InvalidInput(format!("`{}` = {v} is outside the ODD", var.name)))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Finds the first grid point at the smallest L1 step radius whose oracle
/// outcome differs from `y`.
pub fn search_counterfactual(
    x: &Binding,
    y: Outcome,
    oracle: &dyn Oracle,
    odd: &OddSpec,
    limits: SearchLimits,
) -> Result<CounterfactualPair, SearchError> {
    validate_input(x, odd)?;
    let d = odd.len();
    let places: Vec<u32> = (0..d).map(|i| feature_places(odd, x, i)).collect();
    let mut queries = 0u64;

    for k in 1..=limits.max_radius_steps {
        if queries >= limits.query_budget {
            return Err(SearchError::NotFound { max_radius: k - 1, queries });
        }
        let mut queried_this_radius = false;
        let flow = for_each_offset(d, k, |support, offsets| {
            let mut probe = x.clone();
            for (&i, &o) in support.iter().zip(offsets) {
                let var = &odd.variables[i];
                let value = decimal::round_to(x[&var.name] + o as f64 * var.step, places[i]);
                if !var.contains(value) {
                    return ControlFlow::Continue(());
                }
                probe.insert(var.name.clone(), value);
            }
            if queries >= limits.query_budget {
                return ControlFlow::Break(Err(SearchError::BudgetExceeded { radius: k, queries }));
            }
            queries += 1;
            queried_this_radius = true;
            match oracle.label(&probe) {
                Ok(y_cf) if y_cf != y => ControlFlow::Break(Ok((probe, y_cf))),
                Ok(_) => ControlFlow::Continue(()),
                Err(e) => ControlFlow::Break(Err(SearchError::Oracle(e))),
            }
        });
        match flow {
            ControlFlow::Break(Ok((x_cf, y_cf))) => return Ok(make_pair(x, y, x_cf, y_cf, odd, &places, k)),
            ControlFlow::Break(Err(SearchError::BudgetExceeded { .. })) if !queried_this_radius => {
                return Err(SearchError::NotFound { max_radius: k - 1, queries });
            }
            ControlFlow::Break(Err(e)) => return Err(e),
            ControlFlow::Continue(()) => {}
        }
    }
    Err(SearchError::NotFound { max_radius: limits.max_radius_steps, queries })
}

fn make_pair(
    x: &Binding,
    y: Outcome,
    x_cf: Binding,
    y_cf: Outcome,
    odd: &OddSpec,
    places: &[u32],
    k: u32,
) -> CounterfactualPair {
    let mut delta = Binding::new();
    let mut l1 = 0.0;
    let mut max_places = 0;
    for (i, var) in odd.variables.iter().enumerate() {
        let dv = decimal::round_to(x_cf[&var.name] - x[&var.name], places[i]);
        l1 += dv.abs();
        max_places = max_places.max(places[i]);
        delta.insert(var.name.clone(), dv);
    }
    CounterfactualPair {
        x: x.clone(),
        y,
        x_cf,
        y_cf,
        delta,
        l1: decimal::round_to(l1, max_places),
        l1_steps: k,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePair {
    /// Index of the inconsistent run in the dataset.
    pub run_index: usize,
    #[serde(flatten)]
    pub pair: CounterfactualPair,
}

/// Counterfactual evidence for one inconsistent rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceFile {
    pub schema_version: u32,
    pub rule_id: String,
    pub polarity: Polarity,
    /// Canonical printed form of the rule.
    pub rule_text: String,
    pub dataset_ref: String,
    pub pairs: Vec<EvidencePair>,
    /// Inconsistent runs for which no counterfactual was found.
    pub unresolved: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvidenceError {
    #[error("rule `{0}` has no inconsistent runs on the dataset")]
    NoInconsistency(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Search(SearchError),
}

/// Runs one search per inconsistent run, in dataset order.
pub fn build_evidence(
    rule: &PolarizedRule,
    dataset: &[LabeledRun],
    oracle: &dyn Oracle,
    odd: &OddSpec,
    limits: SearchLimits,
    eps_eq: f64,
    dataset_ref: &str,
) -> Result<EvidenceFile, EvidenceError> {
    let report = decisiveness(rule, dataset, eps_eq)?;
    if report.mismatches.is_empty() {
        return Err(EvidenceError::NoInconsistency(rule.id.clone()));
    }
    let mut pairs = Vec::new();
    let mut unresolved = Vec::new();
    for &i in &report.mismatches {
        let run = &dataset[i];
        match search_counterfactual(&run.x, run.y, oracle, odd, limits) {
            Ok(pair) => pairs.push(EvidencePair { run_index: i, pair }),
            Err(SearchError::NotFound { .. } | SearchError::BudgetExceeded { .. }) => unresolved.push(i),
            Err(SearchError::Oracle(e)) => return Err(EvidenceError::Oracle(e)),
            Err(e @ SearchError::InvalidInput(_)) => return Err(EvidenceError::Search(e)),
        }
    }
    Ok(EvidenceFile {
        schema_version: EVIDENCE_SCHEMA_VERSION,
        rule_id: rule.id.clone(),
        polarity: rule.polarity,
        rule_text: print_rule(&rule.ast),
        dataset_ref: dataset_ref.to_string(),
        pairs,
        unresolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::OddVariable;

    fn bind(pairs: &[(&str, f64)]) -> Binding {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn radius_one_order() {
        let mut seen = Vec::new();
        let _ = for_each_offset::<()>(3, 1, |s, o| {
            let mut full = [0i64; 3];
            for (&i, &v) in s.iter().zip(o) {
                full[i] = v;
            }
            seen.push(full);
            ControlFlow::Continue(())
        });
        assert_eq!(seen, vec![[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]]);
    }

    #[test]
    fn offset_counts_match_formula() {
        // vectors in Z^d with L1 norm exactly k
        fn count(d: usize, k: u32) -> usize {
            let mut n = 0;
            let _ = for_each_offset::<()>(d, k, |_, _| {
                n += 1;
                ControlFlow::Continue(())
            });
            n
        }
        assert_eq!(count(2, 3), 12);
        assert_eq!(count(3, 2), 18);
        assert_eq!(count(3, 20), 4 * 20 * 20 + 2);
    }

    #[test]
    fn radius_two_is_sorted_by_support_then_value() {
        let mut seen: Vec<(Vec<usize>, Vec<i64>)> = Vec::new();
        let _ = for_each_offset::<()>(2, 2, |s, o| {
            seen.push((s.to_vec(), o.to_vec()));
            ControlFlow::Continue(())
        });
        let mut sorted = seen.clone();
        sorted.sort();
        assert_eq!(seen, sorted);
        assert_eq!(seen.first().unwrap(), &(vec![0], vec![-2]));
    }

    #[test]
    fn single_step_hit() {
        let odd = OddSpec::new(vec![OddVariable::new("a", 0.0, 10.0, 1.0), OddVariable::new("b", 0.0, 10.0, 1.0)])
            .unwrap();
        let oracle = FnOracle(|x: &Binding| if x["a"] < 3.0 { Outcome::Pass } else { Outcome::Fail });
        let pair =
            search_counterfactual(&bind(&[("a", 3.0), ("b", 5.0)]), Outcome::Fail, &oracle, &odd, SearchLimits::default())
                .unwrap();
        assert_eq!(pair.x_cf["a"], 2.0);
        assert_eq!(pair.l1_steps, 1);
        assert_eq!(pair.l1, 1.0);
        assert_eq!(pair.delta, bind(&[("a", -1.0), ("b", 0.0)]));
    }

    #[test]
    fn out_of_box_probes_are_skipped() {
        let odd = OddSpec::new(vec![OddVariable::new("a", 0.0, 2.0, 1.0)]).unwrap();
        let oracle = FnOracle(|x: &Binding| if x["a"] < 0.0 { Outcome::Pass } else { Outcome::Fail });
        let err = search_counterfactual(&bind(&[("a", 0.0)]), Outcome::Fail, &oracle, &odd, SearchLimits::default())
            .unwrap_err();
        // only a=1 and a=2 ever get queried
        assert_eq!(err, SearchError::NotFound { max_radius: 20, queries: 2 });
    }

    #[test]
    fn budget_paths() {
        let odd = OddSpec::new(vec![OddVariable::new("a", 0.0, 10.0, 1.0), OddVariable::new("b", 0.0, 10.0, 1.0)])
            .unwrap();
        let never = FnOracle(|_: &Binding| Outcome::Fail);
        let x = bind(&[("a", 5.0), ("b", 5.0)]);
        let zero = SearchLimits { max_radius_steps: 5, query_budget: 0 };
        assert!(matches!(
            search_counterfactual(&x, Outcome::Fail, &never, &odd, zero),
            Err(SearchError::NotFound { queries: 0, .. })
        ));
        // radius 1 costs 4 queries, radius 2 costs 8
        let mid = SearchLimits { max_radius_steps: 5, query_budget: 6 };
        assert_eq!(
            search_counterfactual(&x, Outcome::Fail, &never, &odd, mid),
            Err(SearchError::BudgetExceeded { radius: 2, queries: 6 })
        );
        let exact = SearchLimits { max_radius_steps: 5, query_budget: 4 };
        assert_eq!(
            search_counterfactual(&x, Outcome::Fail, &never, &odd, exact),
            Err(SearchError::NotFound { max_radius: 1, queries: 4 })
        );
    }

    #[test]
    fn rejects_inputs_outside_odd() {
        let odd = OddSpec::new(vec![OddVariable::new("a", 0.0, 1.0, 0.5)]).unwrap();
        let oracle = FnOracle(|_: &Binding| Outcome::Pass);
        assert!(matches!(
            search_counterfactual(&bind(&[("a", 3.0)]), Outcome::Fail, &oracle, &odd, SearchLimits::default()),
            Err(SearchError::InvalidInput(_))
        ));
    }

    mod minimality {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<u64>, Vec<bool>, Vec<u64>)> {
            prop::collection::vec(1u64..=5, 1..=3).prop_flat_map(|steps| {
                let cells: usize = steps.iter().map(|s| (*s + 1) as usize).product();
                let start: Vec<_> = steps.iter().map(|s| 0..=*s).collect();
                (Just(steps), prop::collection::vec(any::<bool>(), cells), start)
            })
        }

        fn cell(idx: &[u64], steps: &[u64]) -> usize {
            idx.iter().zip(steps).fold(0, |acc, (i, s)| acc * (*s as usize + 1) + *i as usize)
        }

        proptest! {
            #[test]
            fn search_matches_brute_force((steps, table, start) in instance()) {
                let vars: Vec<OddVariable> = steps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| OddVariable::new(format!("f{i}"), 0.0, *s as f64 * 0.5, 0.5))
                    .collect();
                let odd = OddSpec::new(vars).unwrap();
                let to_idx = |x: &Binding| -> Vec<u64> {
                    odd.variables.iter().map(|v| (x[&v.name] / 0.5).round() as u64).collect()
                };
                let label = |idx: &[u64]| if table[cell(idx, &steps)] { Outcome::Pass } else { Outcome::Fail };
                let oracle = FnOracle(|x: &Binding| label(&to_idx(x)));
                let x: Binding = odd.variables.iter().zip(&start).map(|(v, i)| (v.name.clone(), *i as f64 * 0.5)).collect();
                let y = label(&start);

                let mut best: Option<u64> = None;
                for c in 0..table.len() {
                    let mut idx = vec![0u64; steps.len()];
                    let mut rest = c;
                    for j in (0..steps.len()).rev() {
                        idx[j] = (rest % (steps[j] as usize + 1)) as u64;
                        rest /= steps[j] as usize + 1;
                    }
                    if label(&idx) != y {
                        let dist = idx.iter().zip(&start).map(|(a, b)| a.abs_diff(*b)).sum();
                        best = Some(best.map_or(dist, |b: u64| b.min(dist)));
                    }
                }
                let limits = SearchLimits { max_radius_steps: 15, query_budget: 100_000 };
                match (search_counterfactual(&x, y, &oracle, &odd, limits), best) {
                    (Ok(pair), Some(b)) => {
                        prop_assert_eq!(pair.l1_steps as u64, b);
                        prop_assert_ne!(label(&to_idx(&pair.x_cf)), y);
                    }
                    (Err(SearchError::NotFound { .. }), None) => {}
                    (other, b) => prop_assert!(false, "{:?} vs brute force {:?}", other, b),
                }
            }
        }
    }
}
