//! Seeded random rule generation for test corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ast::{ArithOp, Conjunct, Expr, RelOp, Relation, RuleAst};
use super::odd::{OddSpec, OddVariable};

fn grid_point(rng: &mut ChaCha8Rng, var: &OddVariable) -> f64 {
    let i = rng.random_range(0..=var.grid_steps());
    var.grid_value(i)
}

fn random_relation(rng: &mut ChaCha8Rng, odd: &OddSpec) -> Relation {
    let var = &odd.variables[rng.random_range(0..odd.len())];
    let op = RelOp::ALL[rng.random_range(0..RelOp::ALL.len())];
    match rng.random_range(0..10) {
        // mostly plain bounds, in either orientation
        0..=5 => Relation::new(Expr::var(&var.name), op, Expr::Const(grid_point(rng, var))),
        6..=7 => Relation::new(Expr::Const(grid_point(rng, var)), op, Expr::var(&var.name)),
        _ => {
            let other = &odd.variables[rng.random_range(0..odd.len())];
            let aop = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div][rng.random_range(0..4)];
            let lhs = Expr::bin(aop, Expr::var(&var.name), Expr::var(&other.name));
            let scale = rng.random_range(1..=4) as f64;
            Relation::new(lhs, op, Expr::bin(ArithOp::Mul, Expr::Const(scale), Expr::var(&other.name)))
        }
    }
}

/// Deterministic for a given seed; always vocabulary-clean for `odd`.
/// Limits below 1 are treated as 1.
pub fn random_rule(seed: u64, odd: &OddSpec, max_disjuncts: usize, max_relations: usize) -> RuleAst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_disj = rng.random_range(1..=max_disjuncts.max(1));
    let disjuncts = (0..n_disj)
        .map(|_| {
            let n_rel = rng.random_range(1..=max_relations.max(1));
            Conjunct::new((0..n_rel).map(|_| random_relation(&mut rng, odd)).collect())
        })
        .collect();
    RuleAst::new(disjuncts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{check_vocabulary, parse_rule, print_rule};

    #[test]
    fn deterministic_and_closed() {
        let odd = OddSpec::driving_default();
        let a = random_rule(1, &odd, 2, 3);
        assert_eq!(a, random_rule(1, &odd, 2, 3));
        assert_eq!(parse_rule(&print_rule(&a)).unwrap(), a);
        assert!(a.disjuncts.len() <= 2 && a.disjuncts.iter().all(|c| c.relations.len() <= 3));
    }

    #[test]
    fn corpus_is_vocabulary_clean() {
        let odd = OddSpec::driving_default();
        for seed in 0..200 {
            let rule = random_rule(seed, &odd, 3, 4);
            assert!(rule.validate().is_ok());
            assert!(check_vocabulary(&rule, &odd).is_empty(), "seed {seed}");
        }
    }
}
