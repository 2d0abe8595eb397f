//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without network access.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ruleforge::candidate::llm::{LlmConfig, LlmGenerator};
use ruleforge::candidate::{parse_candidate_response, CandidateGenerator, DeterministicGenerator, GenerationFailure, MockGenerator};
use ruleforge::counterfactual::{search_counterfactual, FnOracle, SearchError, SearchLimits};
use ruleforge::grammar::{parse_rule, print_rule, random_rule, Conjunct, Expr, OddSpec, OddVariable, RelOp, Relation, RuleAst};
use ruleforge::metrics::{change_minimality, grammar_compliance, CmBand};
use ruleforge::scenario::{make_paper_fixture, paper_x1, SafetyOracle};
use ruleforge::semantics::{
    classify_consistency, decisiveness, evaluate, Binding, ConsistencyVerdict, LabeledRun, Outcome, Polarity,
    PolarizedRule, DEFAULT_EPS_EQ,
};
use ruleforge::validation::{check_pair, prepare, refine, ContradictionBudget, ContradictionStatus, RefineConfig, RefineInputs};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn refine_fixture(generator: &mut dyn CandidateGenerator) -> Result<ruleforge::validation::RefinementOutcome, String> {
    let fx = make_paper_fixture(42).map_err(|e| e.to_string())?;
    let ruleset = fx.ruleset();
    let oracle = SafetyOracle::new(fx.config.clone());
    let inputs = RefineInputs {
        target_id: "r1",
        ruleset: &ruleset,
        dataset: &fx.dataset,
        oracle: &oracle,
        odd: &fx.config.odd,
        dataset_ref: "fixture-42",
    };
    refine(&inputs, generator, &RefineConfig::default()).map_err(|e| e.to_string())
}

fn dg_reproduction() -> Check {
    let start = Instant::now();
    let fx = make_paper_fixture(42).map_err(|e| e.to_string())?;
    let r = decisiveness(&fx.baseline_rule, &fx.dataset, DEFAULT_EPS_EQ).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(1))?;
    ensure(r.n == 198 && r.n_mismatch == 27, || format!("n={} n_mismatch={}", r.n, r.n_mismatch))?;
    let expected = 1.0 - 27.0 / 198.0;
    ensure(r.dg == expected, || format!("dg={} expected {expected}", r.dg))?;
    ensure(format!("{:.4}", r.dg) == "0.8636" && format!("{:.2}", r.dg) == "0.86", || format!("dg={}", r.dg))?;
    Ok(format!("n=198 n_mismatch=27 dg={:.4}", r.dg))
}

fn end_to_end_refinement() -> Check {
    let start = Instant::now();
    let out = refine_fixture(&mut DeterministicGenerator)?;
    within(start, Duration::from_secs(10))?;
    ensure(out.attempts <= 5, || format!("attempts={}", out.attempts))?;
    ensure(out.dg_after == 1.0, || format!("dg_after={}", out.dg_after))?;
    let gain = out.dg_after - out.dg_before;
    ensure(format!("{gain:.4}") == "0.1364", || format!("gain={gain}"))?;
    ensure(format!("{gain:.2}") == "0.14", || format!("gain={gain:.2}"))?;
    Ok(format!("accepted on attempt {}: {} dg_gain=+{gain:.4}", out.attempts, print_rule(&out.refined)))
}

fn worked_example() -> Check {
    let fx = make_paper_fixture(42).map_err(|e| e.to_string())?;
    let oracle = SafetyOracle::new(fx.config.clone());
    let x1 = paper_x1();
    let pair = search_counterfactual(&x1, Outcome::Fail, &oracle, &fx.config.odd, SearchLimits::default())
        .map_err(|e| e.to_string())?;
    ensure(pair.x_cf["dist_front"] == 4.0, || format!("x_cf.dist_front={}", pair.x_cf["dist_front"]))?;
    ensure(pair.delta["dist_front"] == -0.2, || format!("delta={}", pair.delta["dist_front"]))?;
    ensure(pair.delta["ego_speed"] == 0.0 && pair.delta["lane_offset"] == 0.0, || format!("{:?}", pair.delta))?;
    ensure(pair.y_cf == Outcome::Pass, || "y_cf is not Pass".into())?;

    let ruleset = fx.ruleset();
    let inputs = RefineInputs {
        target_id: "r1",
        ruleset: &ruleset,
        dataset: &fx.dataset,
        oracle: &oracle,
        odd: &fx.config.odd,
        dataset_ref: "fixture-42",
    };
    let ctx = prepare(&inputs, &RefineConfig::default()).map_err(|e| e.to_string())?;
    let candidate = DeterministicGenerator.generate(&ctx, 1).map_err(|e| e.to_string())?;
    let threshold = candidate.ast.relations().find_map(|r| r.as_bound().filter(|b| b.var == "dist_front").map(|b| b.value));
    ensure(threshold == Some(4.1), || format!("proposed threshold {threshold:?}"))?;
    Ok("x' dist_front=4.0, delta=-0.2, proposed threshold 4.1".into())
}

fn table_one() -> Check {
    let rule = parse_rule("(ARG1 > 0)").unwrap();
    let at = |v: f64| -> Binding { [("ARG1".to_string(), v)].into_iter().collect() };
    // (polarity, holds, outcome) -> expected verdict, written out row by row
    let rows = [
        (Polarity::Pass, true, Outcome::Pass, ConsistencyVerdict::Consistent),
        (Polarity::Pass, true, Outcome::Fail, ConsistencyVerdict::Inconsistent),
        (Polarity::Fail, true, Outcome::Fail, ConsistencyVerdict::Consistent),
        (Polarity::Fail, true, Outcome::Pass, ConsistencyVerdict::Inconsistent),
        (Polarity::Pass, false, Outcome::Pass, ConsistencyVerdict::Inconclusive),
        (Polarity::Pass, false, Outcome::Fail, ConsistencyVerdict::Inconclusive),
        (Polarity::Fail, false, Outcome::Pass, ConsistencyVerdict::Inconclusive),
        (Polarity::Fail, false, Outcome::Fail, ConsistencyVerdict::Inconclusive),
    ];
    for (polarity, holds, y, want) in rows {
        let r = PolarizedRule::new("t", polarity, rule.clone());
        let run = LabeledRun::new(at(if holds { 1.0 } else { -1.0 }), y);
        let got = classify_consistency(&r, &run, DEFAULT_EPS_EQ).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{polarity:?} holds={holds} y={y:?}: got {got:?}, want {want:?}"))?;
    }
    Ok("8 of 8 (polarity, holds, outcome) cases match".into())
}

/// Brute-force minimum L1 (in steps) from `origin` to a grid point whose
/// label differs.
fn brute_force_min(dims: &[u32], origin: &[u32], labels: &HashMap<Vec<u32>, Outcome>) -> Option<u32> {
    let y = labels[origin];
    labels
        .iter()
        .filter(|(_, l)| **l != y)
        .map(|(p, _)| p.iter().zip(origin).map(|(a, b)| a.abs_diff(*b)).sum::<u32>())
        .min()
        .filter(|_| !dims.is_empty())
}

fn all_points(dims: &[u32]) -> Vec<Vec<u32>> {
    dims.iter().fold(vec![Vec::new()], |acc, &n| {
        acc.into_iter().flat_map(|p| (0..=n).map(move |i| [p.clone(), vec![i]].concat())).collect()
    })
}

fn counterfactual_minimality() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let instances = 150;
    let mut found = 0;
    for case in 0..instances {
        let d = rng.random_range(1..=3usize);
        let dims: Vec<u32> = (0..d).map(|_| rng.random_range(1..=5u32)).collect();
        let steps: Vec<f64> = (0..d).map(|_| [0.1, 0.2, 0.5, 1.0][rng.random_range(0..4)]).collect();
        let mins: Vec<f64> = (0..d).map(|_| rng.random_range(-3..=3) as f64).collect();
        let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        let odd = OddSpec::new(
            (0..d).map(|i| OddVariable::new(&names[i], mins[i], mins[i] + dims[i] as f64 * steps[i], steps[i])).collect(),
        )
        .map_err(|e| e.to_string())?;
        let p_pass = rng.random_range(0.05..0.95);
        let labels: HashMap<Vec<u32>, Outcome> = all_points(&dims)
            .into_iter()
            .map(|p| (p, if rng.random_bool(p_pass) { Outcome::Pass } else { Outcome::Fail }))
            .collect();
        let index_of = |x: &Binding| -> Vec<u32> {
            (0..d).map(|i| ((x[&names[i]] - mins[i]) / steps[i]).round() as u32).collect()
        };
        let oracle = FnOracle(|x: &Binding| labels[&index_of(x)]);
        let origin: Vec<u32> = dims.iter().map(|&n| rng.random_range(0..=n)).collect();
        let x: Binding = (0..d).map(|i| (names[i].clone(), odd.variables[i].grid_value(origin[i] as u64))).collect();
        let y = labels[&origin];
        let expected = brute_force_min(&dims, &origin, &labels);
        let got = search_counterfactual(&x, y, &oracle, &odd, SearchLimits::default());
        match (expected, got) {
            (Some(want), Ok(pair)) => {
                found += 1;
                ensure(pair.l1_steps == want, || format!("case {case}: l1_steps {} != brute force {want}", pair.l1_steps))?;
                ensure(labels[&index_of(&pair.x_cf)] != y, || format!("case {case}: counterfactual does not flip"))?;
            }
            (None, Err(SearchError::NotFound { .. })) => {}
            (want, got) => return Err(format!("case {case}: brute force {want:?}, search {got:?}")),
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{instances} instances agree with brute force ({found} with a flip)"))
}

fn lattice_rule(rng: &mut ChaCha8Rng, names: &[&str], n: u32) -> RuleAst {
    let n_disj = rng.random_range(1..=2);
    let disjuncts = (0..n_disj)
        .map(|_| {
            let n_rel = rng.random_range(1..=3);
            Conjunct::new(
                (0..n_rel)
                    .map(|_| {
                        let var = Expr::var(names[rng.random_range(0..names.len())]);
                        let c = Expr::Const(rng.random_range(0..=n) as f64);
                        let op = RelOp::ALL[rng.random_range(0..RelOp::ALL.len())];
                        if rng.random_bool(0.5) {
                            Relation::new(var, op, c)
                        } else {
                            Relation::new(c, op, var)
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    RuleAst::new(disjuncts)
}

/// Over integer-valued bounds with exact equality, `a ∧ b` is satisfiable
/// on the box iff it is satisfiable on the half-step lattice.
fn lattice_satisfiable(a: &RuleAst, b: &RuleAst, names: &[&str], n: u32) -> bool {
    let half: Vec<f64> = (0..=2 * n).map(|k| k as f64 / 2.0).collect();
    let points = all_points(&vec![2 * n; names.len()]);
    points.iter().any(|p| {
        let x: Binding = names.iter().zip(p).map(|(k, i)| (k.to_string(), half[*i as usize])).collect();
        evaluate(a, &x, 0.0).unwrap() && evaluate(b, &x, 0.0).unwrap()
    })
}

fn contradiction_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let names = ["u", "v"];
    let pairs = 200;
    let (mut clear, mut flagged) = (0, 0);
    for case in 0..pairs {
        let n = rng.random_range(3..=40u32);
        let odd = OddSpec::new(names.iter().map(|v| OddVariable::new(*v, 0.0, n as f64, 1.0)).collect())
            .map_err(|e| e.to_string())?;
        let a = lattice_rule(&mut rng, &names, n);
        let b = lattice_rule(&mut rng, &names, n);
        let (status, witness, ..) =
            check_pair(&a, &b, &odd, &ContradictionBudget::default(), &[], 0.0);
        let truth = lattice_satisfiable(&a, &b, &names, n);
        let show = || format!("case {case}: `{}` vs `{}`", print_rule(&a), print_rule(&b));
        match status {
            ContradictionStatus::Flagged => {
                ensure(truth, || format!("{}: flagged but unsatisfiable", show()))?;
                let w = witness.ok_or_else(|| format!("{}: flagged without witness", show()))?;
                ensure(
                    evaluate(&a, &w, 0.0).unwrap() && evaluate(&b, &w, 0.0).unwrap(),
                    || format!("{}: witness {w:?} does not satisfy both", show()),
                )?;
                flagged += 1;
            }
            ContradictionStatus::Clear => {
                ensure(!truth, || format!("{}: clear but satisfiable", show()))?;
                clear += 1;
            }
            ContradictionStatus::Unknown => return Err(format!("{}: unknown", show())),
        }
    }
    Ok(format!("{pairs} pairs agree with lattice enumeration ({clear} clear, {flagged} flagged)"))
}

fn grammar_closure() -> Check {
    let odd = OddSpec::driving_default();
    for seed in 0..1000u64 {
        let ast = random_rule(seed, &odd, 3, 4);
        let text = print_rule(&ast);
        let back = parse_rule(&text).map_err(|e| format!("seed {seed}: `{text}`: {e}"))?;
        ensure(back == ast, || format!("seed {seed}: round trip changed `{text}`"))?;
        let gc = grammar_compliance(&text);
        ensure(gc.gc == 1.0, || format!("seed {seed}: gc={} for `{text}`", gc.gc))?;
    }
    let tuple = "[[('greater_than_func','ARG1','0')]]";
    let gc = grammar_compliance(tuple);
    ensure(gc.gc < 1.0, || format!("tuple gc={}", gc.gc))?;
    ensure(parse_candidate_response(tuple, &odd).is_err(), || "tuple text accepted".into())?;
    Ok(format!("1000 rules round-trip with gc=1.0; tuple text gc={:.4} and rejected", gc.gc))
}

fn cm_calibration() -> Check {
    let cases = [
        ("(ARG2 > 3) and (ARG2 > 5)", "ARG2 > 5", CmBand::Optimal),
        ("ARG2 > 5", "(5 < ARG2) and (ARG2 < 9)", CmBand::Conservative),
        ("ARG1 > 0", "1 < ARG1 < 2", CmBand::OverConstrained),
    ];
    let mut got = Vec::new();
    for (before, after, want) in cases {
        let cm = change_minimality(&parse_rule(before).unwrap(), &parse_rule(after).unwrap());
        ensure(cm.band == want, || format!("`{before}` -> `{after}`: {:?}, want {want:?}", cm.band))?;
        let (lo, hi) = want.range();
        ensure((lo..=hi).contains(&cm.cm), || format!("cm {} outside [{lo}, {hi}]", cm.cm))?;
        got.push(format!("{}={:.2}", cm.band, cm.cm));
    }
    Ok(got.join(" "))
}

fn offline_completeness(earlier: &[bool]) -> Check {
    ensure(earlier.iter().all(|ok| *ok), || "an earlier criterion failed".into())?;
    let mut mock = MockGenerator::new(vec![
        "RULE: (ARG3 > 1)".into(),
        "RULE: (dist_front < 4.1) and (ego_speed > 0)\nEXPLANATION: moved the distance threshold".into(),
    ])
    .map_err(|e| e.to_string())?;
    let out = refine_fixture(&mut mock)?;
    ensure(out.attempts == 2 && out.dg_after == 1.0, || format!("mock run: attempts={}", out.attempts))?;

    // no silent fallback: the backend needs explicit configuration
    ensure(LlmConfig::from_lookup(|_| None).is_err(), || "LLM config built from an empty environment".into())?;
    // an unreachable local endpoint degrades to a transport failure
    let config = LlmConfig {
        base_url: "http://127.0.0.1:9".into(),
        api_key: "unused".into(),
        model: "unused".into(),
        timeout: Duration::from_secs(2),
    };
    let fx = make_paper_fixture(42).map_err(|e| e.to_string())?;
    let oracle = SafetyOracle::new(fx.config.clone());
    let ruleset = fx.ruleset();
    let inputs = RefineInputs {
        target_id: "r1",
        ruleset: &ruleset,
        dataset: &fx.dataset,
        oracle: &oracle,
        odd: &fx.config.odd,
        dataset_ref: "fixture-42",
    };
    let ctx = prepare(&inputs, &RefineConfig::default()).map_err(|e| e.to_string())?;
    let mut llm = LlmGenerator::new(config);
    let failure = llm.generate(&ctx, 1);
    ensure(matches!(failure, Err(GenerationFailure::Transport { .. })), || format!("{failure:?}"))?;
    Ok("criteria 1-8 ran on Deterministic/Mock generators only; live LLM test is #[ignore]d".into())
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let mut results: Vec<bool> = Vec::new();
    let criteria: [Criterion; 8] = [
        ("DG reproduction", dg_reproduction),
        ("end-to-end refinement", end_to_end_refinement),
        ("worked-example fidelity", worked_example),
        ("consistency table totality", table_one),
        ("counterfactual minimality", counterfactual_minimality),
        ("contradiction-checker equivalence", contradiction_equivalence),
        ("grammar closure", grammar_closure),
        ("CM calibration", cm_calibration),
    ];
    let print = |i: usize, name: &str, result: Check| {
        let ok = result.is_ok();
        match result {
            Ok(detail) => println!("criterion {i} ({name}): PASS  {detail}"),
            Err(why) => println!("criterion {i} ({name}): FAIL  {why}"),
        }
        ok
    };
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        results.push(print(i + 1, name, result));
    }
    let last = offline_completeness(&results);
    results.push(print(9, "offline completeness", last));
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
