use std::fmt::Write;

use super::RefinementContext;
use crate::grammar::{format_number, print_rule, ArithOp};
use crate::semantics::Binding;

pub const FORMAT_EXEMPLAR: &str = "(0<ARG2<5) and (ARG1>0) or (8<ARG2<12)";

const MAX_PROMPT_PAIRS: usize = 50;

fn binding(x: &Binding) -> String {
    let parts: Vec<String> = x.iter().map(|(k, v)| format!("{k}={}", format_number(*v))).collect();
    format!("({})", parts.join(", "))
}

fn nonzero_delta(delta: &Binding) -> String {
    let parts: Vec<String> =
        delta.iter().filter(|(_, d)| **d != 0.0).map(|(k, d)| format!("{k}: {}", format_number(*d))).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Deterministic prompt text. Sections appear in a fixed order; the
/// failure section only when the context carries a failure summary.
pub fn build_prompt(ctx: &RefinementContext) -> String {
    let mut p = String::new();
    let target = &ctx.target;
    p.push_str("You refine operational safety rules so that their verdicts agree with observed outcomes.\n\n");

    p.push_str("## Grammar\n");
    p.push_str(&ctx.grammar_doc);
    p.push_str("\n\n");

    p.push_str("## Allowed vocabulary\nVariables (operational design domain):\n");
    for v in &ctx.odd.variables {
        let _ = writeln!(
            p,
            "- {} in [{}, {}], step {}",
            v.name,
            format_number(v.min),
            format_number(v.max),
            format_number(v.step)
        );
    }
    let relops: Vec<&str> = ctx.whitelist.relops.iter().map(|op| op.symbol()).collect();
    let arops: Vec<&str> = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div].iter().map(|a| a.symbol()).collect();
    let _ = writeln!(p, "Relational operators: {}", relops.join(" "));
    let _ = writeln!(p, "Arithmetic operators: {}", arops.join(" "));
    p.push_str("Logical operators: and or\nNo other variables, operators or functions are allowed.\n\n");

    p.push_str("## Inconsistent rule\n");
    let _ = writeln!(p, "id: {}", target.id);
    let _ = writeln!(p, "set: {} rules (verdict {} when the rule holds)", target.polarity.as_str(), target.polarity.verdict());
    let _ = writeln!(p, "rule: {}\n", print_rule(&target.ast));

    p.push_str("## Historical rules (must remain consistent)\n");
    if ctx.historical.is_empty() {
        p.push_str("(none)\n");
    }
    for h in &ctx.historical {
        let _ = writeln!(p, "- {} [{}]: {}", h.id, h.polarity.as_str(), print_rule(&h.ast));
    }
    p.push('\n');

    p.push_str("## Counterfactual evidence\n");
    let _ = writeln!(p, "dataset: {}", ctx.evidence.dataset_ref);
    for (i, ep) in ctx.evidence.pairs.iter().take(MAX_PROMPT_PAIRS).enumerate() {
        let pair = &ep.pair;
        let _ = writeln!(
            p,
            "{}. x={} y={}; x'={} y'={}; delta={}",
            i + 1,
            binding(&pair.x),
            pair.y,
            binding(&pair.x_cf),
            pair.y_cf,
            nonzero_delta(&pair.delta)
        );
    }
    if ctx.evidence.pairs.len() > MAX_PROMPT_PAIRS {
        let _ = writeln!(p, "({} more pairs omitted)", ctx.evidence.pairs.len() - MAX_PROMPT_PAIRS);
    }
    p.push('\n');

    p.push_str("## Format exemplar\n");
    p.push_str(FORMAT_EXEMPLAR);
    p.push_str("\n\n");

    p.push_str("## Task\n");
    p.push_str(
        "Return a refined rule that stops the inconsistent verdicts shown by the evidence while keeping every \
         historical rule consistent and never overlapping a rule of the opposite set. Use only threshold \
         adjustments, operator replacements, or the addition or removal of conjuncts and disjuncts, and change \
         as little as possible. Reply with exactly two labeled sections and nothing else:\n\
         RULE: <the refined rule on one line, in the grammar above>\n\
         EXPLANATION: <a short justification of each change>\n",
    );

    if let Some(summary) = &ctx.failure_summary {
        p.push_str("\n## Previous attempt failed\n");
        p.push_str(summary);
        p.push_str("\nCorrect these problems in the new rule.\n");
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidate::tests::fixture_context;

    #[test]
    fn sections_in_order() {
        let (_, ctx) = fixture_context();
        let p = build_prompt(&ctx);
        let order = [
            "## Grammar",
            "## Allowed vocabulary",
            "## Inconsistent rule",
            "## Historical rules",
            "## Counterfactual evidence",
            "## Format exemplar",
            "## Task",
        ];
        let positions: Vec<usize> = order.iter().map(|h| p.find(h).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(p.contains("rule: (dist_front < 5) and (ego_speed > 0)"));
        assert!(p.contains("x'=(dist_front=4, ego_speed=8, lane_offset=0.1) y'=Pass; delta={dist_front: -0.2}"));
        assert!(p.contains(FORMAT_EXEMPLAR));
        assert!(!p.contains("Previous attempt failed"));
        assert_eq!(p, build_prompt(&ctx));
    }

    #[test]
    fn failure_summary_is_verbatim() {
        let (_, mut ctx) = fixture_context();
        ctx.failure_summary = Some("out-of-vocabulary token ARG3".into());
        let p = build_prompt(&ctx);
        assert!(p.contains("## Previous attempt failed\nout-of-vocabulary token ARG3\n"));
    }
}
