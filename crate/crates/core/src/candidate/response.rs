//! Strict parsing of free-text generator responses.
//!
//! The repair pipeline is fixed: strip markdown code fences, locate the
//! rule line (a `RULE:` label, else the first line that parses), and
//! reject list/tuple encodings outright. Anything else that fails to parse
//! or to pass the vocabulary check is rejected with a summary suitable for
//! re-prompting.

use serde::{Deserialize, Serialize};

use super::edit::diff;
use super::{CandidateSource, RefinementCandidate};
use crate::grammar::{check_vocabulary_with, parse_rule, OddSpec, RuleAst, Whitelist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectionKind {
    Empty,
    StructuralViolation,
    ParseError,
    VocabularyViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedResponse {
    pub kind: RejectionKind,
    pub summary: String,
    /// The text that was taken as the rule, when one was found.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub ast: RuleAst,
    pub rule_text: String,
    pub explanation: String,
    /// Repairs applied, in order.
    pub repairs: Vec<String>,
}

impl ParsedResponse {
    pub fn into_candidate(self, target: &RuleAst, source: CandidateSource, attempt: u32) -> RefinementCandidate {
        RefinementCandidate {
            change_log: diff(target, &self.ast),
            ast: self.ast,
            explanation: self.explanation,
            source,
            attempt,
        }
    }
}

const STRUCTURAL: &str = "structural violation: list/tuple form";

fn looks_like_tuple_form(text: &str) -> bool {
    text.contains(['[', ']', '\'', '"']) || (text.contains(',') && text.contains('('))
}

/// Strips markdown emphasis, list and quote markers around a line.
fn unmark(line: &str) -> &str {
    line.trim().trim_start_matches(['*', '#', '>', '-', ' ']).trim_end_matches('*').trim()
}

/// Returns the text after `label:` if the line starts with it.
fn after_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let l = unmark(line);
    let head = l.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = l[label.len()..].trim_start_matches('*').trim_start();
    rest.strip_prefix(':').map(|r| r.trim_start_matches('*').trim())
}

fn strip_inline_code(text: &str) -> &str {
    text.trim().trim_matches('`').trim()
}

pub fn parse_candidate_response(raw: &str, odd: &OddSpec) -> Result<ParsedResponse, RejectedResponse> {
    parse_candidate_response_with(raw, odd, &Whitelist::default())
}

pub fn parse_candidate_response_with(
    raw: &str,
    odd: &OddSpec,
    whitelist: &Whitelist,
) -> Result<ParsedResponse, RejectedResponse> {
    let reject = |kind, summary: String, rule_text: Option<&str>| RejectedResponse {
        kind,
        summary,
        rule_text: rule_text.map(str::to_string),
    };
    let mut repairs = Vec::new();
    let mut lines: Vec<&str> = raw.lines().collect();
    if lines.iter().any(|l| l.trim_start().starts_with("```")) {
        lines.retain(|l| !l.trim_start().starts_with("```"));
        repairs.push("stripped code fences".to_string());
    }
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(reject(RejectionKind::Empty, "empty response".into(), None));
    }

    let rule_label = lines.iter().position(|l| after_label(l, "rule").is_some());
    let expl_label = lines.iter().position(|l| after_label(l, "explanation").is_some());

    let (rule_text, rule_line) = match rule_label {
        Some(i) => {
            let inline = strip_inline_code(after_label(lines[i], "rule").unwrap_or(""));
            if inline.is_empty() {
                match (i + 1..lines.len()).find(|&j| !lines[j].trim().is_empty() && Some(j) != expl_label) {
                    Some(j) => (strip_inline_code(lines[j]).to_string(), j),
                    None => return Err(reject(RejectionKind::Empty, "RULE section is empty".into(), None)),
                }
            } else {
                (inline.to_string(), i)
            }
        }
        None => {
            let found = lines.iter().enumerate().find(|(_, l)| {
                let t = strip_inline_code(l);
                !t.is_empty() && parse_rule(t).is_ok()
            });
            match found {
                Some((j, l)) => {
                    if lines.iter().take(j).any(|l| !l.trim().is_empty()) {
                        repairs.push("trimmed prose before the rule".to_string());
                    }
                    (strip_inline_code(l).to_string(), j)
                }
                None => {
                    let first = lines.iter().map(|l| strip_inline_code(l)).find(|l| !l.is_empty()).unwrap_or("");
                    if lines.iter().any(|l| looks_like_tuple_form(l)) {
                        return Err(reject(RejectionKind::StructuralViolation, STRUCTURAL.into(), Some(first)));
                    }
                    let err = parse_rule(first).expect_err("no line parses");
                    return Err(reject(RejectionKind::ParseError, format!("parse error: {err}"), Some(first)));
                }
            }
        }
    };

    let ast = match parse_rule(&rule_text) {
        Ok(ast) => ast,
        Err(_) if looks_like_tuple_form(&rule_text) => {
            return Err(reject(RejectionKind::StructuralViolation, STRUCTURAL.into(), Some(&rule_text)))
        }
        Err(e) => return Err(reject(RejectionKind::ParseError, format!("parse error: {e}"), Some(&rule_text))),
    };
    let violations = check_vocabulary_with(&ast, odd, whitelist);
    if !violations.is_empty() {
        let parts: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(reject(
            RejectionKind::VocabularyViolation,
            format!("vocabulary violation: {}", parts.join("; ")),
            Some(&rule_text),
        ));
    }

    let explanation = match expl_label {
        Some(i) => {
            let mut parts = vec![after_label(lines[i], "explanation").unwrap_or("").to_string()];
            parts.extend(
                lines[i + 1..]
                    .iter()
                    .enumerate()
                    .take_while(|(k, l)| after_label(l, "rule").is_none() && i + 1 + k != rule_line)
                    .map(|(_, l)| l.to_string()),
            );
            parts.join("\n").trim().to_string()
        }
        None => lines
            .iter()
            .enumerate()
            .filter(|(j, l)| *j != rule_line && Some(*j) != rule_label && !l.trim().is_empty())
            .map(|(_, l)| l.trim())
            .collect::<Vec<_>>()
            .join("\n"),
    };
    Ok(ParsedResponse { ast, rule_text, explanation, repairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::OddVariable;

    fn arg_odd() -> OddSpec {
        OddSpec::new(vec![OddVariable::new("ARG1", 0.0, 10.0, 1.0), OddVariable::new("ARG2", 0.0, 20.0, 1.0)])
            .unwrap()
    }

    #[test]
    fn labeled_sections() {
        let raw = "RULE: (ARG2 > 5) and (ARG1 > 0)\nEXPLANATION: tightened the ARG2 bound.\nIt excludes the failing runs.";
        let r = parse_candidate_response(raw, &arg_odd()).unwrap();
        assert_eq!(r.ast, parse_rule("(ARG2 > 5) and (ARG1 > 0)").unwrap());
        assert_eq!(r.explanation, "tightened the ARG2 bound.\nIt excludes the failing runs.");
        assert!(r.repairs.is_empty());
    }

    #[test]
    fn code_fences_are_stripped() {
        let raw = "Here is the refined rule:\n```\n(ARG2 > 5)\n```\nThe bound moved up.";
        let r = parse_candidate_response(raw, &arg_odd()).unwrap();
        assert_eq!(r.rule_text, "(ARG2 > 5)");
        assert_eq!(r.explanation, "Here is the refined rule:\nThe bound moved up.");
        assert_eq!(r.repairs, vec!["stripped code fences", "trimmed prose before the rule"]);

        let raw = "**RULE:**\n```text\n(ARG2 > 5)\n```\n**EXPLANATION:** moved the bound";
        let r = parse_candidate_response(raw, &arg_odd()).unwrap();
        assert_eq!(r.rule_text, "(ARG2 > 5)");
        assert_eq!(r.explanation, "moved the bound");
    }

    #[test]
    fn tuple_forms_are_rejected() {
        for raw in ["[[('greater_than_func','ARG1','0')]]", "RULE: [('greater_than_func', 'ARG1', '0')]"] {
            let r = parse_candidate_response(raw, &arg_odd()).unwrap_err();
            assert_eq!(r.kind, RejectionKind::StructuralViolation);
            assert_eq!(r.summary, "structural violation: list/tuple form");
        }
    }

    #[test]
    fn other_rejections() {
        let r = parse_candidate_response("RULE: (ARG1 > 0) and (ARG3 < 4)", &arg_odd()).unwrap_err();
        assert_eq!(r.kind, RejectionKind::VocabularyViolation);
        assert!(r.summary.contains("UnknownVariable ARG3"));
        let r = parse_candidate_response("RULE: (ARG1 >", &arg_odd()).unwrap_err();
        assert_eq!(r.kind, RejectionKind::ParseError);
        assert_eq!(parse_candidate_response("  \n", &arg_odd()).unwrap_err().kind, RejectionKind::Empty);
        let r = parse_candidate_response("I cannot refine this rule.", &arg_odd()).unwrap_err();
        assert_eq!(r.kind, RejectionKind::ParseError);
    }

    #[test]
    fn candidate_change_log_replays() {
        let target = parse_rule("(ARG2 > 3) and (ARG2 > 5)").unwrap();
        let r = parse_candidate_response("RULE: ARG2 > 5\nEXPLANATION: pruned the inert bound", &arg_odd()).unwrap();
        let c = r.into_candidate(&target, CandidateSource::Mock, 2);
        assert_eq!(crate::candidate::replay(&target, &c.change_log).unwrap(), c.ast);
        assert_eq!(c.attempt, 2);
    }
}
