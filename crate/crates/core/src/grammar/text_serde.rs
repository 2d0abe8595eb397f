//! Serde adapter storing a [`RuleAst`] as its canonical DSL text.
//!
//! Use with `#[serde(with = "crate::grammar::text_serde")]`.

use serde::{de::Error, Deserialize, Deserializer, Serializer};

use super::ast::RuleAst;
use super::parser::parse_rule;
use super::printer::print_rule;

pub fn serialize<S: Serializer>(ast: &RuleAst, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&print_rule(ast))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RuleAst, D::Error> {
    let text = String::deserialize(d)?;
    parse_rule(&text).map_err(|e| D::Error::custom(format!("rule `{text}`: {e}")))
}
