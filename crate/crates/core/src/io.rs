//! Artifact formats: dataset CSV, rules/ODD/config/evidence JSON.
//!
//! Every JSON artifact carries a `schema_version`. Writers are canonical so
//! that loading and storing a canonical file reproduces it byte for byte.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::counterfactual::EvidenceFile;
use crate::grammar::{format_number, parse_rule, OddSpec};
use crate::scenario::OracleConfig;
use crate::semantics::{Binding, LabeledRun, Outcome, Polarity, PolarizedRule};
use crate::validation::RefinementOutcome;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTCOME_COLUMN: &str = "outcome";

#[derive(Debug, Clone, PartialEq)]
pub struct FormatError {
    /// Kind of artifact being read, e.g. "dataset".
    pub what: &'static str,
    pub line: Option<u64>,
    pub field: Option<String>,
    pub message: String,
}

impl FormatError {
    fn new(what: &'static str, message: impl Into<String>) -> FormatError {
        FormatError { what, line: None, field: None, message: message.into() }
    }

    fn at_line(mut self, line: Option<u64>) -> FormatError {
        self.line = line;
        self
    }

    fn at_field(mut self, field: impl Into<String>) -> FormatError {
        self.field = Some(field.into());
        self
    }

    fn from_json(what: &'static str, e: serde_json::Error) -> FormatError {
        let line = (e.line() > 0).then_some(e.line() as u64);
        FormatError::new(what, e.to_string()).at_line(line)
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.what)?;
        if let Some(line) = self.line {
            write!(f, " line {line}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for FormatError {}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| IoError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Reads `path` and parses it with `parse`, attaching the path to errors.
pub fn load<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T, FormatError>) -> Result<T, IoError> {
    let text = read_text(path)?;
    parse(&text).map_err(|source| IoError::Format { path: path.to_path_buf(), source })
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    inner: T,
}

/// Pretty JSON with a `schema_version` field and a trailing newline.
pub fn to_versioned_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, inner: value })
        .expect("artifact types serialize");
    text.push('\n');
    text
}

pub fn from_versioned_json<T: DeserializeOwned>(what: &'static str, text: &str) -> Result<T, FormatError> {
    let v: Versioned<T> = serde_json::from_str(text).map_err(|e| FormatError::from_json(what, e))?;
    check_version(what, v.schema_version)?;
    Ok(v.inner)
}

fn check_version(what: &'static str, version: u32) -> Result<(), FormatError> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(FormatError::new(what, format!("unsupported schema_version {version}")).at_field("schema_version"))
    }
}

// ---- dataset ----

/// Header is the ODD variable names in declaration order, then `outcome`.
pub fn dataset_to_csv(dataset: &[LabeledRun], odd: &OddSpec) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = odd.names().collect();
    header.push(OUTCOME_COLUMN);
    w.write_record(&header).expect("in-memory write");
    for run in dataset {
        let mut row: Vec<String> = odd.names().map(|n| format_number(run.x[n])).collect();
        row.push(run.y.as_str().to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// When `odd` is given, the feature columns must be exactly its variables
/// and every value must lie within range.
pub fn dataset_from_csv(text: &str, odd: Option<&OddSpec>) -> Result<Vec<LabeledRun>, FormatError> {
    const WHAT: &str = "dataset";
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| FormatError::new(WHAT, e.to_string()).at_line(Some(1)))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let Some((last, features)) = header.split_last() else {
        return Err(FormatError::new(WHAT, "missing header").at_line(Some(1)));
    };
    if last != OUTCOME_COLUMN {
        return Err(FormatError::new(WHAT, format!("last column must be `{OUTCOME_COLUMN}`, found `{last}`"))
            .at_line(Some(1)));
    }
    if let Some(odd) = odd {
        let mut got: Vec<&str> = features.iter().map(String::as_str).collect();
        let mut want: Vec<&str> = odd.names().collect();
        got.sort_unstable();
        want.sort_unstable();
        if got != want {
            return Err(FormatError::new(
                WHAT,
                format!("feature columns {got:?} do not match ODD variables {want:?}"),
            )
            .at_line(Some(1)));
        }
    }
    let mut runs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            FormatError::new(WHAT, e.to_string()).at_line(e.position().map(|p| p.line()))
        })?;
        let line = record.position().map(|p| p.line());
        let mut x = Binding::new();
        for (name, raw) in features.iter().zip(record.iter()) {
            let value: f64 = raw.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                FormatError::new(WHAT, format!("`{raw}` is not a decimal number")).at_line(line).at_field(name)
            })?;
            if let Some(var) = odd.and_then(|o| o.get(name)) {
                if !var.contains(value) {
                    return Err(FormatError::new(WHAT, format!("{value} outside [{}, {}]", var.min, var.max))
                        .at_line(line)
                        .at_field(name));
                }
            }
            x.insert(name.clone(), value);
        }
        let y = match record.get(features.len()).map(str::trim) {
            Some("Pass") => Outcome::Pass,
            Some("Fail") => Outcome::Fail,
            other => {
                return Err(FormatError::new(WHAT, format!("expected Pass or Fail, found {other:?}"))
                    .at_line(line)
                    .at_field(OUTCOME_COLUMN))
            }
        };
        runs.push(LabeledRun::new(x, y));
    }
    Ok(runs)
}

/// `sha256:<hex>` of the canonical CSV form.
pub fn dataset_digest(dataset: &[LabeledRun], odd: &OddSpec) -> String {
    let hash = Sha256::digest(dataset_to_csv(dataset, odd).as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

// ---- rules ----

/// A rules-file entry before its text is parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRule {
    pub id: String,
    pub polarity: Polarity,
    pub text: String,
}

/// Accepts `{"schema_version", "rules": [...]}` or a bare array.
pub fn raw_rules_from_json(text: &str) -> Result<Vec<RawRule>, FormatError> {
    const WHAT: &str = "rules";
    let value: Value = serde_json::from_str(text).map_err(|e| FormatError::from_json(WHAT, e))?;
    let entries = match &value {
        Value::Array(items) => items,
        Value::Object(map) => {
            let version = map
                .get("schema_version")
                .and_then(Value::as_u64)
                .ok_or_else(|| FormatError::new(WHAT, "missing schema_version").at_field("schema_version"))?;
            check_version(WHAT, version as u32)?;
            map.get("rules")
                .and_then(Value::as_array)
                .ok_or_else(|| FormatError::new(WHAT, "expected an array").at_field("rules"))?
        }
        _ => return Err(FormatError::new(WHAT, "expected an array or an object")),
    };
    let mut rules = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let string_field = |name: &str| {
            entry
                .get(name)
                .and_then(Value::as_str)
                .ok_or_else(|| FormatError::new(WHAT, "expected a string").at_field(format!("rules[{i}].{name}")))
        };
        let id = string_field("id")?.to_string();
        let polarity = match string_field("polarity")? {
            "pass" => Polarity::Pass,
            "fail" => Polarity::Fail,
            other => {
                return Err(FormatError::new(WHAT, format!("unknown polarity `{other}` (expected pass or fail)"))
                    .at_field(format!("rules[{i}].polarity")))
            }
        };
        let text = string_field("text")?.to_string();
        if rules.iter().any(|r: &RawRule| r.id == id) {
            return Err(FormatError::new(WHAT, format!("duplicate id `{id}`")).at_field(format!("rules[{i}].id")));
        }
        rules.push(RawRule { id, polarity, text });
    }
    Ok(rules)
}

pub fn rules_from_json(text: &str) -> Result<Vec<PolarizedRule>, FormatError> {
    raw_rules_from_json(text)?
        .into_iter()
        .enumerate()
        .map(|(i, raw)| match parse_rule(&raw.text) {
            Ok(ast) => Ok(PolarizedRule::new(raw.id, raw.polarity, ast)),
            Err(e) => Err(FormatError::new("rules", e.to_string()).at_field(format!("rules[{i}].text"))),
        })
        .collect()
}

#[derive(Serialize)]
struct RulesOut<'a> {
    rules: &'a [PolarizedRule],
}

pub fn rules_to_json(rules: &[PolarizedRule]) -> String {
    to_versioned_json(&RulesOut { rules })
}

// ---- other artifacts ----

pub fn odd_to_json(odd: &OddSpec) -> String {
    to_versioned_json(odd)
}

pub fn odd_from_json(text: &str) -> Result<OddSpec, FormatError> {
    let odd: OddSpec = from_versioned_json("odd", text)?;
    odd.validate().map_err(|e| FormatError::new("odd", e.to_string()))?;
    Ok(odd)
}

pub fn oracle_config_to_json(config: &OracleConfig) -> String {
    to_versioned_json(config)
}

pub fn oracle_config_from_json(text: &str) -> Result<OracleConfig, FormatError> {
    let config: OracleConfig = from_versioned_json("oracle config", text)?;
    config.validate().map_err(|e| FormatError::new("oracle config", e.to_string()))?;
    Ok(config)
}

pub fn evidence_to_json(evidence: &EvidenceFile) -> String {
    let mut text = serde_json::to_string_pretty(evidence).expect("evidence serializes");
    text.push('\n');
    text
}

pub fn evidence_from_json(text: &str) -> Result<EvidenceFile, FormatError> {
    let evidence: EvidenceFile = serde_json::from_str(text).map_err(|e| FormatError::from_json("evidence", e))?;
    check_version("evidence", evidence.schema_version)?;
    Ok(evidence)
}

pub fn outcome_to_json(outcome: &RefinementOutcome) -> String {
    to_versioned_json(outcome)
}

pub fn outcome_from_json(text: &str) -> Result<RefinementOutcome, FormatError> {
    from_versioned_json("outcome", text)
}
