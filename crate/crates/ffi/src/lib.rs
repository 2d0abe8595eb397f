//! C ABI over the ruleforge library.
//!
//! Rules and ODDs are opaque handles. Every fallible call returns an
//! [`RfStatus`]; on failure the message is available from
//! [`rf_last_error`] on the same thread. Strings handed out by this
//! library must be released with [`rf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::Deserialize;

use ruleforge::candidate::{CandidateGenerator, DeterministicGenerator, MockGenerator};
use ruleforge::grammar::{parse_rule, print_rule, OddSpec, RuleAst};
use ruleforge::io;
use ruleforge::metrics::{grammar_compliance, semantic_validity};
use ruleforge::scenario::SafetyOracle;
use ruleforge::semantics::{decisiveness, evaluate, Binding, DEFAULT_EPS_EQ};
use ruleforge::validation::{refine, RefineConfig, RefineError, RefineInputs};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Format = 4,
    Semantics = 5,
    Rejected = 6,
    Panic = 7,
}

/// Parsed rule.
pub struct RfRule {
    ast: RuleAst,
}

/// Operational design domain.
pub struct RfOdd {
    odd: OddSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(RfStatus, String);

impl Failure {
    fn new(status: RfStatus, message: impl ToString) -> Failure {
        Failure(status, message.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(RfStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::new(RfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(RfStatus::NullArgument, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(RfStatus::NullArgument, format!("{what} is null")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes replaced").into_raw()
}

/// Message for the last failed call on this thread, or null.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn rf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn rf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `source` must be a NUL-terminated string; `out_rule` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_rule_parse(source: *const c_char, out_rule: *mut *mut RfRule) -> RfStatus {
    guard(|| {
        let slot = out(out_rule, "out_rule")?;
        *slot = ptr::null_mut();
        let ast = parse_rule(text(source, "source")?).map_err(|e| Failure::new(RfStatus::Parse, e))?;
        *slot = Box::into_raw(Box::new(RfRule { ast }));
        Ok(())
    })
}

/// # Safety
/// `rule` must come from [`rf_rule_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rf_rule_free(rule: *mut RfRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Canonical text of `rule`; free with [`rf_string_free`].
///
/// # Safety
/// `rule` must be a live handle; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_rule_print(rule: *const RfRule, out_text: *mut *mut c_char) -> RfStatus {
    guard(|| {
        let slot = out(out_text, "out_text")?;
        *slot = ptr::null_mut();
        *slot = c_string(print_rule(&handle(rule, "rule")?.ast));
        Ok(())
    })
}

/// Evaluates `rule` at the point given by parallel `names`/`values` arrays.
/// A negative `eps_eq` selects the default tolerance.
///
/// # Safety
/// `names` and `values` must each point to `len` readable elements.
#[no_mangle]
pub unsafe extern "C" fn rf_rule_evaluate(
    rule: *const RfRule,
    names: *const *const c_char,
    values: *const f64,
    len: usize,
    eps_eq: f64,
    out_holds: *mut bool,
) -> RfStatus {
    guard(|| {
        let rule = handle(rule, "rule")?;
        let slot = out(out_holds, "out_holds")?;
        if len > 0 && (names.is_null() || values.is_null()) {
            return Err(Failure::new(RfStatus::NullArgument, "names or values is null"));
        }
        let mut x = Binding::new();
        for i in 0..len {
            x.insert(text(*names.add(i), "names[i]")?.to_string(), *values.add(i));
        }
        let eps = if eps_eq < 0.0 { DEFAULT_EPS_EQ } else { eps_eq };
        *slot = evaluate(&rule.ast, &x, eps).map_err(|e| Failure::new(RfStatus::Semantics, e))?;
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out_odd` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_odd_from_json(json: *const c_char, out_odd: *mut *mut RfOdd) -> RfStatus {
    guard(|| {
        let slot = out(out_odd, "out_odd")?;
        *slot = ptr::null_mut();
        let odd = io::odd_from_json(text(json, "json")?).map_err(|e| Failure::new(RfStatus::Format, e))?;
        *slot = Box::into_raw(Box::new(RfOdd { odd }));
        Ok(())
    })
}

/// # Safety
/// `odd` must come from [`rf_odd_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rf_odd_free(odd: *mut RfOdd) {
    if !odd.is_null() {
        drop(Box::from_raw(odd));
    }
}

/// Grammar compliance of raw rule text, in [0, 1].
///
/// # Safety
/// `source` must be a NUL-terminated string; `out_gc` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_grammar_compliance(source: *const c_char, out_gc: *mut f64) -> RfStatus {
    guard(|| {
        let slot = out(out_gc, "out_gc")?;
        *slot = grammar_compliance(text(source, "source")?).gc;
        Ok(())
    })
}

/// Semantic validity of `rule` against `odd`, in [0, 1].
///
/// # Safety
/// `rule` and `odd` must be live handles; `out_sv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_semantic_validity(rule: *const RfRule, odd: *const RfOdd, out_sv: *mut f64) -> RfStatus {
    guard(|| {
        let slot = out(out_sv, "out_sv")?;
        *slot = semantic_validity(&handle(rule, "rule")?.ast, &handle(odd, "odd")?.odd).sv;
        Ok(())
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineRequest {
    odd: serde_json::Value,
    rules: serde_json::Value,
    oracle: serde_json::Value,
    dataset_csv: String,
    rule_id: Option<String>,
    #[serde(default)]
    mock_responses: Option<Vec<String>>,
    max_attempts: Option<u32>,
    eps_eq: Option<f64>,
    seed: Option<u64>,
}

fn run_refine(request: &str) -> Result<String, Failure> {
    let format = |e: &dyn std::fmt::Display| Failure::new(RfStatus::Format, e);
    let req: RefineRequest = serde_json::from_str(request).map_err(|e| format(&e))?;
    let odd = io::odd_from_json(&req.odd.to_string()).map_err(|e| format(&e))?;
    let rules = io::rules_from_json(&req.rules.to_string()).map_err(|e| format(&e))?;
    let dataset = io::dataset_from_csv(&req.dataset_csv, Some(&odd)).map_err(|e| format(&e))?;
    let oracle_config = io::oracle_config_from_json(&req.oracle.to_string()).map_err(|e| format(&e))?;

    let mut config = RefineConfig::default();
    if let Some(n) = req.max_attempts {
        config.max_attempts = n;
    }
    if let Some(eps) = req.eps_eq {
        config.eps_eq = eps;
    }
    if let Some(seed) = req.seed {
        config.contradiction.seed = seed;
    }
    let target_id = match req.rule_id {
        Some(id) => id,
        None => {
            let mut first = None;
            for rule in &rules {
                let report =
                    decisiveness(rule, &dataset, config.eps_eq).map_err(|e| Failure::new(RfStatus::Semantics, e))?;
                if report.n_mismatch > 0 {
                    first = Some(rule.id.clone());
                    break;
                }
            }
            first.ok_or_else(|| Failure::new(RfStatus::Rejected, "no rule is inconsistent on the dataset"))?
        }
    };

    let mut mock;
    let mut local = DeterministicGenerator;
    let generator: &mut dyn CandidateGenerator = match req.mock_responses {
        Some(responses) => {
            mock = MockGenerator::new(responses).map_err(|e| format(&e))?;
            &mut mock
        }
        None => &mut local,
    };
    let oracle = SafetyOracle::new(oracle_config);
    let inputs = RefineInputs {
        target_id: &target_id,
        ruleset: &rules,
        dataset: &dataset,
        oracle: &oracle,
        odd: &odd,
        dataset_ref: &io::dataset_digest(&dataset, &odd),
    };
    match refine(&inputs, generator, &config) {
        Ok(outcome) => Ok(io::outcome_to_json(&outcome)),
        Err(RefineError::Exhausted { reports }) => Err(Failure::new(
            RfStatus::Rejected,
            format!("refinement exhausted after {} attempt(s)", reports.len()),
        )),
        Err(e @ RefineError::Semantics(_)) => Err(Failure::new(RfStatus::Semantics, e)),
        Err(e) => Err(Failure::new(RfStatus::Rejected, e)),
    }
}

/// Runs the refinement loop described by a JSON request and returns the
/// outcome as JSON. Request fields: `odd`, `rules` and `oracle` as JSON
/// objects, `dataset_csv` as text, and optional `rule_id`,
/// `mock_responses`, `max_attempts`, `eps_eq`, `seed`. Without
/// `mock_responses` the local deterministic generator is used.
///
/// # Safety
/// `request` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_refine_json(request: *const c_char, out_json: *mut *mut c_char) -> RfStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = ptr::null_mut();
        *slot = c_string(run_refine(text(request, "request")?)?);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_maps_outcomes() {
        assert_eq!(guard(|| Ok(())), RfStatus::Ok);
        assert!(rf_last_error().is_null());
        assert_eq!(guard(|| Err(Failure::new(RfStatus::Format, "bad\0input"))), RfStatus::Format);
        let msg = unsafe { CStr::from_ptr(rf_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "bad input");
        assert_eq!(guard(|| panic!("boom")), RfStatus::Panic);
        assert_eq!(guard(|| Ok(())), RfStatus::Ok);
        assert!(rf_last_error().is_null());
    }
}
