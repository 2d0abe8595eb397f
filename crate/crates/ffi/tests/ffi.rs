use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ruleforge::io;
use ruleforge::scenario::make_paper_fixture;
use ruleforge_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    rf_string_free(p);
    s
}

#[test]
fn parse_print_evaluate() {
    unsafe {
        let mut rule = ptr::null_mut();
        let src = cstr("ARG1 >  5 AND ARG2<3 or ARG1 == 0");
        assert_eq!(rf_rule_parse(src.as_ptr(), &mut rule), RfStatus::Ok);
        assert!(rf_last_error().is_null());

        let mut text = ptr::null_mut();
        assert_eq!(rf_rule_print(rule, &mut text), RfStatus::Ok);
        assert_eq!(take(text), "((ARG1 > 5) and (ARG2 < 3)) or (ARG1 == 0)");

        let names = [cstr("ARG1"), cstr("ARG2")];
        let name_ptrs: Vec<*const c_char> = names.iter().map(|n| n.as_ptr()).collect();
        let mut holds = false;
        let cases = [([6.0, 2.0], true), ([6.0, 4.0], false), ([0.0, 9.0], true)];
        for (values, expected) in cases {
            assert_eq!(rf_rule_evaluate(rule, name_ptrs.as_ptr(), values.as_ptr(), 2, -1.0, &mut holds), RfStatus::Ok);
            assert_eq!(holds, expected, "{values:?}");
        }
        assert_eq!(
            rf_rule_evaluate(rule, name_ptrs.as_ptr(), [1.0].as_ptr(), 1, -1.0, &mut holds),
            RfStatus::Semantics
        );
        assert!(last_error().contains("ARG2"));
        rf_rule_free(rule);
    }
}

#[test]
fn parse_errors_set_status_and_message() {
    unsafe {
        let mut rule = ptr::null_mut();
        let src = cstr("(ARG1 > 0) and and (ARG2 > 3)");
        assert_eq!(rf_rule_parse(src.as_ptr(), &mut rule), RfStatus::Parse);
        assert!(rule.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(rf_rule_parse(ptr::null(), &mut rule), RfStatus::NullArgument);
        assert_eq!(rf_rule_parse(src.as_ptr(), ptr::null_mut()), RfStatus::NullArgument);
        let bad = [0xffu8, 0];
        assert_eq!(rf_rule_parse(bad.as_ptr().cast(), &mut rule), RfStatus::InvalidUtf8);
        rf_rule_free(ptr::null_mut());
        rf_string_free(ptr::null_mut());
    }
}

#[test]
fn metrics_through_handles() {
    unsafe {
        let mut gc = 0.0;
        let src = cstr("(ARG1 > 0) and and (ARG2 > 3)");
        assert_eq!(rf_grammar_compliance(src.as_ptr(), &mut gc), RfStatus::Ok);
        assert!((gc - (1.0 - 1.0 / 12.0)).abs() < 1e-12);

        let odd_json = cstr(
            r#"{"schema_version":1,"variables":[{"name":"dist_front","min":0,"max":50,"step":1},{"name":"ego_speed","min":0,"max":30,"step":1}]}"#,
        );
        let mut odd = ptr::null_mut();
        assert_eq!(rf_odd_from_json(odd_json.as_ptr(), &mut odd), RfStatus::Ok, "{}", {
            let p = rf_last_error();
            if p.is_null() { String::new() } else { last_error() }
        });
        let mut rule = ptr::null_mut();
        let src = cstr("(dist_front < 80) and (ego_speed > 0)");
        assert_eq!(rf_rule_parse(src.as_ptr(), &mut rule), RfStatus::Ok);
        let mut sv = 0.0;
        assert_eq!(rf_semantic_validity(rule, odd, &mut sv), RfStatus::Ok);
        assert_eq!(sv, 0.5);
        rf_rule_free(rule);
        rf_odd_free(odd);

        let broken = cstr("{\"variables\": 3}");
        assert_eq!(rf_odd_from_json(broken.as_ptr(), &mut odd), RfStatus::Format);
        assert!(odd.is_null());
    }
}

fn refine_request(mock: Option<&[&str]>) -> String {
    let fx = make_paper_fixture(42).unwrap();
    let parse = |t: String| serde_json::from_str::<serde_json::Value>(&t).unwrap();
    let mut req = serde_json::json!({
        "odd": parse(io::odd_to_json(&fx.config.odd)),
        "rules": parse(io::rules_to_json(&fx.ruleset())),
        "oracle": parse(io::oracle_config_to_json(&fx.config)),
        "dataset_csv": io::dataset_to_csv(&fx.dataset, &fx.config.odd),
    });
    if let Some(responses) = mock {
        req["mock_responses"] = serde_json::json!(responses);
        req["max_attempts"] = serde_json::json!(2);
    }
    req.to_string()
}

#[test]
fn refine_round_trip() {
    unsafe {
        let req = cstr(&refine_request(None));
        let mut out = ptr::null_mut();
        assert_eq!(rf_refine_json(req.as_ptr(), &mut out), RfStatus::Ok);
        let outcome = io::outcome_from_json(&take(out)).unwrap();
        assert_eq!(outcome.rule_id, "r1");
        assert_eq!(ruleforge::grammar::print_rule(&outcome.refined), "(dist_front < 4.1) and (ego_speed > 0)");
        assert_eq!(outcome.dg_after, 1.0);
    }
}

#[test]
fn refine_exhaustion_and_bad_requests() {
    unsafe {
        let req = cstr(&refine_request(Some(&["(dist_front, <, 4.1)"])));
        let mut out = ptr::null_mut();
        assert_eq!(rf_refine_json(req.as_ptr(), &mut out), RfStatus::Rejected);
        assert!(out.is_null());
        assert!(last_error().contains("exhausted after 2"));

        let req = cstr("{\"odd\": {}}");
        assert_eq!(rf_refine_json(req.as_ptr(), &mut out), RfStatus::Format);
    }
}

#[test]
fn header_is_current_and_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/ruleforge.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    for line in src.lines().filter(|l| l.starts_with("pub unsafe extern \"C\" fn") || l.starts_with("pub extern \"C\" fn")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-"])
        .arg(format!("-I{}", dir.join("include").display()))
        .stdin(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            child.stdin.take().unwrap().write_all(b"#include \"ruleforge.h\"\nint main(void){return RF_STATUS_OK;}\n")?;
            child.wait()
        })
    else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(status.success());
}
