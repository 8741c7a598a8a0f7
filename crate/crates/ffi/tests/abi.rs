use std::ffi::{c_char, CStr, CString};
use std::ptr;

use vizlm_ffi::*;

const CSV: &[u8] = b"region,sales\nNorth,10\nSouth,4\nNorth,6\n";

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { vizlm_string_free(s) };
    out
}

fn last_error() -> String {
    let p = vizlm_last_error();
    assert!(!p.is_null(), "no error recorded");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn table() -> *mut VizlmTable {
    let name = CString::new("sales").unwrap();
    let mut t = ptr::null_mut();
    let status = unsafe { vizlm_table_from_csv(CSV.as_ptr(), CSV.len(), name.as_ptr(), &mut t) };
    assert_eq!(status, VizlmStatus::Ok);
    t
}

fn spec(text: &str) -> Result<*mut VizlmSpec, (VizlmStatus, String)> {
    let src = CString::new(text).unwrap();
    let mut s = ptr::null_mut();
    match unsafe { vizlm_spec_parse(src.as_ptr(), &mut s) } {
        VizlmStatus::Ok => Ok(s),
        other => Err((other, last_error())),
    }
}

#[test]
fn parse_render_compile() {
    let t = table();
    assert_eq!(unsafe { vizlm_table_row_count(t) }, 3);
    let s = spec("mark  bar encoding x region y aggregate sum sales").unwrap();

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vizlm_spec_render(s, &mut out) }, VizlmStatus::Ok);
    assert_eq!(take(out), "mark bar encoding x region y aggregate sum sales");

    assert_eq!(unsafe { vizlm_validate_json(s, t, &mut out) }, VizlmStatus::Ok);
    assert_eq!(take(out), "[]");

    assert_eq!(unsafe { vizlm_compile_json(s, t, &mut out) }, VizlmStatus::Ok);
    let doc: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(doc["mark"], "bar");
    let values = doc["data"]["values"].as_array().unwrap();
    assert_eq!(values.len(), 2);
    // North: 10 + 6
    let north = values.iter().find(|v| v["region"] == "North").unwrap();
    assert_eq!(north.as_object().unwrap().values().filter_map(|v| v.as_f64()).next(), Some(16.0));

    assert_eq!(unsafe { vizlm_table_sketch_json(t, &mut out) }, VizlmStatus::Ok);
    assert!(take(out).contains("\"quantitative\""));

    unsafe {
        vizlm_spec_free(s);
        vizlm_table_free(t);
    }
}

#[test]
fn error_codes_and_messages() {
    let (status, msg) = spec("mark bar encoding").unwrap_err();
    assert_eq!(status, VizlmStatus::SyntaxError);
    assert!(msg.contains("syntax error"), "{msg}");

    let t = table();
    let s = spec("mark bar encoding x region y aggregate sum revenue").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vizlm_validate_json(s, t, &mut out) }, VizlmStatus::InvalidSpec);
    let violations: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(violations.as_array().unwrap().len(), 1);
    assert_eq!(unsafe { vizlm_compile_json(s, t, &mut out) }, VizlmStatus::InvalidSpec);
    assert!(out.is_null());
    assert!(last_error().contains("revenue"));

    let bad = b"a,b\n1\n";
    let name = CString::new("bad").unwrap();
    let mut t2 = ptr::null_mut();
    assert_eq!(
        unsafe { vizlm_table_from_csv(bad.as_ptr(), bad.len(), name.as_ptr(), &mut t2) },
        VizlmStatus::DatasetError
    );
    assert!(t2.is_null());

    unsafe {
        vizlm_spec_free(s);
        vizlm_table_free(t);
    }
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vizlm_spec_parse(ptr::null(), &mut out) }, VizlmStatus::NullArgument);
    assert!(last_error().contains("src"));
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { vizlm_spec_render(ptr::null(), &mut s) }, VizlmStatus::NullArgument);
    let src = CString::new("mark bar encoding x a y aggregate none b").unwrap();
    assert_eq!(unsafe { vizlm_spec_parse(src.as_ptr(), ptr::null_mut()) }, VizlmStatus::NullArgument);
    // freeing NULL is a no-op
    unsafe {
        vizlm_spec_free(ptr::null_mut());
        vizlm_table_free(ptr::null_mut());
        vizlm_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { vizlm_table_row_count(ptr::null()) }, 0);
}

#[test]
fn error_is_cleared_by_next_success() {
    assert!(spec("nonsense").is_err());
    assert!(!vizlm_last_error().is_null());
    let s = spec("mark line encoding x a y aggregate none b").unwrap();
    assert!(vizlm_last_error().is_null());
    unsafe { vizlm_spec_free(s) };
}

#[test]
fn response_parsing() {
    let text = "[VEGAZERO]\nmark bar encoding x region y aggregate sum sales\n[EXPLANATION-1]\nA bar chart.\n\
                [EXPLANATION-2]\nRegions on x.\n[CAPTION]\nNorth leads.\n[SUGGESTIONS]\n1) Which month?\n2) Which rep?";
    let c = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vizlm_parse_response_json(c.as_ptr(), 0, &mut out) }, VizlmStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["spec"], "mark bar encoding x region y aggregate sum sales");
    assert_eq!(v["narrative"]["caption"], "North leads.");
    assert_eq!(v["lenient"], false);

    let loose = CString::new("Try this: mark bar encoding x region y aggregate sum sales").unwrap();
    assert_eq!(unsafe { vizlm_parse_response_json(loose.as_ptr(), 0, &mut out) }, VizlmStatus::ResponseError);
    assert_eq!(unsafe { vizlm_parse_response_json(loose.as_ptr(), 1, &mut out) }, VizlmStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["lenient"], true);
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(vizlm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// The generated header must compile as C and declare every entry point.
#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/vizlm.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in [
        "vizlm_last_error",
        "vizlm_string_free",
        "vizlm_table_from_csv",
        "vizlm_table_free",
        "vizlm_spec_parse",
        "vizlm_spec_render",
        "vizlm_spec_free",
        "vizlm_validate_json",
        "vizlm_compile_json",
        "vizlm_parse_response_json",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}
