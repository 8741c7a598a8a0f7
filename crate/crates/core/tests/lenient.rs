mod common;

use serde::Deserialize;
use vizlm::response::{lenient_extract, ResponseError};
use vizlm::vegazero::render;

#[derive(Deserialize)]
struct Expect {
    outcome: String,
    spec: Option<String>,
    lenient: Option<bool>,
    suggestions: Option<usize>,
    caption: Option<bool>,
}

#[derive(Deserialize)]
struct Labeled {
    id: String,
    name: String,
    raw: String,
    expect: Expect,
}

/// Hand-labeled free-form completions.
#[test]
fn lenient_extraction_matches_labels() {
    let text = std::fs::read_to_string(common::fixtures().join("lenient/samples.jsonl")).unwrap();
    let mut n = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let s: Labeled = serde_json::from_str(line).unwrap();
        let tag = format!("{} ({})", s.id, s.name);
        let got = lenient_extract(&s.raw);
        match s.expect.outcome.as_str() {
            "ok" => {
                let rec = got.unwrap_or_else(|e| panic!("{tag}: {e}"));
                assert_eq!(render(&rec.spec), s.expect.spec.unwrap(), "{tag}");
                assert_eq!(rec.lenient, s.expect.lenient.unwrap(), "{tag}");
                assert_eq!(rec.narrative.suggestions.len(), s.expect.suggestions.unwrap(), "{tag}");
                assert_eq!(!rec.narrative.caption.is_empty(), s.expect.caption.unwrap(), "{tag}");
                assert_eq!(rec.raw_text, s.raw, "{tag}");
            }
            "spec_syntax_error" => assert!(matches!(got, Err(ResponseError::SpecSyntaxError { .. })), "{tag}: {got:?}"),
            "no_spec" => assert!(matches!(got, Err(ResponseError::NoSpecFound { .. })), "{tag}: {got:?}"),
            other => panic!("{tag}: unknown outcome {other}"),
        }
        n += 1;
    }
    assert_eq!(n, 10);
}
