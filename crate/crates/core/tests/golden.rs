mod common;

#[test]
fn reference_docs_match_goldens() {
    common::check_goldens().unwrap();
}
