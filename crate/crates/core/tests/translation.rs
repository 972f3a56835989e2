use serde_json::{json, Value};
use wrangle_core::{explain_call, parse_program};

#[test]
fn every_rule_renders_its_template() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/translation_rules.json");
    let rules: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(rules.len(), 22);
    let mut mismatches = Vec::new();
    for rule in &rules {
        let doc = json!({"required_tables": [], "program": [rule["call"]]});
        let program = parse_program(&doc.to_string()).unwrap();
        let got = explain_call(&program.calls[0]);
        if got != rule["expected"].as_str().unwrap() {
            mismatches.push(format!("{got:?} != {:?}", rule["expected"]));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}
