use wrangle_core::DslFunction;
use wrangle_testkit::oracle_suite;

#[test]
fn every_function_agrees_with_reference() {
    let mut failures = Vec::new();
    for f in DslFunction::ALL {
        let report = oracle_suite(f, 300, 7);
        assert!(report.succeeded > 0, "{f}: no case executed successfully");
        failures.extend(report.failures.into_iter().take(2));
    }
    assert!(failures.is_empty(), "{}", failures.join("\n\n"));
}
