use serde_json::Value;
use wrangle_core::interp::stats::{student_t_two_sided, welch_t_test};

fn cases() -> Vec<Value> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/stats/welch.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn frozen_samples_match_high_precision_values() {
    let cases = cases();
    assert_eq!(cases.len(), 201);
    for (i, c) in cases.iter().enumerate() {
        let r = welch_t_test(&floats(&c["a"]), &floats(&c["b"])).unwrap();
        let t = c["statistic"].as_f64().unwrap();
        let df = c["df"].as_f64().unwrap();
        let p = c["p_value"].as_f64().unwrap();
        assert!((r.statistic - t).abs() <= 1e-9 * t.abs().max(1.0), "case {i}: t {} vs {t}", r.statistic);
        assert!((r.df - df).abs() <= 1e-9 * df, "case {i}: df {} vs {df}", r.df);
        assert!((r.p_value - p).abs() <= 1e-7, "case {i}: p {} vs {p}", r.p_value);
        assert!((0.0..=1.0).contains(&r.p_value));
    }
}

#[test]
fn small_textbook_pair() {
    let r = welch_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    assert!((r.statistic + 1.224744871391589).abs() < 1e-12);
    assert!((r.df - 4.0).abs() < 1e-12);
    assert!((r.p_value - 0.28786413472669065).abs() < 1e-7);
}

#[test]
fn zero_variance_rules() {
    let same = welch_t_test(&[5.0, 5.0, 5.0], &[5.0, 5.0]).unwrap();
    assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
    let apart = welch_t_test(&[5.0, 5.0], &[7.0, 7.0, 7.0]).unwrap();
    assert_eq!((apart.statistic, apart.p_value), (-1e308, 0.0));
    let flipped = welch_t_test(&[7.0, 7.0], &[5.0, 5.0]).unwrap();
    assert_eq!((flipped.statistic, flipped.p_value), (1e308, 0.0));
}

#[test]
fn p_rises_to_one_as_t_shrinks() {
    for df in [1.0, 2.5, 4.0, 17.3, 120.0] {
        let mut last = 0.0;
        for k in (0..=40).rev() {
            let p = student_t_two_sided(k as f64 * 0.25, df);
            assert!(p >= last, "df {df}: p not monotone at t={}", k as f64 * 0.25);
            last = p;
        }
        assert!((last - 1.0).abs() < 1e-12);
    }
}

#[test]
fn too_few_values_is_an_error() {
    assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
}
