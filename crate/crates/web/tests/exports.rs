use demand_impact_web::{align_groups_json, simulate_impact_json, studentized_range_json};
use serde_json::Value;

#[test]
fn simulation_returns_bands_and_periods() {
    let v: Value = serde_json::from_str(&simulate_impact_json(0.1, 10.0, 400, 3).unwrap()).unwrap();
    let n = v["dates"].as_array().unwrap().len();
    let horizon = v["cf_median"].as_array().unwrap().len();
    assert_eq!(n - v["event_index"].as_u64().unwrap() as usize, horizon);
    assert_eq!(v["periods"].as_array().unwrap().len(), 5);
    let first = v["periods"][0]["relative_effect"].as_f64().unwrap();
    assert!((first - 0.1).abs() < 0.03, "{first}");
}

#[test]
fn simulation_rejects_out_of_range_inputs() {
    assert!(simulate_impact_json(0.1, 10.0, 10, 1).is_err());
    assert!(simulate_impact_json(5.0, 10.0, 400, 1).is_err());
    assert!(simulate_impact_json(0.1, -1.0, 400, 1).is_err());
}

#[test]
fn alignment_numbers_included_groups() {
    let v: Value = serde_json::from_str(&align_groups_json(2020, "2017,2018,2019", 14).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 14);
    assert_eq!(rows[0]["included"], false);
    assert_eq!(rows[13]["sample_no"], 12);
    assert_eq!(rows[5]["members"]["2020"][1], "W");
    assert!(align_groups_json(2020, "20x7", 14).is_err());
}

#[test]
fn studentized_range_quantile_inverts_cdf() {
    let v: Value = serde_json::from_str(&studentized_range_json(3.5, 0.95, 3, 20.0).unwrap()).unwrap();
    let q = v["quantile"].as_f64().unwrap();
    let back: Value = serde_json::from_str(&studentized_range_json(q, 0.5, 3, 20.0).unwrap()).unwrap();
    assert!((back["cdf"].as_f64().unwrap() - 0.95).abs() < 1e-8);
    assert!(studentized_range_json(1.0, 0.95, 1, 20.0).is_err());
}
