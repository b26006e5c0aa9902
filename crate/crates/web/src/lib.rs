//! wasm-bindgen exports for the static demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string. The `*_json`
//! functions hold the logic so they can be tested natively.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use demand_impact::align::align_years;
use demand_impact::analysis::{analyze_series, AnalysisConfig, ModelOptions, SeriesInput};
use demand_impact::calendar::{DayClass, DayFilter, HolidayCalendar};
use demand_impact::stats::{ptukey, qtukey};
use demand_impact::synth::{step_series, StepRecipe};
use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_DRAWS: usize = 5000;

fn date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

#[derive(Serialize)]
struct SimulatedImpact {
    dates: Vec<NaiveDate>,
    actual: Vec<f64>,
    event_index: usize,
    cf_median: Vec<f64>,
    cf_lower: Vec<f64>,
    cf_upper: Vec<f64>,
    cumulative_median: Vec<f64>,
    cumulative_lower: Vec<f64>,
    cumulative_upper: Vec<f64>,
    periods: Vec<demand_impact::impact::PeriodEffect>,
}

/// Generates a two-year daily series with a step of `effect` on 1 April
/// 2020, fits a level + weekly + regression model to the first year and
/// returns the counterfactual bands and per-period effects.
pub fn simulate_impact_json(effect: f64, noise_sd: f64, n_draws: usize, seed: u64) -> Result<String, String> {
    if !(-0.9..=2.0).contains(&effect) {
        return Err("effect must lie in [-0.9, 2]".into());
    }
    if !(noise_sd > 0.0 && noise_sd <= 200.0) {
        return Err("noise sd must lie in (0, 200]".into());
    }
    if !(100..=MAX_DRAWS).contains(&n_draws) {
        return Err(format!("draws must lie in [100, {MAX_DRAWS}]"));
    }
    let recipe = StepRecipe {
        effect,
        noise_sd,
        ..StepRecipe::default()
    };
    let s = step_series(
        &recipe,
        date("2019-04-01")?,
        date("2020-04-01")?,
        date("2021-03-31")?,
        seed,
    )
    .map_err(|e| e.to_string())?;
    let calendar = HolidayCalendar::japan();
    let days = s
        .dates
        .iter()
        .map(|&d| calendar.classify(d))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let input = SeriesInput {
        area_id: "synthetic".into(),
        days,
        y: s.y.clone(),
        covariates: Some(DMatrix::from_column_slice(s.y.len(), 1, &s.covariate)),
        event_index: s.event_index,
    };
    let config = AnalysisConfig {
        day_filter: DayFilter::All,
        model: ModelOptions {
            level: true,
            trend: false,
            seasonal_period: Some(7),
            regression: true,
        },
        n_draws,
        n_burn: n_draws / 4,
        ..AnalysisConfig::default()
    };
    let (_, report) = analyze_series(&input, &config, seed).map_err(|e| e.to_string())?;
    let out = SimulatedImpact {
        dates: s.dates,
        actual: s.y,
        event_index: s.event_index,
        cf_median: report.points.iter().map(|p| p.counterfactual.median).collect(),
        cf_lower: report.points.iter().map(|p| p.counterfactual.lower).collect(),
        cf_upper: report.points.iter().map(|p| p.counterfactual.upper).collect(),
        cumulative_median: report.points.iter().map(|p| p.cumulative.median).collect(),
        cumulative_lower: report.points.iter().map(|p| p.cumulative.lower).collect(),
        cumulative_upper: report.points.iter().map(|p| p.cumulative.upper).collect(),
        periods: report.periods,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct GroupRow {
    sample_no: Option<u32>,
    included: bool,
    /// year -> (date, "W" weekend, "H" other holiday or "")
    members: BTreeMap<i32, (NaiveDate, &'static str)>,
}

/// Day-of-week aligned groups for `base_year` against the comparison years,
/// covering `days` days from the base year's first Monday.
pub fn align_groups_json(base_year: i32, comparison_years: &str, days: u32) -> Result<String, String> {
    let years: Vec<i32> = comparison_years
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<i32>().map_err(|_| format!("bad year `{s}`")))
        .collect::<Result<_, _>>()?;
    if days == 0 || days > 366 {
        return Err("days must lie in [1, 366]".into());
    }
    let calendar = HolidayCalendar::japan();
    let until = demand_impact::calendar::first_monday(base_year) + Duration::days(days as i64 - 1);
    let groups = align_years(base_year, &years, &calendar, until).map_err(|e| e.to_string())?;
    let rows: Vec<GroupRow> = groups
        .iter()
        .map(|g| GroupRow {
            sample_no: g.sample_no,
            included: g.included,
            members: g
                .members
                .iter()
                .map(|(&y, d)| {
                    let flag = if d.is_weekend() {
                        "W"
                    } else if d.day_class == DayClass::Holiday {
                        "H"
                    } else {
                        ""
                    };
                    (y, (d.date, flag))
                })
                .collect(),
        })
        .collect();
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

/// Studentized range CDF at `q` and the `p` quantile, as `{"cdf":..,"quantile":..}`.
pub fn studentized_range_json(q: f64, p: f64, k: usize, df: f64) -> Result<String, String> {
    let cdf = ptukey(q, k, df).map_err(|e| e.to_string())?;
    let quantile = qtukey(p, k, df).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "cdf": cdf, "quantile": quantile }).to_string())
}

#[wasm_bindgen]
pub fn simulate_impact(effect: f64, noise_sd: f64, n_draws: usize, seed: u32) -> Result<String, JsValue> {
    simulate_impact_json(effect, noise_sd, n_draws, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn align_groups(base_year: i32, comparison_years: &str, days: u32) -> Result<String, JsValue> {
    align_groups_json(base_year, comparison_years, days).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn studentized_range(q: f64, p: f64, k: usize, df: f64) -> Result<String, JsValue> {
    studentized_range_json(q, p, k, df).map_err(|e| JsValue::from_str(&e))
}
