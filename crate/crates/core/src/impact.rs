//! Pointwise, cumulative and per-period impact summaries.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! draws `x_0..x_{n-1}` the `p` quantile is `x_h` interpolated at
//! `h = (n - 1) p`. Intervals are central 95%.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bsts::PathMatrix;
use crate::calendar::{CalendarDay, DateRange, DayFilter, PeriodSpec};
use crate::error::{Error, Result};

pub const QUANTILE_METHOD: &str = "linear interpolation between order statistics (h = (n-1)p)";
const LOWER: f64 = 0.025;
const UPPER: f64 = 0.975;

/// `p` quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and central 95% interval of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Interval {
            median: quantile_sorted(&sorted, 0.5),
            lower: quantile_sorted(&sorted, LOWER),
            upper: quantile_sorted(&sorted, UPPER),
        }
    }
}

/// Probability of the majority sign; exact zeros count half to each side.
pub fn sign_probability(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let pos = values.iter().filter(|v| **v > 0.0).count() as f64;
    let neg = values.iter().filter(|v| **v < 0.0).count() as f64;
    let ties = n - pos - neg;
    (pos + ties / 2.0).max(neg + ties / 2.0) / n
}

/// Effect draws `actual[t] - cf[draw][t]`.
pub fn pointwise_effects(actual: &[f64], cf_paths: &PathMatrix) -> Result<PathMatrix> {
    if actual.len() != cf_paths.horizon() {
        return Err(Error::Dimension(format!(
            "{} actual values for {} counterfactual time points",
            actual.len(),
            cf_paths.horizon()
        )));
    }
    if let Some(i) = actual.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("actual value {i} is missing or non-finite")));
    }
    let mut out = cf_paths.clone();
    for d in 0..out.n_draws() {
        for (e, a) in out.row_mut(d).iter_mut().zip(actual) {
            *e = a - *e;
        }
    }
    Ok(out)
}

/// Running prefix sums of each draw's effects.
pub fn cumulative_effects(effects: &PathMatrix) -> PathMatrix {
    let mut out = effects.clone();
    for d in 0..out.n_draws() {
        let mut acc = 0.0;
        for e in out.row_mut(d) {
            acc += *e;
            *e = acc;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub date: NaiveDate,
    pub actual: f64,
    pub counterfactual: Interval,
    pub pointwise: Interval,
    pub cumulative: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEffect {
    pub label: String,
    pub from: NaiveDate,
    pub till: NaiveDate,
    /// Retained days inside the period.
    pub days: usize,
    pub relative_effect: f64,
    pub lower: f64,
    pub upper: f64,
    pub probability: f64,
}

/// Relative effect per draw `(sum y - sum y~) / sum y~` over the retained
/// days of each period, summarized by median, 95% interval and sign
/// probability.
///
/// Each period is resolved to its first occurrence ending on or after
/// `window_start`, so a 16 Dec - 15 Jan period spans the year boundary.
pub fn period_summary(
    days: &[CalendarDay],
    actual: &[f64],
    cf_paths: &PathMatrix,
    periods: &[PeriodSpec],
    day_filter: DayFilter,
    window_start: NaiveDate,
) -> Result<Vec<PeriodEffect>> {
    if days.len() != actual.len() || actual.len() != cf_paths.horizon() {
        return Err(Error::Dimension(format!(
            "{} days, {} actual values, {} counterfactual time points",
            days.len(),
            actual.len(),
            cf_paths.horizon()
        )));
    }
    let mut out = Vec::with_capacity(periods.len());
    for period in periods {
        let range = period.resolve(window_start);
        let idx: Vec<usize> = (0..days.len())
            .filter(|&t| range.contains(days[t].date) && day_filter.accepts(days[t].day_class))
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyPeriod(period.label.clone()));
        }
        out.push(summarize_period(period, range, &idx, actual, cf_paths));
    }
    Ok(out)
}

fn summarize_period(
    period: &PeriodSpec,
    range: DateRange,
    idx: &[usize],
    actual: &[f64],
    cf_paths: &PathMatrix,
) -> PeriodEffect {
    let actual_sum: f64 = idx.iter().map(|&t| actual[t]).sum();
    let rel: Vec<f64> = cf_paths
        .rows()
        .map(|row| {
            let cf_sum: f64 = idx.iter().map(|&t| row[t]).sum();
            (actual_sum - cf_sum) / cf_sum
        })
        .collect();
    let interval = Interval::of(&rel);
    PeriodEffect {
        label: period.label.clone(),
        from: range.start,
        till: range.end,
        days: idx.len(),
        relative_effect: interval.median,
        lower: interval.lower,
        upper: interval.upper,
        probability: sign_probability(&rel),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    /// `primary` or `placebo`.
    pub label: String,
    pub area_id: String,
    pub event_date: NaiveDate,
    pub draws: usize,
    pub quantile_method: String,
    pub day_filter: DayFilter,
    pub points: Vec<PointSummary>,
    pub periods: Vec<PeriodEffect>,
}

pub struct ReportInput<'a> {
    pub label: &'a str,
    pub area_id: &'a str,
    pub event_date: NaiveDate,
    pub window_start: NaiveDate,
    pub days: &'a [CalendarDay],
    pub actual: &'a [f64],
    pub cf_paths: &'a PathMatrix,
    pub periods: &'a [PeriodSpec],
    pub day_filter: DayFilter,
}

pub fn build_report(input: &ReportInput<'_>) -> Result<ImpactReport> {
    if input.cf_paths.n_draws() == 0 {
        return Err(Error::Dimension("no counterfactual draws".into()));
    }
    let effects = pointwise_effects(input.actual, input.cf_paths)?;
    let cumulative = cumulative_effects(&effects);
    let periods = period_summary(
        input.days,
        input.actual,
        input.cf_paths,
        input.periods,
        input.day_filter,
        input.window_start,
    )?;
    let points = input
        .days
        .iter()
        .enumerate()
        .map(|(t, day)| PointSummary {
            date: day.date,
            actual: input.actual[t],
            counterfactual: Interval::of(&input.cf_paths.column(t)),
            pointwise: Interval::of(&effects.column(t)),
            cumulative: Interval::of(&cumulative.column(t)),
        })
        .collect();
    Ok(ImpactReport {
        label: input.label.to_string(),
        area_id: input.area_id.to_string(),
        event_date: input.event_date,
        draws: input.cf_paths.n_draws(),
        quantile_method: QUANTILE_METHOD.to_string(),
        day_filter: input.day_filter,
        points,
        periods,
    })
}

/// One row per post-event date with the three panels: counterfactual,
/// pointwise effect and cumulative effect.
pub fn figure_csv(report: &ImpactReport) -> String {
    let mut out = String::from(
        "date,actual,cf_median,cf_lower,cf_upper,point_median,point_lower,point_upper,\
         cum_median,cum_lower,cum_upper\n",
    );
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.date,
            p.actual,
            p.counterfactual.median,
            p.counterfactual.lower,
            p.counterfactual.upper,
            p.pointwise.median,
            p.pointwise.lower,
            p.pointwise.upper,
            p.cumulative.median,
            p.cumulative.lower,
            p.cumulative.upper
        );
    }
    out
}

#[derive(Serialize)]
struct PeriodTable<'a> {
    area_id: &'a str,
    label: &'a str,
    event_date: NaiveDate,
    draws: usize,
    quantile_method: &'a str,
    day_filter: DayFilter,
    periods: &'a [PeriodEffect],
}

/// The per-period table as pretty JSON.
pub fn periods_json(report: &ImpactReport) -> String {
    let table = PeriodTable {
        area_id: &report.area_id,
        label: &report.label,
        event_date: report.event_date,
        draws: report.draws,
        quantile_method: &report.quantile_method,
        day_filter: report.day_filter,
        periods: &report.periods,
    };
    let mut s = serde_json::to_string_pretty(&table).expect("period table serializes");
    s.push('\n');
    s
}
