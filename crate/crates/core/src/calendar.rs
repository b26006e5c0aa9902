//! Calendar days, holiday tables, daily series and analysis windows.
//!
//! Holidays are loaded from a plain text table (one ISO date per line, `#`
//! comments allowed). Saturdays and Sundays always classify as holidays; any
//! other date is a holiday only when it appears in the table. A calendar year
//! counts as covered when the table lists at least one date in it; asking for
//! a date outside the covered years is an error, never a silent weekday.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Japanese national holidays 2015-2021 as shipped in `data/holidays_jp.txt`.
pub const JAPAN_HOLIDAYS: &str = include_str!("../../../data/holidays_jp.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayClass {
    Weekday,
    Holiday,
}

impl fmt::Display for DayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DayClass::Weekday => "weekday",
            DayClass::Holiday => "holiday",
        })
    }
}

impl FromStr for DayClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weekday" | "w" => Ok(DayClass::Weekday),
            "holiday" | "h" => Ok(DayClass::Holiday),
            other => Err(Error::Config(format!("unknown day class `{other}`"))),
        }
    }
}

/// Which days enter a period summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayFilter {
    Weekday,
    Holiday,
    All,
}

impl DayFilter {
    pub fn accepts(self, class: DayClass) -> bool {
        match self {
            DayFilter::All => true,
            DayFilter::Weekday => class == DayClass::Weekday,
            DayFilter::Holiday => class == DayClass::Holiday,
        }
    }

    pub fn class(self) -> Option<DayClass> {
        match self {
            DayFilter::Weekday => Some(DayClass::Weekday),
            DayFilter::Holiday => Some(DayClass::Holiday),
            DayFilter::All => None,
        }
    }
}

impl fmt::Display for DayFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DayFilter::Weekday => "weekday",
            DayFilter::Holiday => "holiday",
            DayFilter::All => "all",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CalendarDay {
    pub date: NaiveDate,
    pub day_of_week: Weekday,
    pub day_class: DayClass,
}

impl CalendarDay {
    pub fn is_weekend(&self) -> bool {
        matches!(self.day_of_week, Weekday::Sat | Weekday::Sun)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    holidays: BTreeSet<NaiveDate>,
    covered_years: BTreeSet<i32>,
}

impl HolidayCalendar {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cal = HolidayCalendar::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d")
                .map_err(|e| Error::Config(format!("holiday table line {}: `{line}`: {e}", lineno + 1)))?;
            cal.covered_years.insert(date.year());
            cal.holidays.insert(date);
        }
        Ok(cal)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn japan() -> Self {
        Self::parse(JAPAN_HOLIDAYS).expect("bundled holiday table is well formed")
    }

    pub fn covers(&self, date: NaiveDate) -> bool {
        self.covered_years.contains(&date.year())
    }

    pub fn is_listed_holiday(&self, date: NaiveDate) -> bool {
        self.holidays.contains(&date)
    }

    pub fn classify(&self, date: NaiveDate) -> Result<CalendarDay> {
        if !self.covers(date) {
            return Err(Error::CalendarCoverage(date));
        }
        let day_of_week = date.weekday();
        let weekend = matches!(day_of_week, Weekday::Sat | Weekday::Sun);
        let day_class = if weekend || self.holidays.contains(&date) {
            DayClass::Holiday
        } else {
            DayClass::Weekday
        };
        Ok(CalendarDay {
            date,
            day_of_week,
            day_class,
        })
    }
}

/// One area's daily demand. Construction does not enforce the invariants;
/// call [`validate_series`] to get a list of violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub area_id: String,
    /// Unit as found in the source data (e.g. `MWh`); never converted.
    pub unit: String,
    pub observations: Vec<(CalendarDay, f64)>,
}

impl DailySeries {
    pub fn new(area_id: impl Into<String>, unit: impl Into<String>) -> Self {
        DailySeries {
            area_id: area_id.into(),
            unit: unit.into(),
            observations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Binary search by date; assumes the series is sorted.
    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        self.observations
            .binary_search_by(|(d, _)| d.date.cmp(&date))
            .ok()
            .map(|i| self.observations[i].1)
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.observations.first().map(|(d, _)| d.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.observations.last().map(|(d, _)| d.date)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NotIncreasing { date: NaiveDate, previous: NaiveDate },
    DuplicateDate(NaiveDate),
    NonFinite(NaiveDate),
    NonPositive(NaiveDate),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotIncreasing { date, previous } => {
                write!(f, "date {date} follows later date {previous}")
            }
            Violation::DuplicateDate(d) => write!(f, "duplicate date {d}"),
            Violation::NonFinite(d) => write!(f, "non-finite value on {d}"),
            Violation::NonPositive(d) => write!(f, "non-positive value on {d}"),
        }
    }
}

pub fn validate_series(series: &DailySeries) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev: Option<NaiveDate> = None;
    for (day, value) in &series.observations {
        if let Some(p) = prev {
            if day.date == p {
                out.push(Violation::DuplicateDate(day.date));
            } else if day.date < p {
                out.push(Violation::NotIncreasing {
                    date: day.date,
                    previous: p,
                });
            }
        }
        if !value.is_finite() {
            out.push(Violation::NonFinite(day.date));
        } else if *value <= 0.0 {
            out.push(Violation::NonPositive(day.date));
        }
        prev = Some(day.date);
    }
    out
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    fn shift_back_years(&self, years: u32) -> Self {
        DateRange {
            start: shift_back_years(self.start, years),
            end: shift_back_years(self.end, years),
        }
    }
}

pub(crate) fn shift_back_years(date: NaiveDate, years: u32) -> NaiveDate {
    date.checked_sub_months(Months::new(12 * years))
        .expect("date arithmetic stays in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisWindows {
    pub covariate_window: DateRange,
    pub training_window: DateRange,
    pub event_date: NaiveDate,
    pub evaluation_window: DateRange,
}

impl AnalysisWindows {
    /// Covariates Apr 2016 - Mar 2019, training Apr 2019 - Mar 2020, evaluation
    /// Apr 2020 - Mar 2021 with the event on the first evaluation day.
    pub fn fiscal_2020() -> Self {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        AnalysisWindows {
            covariate_window: DateRange::new(d(2016, 4, 1), d(2019, 3, 31)),
            training_window: DateRange::new(d(2019, 4, 1), d(2020, 3, 31)),
            event_date: d(2020, 4, 1),
            evaluation_window: DateRange::new(d(2020, 4, 1), d(2021, 3, 31)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("covariate", self.covariate_window),
            ("training", self.training_window),
            ("evaluation", self.evaluation_window),
        ] {
            if r.end < r.start {
                return Err(Error::Config(format!("{name} window ends before it starts")));
            }
        }
        if self.covariate_window.end >= self.training_window.start {
            return Err(Error::Config(
                "covariate window must end before the training window".into(),
            ));
        }
        if self.training_window.end >= self.event_date {
            return Err(Error::Config("training window must end before the event date".into()));
        }
        if self.event_date > self.evaluation_window.start {
            return Err(Error::Config(
                "event date must not be after the evaluation window start".into(),
            ));
        }
        Ok(())
    }

    /// Number of whole years spanned by the covariate window.
    pub fn covariate_years(&self) -> u32 {
        (self.covariate_window.days() as f64 / 365.25).round().max(1.0) as u32
    }

    /// Every window moved back by `years` calendar years (Feb 29 maps to Feb 28).
    pub fn shifted_back(&self, years: u32) -> Self {
        if years == 0 {
            return *self;
        }
        AnalysisWindows {
            covariate_window: self.covariate_window.shift_back_years(years),
            training_window: self.training_window.shift_back_years(years),
            event_date: shift_back_years(self.event_date, years),
            evaluation_window: self.evaluation_window.shift_back_years(years),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MonthDay {
    pub month: u32,
    pub day: u32,
}

impl MonthDay {
    pub fn new(month: u32, day: u32) -> Result<Self> {
        // 2020 is a leap year, so Feb 29 is accepted.
        NaiveDate::from_ymd_opt(2020, month, day)
            .ok_or_else(|| Error::Config(format!("invalid month/day {month}/{day}")))?;
        Ok(MonthDay { month, day })
    }

    pub fn of(date: NaiveDate) -> Self {
        MonthDay {
            month: date.month(),
            day: date.day(),
        }
    }

    /// The date in `year`; Feb 29 becomes Feb 28 in common years.
    pub fn in_year(self, year: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(year, self.month, self.day)
            .or_else(|| NaiveDate::from_ymd_opt(year, self.month, self.day - 1))
            .expect("valid month/day")
    }
}

impl fmt::Display for MonthDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}-{:02}", self.month, self.day)
    }
}

impl FromStr for MonthDay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (m, d) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("expected MM-DD, got `{s}`")))?;
        let parse = |x: &str| {
            x.parse::<u32>()
                .map_err(|_| Error::Config(format!("expected MM-DD, got `{s}`")))
        };
        MonthDay::new(parse(m)?, parse(d)?)
    }
}

impl TryFrom<String> for MonthDay {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MonthDay> for String {
    fn from(md: MonthDay) -> String {
        md.to_string()
    }
}

/// A recurring calendar period, e.g. 16 Dec - 15 Jan. Bounds are inclusive and
/// the period wraps across the new year when `start > end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSpec {
    pub label: String,
    pub start: MonthDay,
    pub end: MonthDay,
}

impl PeriodSpec {
    pub fn new(label: impl Into<String>, start: MonthDay, end: MonthDay) -> Self {
        PeriodSpec {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn wraps(&self) -> bool {
        self.start > self.end
    }

    pub fn contains_month_day(&self, md: MonthDay) -> bool {
        if self.wraps() {
            md >= self.start || md <= self.end
        } else {
            md >= self.start && md <= self.end
        }
    }

    /// The concrete occurrence of this period that ends on or after `from`,
    /// taking the earliest such occurrence.
    pub fn resolve(&self, from: NaiveDate) -> DateRange {
        let mut year = from.year() - 1;
        loop {
            let start = self.start.in_year(year);
            let end = self.end.in_year(if self.wraps() { year + 1 } else { year });
            if end >= from {
                return DateRange::new(start, end);
            }
            year += 1;
        }
    }

    /// Five temperature regimes of the Japanese year used for the evaluation.
    pub fn default_periods() -> Vec<PeriodSpec> {
        let md = |m, d| MonthDay { month: m, day: d };
        vec![
            PeriodSpec::new("1 Apr - 31 Jul", md(4, 1), md(7, 31)),
            PeriodSpec::new("1 Aug - 15 Sep", md(8, 1), md(9, 15)),
            PeriodSpec::new("16 Sep - 15 Dec", md(9, 16), md(12, 15)),
            PeriodSpec::new("16 Dec - 15 Jan", md(12, 16), md(1, 15)),
            PeriodSpec::new("16 Jan - 31 Mar", md(1, 16), md(3, 31)),
        ]
    }
}

/// Checks that `periods` cover every day of a leap year exactly once.
pub fn check_partition(periods: &[PeriodSpec]) -> Result<()> {
    let mut day = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    while day.year() == 2020 {
        let md = MonthDay::of(day);
        let hits = periods.iter().filter(|p| p.contains_month_day(md)).count();
        if hits != 1 {
            return Err(Error::Config(format!(
                "periods cover {md} {hits} times, expected exactly once"
            )));
        }
        day = day.succ_opt().unwrap();
    }
    Ok(())
}

/// First Monday of the given year.
pub fn first_monday(year: i32) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, 1, Weekday::Mon, 1).unwrap()
}
