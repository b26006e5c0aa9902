//! Day-of-week alignment of dates across years.
//!
//! Each year gets a reference Monday: the Monday closest to the anniversary of
//! the base year's reference date. Offset `k` from the reference Monday picks
//! one date per year; those dates form a group that is compared only when all
//! of them are weekdays or all of them are holidays.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::DMatrix;

use crate::calendar::{first_monday, CalendarDay, DailySeries, DayClass, HolidayCalendar, MonthDay};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedGroup {
    /// Days since each year's reference Monday.
    pub offset: u32,
    /// Consecutive numbering over included groups, in base-date order.
    pub sample_no: Option<u32>,
    pub members: BTreeMap<i32, CalendarDay>,
    /// Set only when the group is included.
    pub group_class: Option<DayClass>,
    pub included: bool,
}

impl AlignedGroup {
    pub fn member_date(&self, year: i32) -> Option<NaiveDate> {
        self.members.get(&year).map(|d| d.date)
    }
}

/// Monday nearest to the anniversary of `base_reference` in `year`; ties go
/// to the earlier Monday.
pub fn reference_monday(year: i32, base_reference: NaiveDate) -> NaiveDate {
    let anniversary = MonthDay::of(base_reference).in_year(year);
    let back = anniversary.weekday().num_days_from_monday() as i64;
    let forward = (7 - back) % 7;
    if back <= forward {
        anniversary - Duration::days(back)
    } else {
        anniversary + Duration::days(forward)
    }
}

/// Builds groups for offsets 0.. up to the last offset whose base-year date is
/// on or before `until`.
pub fn align_years(
    base_year: i32,
    comparison_years: &[i32],
    calendar: &HolidayCalendar,
    until: NaiveDate,
) -> Result<Vec<AlignedGroup>> {
    if comparison_years.is_empty() {
        return Err(Error::Config("alignment needs at least one comparison year".into()));
    }
    let base_reference = first_monday(base_year);
    let mut years: Vec<i32> = comparison_years.to_vec();
    years.push(base_year);
    years.sort_unstable();
    years.dedup();
    let references: Vec<(i32, NaiveDate)> = years
        .iter()
        .map(|&y| (y, reference_monday(y, base_reference)))
        .collect();

    let mut groups = Vec::new();
    let mut next_sample = 1u32;
    let mut offset = 0u32;
    while base_reference + Duration::days(offset as i64) <= until {
        let mut members = BTreeMap::new();
        for &(year, reference) in &references {
            let date = reference + Duration::days(offset as i64);
            members.insert(year, calendar.classify(date)?);
        }
        let mut classes = members.values().map(|d| d.day_class);
        let first = classes.next().expect("at least two years");
        let included = classes.all(|c| c == first);
        let sample_no = included.then(|| {
            next_sample += 1;
            next_sample - 1
        });
        groups.push(AlignedGroup {
            offset,
            sample_no,
            members,
            group_class: included.then_some(first),
            included,
        });
        offset += 1;
    }
    Ok(groups)
}

/// Demand values of matched dates; rows follow sample numbers, columns follow `years`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedMatrix {
    pub years: Vec<i32>,
    pub sample_nos: Vec<u32>,
    pub dates: Vec<Vec<CalendarDay>>,
    pub values: DMatrix<f64>,
}

impl MatchedMatrix {
    pub fn column_of(&self, year: i32) -> Option<Vec<f64>> {
        let j = self.years.iter().position(|&y| y == year)?;
        Some(self.values.column(j).iter().copied().collect())
    }

    pub fn dates_of(&self, year: i32) -> Option<Vec<CalendarDay>> {
        let j = self.years.iter().position(|&y| y == year)?;
        Some(self.dates.iter().map(|row| row[j]).collect())
    }
}

pub fn extract_matched_series(
    series_by_year: &BTreeMap<i32, &DailySeries>,
    groups: &[AlignedGroup],
    class_filter: DayClass,
) -> Result<MatchedMatrix> {
    let years: Vec<i32> = match groups.first() {
        Some(g) => g.members.keys().copied().collect(),
        None => series_by_year.keys().copied().collect(),
    };
    if years.len() < 2 {
        return Err(Error::Config(
            "matched extraction needs a base year and at least one comparison year".into(),
        ));
    }
    let selected: Vec<&AlignedGroup> = groups
        .iter()
        .filter(|g| g.included && g.group_class == Some(class_filter))
        .collect();
    let mut values = DMatrix::zeros(selected.len(), years.len());
    let mut dates = Vec::with_capacity(selected.len());
    let mut sample_nos = Vec::with_capacity(selected.len());
    for (i, g) in selected.iter().enumerate() {
        let mut row = Vec::with_capacity(years.len());
        for (j, year) in years.iter().enumerate() {
            let day = g
                .members
                .get(year)
                .ok_or_else(|| Error::Data(format!("group at offset {} lacks year {year}", g.offset)))?;
            let series = series_by_year
                .get(year)
                .ok_or_else(|| Error::Data(format!("no demand series supplied for year {year}")))?;
            values[(i, j)] = series.value_on(day.date).ok_or(Error::MissingDate {
                year: *year,
                date: day.date,
            })?;
            row.push(*day);
        }
        dates.push(row);
        sample_nos.push(g.sample_no.expect("included groups are numbered"));
    }
    Ok(MatchedMatrix {
        years,
        sample_nos,
        dates,
        values,
    })
}

/// CSV with columns `sample_no,class,<one date column per year>,included`.
pub fn groups_to_csv(groups: &[AlignedGroup]) -> String {
    let years: Vec<i32> = groups
        .first()
        .map(|g| g.members.keys().copied().collect())
        .unwrap_or_default();
    let mut out = String::from("sample_no,class");
    for y in &years {
        let _ = write!(out, ",{y}");
    }
    out.push_str(",included\n");
    for g in groups {
        let sample = g.sample_no.map(|s| s.to_string()).unwrap_or_default();
        let class = match g.group_class {
            Some(c) => c.to_string(),
            None => "mixed".to_string(),
        };
        let _ = write!(out, "{sample},{class}");
        for y in &years {
            let _ = write!(out, ",{}", g.members[y].date);
        }
        let _ = writeln!(out, ",{}", if g.included { "yes" } else { "no" });
    }
    out
}
