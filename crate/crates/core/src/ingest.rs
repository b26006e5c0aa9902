//! Parsers for utility demand files, mobility reports and voltage-class
//! monthly demand, plus the canonical `area_id,date,demand,unit` CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::calendar::{DailySeries, HolidayCalendar};
use crate::error::{Error, Result};

/// Share of data rows allowed to reject before a file is refused.
pub const MAX_REJECT_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub area_id: String,
    pub date: NaiveDate,
    pub hour: u8,
    pub demand: f64,
}

/// How one utility lays out its hourly file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    /// WHATWG encoding label, e.g. `utf-8` or `shift_jis`.
    #[serde(default = "default_encoding")]
    pub encoding: String,
    /// Lines to skip before the first data row (titles, headers).
    #[serde(default)]
    pub skip_rows: usize,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Zero-based column holding the date (or date and time).
    pub date_column: usize,
    /// Zero-based hour column. When absent the hour is read from the date
    /// column, which `date_format` must then parse as a date-time.
    #[serde(default)]
    pub hour_column: Option<usize>,
    pub value_column: usize,
    /// chrono format string, e.g. `%Y/%m/%d`.
    pub date_format: String,
    /// Unit of the value column, carried into the daily series unchanged.
    pub unit: String,
}

fn default_encoding() -> String {
    "utf-8".into()
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// One-based line number in the decoded file.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDemand {
    pub records: Vec<HourlyRecord>,
    pub rejects: Vec<Reject>,
    pub data_rows: usize,
}

pub fn decode(bytes: &[u8], label: &str) -> Result<String> {
    let encoding = encoding_rs::Encoding::for_label(label.trim().as_bytes())
        .ok_or_else(|| Error::Config(format!("unknown text encoding `{label}`")))?;
    let (text, _, had_errors) = encoding.decode(bytes);
    if had_errors {
        return Err(Error::Data(format!("input is not valid {}", encoding.name())));
    }
    Ok(text.into_owned())
}

/// Looks up `name` among the declared layouts.
pub fn find_layout<'a>(layouts: &'a BTreeMap<String, Layout>, name: &str) -> Result<&'a Layout> {
    layouts.get(name).ok_or_else(|| Error::UnknownLayout(name.to_string()))
}

pub fn parse_demand_file(path: impl AsRef<Path>, area_id: &str, layout: &Layout) -> Result<ParsedDemand> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let parsed = parse_demand_bytes(&bytes, area_id, layout)?;
    check_reject_share(&parsed, &path.display().to_string())?;
    Ok(parsed)
}

/// Parses without the reject-share check; see [`check_reject_share`].
pub fn parse_demand_bytes(bytes: &[u8], area_id: &str, layout: &Layout) -> Result<ParsedDemand> {
    if !layout.delimiter.is_ascii() {
        return Err(Error::Config("layout delimiter must be an ASCII character".into()));
    }
    // Line positions reported by the csv reader are only reliable with LF endings.
    let text = decode(bytes, &layout.encoding)?.replace("\r\n", "\n");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(layout.delimiter as u8)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = BTreeSet::new();
    let mut data_rows = 0;
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                if line > layout.skip_rows {
                    data_rows += 1;
                    rejects.push(Reject {
                        line,
                        reason: format!("unreadable row: {e}"),
                    });
                }
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        if line <= layout.skip_rows || row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        data_rows += 1;
        match parse_row(&row, layout) {
            Ok((date, hour, demand)) => {
                if !seen.insert((date, hour)) {
                    rejects.push(Reject {
                        line,
                        reason: format!("duplicate hour {hour} on {date}"),
                    });
                    continue;
                }
                records.push(HourlyRecord {
                    area_id: area_id.to_string(),
                    date,
                    hour,
                    demand,
                });
            }
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }
    Ok(ParsedDemand {
        records,
        rejects,
        data_rows,
    })
}

pub fn check_reject_share(parsed: &ParsedDemand, path: &str) -> Result<()> {
    let rejected = parsed.rejects.len();
    if rejected as f64 > MAX_REJECT_SHARE * parsed.data_rows as f64 {
        return Err(Error::TooManyRejects {
            path: path.to_string(),
            rejected,
            total: parsed.data_rows,
        });
    }
    Ok(())
}

fn parse_row(row: &csv::StringRecord, layout: &Layout) -> std::result::Result<(NaiveDate, u8, f64), String> {
    let field = |i: usize| {
        row.get(i)
            .map(str::trim)
            .ok_or_else(|| format!("row has {} fields, column {} requested", row.len(), i + 1))
    };
    let raw_date = field(layout.date_column)?;
    let (date, hour) = match layout.hour_column {
        Some(col) => {
            let date = NaiveDate::parse_from_str(raw_date, &layout.date_format)
                .map_err(|e| format!("bad date `{raw_date}`: {e}"))?;
            (date, parse_hour(field(col)?)?)
        }
        None => {
            let dt = NaiveDateTime::parse_from_str(raw_date, &layout.date_format)
                .map_err(|e| format!("bad date-time `{raw_date}`: {e}"))?;
            (dt.date(), dt.hour() as u8)
        }
    };
    let raw_value = field(layout.value_column)?;
    let demand: f64 = raw_value
        .replace(',', "")
        .parse()
        .map_err(|_| format!("bad demand value `{raw_value}`"))?;
    if !demand.is_finite() {
        return Err(format!("non-finite demand `{raw_value}`"));
    }
    if demand < 0.0 {
        return Err(format!("negative demand {demand}"));
    }
    Ok((date, hour, demand))
}

/// Accepts `13`, `13:00` and `13:00-14:00` style hour labels.
fn parse_hour(raw: &str) -> std::result::Result<u8, String> {
    let head: String = raw.chars().take_while(|c| c.is_ascii_digit()).collect();
    match head.parse::<u8>() {
        Ok(h) if h < 24 => Ok(h),
        _ => Err(format!("bad hour `{raw}`")),
    }
}

/// Sums hours into one daily series per area (in area order). Every day
/// present must have all 24 hours.
pub fn daily_totals(records: &[HourlyRecord], unit: &str, calendar: &HolidayCalendar) -> Result<Vec<DailySeries>> {
    let mut by_area: BTreeMap<&str, BTreeMap<NaiveDate, [Option<f64>; 24]>> = BTreeMap::new();
    for r in records {
        if r.hour >= 24 {
            return Err(Error::Data(format!("hour {} out of range on {}", r.hour, r.date)));
        }
        let slot = &mut by_area
            .entry(&r.area_id)
            .or_default()
            .entry(r.date)
            .or_insert([None; 24])[r.hour as usize];
        if slot.is_some() {
            return Err(Error::Data(format!(
                "area {}: duplicate hour {} on {}",
                r.area_id, r.hour, r.date
            )));
        }
        *slot = Some(r.demand);
    }
    let mut missing = Vec::new();
    for days in by_area.values() {
        for (date, hours) in days {
            for (h, v) in hours.iter().enumerate() {
                if v.is_none() {
                    missing.push((*date, h as u8));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteDay(missing));
    }
    by_area
        .into_iter()
        .map(|(area, days)| {
            let mut series = DailySeries::new(area, unit);
            for (date, hours) in days {
                let total: f64 = hours.iter().map(|v| v.expect("checked above")).sum();
                series.observations.push((calendar.classify(date)?, total));
            }
            Ok(series)
        })
        .collect()
}

/// Canonical interchange CSV with shortest round-trip floats.
pub fn write_canonical(series: &[DailySeries]) -> String {
    let mut out = String::from("area_id,date,demand,unit\n");
    for s in series {
        for (day, value) in &s.observations {
            out.push_str(&format!("{},{},{},{}\n", s.area_id, day.date, value, s.unit));
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct CanonicalRow {
    area_id: String,
    date: NaiveDate,
    demand: f64,
    unit: String,
}

/// Reads the canonical CSV back into per-area series, keyed by area id.
/// Row order within an area is preserved.
pub fn read_canonical(text: &str, calendar: &HolidayCalendar) -> Result<BTreeMap<String, DailySeries>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out: BTreeMap<String, DailySeries> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: CanonicalRow = row?;
        let series = out
            .entry(row.area_id.clone())
            .or_insert_with(|| DailySeries::new(row.area_id.clone(), row.unit.clone()));
        if series.unit != row.unit {
            return Err(Error::Data(format!(
                "area {} mixes units `{}` and `{}`",
                row.area_id, series.unit, row.unit
            )));
        }
        series.observations.push((calendar.classify(row.date)?, row.demand));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityRecord {
    pub area_id: String,
    pub date: NaiveDate,
    pub residential: f64,
    pub workplaces: f64,
    pub retail_recreation: f64,
    pub grocery_pharmacy: f64,
}

/// Sub-region to area mapping with population weights. A region may feed
/// several areas.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionMap {
    /// area -> [(sub_region, weight)]
    pub areas: BTreeMap<String, Vec<(String, f64)>>,
    /// True when any area fell back to equal weights.
    pub equal_weight_fallback: bool,
}

impl RegionMap {
    /// Parses `area_id,sub_region,weight`. When an area lists no weights
    /// (blank column) its regions are weighted equally.
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let mut raw: BTreeMap<String, Vec<(String, Option<f64>)>> = BTreeMap::new();
        for row in reader.records() {
            let row = row?;
            let area = row.get(0).unwrap_or("").trim();
            let region = row.get(1).unwrap_or("").trim();
            if area.is_empty() || region.is_empty() {
                return Err(Error::Config("region map row needs area_id and sub_region".into()));
            }
            let weight = match row.get(2).map(str::trim) {
                None | Some("") => None,
                Some(w) => {
                    let w: f64 = w
                        .parse()
                        .map_err(|_| Error::Config(format!("bad weight `{w}` for {region}")))?;
                    if !(w > 0.0) || !w.is_finite() {
                        return Err(Error::Config(format!("weight for {region} must be positive")));
                    }
                    Some(w)
                }
            };
            raw.entry(area.to_string())
                .or_default()
                .push((region.to_string(), weight));
        }
        let mut map = RegionMap::default();
        for (area, entries) in raw {
            let all_weighted = entries.iter().all(|(_, w)| w.is_some());
            let none_weighted = entries.iter().all(|(_, w)| w.is_none());
            if !all_weighted && !none_weighted {
                return Err(Error::Config(format!(
                    "area {area} gives weights for some regions but not others"
                )));
            }
            map.equal_weight_fallback |= none_weighted;
            let list = entries.into_iter().map(|(r, w)| (r, w.unwrap_or(1.0))).collect();
            map.areas.insert(area, list);
        }
        Ok(map)
    }

    fn regions(&self) -> BTreeSet<&str> {
        self.areas.values().flatten().map(|(r, _)| r.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMobility {
    pub records: Vec<MobilityRecord>,
    pub warnings: Vec<String>,
}

const MOBILITY_COLUMNS: [&str; 4] = [
    "residential_percent_change_from_baseline",
    "workplaces_percent_change_from_baseline",
    "retail_and_recreation_percent_change_from_baseline",
    "grocery_and_pharmacy_percent_change_from_baseline",
];

/// Aggregates prefecture rows (`sub_region_1` set, `sub_region_2` empty) of a
/// community-mobility CSV to areas by weighted mean. Blank values drop out
/// and the remaining weights are renormalized; an (area, date) with a
/// category blank in every region is skipped with a warning.
pub fn parse_mobility(text: &str, map: &RegionMap) -> Result<ParsedMobility> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingCategory(name.to_string()))
    };
    let sub1 = col("sub_region_1")?;
    let sub2 = col("sub_region_2")?;
    let date_col = col("date")?;
    let value_cols: Vec<usize> = MOBILITY_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let known = map.regions();
    let mut unmapped = BTreeSet::new();
    // (region, date) -> four optional values
    let mut values: BTreeMap<(String, NaiveDate), [Option<f64>; 4]> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let region = row.get(sub1).unwrap_or("").trim();
        if region.is_empty() || !row.get(sub2).unwrap_or("").trim().is_empty() {
            continue;
        }
        if !known.contains(region) {
            unmapped.insert(region.to_string());
            continue;
        }
        let raw_date = row.get(date_col).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| Error::Data(format!("mobility date `{raw_date}`: {e}")))?;
        let mut v = [None; 4];
        for (slot, &c) in v.iter_mut().zip(&value_cols) {
            let raw = row.get(c).unwrap_or("").trim();
            if !raw.is_empty() {
                let x: f64 = raw
                    .parse()
                    .map_err(|_| Error::Data(format!("mobility value `{raw}` for {region} on {date}")))?;
                if !x.is_finite() {
                    return Err(Error::Data(format!("non-finite mobility value for {region} on {date}")));
                }
                *slot = Some(x);
            }
        }
        values.insert((region.to_string(), date), v);
    }

    let mut warnings: Vec<String> = unmapped
        .into_iter()
        .map(|r| format!("sub-region `{r}` is not mapped to any area"))
        .collect();
    let dates: BTreeSet<NaiveDate> = values.keys().map(|(_, d)| *d).collect();
    let mut records = Vec::new();
    for (area, regions) in &map.areas {
        for &date in &dates {
            let mut out = [0.0; 4];
            let mut complete = true;
            for (k, slot) in out.iter_mut().enumerate() {
                let (mut num, mut den) = (0.0, 0.0);
                for (region, w) in regions {
                    if let Some(Some(x)) = values.get(&(region.clone(), date)).map(|v| v[k]) {
                        num += w * x;
                        den += w;
                    }
                }
                if den > 0.0 {
                    *slot = num / den;
                } else {
                    complete = false;
                }
            }
            if !complete {
                warnings.push(format!("area {area}: incomplete mobility on {date}, skipped"));
                continue;
            }
            records.push(MobilityRecord {
                area_id: area.clone(),
                date,
                residential: out[0],
                workplaces: out[1],
                retail_recreation: out[2],
                grocery_pharmacy: out[3],
            });
        }
    }
    Ok(ParsedMobility { records, warnings })
}

pub fn write_mobility(records: &[MobilityRecord]) -> String {
    let mut out = String::from("area_id,date,residential,workplaces,retail_recreation,grocery_pharmacy\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.area_id, r.date, r.residential, r.workplaces, r.retail_recreation, r.grocery_pharmacy
        ));
    }
    out
}

pub fn read_mobility(text: &str) -> Result<Vec<MobilityRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VoltageClass {
    ExtraHigh,
    High,
    Lighting,
    Low,
    Other,
}

impl VoltageClass {
    pub const ALL: [VoltageClass; 5] = [
        VoltageClass::ExtraHigh,
        VoltageClass::High,
        VoltageClass::Lighting,
        VoltageClass::Low,
        VoltageClass::Other,
    ];
}

impl fmt::Display for VoltageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VoltageClass::ExtraHigh => "extra_high",
            VoltageClass::High => "high",
            VoltageClass::Lighting => "lighting",
            VoltageClass::Low => "low",
            VoltageClass::Other => "other",
        })
    }
}

impl FromStr for VoltageClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "extrahigh" | "extrahighvoltage" => Ok(VoltageClass::ExtraHigh),
            "high" | "highvoltage" => Ok(VoltageClass::High),
            "lighting" => Ok(VoltageClass::Lighting),
            "low" | "lowvoltage" => Ok(VoltageClass::Low),
            "other" => Ok(VoltageClass::Other),
            _ => Err(Error::Data(format!("unknown voltage class `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Data(format!("month {month} out of range")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn years_back(self, years: i32) -> Self {
        YearMonth {
            year: self.year - years,
            month: self.month,
        }
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            YearMonth {
                year: self.year + 1,
                month: 1,
            }
        } else {
            YearMonth {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Months from `self` through `last` inclusive.
    pub fn through(self, last: YearMonth) -> Vec<YearMonth> {
        let mut out = Vec::new();
        let mut m = self;
        while m <= last {
            out.push(m);
            m = m.next();
        }
        out
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Data(format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        YearMonth::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

/// Monthly demand for one voltage class. Kept apart from daily series: the
/// monthly figures are meter-reading differences, not calendar-month sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageClassRecord {
    pub month: YearMonth,
    pub class: VoltageClass,
    pub demand: f64,
}

/// Reads `month,class,demand` rows; a repeated (month, class) is an error.
pub fn parse_voltage_csv(text: &str) -> Result<Vec<VoltageClassRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let get = |j: usize| row.get(j).unwrap_or("").trim();
        let month: YearMonth = get(0).parse()?;
        let class: VoltageClass = get(1).parse()?;
        let demand: f64 = get(2)
            .replace(',', "")
            .parse()
            .map_err(|_| Error::Data(format!("voltage row {}: bad demand `{}`", i + 2, get(2))))?;
        if !demand.is_finite() {
            return Err(Error::Data(format!("voltage row {}: non-finite demand", i + 2)));
        }
        if !seen.insert((month, class)) {
            return Err(Error::Data(format!("voltage data repeats {month} {class}")));
        }
        out.push(VoltageClassRecord { month, class, demand });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageChange {
    pub month: YearMonth,
    /// `None` for the all-class total.
    pub class: Option<VoltageClass>,
    pub demand: f64,
    pub baseline: f64,
    pub change: f64,
}

/// Change of each target month against the mean of the same month
/// `years_back` years earlier, per class and in total. Classes missing in
/// any needed month are skipped for that month.
pub fn voltage_change(
    records: &[VoltageClassRecord],
    target_months: &[YearMonth],
    years_back: &[i32],
) -> Result<Vec<VoltageChange>> {
    if years_back.is_empty() {
        return Err(Error::Config(
            "voltage comparison needs at least one baseline year".into(),
        ));
    }
    let lookup: BTreeMap<(YearMonth, VoltageClass), f64> =
        records.iter().map(|r| ((r.month, r.class), r.demand)).collect();
    let mut out = Vec::new();
    for &month in target_months {
        let (mut total_now, mut total_base, mut any) = (0.0, 0.0, false);
        for class in VoltageClass::ALL {
            let Some(&now) = lookup.get(&(month, class)) else {
                continue;
            };
            let base: Option<Vec<f64>> = years_back
                .iter()
                .map(|&b| lookup.get(&(month.years_back(b), class)).copied())
                .collect();
            let Some(base) = base else { continue };
            let baseline = base.iter().sum::<f64>() / base.len() as f64;
            out.push(VoltageChange {
                month,
                class: Some(class),
                demand: now,
                baseline,
                change: now - baseline,
            });
            total_now += now;
            total_base += baseline;
            any = true;
        }
        if any {
            out.push(VoltageChange {
                month,
                class: None,
                demand: total_now,
                baseline: total_base,
                change: total_now - total_base,
            });
        }
    }
    Ok(out)
}

pub fn voltage_change_csv(changes: &[VoltageChange]) -> String {
    let mut out = String::from("month,class,demand,baseline,change\n");
    for c in changes {
        let class = c.class.map_or("total".to_string(), |k| k.to_string());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.month, class, c.demand, c.baseline, c.change
        ));
    }
    out
}
