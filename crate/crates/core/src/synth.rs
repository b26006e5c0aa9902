//! Synthetic data: step-effect series for calibration experiments and a
//! small multi-area dataset in the raw file formats the ingest stage reads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{derive_seed, ModelOptions};
use crate::calendar::{DailySeries, HolidayCalendar, JAPAN_HOLIDAYS};
use crate::error::{Error, Result};
use crate::ingest::{HourlyRecord, Layout, VoltageClass};
use crate::pipeline::{AreaInput, DataPaths, McmcBudget, PipelineConfig};

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Daily series `y_t = (level_t + weekly[dow] + coef * x_t + e_t) * m_t`
/// with a random-walk level, a degree-day covariate `x_t` and a
/// multiplicative step `m_t = 1 + effect` from the event date on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecipe {
    pub level: f64,
    pub level_sd: f64,
    /// Additive weekday offsets, Monday first.
    pub weekly: [f64; 7],
    pub covariate_coef: f64,
    pub noise_sd: f64,
    pub effect: f64,
}

impl Default for StepRecipe {
    fn default() -> Self {
        StepRecipe {
            level: 1000.0,
            level_sd: 0.5,
            weekly: [30.0, 35.0, 35.0, 30.0, 20.0, -60.0, -90.0],
            covariate_coef: 6.0,
            noise_sd: 10.0,
            effect: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSeries {
    pub dates: Vec<NaiveDate>,
    pub y: Vec<f64>,
    pub covariate: Vec<f64>,
    /// Index of the first post-event day.
    pub event_index: usize,
}

/// Seasonal temperature in degrees C with a late-January minimum and an
/// early-August maximum.
pub fn seasonal_temperature(date: NaiveDate) -> f64 {
    let doy = date.ordinal() as f64;
    15.5 + 10.5 * (2.0 * PI * (doy - 124.0) / 365.25).sin()
}

/// Days from `start` to `end` inclusive with an event at `event`.
pub fn step_series(
    recipe: &StepRecipe,
    start: NaiveDate,
    event: NaiveDate,
    end: NaiveDate,
    seed: u64,
) -> Result<StepSeries> {
    if !(start < event && event <= end) {
        return Err(Error::Config("need start < event <= end".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = recipe.level;
    let mut weather = 0.0;
    let mut out = StepSeries {
        dates: Vec::new(),
        y: Vec::new(),
        covariate: Vec::new(),
        event_index: (event - start).num_days() as usize,
    };
    let mut date = start;
    while date <= end {
        weather = 0.7 * weather + 1.5 * normal(&mut rng);
        let x = (seasonal_temperature(date) + weather - 18.0).abs();
        let dow = date.weekday().num_days_from_monday() as usize;
        let base = level + recipe.weekly[dow] + recipe.covariate_coef * x + recipe.noise_sd * normal(&mut rng);
        let factor = if date >= event { 1.0 + recipe.effect } else { 1.0 };
        out.dates.push(date);
        out.y.push(base * factor);
        out.covariate.push(x);
        level += recipe.level_sd * normal(&mut rng);
        date += Duration::days(1);
    }
    Ok(out)
}

/// How strongly people stay home on a date, from 0 (normal life) to 1
/// (first emergency declaration), interpolated between fixed knots.
pub fn stay_home_intensity(date: NaiveDate) -> f64 {
    let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
    let knots = [
        (d(2020, 2, 15), 0.0),
        (d(2020, 3, 15), 0.3),
        (d(2020, 4, 7), 0.9),
        (d(2020, 5, 1), 1.0),
        (d(2020, 5, 26), 0.8),
        (d(2020, 7, 1), 0.4),
        (d(2020, 11, 15), 0.3),
        (d(2021, 1, 8), 0.65),
        (d(2021, 2, 15), 0.6),
        (d(2021, 3, 21), 0.4),
        (d(2021, 12, 31), 0.4),
    ];
    if date <= knots[0].0 {
        return 0.0;
    }
    for w in knots.windows(2) {
        let ((d0, v0), (d1, v1)) = (w[0], w[1]);
        if date <= d1 {
            let f = (date - d0).num_days() as f64 / (d1 - d0).num_days() as f64;
            return v0 + f * (v1 - v0);
        }
    }
    knots[knots.len() - 1].1
}

/// Parameters of one synthetic utility area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRecipe {
    pub area_id: String,
    /// Typical daily demand in the area's unit.
    pub level: f64,
    /// Relative weight of each prefecture in the mobility file.
    pub prefectures: Vec<(String, f64)>,
    pub layout_name: String,
    /// Temperature offset relative to the national seasonal curve.
    pub climate_offset: f64,
    /// Scales the stay-home demand response.
    pub response: f64,
}

/// Weekday multipliers, Monday first.
const WEEKLY: [f64; 7] = [1.0, 1.01, 1.01, 1.0, 0.99, 0.86, 0.8];
const HOLIDAY_FACTOR: f64 = 0.84;

/// Share of daily demand falling in each hour.
pub fn diurnal_shape() -> [f64; 24] {
    let mut w = [0.0; 24];
    for (h, v) in w.iter_mut().enumerate() {
        let x = h as f64;
        *v = 1.0 + 0.35 * (2.0 * PI * (x - 9.0) / 24.0).sin() + 0.15 * (-((x - 19.0) / 2.0).powi(2)).exp();
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// Daily temperatures with AR(1) weather noise.
pub fn temperature_series(recipe: &AreaRecipe, start: NaiveDate, end: NaiveDate, seed: u64) -> Vec<(NaiveDate, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weather = 0.0;
    let mut out = Vec::new();
    let mut date = start;
    while date <= end {
        weather = 0.6 * weather + 0.8 * normal(&mut rng);
        out.push((date, seasonal_temperature(date) + recipe.climate_offset + weather));
        date += Duration::days(1);
    }
    out
}

/// Daily demand driven by temperature, day type, a slow random-walk level
/// and the stay-home response.
pub fn daily_demand(
    recipe: &AreaRecipe,
    temperatures: &[(NaiveDate, f64)],
    calendar: &HolidayCalendar,
    unit: &str,
    seed: u64,
) -> Result<DailySeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_level = recipe.level.ln();
    let mut series = DailySeries::new(recipe.area_id.clone(), unit);
    for &(date, temp) in temperatures {
        let day = calendar.classify(date)?;
        let dow = date.weekday().num_days_from_monday() as usize;
        let mut factor = WEEKLY[dow];
        if calendar.is_listed_holiday(date) && !day.is_weekend() {
            factor *= HOLIDAY_FACTOR;
        }
        let degree = (temp - 18.0).abs();
        let weather = 1.0 + 0.014 * degree;
        let stay = stay_home_intensity(date);
        let covid = 1.0 + recipe.response * stay * (-0.08 + 0.012 * degree);
        let noise = (0.012 * normal(&mut rng)).exp();
        series
            .observations
            .push((day, log_level.exp() * factor * weather * covid * noise));
        log_level += 0.0015 * normal(&mut rng);
    }
    Ok(series)
}

/// Splits daily totals into hours, rounded to 0.1.
pub fn hourly_records(series: &DailySeries) -> Vec<HourlyRecord> {
    let shape = diurnal_shape();
    let mut out = Vec::with_capacity(series.len() * 24);
    for (day, total) in &series.observations {
        for (h, w) in shape.iter().enumerate() {
            out.push(HourlyRecord {
                area_id: series.area_id.clone(),
                date: day.date,
                hour: h as u8,
                demand: (total * w * 10.0).round() / 10.0,
            });
        }
    }
    out
}

/// Renders hourly records in `layout`, encoded as the layout declares.
/// `title` lines fill the rows the layout skips.
pub fn render_demand_file(records: &[HourlyRecord], layout: &Layout, title: &[&str]) -> Result<Vec<u8>> {
    if title.len() != layout.skip_rows {
        return Err(Error::Config(format!(
            "layout skips {} rows, {} title lines given",
            layout.skip_rows,
            title.len()
        )));
    }
    let sep = layout.delimiter.to_string();
    let mut text = String::new();
    for line in title {
        text.push_str(line);
        text.push_str("\r\n");
    }
    let width = [Some(layout.date_column), layout.hour_column, Some(layout.value_column)]
        .iter()
        .flatten()
        .max()
        .copied()
        .unwrap_or(0)
        + 1;
    for r in records {
        let mut fields = vec![String::new(); width];
        match layout.hour_column {
            Some(col) => {
                fields[layout.date_column] = r.date.format(&layout.date_format).to_string();
                fields[col] = format!("{}:00", r.hour);
            }
            None => {
                let dt = r.date.and_hms_opt(r.hour as u32, 0, 0).expect("valid hour");
                fields[layout.date_column] = dt.format(&layout.date_format).to_string();
            }
        }
        let value = format!("{:.1}", r.demand);
        fields[layout.value_column] = if layout.delimiter == ',' {
            format!("\"{}\"", group_thousands(&value))
        } else {
            value
        };
        text.push_str(&fields.join(&sep));
        text.push_str("\r\n");
    }
    let encoding = encoding_rs::Encoding::for_label(layout.encoding.as_bytes())
        .ok_or_else(|| Error::Config(format!("unknown text encoding `{}`", layout.encoding)))?;
    let (bytes, _, unmappable) = encoding.encode(&text);
    if unmappable {
        return Err(Error::Data(format!("text not representable in {}", encoding.name())));
    }
    Ok(bytes.into_owned())
}

fn group_thousands(value: &str) -> String {
    let (int, frac) = value.split_once('.').unwrap_or((value, ""));
    let mut grouped = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    if frac.is_empty() {
        grouped
    } else {
        format!("{grouped}.{frac}")
    }
}

/// Community-mobility CSV rows for every prefecture of every area from
/// 2020-02-15 to `end`.
pub fn mobility_csv(areas: &[AreaRecipe], end: NaiveDate, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefectures: Vec<&str> = areas
        .iter()
        .flat_map(|a| a.prefectures.iter().map(|(p, _)| p.as_str()))
        .collect();
    prefectures.sort_unstable();
    prefectures.dedup();
    let mut out = String::from(
        "country_region_code,country_region,sub_region_1,sub_region_2,metro_area,iso_3166_2_code,\
         census_fips_code,place_id,date,retail_and_recreation_percent_change_from_baseline,\
         grocery_and_pharmacy_percent_change_from_baseline,parks_percent_change_from_baseline,\
         transit_stations_percent_change_from_baseline,workplaces_percent_change_from_baseline,\
         residential_percent_change_from_baseline\n",
    );
    let start = NaiveDate::from_ymd_opt(2020, 2, 15).unwrap();
    let mut date = start;
    while date <= end {
        let stay = stay_home_intensity(date);
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        // National row first, as in the published files.
        let mut rows = vec![("".to_string(), "".to_string())];
        for p in &prefectures {
            rows.push((p.to_string(), String::new()));
        }
        for (sub1, sub2) in rows {
            let mut v = |scale: f64, sd: f64| (scale * stay + sd * normal(&mut rng)).round();
            let retail = v(-28.0, 3.0);
            let grocery = v(-9.0, 2.5);
            let parks = v(-20.0, 8.0);
            let transit = v(-40.0, 4.0);
            let work = v(if weekend { -15.0 } else { -35.0 }, 3.0);
            let resi = v(if weekend { 8.0 } else { 18.0 }, 1.5);
            out.push_str(&format!(
                "JP,Japan,{sub1},{sub2},,,,,{date},{retail},{grocery},{parks},{transit},{work},{resi}\n"
            ));
        }
        date += Duration::days(1);
    }
    out
}

/// Monthly voltage-class demand for fiscal years `first_fy..=last_fy`
/// (April to March), with pandemic shifts from April 2020.
pub fn voltage_csv(first_fy: i32, last_fy: i32, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: BTreeMap<VoltageClass, f64> = [
        (VoltageClass::ExtraHigh, 9000.0),
        (VoltageClass::High, 7000.0),
        (VoltageClass::Lighting, 6500.0),
        (VoltageClass::Low, 1500.0),
        (VoltageClass::Other, 400.0),
    ]
    .into_iter()
    .collect();
    let mut out = String::from("month,class,demand\n");
    for fy in first_fy..=last_fy {
        for m in 0..12u32 {
            let (year, month) = if m < 9 { (fy, m + 4) } else { (fy + 1, m - 8) };
            let date = NaiveDate::from_ymd_opt(year, month, 15).unwrap();
            let degree = (seasonal_temperature(date) - 18.0).abs();
            let stay = stay_home_intensity(date);
            for (class, level) in &base {
                let (weather, shift) = match class {
                    VoltageClass::ExtraHigh => (0.004, -0.08 - 0.06 * stay),
                    VoltageClass::High => (0.008, -0.02 - 0.08 * stay),
                    VoltageClass::Lighting => (0.025, 0.06 * stay),
                    VoltageClass::Low => (0.015, -0.03 * stay),
                    VoltageClass::Other => (0.0, 0.0),
                };
                let pandemic = if stay > 0.0 { shift } else { 0.0 };
                let value = level * (1.0 + weather * degree) * (1.0 + pandemic) * (1.0 + 0.01 * normal(&mut rng));
                out.push_str(&format!("{year:04}-{month:02},{class},{value:.0}\n"));
            }
        }
    }
    out
}

/// The bundled four-area setup.
pub fn bundled_areas() -> Vec<AreaRecipe> {
    let area = |id: &str, level: f64, prefs: &[(&str, f64)], layout: &str, offset: f64, response: f64| AreaRecipe {
        area_id: id.to_string(),
        level,
        prefectures: prefs.iter().map(|(p, w)| (p.to_string(), *w)).collect(),
        layout_name: layout.to_string(),
        climate_offset: offset,
        response,
    };
    vec![
        area("hokkaido", 80_000.0, &[("Hokkaido", 1.0)], "plain", -6.0, 0.8),
        area(
            "tokyo",
            700_000.0,
            &[
                ("Tokyo", 14.0),
                ("Kanagawa", 9.2),
                ("Saitama", 7.3),
                ("Chiba", 6.3),
                ("Shizuoka", 1.0),
            ],
            "plain",
            0.5,
            1.2,
        ),
        area(
            "chubu",
            330_000.0,
            &[("Aichi", 7.5), ("Gifu", 2.0), ("Mie", 1.8), ("Shizuoka", 2.6)],
            "datetime",
            0.0,
            1.0,
        ),
        area(
            "kyushu",
            23_000.0,
            &[("Fukuoka", 5.1), ("Kumamoto", 1.7), ("Kagoshima", 1.6)],
            "legacy_sjis",
            2.0,
            0.9,
        ),
    ]
}

/// Layout descriptors used by the bundled areas.
pub fn bundled_layouts() -> BTreeMap<String, Layout> {
    let mut m = BTreeMap::new();
    m.insert(
        "plain".to_string(),
        Layout {
            encoding: "utf-8".into(),
            skip_rows: 1,
            delimiter: ',',
            date_column: 0,
            hour_column: Some(1),
            value_column: 2,
            date_format: "%Y-%m-%d".into(),
            unit: "MWh".into(),
        },
    );
    m.insert(
        "datetime".to_string(),
        Layout {
            encoding: "utf-8".into(),
            skip_rows: 1,
            delimiter: ';',
            date_column: 0,
            hour_column: None,
            value_column: 1,
            date_format: "%Y-%m-%d %H:%M".into(),
            unit: "MWh".into(),
        },
    );
    m.insert(
        "legacy_sjis".to_string(),
        Layout {
            encoding: "shift_jis".into(),
            skip_rows: 2,
            delimiter: ',',
            date_column: 0,
            hour_column: Some(1),
            value_column: 2,
            date_format: "%Y/%m/%d".into(),
            unit: "10MWh".into(),
        },
    );
    m
}

/// Title lines written above the data rows for each bundled layout.
pub fn layout_title(name: &str) -> Vec<&'static str> {
    match name {
        "legacy_sjis" => vec!["エリア需要実績", "日付,時刻,需要(万kWh)"],
        "datetime" => vec!["timestamp;demand_mwh"],
        _ => vec!["date,hour,demand_mwh"],
    }
}

/// First and last day of the bundled demand files.
pub fn bundle_span() -> (NaiveDate, NaiveDate) {
    (
        NaiveDate::from_ymd_opt(2015, 4, 1).unwrap(),
        NaiveDate::from_ymd_opt(2021, 3, 31).unwrap(),
    )
}

/// Writes the bundled dataset and a ready-to-run `config.toml` into `dir`.
/// The output depends only on `seed`.
pub fn write_bundle(dir: &Path, seed: u64) -> Result<()> {
    let calendar = HolidayCalendar::japan();
    let layouts = bundled_layouts();
    let areas = bundled_areas();
    let (start, end) = bundle_span();
    std::fs::create_dir_all(dir.join("demand"))?;
    let mut inputs = Vec::new();
    for (i, area) in areas.iter().enumerate() {
        let temps = temperature_series(area, start, end, derive_seed(seed, 100 + i as u64));
        let layout = &layouts[&area.layout_name];
        let daily = daily_demand(area, &temps, &calendar, &layout.unit, derive_seed(seed, i as u64))?;
        let bytes = render_demand_file(&hourly_records(&daily), layout, &layout_title(&area.layout_name))?;
        let file = format!("demand/{}.csv", area.area_id);
        std::fs::write(dir.join(&file), bytes)?;
        inputs.push(AreaInput {
            area_id: area.area_id.clone(),
            file: file.into(),
            layout: area.layout_name.clone(),
        });
        if i == 1 {
            let mut text = String::from("date,temperature\n");
            for (d, t) in &temps {
                text.push_str(&format!("{d},{t:.1}\n"));
            }
            std::fs::write(dir.join("temperature.csv"), text)?;
        }
    }
    let mut map = String::from("area_id,sub_region,weight\n");
    for a in &areas {
        for (p, w) in &a.prefectures {
            map.push_str(&format!("{},{p},{w}\n", a.area_id));
        }
    }
    std::fs::write(dir.join("region_map.csv"), map)?;
    std::fs::write(
        dir.join("mobility.csv"),
        mobility_csv(&areas, end, derive_seed(seed, 200)),
    )?;
    std::fs::write(dir.join("voltage.csv"), voltage_csv(2018, 2020, derive_seed(seed, 300)))?;
    std::fs::write(dir.join("holidays_jp.txt"), JAPAN_HOLIDAYS)?;

    let mut config = PipelineConfig::template();
    config.seed = seed;
    config.mcmc = McmcBudget {
        n_draws: 5000,
        n_burn: 1000,
    };
    // A one-year horizon on weekday-only rows: no trend, no weekly cycle.
    config.model = ModelOptions {
        level: true,
        trend: false,
        seasonal_period: None,
        regression: true,
    };
    config.data = DataPaths {
        holidays: Some("holidays_jp.txt".into()),
        areas: inputs,
        mobility: Some("mobility.csv".into()),
        region_map: Some("region_map.csv".into()),
        voltage: Some("voltage.csv".into()),
        temperature: Some("temperature.csv".into()),
    };
    config.layouts = layouts;
    config.validate()?;
    std::fs::write(dir.join("config.toml"), config.to_toml())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diurnal_shape_sums_to_one() {
        assert!((diurnal_shape().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thousands_grouping() {
        assert_eq!(group_thousands("1234567.8"), "1,234,567.8");
        assert_eq!(group_thousands("999.0"), "999.0");
        assert_eq!(group_thousands("1000"), "1,000");
    }

    #[test]
    fn step_series_has_event_split() {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        let s = step_series(&StepRecipe::default(), d(2019, 4, 1), d(2020, 4, 1), d(2021, 3, 31), 1).unwrap();
        assert_eq!(s.dates[s.event_index], d(2020, 4, 1));
        assert_eq!(s.y.len(), 731);
    }

    #[test]
    fn intensity_is_zero_before_the_pandemic() {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
        assert_eq!(stay_home_intensity(d(2019, 6, 1)), 0.0);
        assert!((stay_home_intensity(d(2020, 5, 1)) - 1.0).abs() < 1e-12);
    }
}
