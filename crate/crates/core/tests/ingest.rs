use chrono::NaiveDate;
use demand_impact::calendar::HolidayCalendar;
use demand_impact::ingest::{
    daily_totals, parse_demand_bytes, parse_mobility, read_canonical, write_canonical, HourlyRecord, Layout, RegionMap,
};
use demand_impact::synth::{bundled_layouts, render_demand_file};
use demand_impact::Error;
use proptest::prelude::*;

fn d(y: i32, m: u32, dd: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, dd).unwrap()
}

fn plain() -> Layout {
    Layout {
        encoding: "utf-8".into(),
        skip_rows: 1,
        delimiter: ',',
        date_column: 0,
        hour_column: Some(1),
        value_column: 2,
        date_format: "%Y/%m/%d".into(),
        unit: "MWh".into(),
    }
}

fn two_days() -> String {
    let mut text = String::from("date,hour,demand\r\n");
    for day in ["2020/04/01", "2020/04/02"] {
        for h in 0..24 {
            text.push_str(&format!("{day},{h}:00,\"3,{:03}\"\r\n", 100 + h));
        }
    }
    text
}

#[test]
fn two_days_give_forty_eight_records() {
    let parsed = parse_demand_bytes(two_days().as_bytes(), "tokyo", &plain()).unwrap();
    assert_eq!(parsed.records.len(), 48);
    assert!(parsed.rejects.is_empty());
    assert_eq!(parsed.records[0].demand, 3100.0);
    assert_eq!(parsed.records[47].hour, 23);
}

#[test]
fn duplicate_hour_is_rejected_with_its_line() {
    let mut text = two_days();
    text.push_str("2020/04/02,5:00,\"9,999\"\r\n");
    let parsed = parse_demand_bytes(text.as_bytes(), "tokyo", &plain()).unwrap();
    assert_eq!(parsed.records.len(), 48);
    assert_eq!(parsed.rejects.len(), 1);
    assert_eq!(parsed.rejects[0].line, 50);
    assert!(parsed.rejects[0].reason.contains("duplicate hour 5"));
}

#[test]
fn shift_jis_and_utf8_parse_to_the_same_records() {
    let layouts = bundled_layouts();
    let records: Vec<HourlyRecord> = (0..24)
        .map(|h| HourlyRecord {
            area_id: "kyushu".into(),
            date: d(2020, 4, 1),
            hour: h,
            demand: 1000.0 + h as f64,
        })
        .collect();
    let sjis = layouts["legacy_sjis"].clone();
    let mut utf8 = sjis.clone();
    utf8.encoding = "utf-8".into();
    let title = ["九州エリア 需要実績", "年月日,時刻,実績"];
    let a = render_demand_file(&records, &sjis, &title).unwrap();
    let b = render_demand_file(&records, &utf8, &title).unwrap();
    assert_ne!(a, b, "non-ASCII title should encode differently");
    let pa = parse_demand_bytes(&a, "kyushu", &sjis).unwrap();
    let pb = parse_demand_bytes(&b, "kyushu", &utf8).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(pa.records, records);
}

#[test]
fn ten_days_sum_to_daily_totals() {
    let calendar = HolidayCalendar::japan();
    let records: Vec<HourlyRecord> = (0..10)
        .flat_map(|day| {
            (0..24).map(move |h| HourlyRecord {
                area_id: "a".into(),
                date: d(2020, 4, 1) + chrono::Duration::days(day),
                hour: h,
                demand: 10.0,
            })
        })
        .collect();
    assert_eq!(records.len(), 240);
    let series = daily_totals(&records, "MWh", &calendar).unwrap();
    assert_eq!(series.len(), 1);
    assert_eq!(series[0].len(), 10);
    assert!(series[0].observations.iter().all(|(_, v)| *v == 240.0));
}

#[test]
fn missing_hour_is_named() {
    let calendar = HolidayCalendar::japan();
    let records: Vec<HourlyRecord> = (0..24)
        .filter(|&h| h != 13)
        .map(|h| HourlyRecord {
            area_id: "a".into(),
            date: d(2020, 4, 1),
            hour: h,
            demand: 1.0,
        })
        .collect();
    match daily_totals(&records, "MWh", &calendar) {
        Err(Error::IncompleteDay(missing)) => assert_eq!(missing, vec![(d(2020, 4, 1), 13)]),
        other => panic!("expected IncompleteDay, got {other:?}"),
    }
}

#[test]
fn interleaved_areas_are_separated() {
    let calendar = HolidayCalendar::japan();
    let mut records = Vec::new();
    for h in 0..24 {
        for (area, v) in [("b", 2.0), ("a", 1.0)] {
            records.push(HourlyRecord {
                area_id: area.into(),
                date: d(2020, 4, 1),
                hour: h,
                demand: v,
            });
        }
    }
    let series = daily_totals(&records, "MWh", &calendar).unwrap();
    let totals: Vec<(&str, f64)> = series
        .iter()
        .map(|s| (s.area_id.as_str(), s.observations[0].1))
        .collect();
    assert_eq!(totals, vec![("a", 24.0), ("b", 48.0)]);
}

const MOBILITY_HEADER: &str = "country_region_code,country_region,sub_region_1,sub_region_2,date,\
retail_and_recreation_percent_change_from_baseline,grocery_and_pharmacy_percent_change_from_baseline,\
parks_percent_change_from_baseline,transit_stations_percent_change_from_baseline,\
workplaces_percent_change_from_baseline,residential_percent_change_from_baseline";

#[test]
fn mobility_is_a_weighted_mean_of_prefectures() {
    let map = RegionMap::parse("area_id,sub_region,weight\ntokyo,Tokyo,3\ntokyo,Kanagawa,1\n").unwrap();
    let text = format!(
        "{MOBILITY_HEADER}\n\
JP,Japan,,,2020-04-10,-30,-5,-20,-40,-25,12\n\
JP,Japan,Tokyo,,2020-04-10,-20,-10,-30,-40,-30,20\n\
JP,Japan,Kanagawa,,2020-04-10,-10,-2,-30,-40,-10,10\n\
JP,Japan,Osaka,,2020-04-10,-50,-5,-30,-40,-10,10\n"
    );
    let parsed = parse_mobility(&text, &map).unwrap();
    assert_eq!(parsed.records.len(), 1);
    let r = &parsed.records[0];
    assert_eq!(r.retail_recreation, -17.5);
    assert_eq!(r.residential, 17.5);
    assert_eq!(r.workplaces, -25.0);
    assert_eq!(r.grocery_pharmacy, -8.0);
    assert!(parsed.warnings.iter().any(|w| w.contains("Osaka")));
}

#[test]
fn a_region_can_feed_two_areas() {
    let map =
        RegionMap::parse("area_id,sub_region,weight\ntokyo,Shizuoka,1\nchubu,Shizuoka,1\nchubu,Aichi,1\n").unwrap();
    let text = format!(
        "{MOBILITY_HEADER}\n\
JP,Japan,Shizuoka,,2020-04-10,-10,0,0,0,-10,10\n\
JP,Japan,Aichi,,2020-04-10,-30,0,0,0,-30,20\n"
    );
    let parsed = parse_mobility(&text, &map).unwrap();
    let by_area: Vec<(&str, f64)> = parsed
        .records
        .iter()
        .map(|r| (r.area_id.as_str(), r.retail_recreation))
        .collect();
    assert_eq!(by_area, vec![("chubu", -20.0), ("tokyo", -10.0)]);
}

#[test]
fn blank_category_everywhere_skips_the_day() {
    let map = RegionMap::parse("area_id,sub_region,weight\ntokyo,Tokyo,\n").unwrap();
    assert!(map.equal_weight_fallback);
    let text = format!("{MOBILITY_HEADER}\nJP,Japan,Tokyo,,2020-04-10,,-10,0,0,-30,20\n");
    let parsed = parse_mobility(&text, &map).unwrap();
    assert!(parsed.records.is_empty());
    assert!(parsed.warnings.iter().any(|w| w.contains("2020-04-10")));
}

proptest! {
    #[test]
    fn daily_totals_conserve_the_hourly_sum(values in prop::collection::vec(0.0f64..1e5, 24 * 5)) {
        let calendar = HolidayCalendar::japan();
        let records: Vec<HourlyRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| HourlyRecord {
                area_id: "a".into(),
                date: d(2020, 4, 1) + chrono::Duration::days((i / 24) as i64),
                hour: (i % 24) as u8,
                demand: v,
            })
            .collect();
        let series = daily_totals(&records, "MWh", &calendar).unwrap();
        let total: f64 = series[0].observations.iter().map(|(_, v)| v).sum();
        let expected: f64 = values.iter().sum();
        prop_assert!((total - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn canonical_csv_round_trips(values in prop::collection::vec(0.0f64..1e7, 1..30)) {
        let calendar = HolidayCalendar::japan();
        let mut series = demand_impact::calendar::DailySeries::new("a", "MWh");
        for (i, v) in values.iter().enumerate() {
            series.observations.push((calendar.classify(d(2020, 1, 1) + chrono::Duration::days(i as i64)).unwrap(), *v));
        }
        let text = write_canonical(std::slice::from_ref(&series));
        let back = read_canonical(&text, &calendar).unwrap();
        prop_assert_eq!(&back["a"], &series);
        prop_assert_eq!(write_canonical(&[back["a"].clone()]), text);
    }
}
