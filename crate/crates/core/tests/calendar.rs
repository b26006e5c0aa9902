use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use demand_impact::align::{align_years, extract_matched_series};
use demand_impact::calendar::{
    check_partition, first_monday, DailySeries, DayClass, HolidayCalendar, MonthDay, PeriodSpec,
};
use proptest::prelude::*;

/// Zeller's congruence, 0 = Monday.
fn zeller_weekday(y: i32, m: u32, d: u32) -> u32 {
    let (y, m) = if m < 3 { (y - 1, m + 12) } else { (y, m) };
    let k = y.rem_euclid(100);
    let j = y.div_euclid(100);
    let h = (d as i32 + (13 * (m as i32 + 1)) / 5 + k + k / 4 + j / 4 + 5 * j).rem_euclid(7);
    // h: 0 = Saturday
    ((h + 5) % 7) as u32
}

fn any_date() -> impl Strategy<Value = NaiveDate> {
    (0i64..365 * 7).prop_map(|i| NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + Duration::days(i))
}

proptest! {
    #[test]
    fn weekend_classification_agrees_with_zeller(date in any_date()) {
        let calendar = HolidayCalendar::japan();
        let day = calendar.classify(date).unwrap();
        let wd = zeller_weekday(date.year(), date.month(), date.day());
        prop_assert_eq!(day.is_weekend(), wd >= 5);
        if wd >= 5 || calendar.is_listed_holiday(date) {
            prop_assert_eq!(day.day_class, DayClass::Holiday);
        } else {
            prop_assert_eq!(day.day_class, DayClass::Weekday);
        }
    }

    #[test]
    fn first_monday_is_a_monday_in_the_first_week(year in 1990i32..2100) {
        let m = first_monday(year);
        prop_assert_eq!(zeller_weekday(m.year(), m.month(), m.day()), 0);
        prop_assert_eq!(m.month(), 1);
        prop_assert!(m.day() <= 7);
    }

    #[test]
    fn periods_contain_their_own_occurrence(start in any_date(), from in any_date(), len in 0i64..200) {
        let end = start + Duration::days(len);
        prop_assume!(MonthDay::of(start) != MonthDay::of(end) || len == 0);
        let p = PeriodSpec::new("p", MonthDay::of(start), MonthDay::of(end));
        let r = p.resolve(from);
        prop_assert!(r.end >= from);
        prop_assert!(p.contains_month_day(MonthDay::of(r.start)));
        prop_assert!(p.contains_month_day(MonthDay::of(r.end)));
    }

    #[test]
    fn aligned_members_share_a_weekday(until_days in 0i64..200, years in prop::sample::subsequence(vec![2016, 2017, 2018, 2019], 1..=3)) {
        let calendar = HolidayCalendar::japan();
        let until = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap() + Duration::days(until_days);
        let groups = align_years(2020, &years, &calendar, until).unwrap();
        prop_assert_eq!(groups.len() as i64, until_days + 1);
        let mut next = 1;
        for g in &groups {
            let wd: Vec<_> = g.members.values().map(|d| d.date.weekday()).collect();
            prop_assert!(wd.windows(2).all(|w| w[0] == w[1]));
            let classes: Vec<_> = g.members.values().map(|d| d.day_class).collect();
            prop_assert_eq!(g.included, classes.windows(2).all(|w| w[0] == w[1]));
            if g.included {
                prop_assert_eq!(g.sample_no, Some(next));
                next += 1;
            }
        }
    }

    #[test]
    fn extraction_ignores_the_order_of_the_year_map(seed in 0u64..1000) {
        let calendar = HolidayCalendar::japan();
        let until = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let groups = align_years(2020, &[2018, 2019], &calendar, until).unwrap();
        let series: Vec<DailySeries> = [2018, 2019, 2020]
            .iter()
            .map(|&y| {
                let mut s = DailySeries::new("a", "MWh");
                let start = NaiveDate::from_ymd_opt(y, 1, 1).unwrap();
                for i in 0..120 {
                    let date = start + Duration::days(i);
                    s.observations.push((calendar.classify(date).unwrap(), (seed + i as u64 * 7 + y as u64) as f64));
                }
                s
            })
            .collect();
        let forward: BTreeMap<i32, &DailySeries> = [2018, 2019, 2020].into_iter().zip(&series).collect();
        let backward: BTreeMap<i32, &DailySeries> = [2020, 2019, 2018].into_iter().zip(series.iter().rev()).collect();
        for class in [DayClass::Weekday, DayClass::Holiday] {
            let a = extract_matched_series(&forward, &groups, class).unwrap();
            let b = extract_matched_series(&backward, &groups, class).unwrap();
            prop_assert_eq!(&a, &b);
            for (row, dates) in a.dates.iter().enumerate() {
                for (j, day) in dates.iter().enumerate() {
                    prop_assert_eq!(day.day_class, class);
                    prop_assert_eq!(a.values[(row, j)], forward[&a.years[j]].value_on(day.date).unwrap());
                }
            }
        }
    }
}

#[test]
fn default_periods_partition_every_day() {
    check_partition(&PeriodSpec::default_periods()).unwrap();
    let mut broken = PeriodSpec::default_periods();
    broken.pop();
    assert!(check_partition(&broken).is_err());
}
