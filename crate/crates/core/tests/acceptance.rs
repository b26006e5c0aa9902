//! One line per acceptance criterion: `[PASS]` or `[FAIL]`, the measured
//! quantity and the runtime against its budget.

#![allow(clippy::needless_range_loop)]

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use common::{
    joint_gaussian, log_density, monte_carlo_quantile, partial_adjustment_panel, pooled_t_p, random_model,
    simulate_series,
};
use demand_impact::align::align_years;
use demand_impact::analysis::{analyze_series, AnalysisConfig, ModelOptions, SeriesInput};
use demand_impact::bsts::{assemble, kalman_filter, kalman_smoother, simulation_smoother, ModelSpec, PathMatrix};
use demand_impact::calendar::{DayClass, DayFilter, HolidayCalendar, PeriodSpec};
use demand_impact::gmm::{design_matrices, estimate, panel_from_series, Panel};
use demand_impact::impact::period_summary;
use demand_impact::pipeline::{LoadedConfig, Pipeline};
use demand_impact::stats::{levene_mean, one_way_anova, qtukey, tukey_hsd, GroupedSample};
use demand_impact::synth::{step_series, StepRecipe};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed < budget;
    let pass = out.pass && in_time;
    println!(
        "[{}] {id} {name}: {} ({:.1} s, budget {} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn observed(y: &[f64]) -> Vec<Option<f64>> {
    y.iter().copied().map(Some).collect()
}

fn kalman_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=15);
        let ss = random_model(&mut rng, n);
        assert!(ss.state_dim() <= 10);
        let y = observed(&simulate_series(&ss, n, &mut rng));
        let reference = log_density(&joint_gaussian(&ss, n), &y);
        let filtered = kalman_filter(&ss, &y).unwrap().log_likelihood;
        worst = worst.max((filtered - reference).abs());
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("20 specs, max |loglik - joint density| = {worst:.2e} (tol 1e-8)"),
    }
}

fn smoother_calibration() -> Outcome {
    let n = 10;
    let mut ss = assemble(&ModelSpec::local_level(), n).unwrap();
    ss.set_variances(1.0, &[0.3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y = observed(&simulate_series(&ss, n, &mut rng));
    let smoothed = kalman_smoother(&ss, &y).unwrap();
    let reps = 20_000;
    let mut sum = [0.0; 10];
    let mut sum_sq = [0.0; 10];
    for _ in 0..reps {
        for (t, a) in simulation_smoother(&ss, &y, &mut rng).unwrap().iter().enumerate() {
            sum[t] += a[0];
            sum_sq[t] += a[0] * a[0];
        }
    }
    let (mut worst_z, mut worst_rel): (f64, f64) = (0.0, 0.0);
    for t in 0..n {
        let mean = sum[t] / reps as f64;
        let var = (sum_sq[t] - reps as f64 * mean * mean) / (reps - 1) as f64;
        let target_var = smoothed.covs[t][(0, 0)];
        let se = (target_var / reps as f64).sqrt();
        worst_z = worst_z.max((mean - smoothed.means[t][0]).abs() / se);
        worst_rel = worst_rel.max((var / target_var - 1.0).abs());
    }
    Outcome {
        pass: worst_z <= 3.0 && worst_rel <= 0.10,
        detail: format!(
            "max mean deviation {worst_z:.2} MC SE (tol 3), max variance error {:.1}% (tol 10%)",
            100.0 * worst_rel
        ),
    }
}

/// Level + weekly + one-covariate model, matching the step generator.
fn step_config() -> AnalysisConfig {
    AnalysisConfig {
        day_filter: DayFilter::All,
        model: ModelOptions {
            level: true,
            trend: false,
            seasonal_period: Some(7),
            regression: true,
        },
        n_draws: 2000,
        n_burn: 500,
        ..AnalysisConfig::default()
    }
}

const REPLICATES: u64 = 50;

/// Per replicate, per period: (relative effect, lower, upper, probability).
fn step_experiment(effect: f64) -> Vec<Vec<(f64, f64, f64, f64)>> {
    let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
    let calendar = HolidayCalendar::japan();
    let recipe = StepRecipe {
        effect,
        ..StepRecipe::default()
    };
    let config = step_config();
    (0..REPLICATES)
        .map(|seed| {
            let s = step_series(&recipe, d(2019, 4, 1), d(2020, 4, 1), d(2021, 3, 31), seed).unwrap();
            let input = SeriesInput {
                area_id: "synthetic".into(),
                days: s.dates.iter().map(|&x| calendar.classify(x).unwrap()).collect(),
                y: s.y.clone(),
                covariates: Some(DMatrix::from_column_slice(s.y.len(), 1, &s.covariate)),
                event_index: s.event_index,
            };
            let (_, report) = analyze_series(&input, &config, seed).unwrap();
            report
                .periods
                .iter()
                .map(|p| (p.relative_effect, p.lower, p.upper, p.probability))
                .collect()
        })
        .collect()
}

fn effect_recovery() -> Outcome {
    let runs = step_experiment(0.10);
    let n_periods = runs[0].len();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in 0..n_periods {
        let covered = runs.iter().filter(|r| r[p].1 <= 0.10 && 0.10 <= r[p].2).count();
        let mut errors: Vec<f64> = runs.iter().map(|r| (r[p].0 - 0.10).abs()).collect();
        errors.sort_by(f64::total_cmp);
        let median = 0.5 * (errors[24] + errors[25]);
        pass &= covered >= 45 && median <= 0.02;
        parts.push(format!("P{} {covered}/50 {:.2}pp", p + 1, 100.0 * median));
    }
    Outcome {
        pass,
        detail: format!(
            "coverage / median abs error per period: {} (need >= 45, <= 2pp)",
            parts.join(", ")
        ),
    }
}

fn placebo_control() -> Outcome {
    let runs = step_experiment(0.0);
    let n_periods = runs[0].len();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in 0..n_periods {
        let hits = runs.iter().filter(|r| r[p].3 > 0.95).count();
        pass &= hits * 10 <= REPLICATES as usize;
        parts.push(format!("P{} {hits}/50", p + 1));
    }
    Outcome {
        pass,
        detail: format!("probability > 0.95 per period: {} (need <= 5)", parts.join(", ")),
    }
}

/// Days of January 2017-2020, weekend/holiday flags, included, sample number.
type GoldenRow = ([u32; 4], [&'static str; 4], bool, Option<u32>);

fn alignment_golden() -> Outcome {
    let table: [GoldenRow; 14] = [
        ([9, 8, 7, 6], ["H", "H", "", ""], false, None),
        ([10, 9, 8, 7], ["", "", "", ""], true, Some(1)),
        ([11, 10, 9, 8], ["", "", "", ""], true, Some(2)),
        ([12, 11, 10, 9], ["", "", "", ""], true, Some(3)),
        ([13, 12, 11, 10], ["", "", "", ""], true, Some(4)),
        ([14, 13, 12, 11], ["W", "W", "W", "W"], true, Some(5)),
        ([15, 14, 13, 12], ["W", "W", "W", "W"], true, Some(6)),
        ([16, 15, 14, 13], ["", "", "H", "H"], false, None),
        ([17, 16, 15, 14], ["", "", "", ""], true, Some(7)),
        ([18, 17, 16, 15], ["", "", "", ""], true, Some(8)),
        ([19, 18, 17, 16], ["", "", "", ""], true, Some(9)),
        ([20, 19, 18, 17], ["", "", "", ""], true, Some(10)),
        ([21, 20, 19, 18], ["W", "W", "W", "W"], true, Some(11)),
        ([22, 21, 20, 19], ["W", "W", "W", "W"], true, Some(12)),
    ];
    let calendar = HolidayCalendar::japan();
    let end = NaiveDate::from_ymd_opt(2020, 1, 19).unwrap();
    let groups = align_years(2020, &[2017, 2018, 2019], &calendar, end).unwrap();
    let mut matched = 0;
    for (g, (days, flags, included, sample)) in groups.iter().zip(&table) {
        let mut ok = g.included == *included && g.sample_no == *sample;
        for (i, year) in (2017..=2020).enumerate() {
            let day = g.members[&year];
            let flag = if day.is_weekend() {
                "W"
            } else if day.day_class == DayClass::Holiday {
                "H"
            } else {
                ""
            };
            ok &= day.date == NaiveDate::from_ymd_opt(year, 1, days[i]).unwrap() && flag == flags[i];
        }
        matched += ok as usize;
    }
    Outcome {
        pass: groups.len() == 14 && matched == 14,
        detail: format!("{matched}/14 rows match, {} groups produced", groups.len()),
    }
}

fn two_stage_least_squares(p: &Panel) -> DVector<f64> {
    let (x, z, y) = design_matrices(p);
    let proj = &z * (z.transpose() * &z).try_inverse().unwrap() * z.transpose();
    let xhat = &proj * &x;
    (xhat.transpose() * &x).try_inverse().unwrap() * xhat.transpose() * y
}

const GMM_TRUTH: [f64; 5] = [-0.01, 0.2, 0.1, -0.05, 0.05];

fn gmm_panel(seed: u64, areas: usize, days: usize) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    panel_from_series(&partial_adjustment_panel(&mut rng, areas, days, GMM_TRUTH, 0.5, 0.4)).unwrap()
}

fn gmm_checks() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let p = gmm_panel(seed, 5, 100);
        let fit = estimate(&p).unwrap();
        let reference = two_stage_least_squares(&p);
        for (a, b) in fit.coefficients.iter().zip(reference.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    let truth = [
        GMM_TRUTH[0],
        GMM_TRUTH[1],
        GMM_TRUTH[2],
        GMM_TRUTH[3],
        GMM_TRUTH[4],
        0.5,
    ];
    let mut covered = [0usize; 6];
    for seed in 0..50 {
        let fit = estimate(&gmm_panel(1000 + seed, 20, 300)).unwrap();
        for j in 0..6 {
            covered[j] += ((fit.coefficients[j] - truth[j]).abs() <= 1.96 * fit.std_errors[j]) as usize;
        }
    }
    Outcome {
        pass: worst <= 1e-8 && covered.iter().all(|&c| c >= 45),
        detail: format!(
            "max |GMM - 2SLS| = {worst:.2e} (tol 1e-8); 95% CI coverage per coefficient {covered:?}/50 (need >= 45)"
        ),
    }
}

fn tukey_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let na = rng.random_range(3..40);
        let nb = rng.random_range(3..40);
        let shift: f64 = rng.random_range(-1.5..1.5);
        let a: Vec<f64> = (0..na).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..nb).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
        let sample = GroupedSample::new(vec![("a".into(), a.clone()), ("b".into(), b.clone())]).unwrap();
        let p = tukey_hsd(&sample, 0.95).unwrap()[0].p_adj;
        worst = worst.max((p - pooled_t_p(&a, &b)).abs());
    }
    let mut parts = Vec::new();
    let mut worst_q: f64 = 0.0;
    for (i, (k, df)) in [(3, 10.0), (5, 60.0), (5, 200.0)].into_iter().enumerate() {
        let q = qtukey(0.95, k, df).unwrap();
        let mc = monte_carlo_quantile(k, df, 0.95, 1_000_000, 70 + i as u64);
        worst_q = worst_q.max((q - mc).abs());
        parts.push(format!("q({k},{df})={q:.4} vs MC {mc:.4}"));
    }
    Outcome {
        pass: worst <= 1e-6 && worst_q <= 0.01,
        detail: format!("k=2 max |p - t-test p| = {worst:.2e} (tol 1e-6); {}", parts.join(", ")),
    }
}

fn pipeline_determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic/config.toml");
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run in ["first", "second"] {
        let out = tmp.path().join(run);
        let pipeline = Pipeline::new(LoadedConfig::load(&config).unwrap(), &out);
        pipeline.run_all().unwrap();
        let mut files = Vec::new();
        for stage in std::fs::read_dir(&out).unwrap() {
            let stage = stage.unwrap().path();
            for f in std::fs::read_dir(&stage).unwrap() {
                let f = f.unwrap().path();
                let rel = f.strip_prefix(&out).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&f).unwrap()));
            }
        }
        files.sort();
        trees.push(files);
    }
    let manifests = trees[0].iter().filter(|(p, _)| p.ends_with("manifest.json")).count();
    let identical = trees[0] == trees[1];
    Outcome {
        pass: identical && manifests == 7,
        detail: format!(
            "{} files incl. {manifests} manifests, runs {}",
            trees[0].len(),
            if identical { "byte-identical" } else { "differ" }
        ),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn invariance_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let calendar = HolidayCalendar::japan();
    let periods = PeriodSpec::default_periods();
    let start = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
    let days: Vec<_> = (0..365)
        .map(|i| calendar.classify(start + chrono::Duration::days(i)).unwrap())
        .collect();

    let mut impact_ok = 0;
    for _ in 0..50 {
        let actual: Vec<f64> = (0..365)
            .map(|_| 100.0 + 10.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                (0..365)
                    .map(|_| 100.0 + 10.0 * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let c: f64 = rng.random_range(0.001..1000.0);
        let cf = PathMatrix::from_rows(&rows).unwrap();
        let scaled_actual: Vec<f64> = actual.iter().map(|v| v * c).collect();
        let scaled_cf = cf.map(|v| v * c);
        let a = period_summary(&days, &actual, &cf, &periods, DayFilter::All, start).unwrap();
        let b = period_summary(&days, &scaled_actual, &scaled_cf, &periods, DayFilter::All, start).unwrap();
        let same = a.iter().zip(&b).all(|(x, y)| {
            rel_close(x.relative_effect, y.relative_effect, 1e-10)
                && rel_close(x.lower, y.lower, 1e-10)
                && rel_close(x.upper, y.upper, 1e-10)
                && x.probability == y.probability
        });
        impact_ok += same as usize;
    }

    let mut gmm_ok = 0;
    for seed in 0..50 {
        let panel = gmm_panel(5000 + seed, 6, 80);
        let j = rng.random_range(1..=4);
        let c: f64 = rng.random_range(0.01..100.0);
        let mut scaled = panel.clone();
        for o in &mut scaled.observations {
            match j {
                1 => o.ln_resi *= c,
                2 => o.ln_wrk *= c,
                3 => o.ln_retl *= c,
                _ => o.ln_grcy *= c,
            }
        }
        let a = estimate(&panel).unwrap();
        let b = estimate(&scaled).unwrap();
        let mut same = true;
        for i in 0..6 {
            let factor = if i == j { c } else { 1.0 };
            same &= rel_close(a.coefficients[i], b.coefficients[i] * factor, 1e-10)
                && rel_close(a.std_errors[i], b.std_errors[i] * factor, 1e-10)
                && rel_close(a.z_values[i], b.z_values[i], 1e-10);
        }
        gmm_ok += same as usize;
    }

    let mut stats_ok = 0;
    for _ in 0..50 {
        let k = rng.random_range(2..=6);
        let groups: Vec<(String, Vec<f64>)> = (0..k)
            .map(|g| {
                let n = rng.random_range(3..25);
                let scale: f64 = rng.random_range(0.5..3.0);
                let v = (0..n)
                    .map(|_| g as f64 * 0.3 + scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                (format!("g{g}"), v)
            })
            .collect();
        let sample = GroupedSample::new(groups).unwrap();
        let loc: f64 = rng.random_range(-1000.0..1000.0);
        let scale: f64 = rng.random_range(0.01..100.0);
        let moved = sample.map(|x| loc + scale * x);
        let (l1, l2) = (levene_mean(&sample).unwrap(), levene_mean(&moved).unwrap());
        let (a1, a2) = (one_way_anova(&sample).unwrap(), one_way_anova(&moved).unwrap());
        let (t1, t2) = (tukey_hsd(&sample, 0.95).unwrap(), tukey_hsd(&moved, 0.95).unwrap());
        let mut same = rel_close(l1.f, l2.f, 1e-10)
            && rel_close(l1.p_value, l2.p_value, 1e-10)
            && rel_close(a1.f, a2.f, 1e-10)
            && rel_close(a1.p_value, a2.p_value, 1e-10);
        for (x, y) in t1.iter().zip(&t2) {
            same &= rel_close(x.p_adj, y.p_adj, 1e-10) && rel_close(x.diff * scale, y.diff, 1e-10);
        }
        stats_ok += same as usize;
    }
    Outcome {
        pass: impact_ok == 50 && gmm_ok == 50 && stats_ok == 50,
        detail: format!(
            "relative-effect scale {impact_ok}/50, regressor scale {gmm_ok}/50, location/scale {stats_ok}/50 (tol 1e-10)"
        ),
    }
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        check(1, "kalman likelihood vs joint Gaussian", s(5), kalman_oracle),
        check(2, "simulation smoother calibration", s(30), smoother_calibration),
        check(3, "effect recovery", s(600), effect_recovery),
        check(4, "placebo false positives", s(600), placebo_control),
        check(5, "alignment golden table", s(1), alignment_golden),
        check(6, "panel GMM closed form and coverage", s(60), gmm_checks),
        check(7, "Tukey reduction and quantiles", s(120), tukey_identity),
        check(8, "pipeline determinism", s(300), pipeline_determinism),
        check(9, "invariance suite", s(60), invariance_suite),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len(), "some acceptance criteria failed");
}
