//! End-to-end counterfactual analysis for one area.
//!
//! The base year is the calendar year of the event date. Alignment runs from
//! the first Monday of the base year through the end of the evaluation
//! window. Each retained group contributes one row: its base-year day is an
//! evaluation day, its previous-year day is a training day, and its days in
//! the covariate years (two to `1 + C` years back) supply the covariates.
//! The response fed to the model is the training column followed by the
//! base-year column; both halves share the same covariate rows.

use chrono::Datelike;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{align_years, AlignedGroup};
use crate::bsts::{gibbs_fit, posterior_predictive, McmcConfig, ModelSpec, PathMatrix, PosteriorDraws, Priors};
use crate::calendar::{AnalysisWindows, CalendarDay, DailySeries, DayFilter, HolidayCalendar, PeriodSpec};
use crate::error::{Error, Result};
use crate::impact::{build_report, ImpactReport, ReportInput};

/// Which structural components to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    pub level: bool,
    pub trend: bool,
    pub seasonal_period: Option<usize>,
    /// Regress on the aligned covariate-year demand.
    pub regression: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            level: true,
            trend: true,
            seasonal_period: Some(7),
            regression: true,
        }
    }
}

/// Prior hyperparameters on the standardized scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOptions {
    pub state_sd_guess: f64,
    pub obs_sd_guess: f64,
    pub prior_sample_size: f64,
    pub beta_precision: f64,
    pub initial_state_variance: f64,
}

impl Default for PriorOptions {
    fn default() -> Self {
        PriorOptions {
            state_sd_guess: 0.01,
            obs_sd_guess: 0.1,
            prior_sample_size: 1.0,
            beta_precision: 0.01,
            initial_state_variance: 1.0,
        }
    }
}

impl PriorOptions {
    pub fn priors(&self, n_covariates: usize) -> Priors {
        Priors::with_settings(
            n_covariates,
            self.state_sd_guess,
            self.obs_sd_guess,
            self.prior_sample_size,
            0.0,
            self.beta_precision,
            self.initial_state_variance,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub windows: AnalysisWindows,
    pub day_filter: DayFilter,
    pub periods: Vec<PeriodSpec>,
    pub model: ModelOptions,
    pub priors: PriorOptions,
    pub n_draws: usize,
    pub n_burn: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            windows: AnalysisWindows::fiscal_2020(),
            day_filter: DayFilter::Weekday,
            periods: PeriodSpec::default_periods(),
            model: ModelOptions::default(),
            priors: PriorOptions::default(),
            n_draws: 10_000,
            n_burn: 2_000,
        }
    }
}

/// Aligned response and covariates for one area.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDesign {
    pub area_id: String,
    pub sample_nos: Vec<u32>,
    pub training_days: Vec<CalendarDay>,
    pub evaluation_days: Vec<CalendarDay>,
    /// Training demand; `None` where the training day is missing.
    pub training: Vec<Option<f64>>,
    pub evaluation: Vec<f64>,
    pub covariate_years: Vec<i32>,
    /// One row per retained group, one column per covariate year.
    pub covariates: DMatrix<f64>,
    /// Included groups of the requested class dropped because a member fell
    /// outside its window.
    pub dropped: usize,
}

impl AlignedDesign {
    pub fn len(&self) -> usize {
        self.evaluation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluation.is_empty()
    }

    /// Training response handed to the sampler.
    pub fn response(&self) -> Vec<Option<f64>> {
        self.training.clone()
    }

    /// Covariate rows stacked twice: training half, then evaluation half.
    pub fn stacked_covariates(&self) -> DMatrix<f64> {
        let n = self.covariates.nrows();
        let k = self.covariates.ncols();
        DMatrix::from_fn(2 * n, k, |i, j| self.covariates[(i % n, j)])
    }
}

/// Years whose aligned days feed the design: training year first, then the
/// covariate years from most to least recent.
pub fn design_years(windows: &AnalysisWindows) -> (i32, i32, Vec<i32>) {
    let base = windows.event_date.year();
    let c = windows.covariate_years() as i32;
    (base, base - 1, (2..=1 + c).map(|b| base - b).collect())
}

pub fn align_for_windows(calendar: &HolidayCalendar, windows: &AnalysisWindows) -> Result<Vec<AlignedGroup>> {
    windows.validate()?;
    let (base, training_year, cov_years) = design_years(windows);
    let mut years = cov_years;
    years.push(training_year);
    align_years(base, &years, calendar, windows.evaluation_window.end)
}

pub fn build_design(
    series: &DailySeries,
    groups: &[AlignedGroup],
    windows: &AnalysisWindows,
    day_filter: DayFilter,
) -> Result<AlignedDesign> {
    let (base, training_year, cov_years) = design_years(windows);
    let mut sample_nos = Vec::new();
    let mut training_days = Vec::new();
    let mut evaluation_days = Vec::new();
    let mut training = Vec::new();
    let mut evaluation = Vec::new();
    let mut cov_rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;

    for g in groups {
        let Some(class) = g.group_class else { continue };
        if !g.included || !day_filter.accepts(class) {
            continue;
        }
        let day_of = |year: i32| {
            g.members
                .get(&year)
                .copied()
                .ok_or_else(|| Error::Data(format!("group at offset {} lacks year {year}", g.offset)))
        };
        let base_day = day_of(base)?;
        let train_day = day_of(training_year)?;
        let cov_days: Vec<CalendarDay> = cov_years.iter().map(|&y| day_of(y)).collect::<Result<_>>()?;
        if !windows.evaluation_window.contains(base_day.date) {
            continue;
        }
        if !windows.training_window.contains(train_day.date)
            || cov_days.iter().any(|d| !windows.covariate_window.contains(d.date))
        {
            dropped += 1;
            continue;
        }
        let actual = series.value_on(base_day.date).ok_or(Error::MissingDate {
            year: base,
            date: base_day.date,
        })?;
        let mut row = Vec::with_capacity(cov_days.len());
        for (year, d) in cov_years.iter().zip(&cov_days) {
            row.push(series.value_on(d.date).ok_or(Error::MissingDate {
                year: *year,
                date: d.date,
            })?);
        }
        sample_nos.push(g.sample_no.expect("included groups are numbered"));
        training.push(series.value_on(train_day.date));
        training_days.push(train_day);
        evaluation.push(actual);
        evaluation_days.push(base_day);
        cov_rows.push(row);
    }
    if evaluation.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "area {}: no aligned {day_filter} days fall inside the analysis windows",
            series.area_id
        )));
    }
    let k = cov_years.len();
    let covariates = DMatrix::from_fn(cov_rows.len(), k, |i, j| cov_rows[i][j]);
    Ok(AlignedDesign {
        area_id: series.area_id.clone(),
        sample_nos,
        training_days,
        evaluation_days,
        training,
        evaluation,
        covariate_years: cov_years,
        covariates,
        dropped,
    })
}

pub fn model_spec(options: &ModelOptions, design: &AlignedDesign) -> ModelSpec {
    ModelSpec {
        level: options.level,
        trend: options.trend,
        seasonal_period: options.seasonal_period,
        regression_design: options.regression.then(|| design.stacked_covariates()),
    }
}

/// Seed for the `index`-th stream derived from a master seed (splitmix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fit_design(design: &AlignedDesign, config: &AnalysisConfig, seed: u64) -> Result<PosteriorDraws> {
    let spec = model_spec(&config.model, design);
    let k = if config.model.regression {
        design.covariates.ncols()
    } else {
        0
    };
    let priors = config.priors.priors(k);
    let mcmc = McmcConfig::new(config.n_draws, config.n_burn, seed);
    gibbs_fit(&spec, &design.response(), &priors, &mcmc)
}

/// Counterfactual paths over the evaluation half. Uses a separate stream of
/// the fit seed so the fit and the forecast never share random numbers.
pub fn counterfactual(
    draws: &PosteriorDraws,
    design: &AlignedDesign,
    config: &AnalysisConfig,
    seed: u64,
) -> Result<PathMatrix> {
    let spec = model_spec(&config.model, design);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let post = config.model.regression.then(|| design.covariates.clone());
    posterior_predictive(draws, &spec, post.as_ref(), design.len(), &mut rng)
}

pub fn report_for(
    design: &AlignedDesign,
    paths: &PathMatrix,
    config: &AnalysisConfig,
    label: &str,
) -> Result<ImpactReport> {
    build_report(&ReportInput {
        label,
        area_id: &design.area_id,
        event_date: config.windows.event_date,
        window_start: config.windows.evaluation_window.start,
        days: &design.evaluation_days,
        actual: &design.evaluation,
        cf_paths: paths,
        periods: &config.periods,
        day_filter: config.day_filter,
    })
}

#[derive(Debug, Clone)]
pub struct AreaAnalysis {
    pub design: AlignedDesign,
    pub draws: PosteriorDraws,
    pub paths: PathMatrix,
    pub report: ImpactReport,
}

pub fn analyze_area(
    series: &DailySeries,
    calendar: &HolidayCalendar,
    config: &AnalysisConfig,
    seed: u64,
    label: &str,
) -> Result<AreaAnalysis> {
    let groups = align_for_windows(calendar, &config.windows)?;
    let design = build_design(series, &groups, &config.windows, config.day_filter)?;
    let draws = fit_design(&design, config, seed)?;
    let paths = counterfactual(&draws, &design, config, seed)?;
    let report = report_for(&design, &paths, config, label)?;
    Ok(AreaAnalysis {
        design,
        draws,
        paths,
        report,
    })
}

/// Reruns the analysis with every window moved back `years` years. With
/// `years = 0` this is the primary analysis.
pub fn placebo_shift(
    series: &DailySeries,
    calendar: &HolidayCalendar,
    config: &AnalysisConfig,
    years: u32,
    seed: u64,
) -> Result<AreaAnalysis> {
    let shifted = AnalysisConfig {
        windows: config.windows.shifted_back(years),
        ..config.clone()
    };
    let first_needed = shifted.windows.covariate_window.start;
    match series.first_date() {
        Some(d) if d <= first_needed => {}
        _ => {
            return Err(Error::InsufficientHistory(format!(
                "area {}: shifted analysis needs data from {first_needed}",
                series.area_id
            )))
        }
    }
    let label = if years == 0 { "primary" } else { "placebo" };
    analyze_area(series, calendar, &shifted, seed, label)
}

/// A plain daily series with optional regressors, split at `event_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesInput {
    pub area_id: String,
    pub days: Vec<CalendarDay>,
    pub y: Vec<f64>,
    /// One row per day of `y`, pre- and post-event.
    pub covariates: Option<DMatrix<f64>>,
    pub event_index: usize,
}

/// Fits the pre-event days and reports the post-event effect. The model
/// options in `config` apply, with regression switched on exactly when
/// covariates are supplied. Windows in `config` are ignored.
pub fn analyze_series(input: &SeriesInput, config: &AnalysisConfig, seed: u64) -> Result<(PathMatrix, ImpactReport)> {
    let n = input.y.len();
    if input.days.len() != n || input.event_index == 0 || input.event_index >= n {
        return Err(Error::Dimension(format!(
            "{} days, {n} values, event index {}",
            input.days.len(),
            input.event_index
        )));
    }
    if let Some(x) = &input.covariates {
        if x.nrows() != n {
            return Err(Error::Dimension(format!("{} covariate rows for {n} days", x.nrows())));
        }
    }
    let split = input.event_index;
    let spec = ModelSpec {
        level: config.model.level,
        trend: config.model.trend,
        seasonal_period: config.model.seasonal_period,
        regression_design: input.covariates.clone(),
    };
    let k = input.covariates.as_ref().map_or(0, |x| x.ncols());
    let y_pre: Vec<Option<f64>> = input.y[..split].iter().map(|&v| Some(v)).collect();
    let draws = gibbs_fit(
        &spec,
        &y_pre,
        &config.priors.priors(k),
        &McmcConfig::new(config.n_draws, config.n_burn, seed),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let post = input.covariates.as_ref().map(|x| x.rows(split, n - split).into_owned());
    let paths = posterior_predictive(&draws, &spec, post.as_ref(), n - split, &mut rng)?;
    let report = build_report(&ReportInput {
        label: "primary",
        area_id: &input.area_id,
        event_date: input.days[split].date,
        window_start: input.days[split].date,
        days: &input.days[split..],
        actual: &input.y[split..],
        cf_paths: &paths,
        periods: &config.periods,
        day_filter: config.day_filter,
    })?;
    Ok((paths, report))
}
