//! Config-driven staged pipeline. Each stage writes its files plus a
//! `manifest.json` into `<out>/<stage>/`; downstream stages verify the
//! manifests of the stages they read before touching their files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::groups_to_csv;
use crate::analysis::{
    align_for_windows, build_design, counterfactual, derive_seed, fit_design, placebo_shift, report_for,
    AnalysisConfig, ModelOptions, PriorOptions,
};
use crate::bsts::{read_draws, write_draws};
use crate::calendar::{AnalysisWindows, DailySeries, DateRange, DayFilter, HolidayCalendar, PeriodSpec};
use crate::error::{Error, Result};
use crate::gmm::{build_panel, estimate, table_csv, GmmFit};
use crate::impact::{figure_csv, periods_json, ImpactReport};
use crate::ingest::{
    check_reject_share, daily_totals, find_layout, parse_demand_bytes, parse_mobility, parse_voltage_csv,
    read_canonical, read_mobility, voltage_change, voltage_change_csv, write_canonical, write_mobility, Layout,
    RegionMap, YearMonth,
};
use crate::stats::{f_test_csv, levene_mean, one_way_anova, tukey_csv, tukey_hsd, GroupedSample};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaInput {
    pub area_id: String,
    pub file: PathBuf,
    /// Key into `[layouts]`.
    pub layout: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Holiday table; the built-in Japanese table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holidays: Option<PathBuf>,
    #[serde(default)]
    pub areas: Vec<AreaInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_map: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<PathBuf>,
    /// `date,temperature` rows for the seasons stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcBudget {
    pub n_draws: usize,
    pub n_burn: usize,
}

impl Default for McmcBudget {
    fn default() -> Self {
        McmcBudget {
            n_draws: 10_000,
            n_burn: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageOptions {
    pub first_month: YearMonth,
    pub last_month: YearMonth,
    /// Baseline is the mean of the same month this many years earlier.
    pub years_back: Vec<i32>,
}

impl Default for VoltageOptions {
    fn default() -> Self {
        VoltageOptions {
            first_month: YearMonth { year: 2020, month: 4 },
            last_month: YearMonth { year: 2021, month: 3 },
            years_back: vec![1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub day_filter: DayFilter,
    /// Years the placebo windows are moved back.
    pub placebo_years: u32,
    pub data: DataPaths,
    #[serde(default)]
    pub layouts: BTreeMap<String, Layout>,
    pub windows: AnalysisWindows,
    #[serde(default)]
    pub model: ModelOptions,
    #[serde(default)]
    pub priors: PriorOptions,
    #[serde(default)]
    pub mcmc: McmcBudget,
    #[serde(default)]
    pub voltage: VoltageOptions,
    #[serde(default = "PeriodSpec::default_periods")]
    pub periods: Vec<PeriodSpec>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.windows.validate()?;
        crate::calendar::check_partition(&self.periods)?;
        if self.mcmc.n_draws == 0 {
            return Err(Error::Config("mcmc.n_draws must be positive".into()));
        }
        if self.model.trend && !self.model.level {
            return Err(Error::Config("trend requires level".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.data.areas {
            if !seen.insert(a.area_id.as_str()) {
                return Err(Error::Config(format!("area `{}` listed twice", a.area_id)));
            }
            if a.area_id.is_empty() || a.area_id.contains(['/', '\\', '.']) {
                return Err(Error::Config(format!("area id `{}` is not a plain name", a.area_id)));
            }
            find_layout(&self.layouts, &a.layout)?;
        }
        if self.data.mobility.is_some() != self.data.region_map.is_some() {
            return Err(Error::Config("mobility and region_map must be given together".into()));
        }
        Ok(())
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            windows: self.windows,
            day_filter: self.day_filter,
            periods: self.periods.clone(),
            model: self.model,
            priors: self.priors,
            n_draws: self.mcmc.n_draws,
            n_burn: self.mcmc.n_burn,
        }
    }

    /// Every file path the config references.
    pub fn referenced_files(&self) -> Vec<&Path> {
        let d = &self.data;
        let mut v: Vec<&Path> = d.areas.iter().map(|a| a.file.as_path()).collect();
        for p in [&d.holidays, &d.mobility, &d.region_map, &d.voltage, &d.temperature]
            .into_iter()
            .flatten()
        {
            v.push(p);
        }
        v
    }

    /// Content hash of the effective configuration.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// A complete config with every default written out.
    pub fn template() -> Self {
        let plain = Layout {
            encoding: "utf-8".into(),
            skip_rows: 1,
            delimiter: ',',
            date_column: 0,
            hour_column: Some(1),
            value_column: 2,
            date_format: "%Y-%m-%d".into(),
            unit: "MWh".into(),
        };
        PipelineConfig {
            seed: 1,
            day_filter: DayFilter::Weekday,
            placebo_years: 1,
            data: DataPaths {
                holidays: None,
                areas: vec![AreaInput {
                    area_id: "area1".into(),
                    file: "demand/area1.csv".into(),
                    layout: "plain".into(),
                }],
                mobility: Some("mobility.csv".into()),
                region_map: Some("region_map.csv".into()),
                voltage: Some("voltage.csv".into()),
                temperature: Some("temperature.csv".into()),
            },
            layouts: [("plain".to_string(), plain)].into_iter().collect(),
            windows: AnalysisWindows::fiscal_2020(),
            model: ModelOptions::default(),
            priors: PriorOptions::default(),
            mcmc: McmcBudget::default(),
            voltage: VoltageOptions::default(),
            periods: PeriodSpec::default_periods(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// A loaded config together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    /// Reads and validates a config file; every referenced file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config = PipelineConfig::parse(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = LoadedConfig { config, base_dir };
        for f in loaded.config.referenced_files() {
            let full = loaded.resolve(f);
            if !full.is_file() {
                return Err(Error::Config(format!(
                    "referenced file {} does not exist",
                    full.display()
                )));
            }
        }
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Align,
    Fit,
    Impact,
    Placebo,
    Gmm,
    Seasons,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Align,
        Stage::Fit,
        Stage::Impact,
        Stage::Placebo,
        Stage::Gmm,
        Stage::Seasons,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Align => "align",
            Stage::Fit => "fit",
            Stage::Impact => "impact",
            Stage::Placebo => "placebo",
            Stage::Gmm => "gmm",
            Stage::Seasons => "seasons",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Ingest | Stage::Align | Stage::Seasons => &[],
            Stage::Fit => &[Stage::Ingest, Stage::Align],
            Stage::Impact => &[Stage::Ingest, Stage::Align, Stage::Fit],
            Stage::Placebo => &[Stage::Ingest],
            Stage::Gmm => &[Stage::Ingest, Stage::Impact],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// Record of one stage run. Contains no timestamps or absolute paths, so
/// identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects a stage's files in a scratch directory and records their hashes.
struct StageOutput {
    dir: PathBuf,
    stage: Stage,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    notes: Vec<String>,
}

impl StageOutput {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.outputs.push(FileEntry {
            path: format!("{}/{name}", self.stage),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn input(&mut self, label: String, bytes: &[u8]) {
        self.inputs.push(FileEntry {
            path: label,
            sha256: sha256_hex(bytes),
        });
    }
}

/// Runs stages against one output directory.
pub struct Pipeline {
    pub loaded: LoadedConfig,
    pub out: PathBuf,
}

impl Pipeline {
    pub fn new(loaded: LoadedConfig, out: impl Into<PathBuf>) -> Self {
        Pipeline {
            loaded,
            out: out.into(),
        }
    }

    fn config(&self) -> &PipelineConfig {
        &self.loaded.config
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    pub fn run_all(&self) -> Result<Vec<Manifest>> {
        Stage::ALL.iter().map(|&s| self.run_stage(s)).collect()
    }

    /// Runs one stage. Outputs appear only when the stage succeeds; on
    /// failure the scratch directory is removed and earlier outputs of the
    /// stage are left untouched.
    pub fn run_stage(&self, stage: Stage) -> Result<Manifest> {
        let mut upstream = Vec::new();
        for &dep in stage.inputs() {
            upstream.push(self.verified_manifest(dep)?);
        }
        fs::create_dir_all(&self.out)?;
        let scratch = self.out.join(format!(".{}.partial", stage.name()));
        if scratch.exists() {
            fs::remove_dir_all(&scratch)?;
        }
        fs::create_dir_all(&scratch)?;
        let mut output = StageOutput {
            dir: scratch.clone(),
            stage,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        };
        for m in &upstream {
            output.inputs.extend(m.outputs.iter().cloned());
        }
        let result = self.execute(stage, &mut output).and_then(|()| {
            let manifest = Manifest {
                stage: stage.name().to_string(),
                version: VERSION.to_string(),
                seed: self.config().seed,
                config_hash: self.config().hash(),
                inputs: output.inputs.clone(),
                outputs: output.outputs.clone(),
                notes: output.notes.clone(),
            };
            let mut json = serde_json::to_string_pretty(&manifest)?;
            json.push('\n');
            fs::write(scratch.join(MANIFEST_FILE), json)?;
            let target = self.stage_dir(stage);
            if target.exists() {
                fs::remove_dir_all(&target)?;
            }
            fs::rename(&scratch, &target)?;
            Ok(manifest)
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&scratch);
        }
        result
    }

    /// Loads a stage manifest and checks it belongs to this config and that
    /// every file it lists is unchanged.
    pub fn verified_manifest(&self, stage: Stage) -> Result<Manifest> {
        let dir = self.stage_dir(stage);
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|_| Error::MissingStage {
            stage: stage.name().to_string(),
            dir: self.out.display().to_string(),
        })?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let stale = |detail: String| Error::StaleStage {
            stage: stage.name().to_string(),
            detail,
        };
        if manifest.config_hash != self.config().hash() {
            return Err(stale("produced with a different configuration or seed".into()));
        }
        for entry in &manifest.outputs {
            let bytes = fs::read(self.out.join(&entry.path)).map_err(|e| stale(format!("{}: {e}", entry.path)))?;
            if sha256_hex(&bytes) != entry.sha256 {
                return Err(stale(format!("{} changed since it was written", entry.path)));
            }
        }
        Ok(manifest)
    }

    fn read_upstream(&self, relative: &str) -> Result<String> {
        Ok(fs::read_to_string(self.out.join(relative))?)
    }

    fn read_input(&self, output: &mut StageOutput, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(self.loaded.resolve(path))
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        output.input(path.display().to_string(), &bytes);
        Ok(bytes)
    }

    fn calendar(&self, output: &mut StageOutput) -> Result<HolidayCalendar> {
        match &self.config().data.holidays {
            Some(p) => {
                let bytes = self.read_input(output, p)?;
                HolidayCalendar::parse(&String::from_utf8_lossy(&bytes))
            }
            None => Ok(HolidayCalendar::japan()),
        }
    }

    fn area_seed(&self, index: usize) -> u64 {
        derive_seed(self.config().seed, index as u64)
    }

    fn execute(&self, stage: Stage, output: &mut StageOutput) -> Result<()> {
        match stage {
            Stage::Ingest => self.ingest(output),
            Stage::Align => self.align(output),
            Stage::Fit => self.fit(output),
            Stage::Impact => self.impact(output),
            Stage::Placebo => self.placebo(output),
            Stage::Gmm => self.gmm(output),
            Stage::Seasons => self.seasons(output),
        }
    }

    fn ingest(&self, output: &mut StageOutput) -> Result<()> {
        let config = self.config();
        if config.data.areas.is_empty() {
            return Err(Error::Config("no areas configured".into()));
        }
        let calendar = self.calendar(output)?;
        let mut series = Vec::new();
        let mut rejects = csv::Writer::from_writer(Vec::new());
        rejects.write_record(["area_id", "line", "reason"])?;
        for area in &config.data.areas {
            let layout = find_layout(&config.layouts, &area.layout)?;
            let bytes = self.read_input(output, &area.file)?;
            let parsed = parse_demand_bytes(&bytes, &area.area_id, layout)?;
            check_reject_share(&parsed, &area.file.display().to_string())?;
            for r in &parsed.rejects {
                rejects.write_record([area.area_id.as_str(), &r.line.to_string(), &r.reason])?;
            }
            let mut daily = daily_totals(&parsed.records, &layout.unit, &calendar)?;
            series.push(
                daily
                    .pop()
                    .ok_or_else(|| Error::Data(format!("area {}: file holds no records", area.area_id)))?,
            );
        }
        output.write("demand.csv", write_canonical(&series).as_bytes())?;
        let rejects = rejects.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        output.write("rejects.csv", &rejects)?;

        if let (Some(mob), Some(map)) = (&config.data.mobility, &config.data.region_map) {
            let map_bytes = self.read_input(output, map)?;
            let map = RegionMap::parse(&String::from_utf8_lossy(&map_bytes))?;
            let mob_bytes = self.read_input(output, mob)?;
            let parsed = parse_mobility(&String::from_utf8_lossy(&mob_bytes), &map)?;
            output.notes.push(if map.equal_weight_fallback {
                "mobility: equal weights for areas without population weights".to_string()
            } else {
                "mobility: population-weighted means from the region map".to_string()
            });
            output
                .notes
                .extend(parsed.warnings.iter().map(|w| format!("mobility: {w}")));
            output.write("mobility.csv", write_mobility(&parsed.records).as_bytes())?;
        }
        if let Some(v) = &config.data.voltage {
            let bytes = self.read_input(output, v)?;
            let records = parse_voltage_csv(&String::from_utf8_lossy(&bytes))?;
            let months = config.voltage.first_month.through(config.voltage.last_month);
            let changes = voltage_change(&records, &months, &config.voltage.years_back)?;
            output.write("voltage_change.csv", voltage_change_csv(&changes).as_bytes())?;
        }
        Ok(())
    }

    fn align(&self, output: &mut StageOutput) -> Result<()> {
        let calendar = self.calendar(output)?;
        let groups = align_for_windows(&calendar, &self.config().windows)?;
        output.write("groups.csv", groups_to_csv(&groups).as_bytes())
    }

    fn load_series(&self, output: &mut StageOutput) -> Result<(HolidayCalendar, BTreeMap<String, DailySeries>)> {
        let calendar = self.calendar(output)?;
        let series = read_canonical(&self.read_upstream("ingest/demand.csv")?, &calendar)?;
        Ok((calendar, series))
    }

    fn area_series<'a>(&self, series: &'a BTreeMap<String, DailySeries>, area: &str) -> Result<&'a DailySeries> {
        series
            .get(area)
            .ok_or_else(|| Error::Data(format!("area {area} missing from ingested demand")))
    }

    fn fit(&self, output: &mut StageOutput) -> Result<()> {
        let (calendar, series) = self.load_series(output)?;
        let analysis = self.config().analysis();
        let groups = align_for_windows(&calendar, &analysis.windows)?;
        for (i, area) in self.config().data.areas.iter().enumerate() {
            let s = self.area_series(&series, &area.area_id)?;
            let design = build_design(s, &groups, &analysis.windows, analysis.day_filter)?;
            if design.dropped > 0 {
                output.notes.push(format!(
                    "{}: {} aligned groups dropped at window edges",
                    area.area_id, design.dropped
                ));
            }
            let draws = fit_design(&design, &analysis, self.area_seed(i))?;
            for (name, r) in draws.rhat() {
                if r > 1.1 {
                    output
                        .notes
                        .push(format!("{}: split R-hat of {name} is {r:.3}", area.area_id));
                }
            }
            let mut buf = Vec::new();
            write_draws(&draws, &mut buf)?;
            output.write(&format!("{}.draws.csv", area.area_id), &buf)?;
        }
        Ok(())
    }

    fn write_report(output: &mut StageOutput, report: &ImpactReport) -> Result<()> {
        let area = &report.area_id;
        output.write(&format!("{area}.figure.csv"), figure_csv(report).as_bytes())?;
        output.write(&format!("{area}.periods.json"), periods_json(report).as_bytes())?;
        let mut full = serde_json::to_string(report)?;
        full.push('\n');
        output.write(&format!("{area}.report.json"), full.as_bytes())
    }

    fn impact(&self, output: &mut StageOutput) -> Result<()> {
        let (calendar, series) = self.load_series(output)?;
        let analysis = self.config().analysis();
        let groups = align_for_windows(&calendar, &analysis.windows)?;
        for (i, area) in self.config().data.areas.iter().enumerate() {
            let s = self.area_series(&series, &area.area_id)?;
            let design = build_design(s, &groups, &analysis.windows, analysis.day_filter)?;
            let text = self.read_upstream(&format!("fit/{}.draws.csv", area.area_id))?;
            let draws = read_draws(text.as_bytes())?;
            let paths = counterfactual(&draws, &design, &analysis, self.area_seed(i))?;
            let report = report_for(&design, &paths, &analysis, "primary")?;
            Self::write_report(output, &report)?;
        }
        Ok(())
    }

    fn placebo(&self, output: &mut StageOutput) -> Result<()> {
        let (calendar, series) = self.load_series(output)?;
        let analysis = self.config().analysis();
        let years = self.config().placebo_years;
        if years == 0 {
            return Err(Error::Config("placebo_years must be at least 1".into()));
        }
        for (i, area) in self.config().data.areas.iter().enumerate() {
            let s = self.area_series(&series, &area.area_id)?;
            let run = placebo_shift(s, &calendar, &analysis, years, self.area_seed(i))?;
            Self::write_report(output, &run.report)?;
        }
        Ok(())
    }

    fn gmm(&self, output: &mut StageOutput) -> Result<()> {
        let mobility_text = self
            .read_upstream("ingest/mobility.csv")
            .map_err(|_| Error::Config("the gmm stage needs mobility data".into()))?;
        let mobility = read_mobility(&mobility_text)?;
        let mut reports = Vec::new();
        for area in &self.config().data.areas {
            let text = self.read_upstream(&format!("impact/{}.report.json", area.area_id))?;
            let report: ImpactReport = serde_json::from_str(&text)?;
            reports.push(report);
        }
        let start = self.config().windows.evaluation_window.start;
        let mut rows: Vec<(String, GmmFit)> = Vec::new();
        for period in &self.config().periods {
            let range = period.resolve(start);
            let panel = build_panel(&reports, &mobility, range)?;
            let fit = estimate(&panel).map_err(|e| annotate(e, &period.label))?;
            for w in &fit.warnings {
                output.notes.push(format!("{}: {w}", period.label));
            }
            rows.push((period.label.clone(), fit));
        }
        output.write("coefficients.csv", table_csv(&rows).as_bytes())?;
        let mut json = serde_json::to_string_pretty(&rows)?;
        json.push('\n');
        output.write("fits.json", json.as_bytes())
    }

    fn seasons(&self, output: &mut StageOutput) -> Result<()> {
        let path = self
            .config()
            .data
            .temperature
            .clone()
            .ok_or_else(|| Error::Config("the seasons stage needs data.temperature".into()))?;
        let bytes = self.read_input(output, &path)?;
        let temps = parse_temperature(&String::from_utf8_lossy(&bytes))?;
        let window = self.config().windows.evaluation_window;
        let sample = seasonal_groups(&temps, &self.config().periods, window)?;
        let levene = levene_mean(&sample)?;
        let anova = one_way_anova(&sample)?;
        output.write(
            "levene.csv",
            f_test_csv(&[("levene", levene), ("anova", anova)]).as_bytes(),
        )?;
        let pairs = tukey_hsd(&sample, 0.95)?;
        output.write("tukey.csv", tukey_csv(&pairs).as_bytes())
    }
}

fn annotate(e: Error, label: &str) -> Error {
    match e {
        Error::EmptyPanel(m) => Error::EmptyPanel(format!("period {label}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("period {label}: {m}")),
        other => other,
    }
}

#[derive(Debug, Deserialize)]
struct TemperatureRow {
    date: chrono::NaiveDate,
    temperature: f64,
}

/// Reads `date,temperature` rows.
pub fn parse_temperature(text: &str) -> Result<Vec<(chrono::NaiveDate, f64)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: TemperatureRow = row?;
        if !row.temperature.is_finite() {
            return Err(Error::Data(format!("non-finite temperature on {}", row.date)));
        }
        out.push((row.date, row.temperature));
    }
    Ok(out)
}

/// Groups observations inside `window` by the period containing them.
pub fn seasonal_groups(
    values: &[(chrono::NaiveDate, f64)],
    periods: &[PeriodSpec],
    window: DateRange,
) -> Result<GroupedSample> {
    let groups = periods
        .iter()
        .map(|p| {
            let range = p.resolve(window.start);
            let v: Vec<f64> = values
                .iter()
                .filter(|(d, _)| window.contains(*d) && range.contains(*d))
                .map(|&(_, t)| t)
                .collect();
            (p.label.clone(), v)
        })
        .collect();
    GroupedSample::new(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_round_trips() {
        let t = PipelineConfig::template();
        let back = PipelineConfig::parse(&t.to_toml()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn stage_names_parse() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("plot".parse::<Stage>().is_err());
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let text = format!("bogus = 1\n{}", PipelineConfig::template().to_toml());
        assert!(matches!(PipelineConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn seed_changes_config_hash() {
        let a = PipelineConfig::template();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
