//! Columnar draws file.
//!
//! ```text
//! # demand-impact posterior draws v1
//! # seed=42
//! # n_burn=2000
//! # n_draws=10000
//! # spec_hash=3f1c0a9e5b7d2c41
//! # level=true
//! # trend=true
//! # seasonal_period=7
//! # n_covariates=3
//! # n_train=245
//! # y_mean=...
//! # y_sd=...
//! # x_mean=a;b;c
//! # x_sd=a;b;c
//! draw,sigma2_obs,sigma2_level,...,beta_1,...,state_1,...
//! 0,...
//! ```
//!
//! One row per retained draw. Variances, coefficients and states are on the
//! standardized scale given by `y_mean`/`y_sd` and `x_mean`/`x_sd`. Floats are
//! written in shortest round-trip form, so reading a file back reproduces the
//! draws exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{Draw, ModelStructure, PosteriorDraws, Standardization};
use crate::error::{Error, Result};

const MAGIC: &str = "# demand-impact posterior draws v1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_draws<W: Write>(draws: &PosteriorDraws, mut out: W) -> Result<()> {
    let s = &draws.structure;
    let st = &draws.standardization;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "# seed={}", draws.seed)?;
    writeln!(out, "# n_burn={}", draws.n_burn)?;
    writeln!(out, "# n_draws={}", draws.n_draws())?;
    writeln!(out, "# spec_hash={}", draws.spec_hash)?;
    writeln!(out, "# level={}", s.level)?;
    writeln!(out, "# trend={}", s.trend)?;
    writeln!(out, "# seasonal_period={}", s.seasonal_period.unwrap_or(0))?;
    writeln!(out, "# n_covariates={}", s.n_covariates)?;
    writeln!(out, "# n_train={}", draws.n_train)?;
    writeln!(out, "# y_mean={}", st.y_mean)?;
    writeln!(out, "# y_sd={}", st.y_sd)?;
    writeln!(out, "# x_mean={}", join(&st.x_mean))?;
    writeln!(out, "# x_sd={}", join(&st.x_sd))?;

    let mut header = vec!["draw".to_string(), "sigma2_obs".to_string()];
    header.extend(s.variance_names().iter().map(|n| format!("sigma2_{n}")));
    header.extend((1..=s.n_covariates).map(|j| format!("beta_{j}")));
    header.extend((1..=s.state_dim()).map(|j| format!("state_{j}")));
    writeln!(out, "{}", header.join(","))?;

    for (i, d) in draws.draws.iter().enumerate() {
        let mut line = format!("{i},{}", d.obs_variance);
        for v in d.state_variances.iter().chain(&d.coefficients).chain(&d.final_state) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn field<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Data(format!("draws file lacks `{key}`")))
}

fn parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    field(meta, key)?
        .parse()
        .map_err(|_| Error::Data(format!("draws file has a malformed `{key}`")))
}

fn parse_list(meta: &BTreeMap<String, String>, key: &str) -> Result<Vec<f64>> {
    let raw = field(meta, key)?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(';')
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Data(format!("malformed `{key}` entry `{v}`")))
        })
        .collect()
}

pub fn read_draws<R: BufRead>(input: R) -> Result<PosteriorDraws> {
    let mut lines = input.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim_end() != MAGIC {
        return Err(Error::Data("not a posterior draws file".into()));
    }
    let mut meta = BTreeMap::new();
    let mut header = None;
    for line in lines.by_ref() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        } else {
            header = Some(line);
            break;
        }
    }
    let seasonal: usize = parse(&meta, "seasonal_period")?;
    let structure = ModelStructure {
        level: parse(&meta, "level")?,
        trend: parse(&meta, "trend")?,
        seasonal_period: (seasonal > 0).then_some(seasonal),
        n_covariates: parse(&meta, "n_covariates")?,
    };
    let n_var = structure.variance_names().len();
    let k = structure.n_covariates;
    let m = structure.state_dim();
    let width = 2 + n_var + k + m;
    let header = header.ok_or_else(|| Error::Data("draws file has no column header".into()))?;
    if header.split(',').count() != width {
        return Err(Error::Data(format!(
            "draws header has {} columns, structure implies {width}",
            header.split(',').count()
        )));
    }

    let mut draws = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("draws row {row}: {e}")))?;
        if values.len() != width - 1 {
            return Err(Error::Data(format!("draws row {row} has {} values", values.len() + 1)));
        }
        draws.push(Draw {
            obs_variance: values[0],
            state_variances: values[1..1 + n_var].to_vec(),
            coefficients: values[1 + n_var..1 + n_var + k].to_vec(),
            final_state: values[1 + n_var + k..].to_vec(),
        });
    }
    let n_draws: usize = parse(&meta, "n_draws")?;
    if draws.len() != n_draws {
        return Err(Error::Data(format!(
            "draws file declares {n_draws} draws but holds {}",
            draws.len()
        )));
    }
    Ok(PosteriorDraws {
        structure,
        draws,
        n_burn: parse(&meta, "n_burn")?,
        seed: parse(&meta, "seed")?,
        spec_hash: field(&meta, "spec_hash")?.to_string(),
        n_train: parse(&meta, "n_train")?,
        standardization: Standardization {
            y_mean: parse(&meta, "y_mean")?,
            y_sd: parse(&meta, "y_sd")?,
            x_mean: parse_list(&meta, "x_mean")?,
            x_sd: parse_list(&meta, "x_sd")?,
        },
    })
}
