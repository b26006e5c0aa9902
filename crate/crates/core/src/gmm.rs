//! Partial-adjustment panel model estimated by two-step GMM.
//!
//! ```text
//! ln ELE_t = a + b1 Resi_t + b2 Wrk_t + b3 Retl_t + b4 Grcy_t + b5 ln ELE_{t-1} + u_t
//! ```
//!
//! `ln ELE` is the log ratio of actual demand to the counterfactual median
//! and the mobility terms are `ln(1 + pct / 100)`. The lagged dependent
//! variable is instrumented by its second lag; the other regressors
//! instrument themselves. Standard errors are clustered by area.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::DateRange;
use crate::error::{Error, Result};
use crate::impact::ImpactReport;
use crate::ingest::MobilityRecord;

pub const REGRESSOR_NAMES: [&str; 6] = ["const", "resi", "wrk", "retl", "grcy", "ele_lag1"];
pub const INSTRUMENT_NAMES: [&str; 6] = ["const", "resi", "wrk", "retl", "grcy", "ele_lag2"];
pub const Z_CRITICAL: f64 = 1.96;
pub const WEAK_INSTRUMENT_F: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub area_id: String,
    pub date: NaiveDate,
    pub ln_ele: f64,
    pub ln_resi: f64,
    pub ln_wrk: f64,
    pub ln_retl: f64,
    pub ln_grcy: f64,
    pub ln_ele_lag1: f64,
    pub ln_ele_lag2: f64,
}

impl PanelObservation {
    fn regressors(&self) -> [f64; 6] {
        [
            1.0,
            self.ln_resi,
            self.ln_wrk,
            self.ln_retl,
            self.ln_grcy,
            self.ln_ele_lag1,
        ]
    }

    fn instruments(&self) -> [f64; 6] {
        [
            1.0,
            self.ln_resi,
            self.ln_wrk,
            self.ln_retl,
            self.ln_grcy,
            self.ln_ele_lag2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub observations: Vec<PanelObservation>,
    /// (area, date) of observations whose lags skip calendar days.
    pub gaps: Vec<(String, NaiveDate)>,
}

/// One area's retained dates with `ln ELE` and the mobility log change rates,
/// in date order.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSeries {
    pub area_id: String,
    /// (date, ln_ele, [resi, wrk, retl, grcy])
    pub rows: Vec<(NaiveDate, f64, [f64; 4])>,
}

pub fn ln_change(pct: f64) -> Result<f64> {
    let ratio = 1.0 + pct / 100.0;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::Data(format!("change rate {pct}% has no logarithm")));
    }
    Ok(ratio.ln())
}

/// Inner join of impact reports and mobility on (area, date) within `period`.
pub fn join_series(
    reports: &[ImpactReport],
    mobility: &[MobilityRecord],
    period: DateRange,
) -> Result<Vec<AreaSeries>> {
    let mob: BTreeMap<(&str, NaiveDate), &MobilityRecord> =
        mobility.iter().map(|m| ((m.area_id.as_str(), m.date), m)).collect();
    let mut out = Vec::new();
    for report in reports {
        let mut rows = Vec::new();
        for p in &report.points {
            if !period.contains(p.date) {
                continue;
            }
            let Some(m) = mob.get(&(report.area_id.as_str(), p.date)) else {
                continue;
            };
            if !(p.actual > 0.0 && p.counterfactual.median > 0.0) {
                return Err(Error::Data(format!(
                    "area {} on {}: demand ratio needs positive actual and counterfactual",
                    report.area_id, p.date
                )));
            }
            let ln_ele = (p.actual / p.counterfactual.median).ln();
            let x = [
                ln_change(m.residential)?,
                ln_change(m.workplaces)?,
                ln_change(m.retail_recreation)?,
                ln_change(m.grocery_pharmacy)?,
            ];
            rows.push((p.date, ln_ele, x));
        }
        rows.sort_by_key(|r| r.0);
        out.push(AreaSeries {
            area_id: report.area_id.clone(),
            rows,
        });
    }
    Ok(out)
}

/// Builds lagged observations within each area. The first two retained
/// dates of an area only supply lags. Lags are taken over adjacent retained
/// dates even when calendar days are skipped; such observations are listed
/// in `gaps`.
pub fn panel_from_series(series: &[AreaSeries]) -> Result<Panel> {
    let mut observations = Vec::new();
    let mut gaps = Vec::new();
    for s in series {
        for w in s.rows.windows(3) {
            let (d2, l2, _) = w[0];
            let (d1, l1, _) = w[1];
            let (d0, ln_ele, x) = w[2];
            if (d1 - d2).num_days() > 1 || (d0 - d1).num_days() > 1 {
                gaps.push((s.area_id.clone(), d0));
            }
            observations.push(PanelObservation {
                area_id: s.area_id.clone(),
                date: d0,
                ln_ele,
                ln_resi: x[0],
                ln_wrk: x[1],
                ln_retl: x[2],
                ln_grcy: x[3],
                ln_ele_lag1: l1,
                ln_ele_lag2: l2,
            });
        }
    }
    if observations.is_empty() {
        return Err(Error::EmptyPanel(
            "no area has three or more joined observations".into(),
        ));
    }
    if let Some(o) = observations.iter().find(|o| {
        ![
            o.ln_ele,
            o.ln_resi,
            o.ln_wrk,
            o.ln_retl,
            o.ln_grcy,
            o.ln_ele_lag1,
            o.ln_ele_lag2,
        ]
        .iter()
        .all(|v| v.is_finite())
    }) {
        return Err(Error::Data(format!(
            "non-finite panel value for {} on {}",
            o.area_id, o.date
        )));
    }
    Ok(Panel { observations, gaps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub names: Vec<String>,
    pub instruments: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub significant: Vec<bool>,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// First-stage F of the lagged regressor on the excluded instrument.
    pub first_stage_f: f64,
    pub warnings: Vec<String>,
}

/// Columns that are (numerically) linear combinations of earlier columns.
pub fn collinear_columns(m: &DMatrix<f64>, names: &[&str]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-9 * norm {
            out.push(names[j].to_string());
        } else {
            basis.push(r / rn);
        }
    }
    out
}

fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.solve(b))
        .or_else(|| a.clone().lu().solve(b))
        .ok_or_else(|| Error::Numerical("singular moment matrix".into()))
}

/// Linear GMM step with weight `w`: `(X'Z W Z'X)^{-1} X'Z W Z'y`.
fn gmm_step(x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
    let zx = z.transpose() * x;
    let zy = z.transpose() * y;
    if zx.is_square() {
        // Just identified: every weight gives the same estimate.
        return zx
            .lu()
            .solve(&zy)
            .ok_or_else(|| Error::Numerical("singular instrument cross-moment".into()));
    }
    let a = zx.transpose() * w * &zx;
    let b = zx.transpose() * w * zy;
    let beta = solve_spd(&a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(beta.column(0).into_owned())
}

fn residual_sum_sq(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let b = solve_spd(&xtx, &DMatrix::from_column_slice(xty.len(), 1, xty.as_slice()))?;
    Ok((y - x * b.column(0)).norm_squared())
}

pub fn design_matrices(panel: &Panel) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let obs = &panel.observations;
    let n = obs.len();
    let x = DMatrix::from_fn(n, 6, |i, j| obs[i].regressors()[j]);
    let z = DMatrix::from_fn(n, 6, |i, j| obs[i].instruments()[j]);
    let y = DVector::from_fn(n, |i, _| obs[i].ln_ele);
    (x, z, y)
}

/// Two-step efficient GMM with a heteroskedasticity-robust weight matrix
/// and area-clustered sandwich standard errors (with the usual
/// `G/(G-1) * (N-1)/(N-K)` finite-sample factor).
pub fn estimate(panel: &Panel) -> Result<GmmFit> {
    let (x, z, y) = design_matrices(panel);
    let n = x.nrows();
    let k = x.ncols();
    if n <= k {
        return Err(Error::EmptyPanel(format!("{n} observations for {k} coefficients")));
    }
    let bad_x = collinear_columns(&x, &REGRESSOR_NAMES);
    let bad_z = collinear_columns(&z, &INSTRUMENT_NAMES);
    if !bad_x.is_empty() || !bad_z.is_empty() {
        let mut cols = bad_x;
        cols.extend(bad_z.into_iter().filter(|c| c == "ele_lag2"));
        return Err(Error::RankDeficient(cols));
    }

    let ztz = z.transpose() * &z;
    let w1 = solve_spd(&ztz, &DMatrix::identity(k, k))?;
    let beta1 = gmm_step(&x, &z, &y, &w1)?;
    let u1 = &y - &x * &beta1;
    let mut s = DMatrix::zeros(k, k);
    for i in 0..n {
        let zi = z.row(i).transpose();
        s += &zi * zi.transpose() * (u1[i] * u1[i]);
    }
    let w2 = solve_spd(&s, &DMatrix::identity(k, k))?;
    let beta = gmm_step(&x, &z, &y, &w2)?;
    let u = &y - &x * &beta;

    let mut clusters: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
    for (i, o) in panel.observations.iter().enumerate() {
        let zi = z.row(i).transpose() * u[i];
        *clusters.entry(&o.area_id).or_insert_with(|| DVector::zeros(k)) += zi;
    }
    let g = clusters.len();
    let mut omega = DMatrix::zeros(k, k);
    for sc in clusters.values() {
        omega += sc * sc.transpose();
    }
    let zx = z.transpose() * &x;
    let (bread, meat) = if zx.is_square() {
        let inv = zx
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular instrument cross-moment".into()))?;
        (inv.clone(), omega * inv.transpose())
    } else {
        let bread = solve_spd(&(zx.transpose() * &w2 * &zx), &DMatrix::identity(k, k))?;
        let meat = zx.transpose() * &w2 * omega * &w2 * &zx * &bread;
        (bread, meat)
    };
    let correction = if g > 1 {
        (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64))
    } else {
        1.0
    };
    let cov = &bread * meat * correction;

    let std_errors: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let z_values: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, s)| if *s > 0.0 { b / s } else { f64::NAN })
        .collect();
    let significant = z_values.iter().map(|z| z.abs() > Z_CRITICAL).collect();

    // First stage: lag1 on all instruments vs. on the included ones only.
    let lag1 = x.column(5).into_owned();
    let rss_full = residual_sum_sq(&z, &lag1)?;
    let rss_restricted = residual_sum_sq(&z.columns(0, 5).into_owned(), &lag1)?;
    let first_stage_f = (rss_restricted - rss_full) / (rss_full / (n - k) as f64);
    let mut warnings = Vec::new();
    if !(first_stage_f >= WEAK_INSTRUMENT_F) {
        warnings.push(format!(
            "weak instrument: first-stage F for ele_lag1 on ele_lag2 is {first_stage_f:.3} (< {WEAK_INSTRUMENT_F})"
        ));
    }
    if g < 2 {
        warnings.push("a single cluster: clustered standard errors are not informative".into());
    }
    if !panel.gaps.is_empty() {
        warnings.push(format!(
            "{} observations take lags across skipped calendar days",
            panel.gaps.len()
        ));
    }

    Ok(GmmFit {
        names: REGRESSOR_NAMES.iter().map(|s| s.to_string()).collect(),
        instruments: INSTRUMENT_NAMES.iter().map(|s| s.to_string()).collect(),
        coefficients,
        std_errors,
        z_values,
        significant,
        n_obs: n,
        n_clusters: g,
        first_stage_f,
        warnings,
    })
}

/// Joins reports and mobility within `period` and builds the lagged panel.
pub fn build_panel(reports: &[ImpactReport], mobility: &[MobilityRecord], period: DateRange) -> Result<Panel> {
    panel_from_series(&join_series(reports, mobility, period)?)
}

/// Column order of the coefficient table: mobility terms, lag, intercept.
const TABLE_ORDER: [usize; 6] = [1, 2, 4, 3, 5, 0];

/// One row per period; for each coefficient its value, z-value and a `*`
/// when `|z| > 1.96`.
pub fn table_csv(rows: &[(String, GmmFit)]) -> String {
    let mut out = String::from("period,n_obs,n_clusters,first_stage_f");
    for j in TABLE_ORDER {
        let name = REGRESSOR_NAMES[j];
        let _ = write!(out, ",{name},{name}_z,{name}_sig");
    }
    out.push('\n');
    for (label, fit) in rows {
        let _ = write!(out, "{label},{},{},{}", fit.n_obs, fit.n_clusters, fit.first_stage_f);
        for j in TABLE_ORDER {
            let star = if fit.significant[j] { "*" } else { "" };
            let _ = write!(out, ",{},{},{star}", fit.coefficients[j], fit.z_values[j]);
        }
        out.push('\n');
    }
    out
}
