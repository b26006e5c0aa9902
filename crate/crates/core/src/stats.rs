//! Levene's test (center = mean), one-way ANOVA and Tukey HSD.
//!
//! The studentized range distribution is evaluated by numerical
//! integration: the range CDF of `k` standard normals,
//!
//! ```text
//! W(w; k) = k * Int phi(z) [Phi(z) - Phi(z - w)]^(k-1) dz,
//! ```
//!
//! is averaged over the distribution of `s = sqrt(chi2_df / df)`, with the
//! outer integral taken over `u = ln s`. Both integrals use composite
//! Gauss-Legendre rules.

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Labeled groups of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    labels: Vec<String>,
    groups: Vec<Vec<f64>>,
}

impl GroupedSample {
    pub fn new(groups: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::Config("at least two groups are needed".into()));
        }
        for (label, values) in &groups {
            if values.len() < 2 {
                return Err(Error::Config(format!("group `{label}` has fewer than two values")));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("group `{label}` has a non-finite value")));
            }
        }
        let (labels, groups) = groups.into_iter().unzip();
        Ok(GroupedSample { labels, groups })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn n_total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GroupedSample {
            labels: self.labels.clone(),
            groups: self.groups.iter().map(|g| g.iter().map(|&v| f(v)).collect()).collect(),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub df_between: f64,
    pub df_within: f64,
    pub f: f64,
    pub p_value: f64,
}

struct AnovaParts {
    ss_between: f64,
    ss_within: f64,
    df_between: f64,
    df_within: f64,
}

fn anova_parts(groups: &[Vec<f64>]) -> AnovaParts {
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    AnovaParts {
        ss_between,
        ss_within,
        df_between: (groups.len() - 1) as f64,
        df_within: (n - groups.len()) as f64,
    }
}

fn f_test(parts: &AnovaParts, what: &str) -> Result<FTest> {
    if !(parts.ss_within > 0.0) {
        return Err(Error::Degenerate(format!("{what}: zero within-group variation")));
    }
    let f = (parts.ss_between / parts.df_between) / (parts.ss_within / parts.df_within);
    let dist = FisherSnedecor::new(parts.df_between, parts.df_within).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(FTest {
        df_between: parts.df_between,
        df_within: parts.df_within,
        f,
        p_value: dist.sf(f).clamp(0.0, 1.0),
    })
}

pub fn one_way_anova(sample: &GroupedSample) -> Result<FTest> {
    f_test(&anova_parts(&sample.groups), "ANOVA")
}

/// Levene's test with center = mean: one-way ANOVA on `|x - mean_group|`.
pub fn levene_mean(sample: &GroupedSample) -> Result<FTest> {
    let deviations: Vec<Vec<f64>> = sample
        .groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|v| (v - m).abs()).collect()
        })
        .collect();
    f_test(&anova_parts(&deviations), "Levene")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub group_a: String,
    pub group_b: String,
    /// mean(group_b) - mean(group_a), where group_a precedes group_b.
    pub diff: f64,
    pub lwr: f64,
    pub upr: f64,
    pub p_adj: f64,
}

/// Tukey-Kramer pairwise comparisons for every pair `(a, b)` with `a`
/// before `b` in label order.
pub fn tukey_hsd(sample: &GroupedSample, confidence: f64) -> Result<Vec<TukeyPair>> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!("confidence {confidence} is not in (0, 1)")));
    }
    let parts = anova_parts(&sample.groups);
    let k = sample.groups.len();
    let df = parts.df_within;
    let mse = parts.ss_within / df;
    let means: Vec<f64> = sample.groups.iter().map(|g| mean(g)).collect();
    if !(mse > 0.0) {
        let spread = means.iter().any(|m| *m != means[0]);
        if spread {
            return Err(Error::Degenerate(
                "zero within-group variance with unequal means".into(),
            ));
        }
    }
    let q_crit = qtukey(confidence, k, df)?;
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let diff = means[b] - means[a];
            let na = sample.groups[a].len() as f64;
            let nb = sample.groups[b].len() as f64;
            let se = (mse / 2.0 * (1.0 / na + 1.0 / nb)).sqrt();
            let p_adj = if se > 0.0 {
                ptukey_upper(diff.abs() / se, k, df)?
            } else {
                1.0
            };
            out.push(TukeyPair {
                group_a: sample.labels[a].clone(),
                group_b: sample.labels[b].clone(),
                diff,
                lwr: diff - q_crit * se,
                upr: diff + q_crit * se,
                p_adj,
            });
        }
    }
    Ok(out)
}

pub fn tukey_csv(pairs: &[TukeyPair]) -> String {
    let mut out = String::from("group_a,group_b,diff,lwr,upr,p_adj\n");
    for p in pairs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.group_a, p.group_b, p.diff, p.lwr, p.upr, p.p_adj
        );
    }
    out
}

pub fn f_test_csv(rows: &[(&str, FTest)]) -> String {
    let mut out = String::from("test,df_between,df_within,f,p_value\n");
    for (name, t) in rows {
        let _ = writeln!(out, "{name},{},{},{},{}", t.df_between, t.df_within, t.f, t.p_value);
    }
    out
}

const GL_ORDER: usize = 12;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre() -> &'static [(f64, f64); GL_ORDER] {
    static RULE: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = [(0.0, 0.0); GL_ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / deriv;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            rule[i] = (x, 2.0 / ((1.0 - x * x) * deriv * deriv));
        }
        rule
    })
}

fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let rule = gauss_legendre();
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        for &(x, w) in rule {
            total += w * half * f(mid + half * x);
        }
    }
    total
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// P(lo < Z < hi) for a standard normal, computed from the nearer tail.
fn norm_interval(lo: f64, hi: f64) -> f64 {
    let upper = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    if lo >= 0.0 {
        upper(lo) - upper(hi)
    } else if hi <= 0.0 {
        upper(-hi) - upper(-lo)
    } else {
        1.0 - upper(-lo) - upper(hi)
    }
}

/// CDF of the range of `k` independent standard normals.
fn range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let km1 = (k - 1) as i32;
    let inner = |z: f64| norm_pdf(z) * norm_interval(z - w, z).powi(km1);
    let total = k as f64 * integrate(inner, -8.5, 8.5, 48);
    total.clamp(0.0, 1.0)
}

/// Upper tail P(R > w) of the range of `k` standard normals. With `z` the
/// maximum, the integrand is `Phi(z)^m - (Phi(z) - Phi(z - w))^m`; the
/// difference of powers is factored so that small tails keep full relative
/// precision.
fn range_upper(w: f64, k: usize) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    let m = k - 1;
    let lower = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    let inner = |z: f64| {
        let a = lower(z);
        let b = norm_interval(z - w, z);
        let mut sum = 0.0;
        for i in 0..m {
            sum += a.powi(i as i32) * b.powi((m - 1 - i) as i32);
        }
        norm_pdf(z) * lower(z - w) * sum
    };
    (k as f64 * integrate(inner, -8.5, 8.5 + w.min(30.0), 48)).clamp(0.0, 1.0)
}

/// Log-scale density of `s = sqrt(chi2_df / df)` at `u = ln s` and the
/// integration limits where it lies within 40 log-units of its peak.
fn scale_density(df: f64) -> (impl Fn(f64) -> f64, f64, f64) {
    let half = df / 2.0;
    let log_norm = std::f64::consts::LN_2 + half * half.ln() - ln_gamma(half);
    let log_density = move |u: f64| log_norm + df * u - half * (2.0 * u).exp();
    // The mode is at u = 0.
    let peak = log_density(0.0);
    let edge = |dir: f64| {
        let mut a = 0.0;
        let mut b = dir * 0.5;
        while log_density(b) > peak - 40.0 {
            b *= 2.0;
        }
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if log_density(m) > peak - 40.0 {
                a = m;
            } else {
                b = m;
            }
        }
        b
    };
    let (lo, hi) = (edge(-1.0), edge(1.0));
    (move |u: f64| log_density(u).exp(), lo, hi)
}

fn check_args(k: usize, df: f64, q: f64) -> Result<()> {
    if k < 2 || !(df > 0.0) || q.is_nan() {
        return Err(Error::Config(format!(
            "studentized range needs k >= 2 and df > 0 (k={k}, df={df})"
        )));
    }
    Ok(())
}

/// CDF of the studentized range with `k` means and `df` error degrees of
/// freedom.
pub fn ptukey(q: f64, k: usize, df: f64) -> Result<f64> {
    check_args(k, df, q)?;
    if q <= 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    if df > 1e5 {
        return Ok(range_cdf(q, k));
    }
    let (density, lo, hi) = scale_density(df);
    let value = integrate(|u| density(u) * range_cdf(q * u.exp(), k), lo, hi, 40);
    Ok(value.clamp(0.0, 1.0))
}

/// Upper tail of the studentized range, accurate for very small
/// probabilities.
pub fn ptukey_upper(q: f64, k: usize, df: f64) -> Result<f64> {
    check_args(k, df, q)?;
    if q <= 0.0 {
        return Ok(1.0);
    }
    if q.is_infinite() {
        return Ok(0.0);
    }
    if df > 1e5 {
        return Ok(range_upper(q, k));
    }
    let (density, lo, hi) = scale_density(df);
    let value = integrate(|u| density(u) * range_upper(q * u.exp(), k), lo, hi, 40);
    Ok(value.clamp(0.0, 1.0))
}

/// Quantile of the studentized range distribution.
pub fn qtukey(p: f64, k: usize, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!("probability {p} is not in (0, 1)")));
    }
    let f = |q: f64| ptukey(q, k, df).map(|c| c - p);
    let (mut a, mut fa) = (0.0, -p);
    let mut b = 4.0;
    let mut fb = f(b)?;
    while fb < 0.0 {
        a = b;
        fa = fb;
        b *= 2.0;
        fb = f(b)?;
        if b > 1e6 {
            return Err(Error::Numerical("studentized range quantile did not bracket".into()));
        }
    }
    // Illinois variant of regula falsi.
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if fc.abs() < 1e-13 || (b - a).abs() < 1e-12 * b.max(1.0) {
            return Ok(c);
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb /= 2.0;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa /= 2.0;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}
