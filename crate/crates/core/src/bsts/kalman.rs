use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::StateSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// `a_t = E[alpha_t | y_1..y_{t-1}]`, t = 1..n+1.
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    /// `E[alpha_t | y_1..y_t]`, t = 1..n.
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    /// One-step prediction errors; `None` where the observation is missing.
    pub innovations: Vec<Option<f64>>,
    /// One-step predictive variances `F_t`.
    pub innovation_variances: Vec<f64>,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

/// Data-independent part of the filter: predicted covariances, predictive
/// variances and gains. Shared by the filter, the smoother and the
/// simulation smoother.
pub(crate) struct CovarianceTrack {
    pub p: Vec<DMatrix<f64>>,
    pub f: Vec<f64>,
    pub k: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub observed: Vec<bool>,
}

pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

pub(crate) fn check_length(ss: &StateSpace, n: usize) -> Result<()> {
    match ss.n_time {
        Some(len) if len != n => Err(Error::Dimension(format!(
            "series has {n} observations, model expects {len}"
        ))),
        _ => Ok(()),
    }
}

pub(crate) fn covariance_pass(ss: &StateSpace, observed: &[bool]) -> Result<CovarianceTrack> {
    let n = observed.len();
    let t_mat = &ss.transition;
    let t_tr = t_mat.transpose();
    let rqr = ss.state_noise_cov();
    let mut p = ss.initial_cov.clone();
    symmetrize(&mut p);

    let mut track = CovarianceTrack {
        p: Vec::with_capacity(n + 1),
        f: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        observed: observed.to_vec(),
    };
    for (t, &obs) in observed.iter().enumerate() {
        let z = ss.z_at(t);
        let pz = &p * &z;
        let f = z.dot(&pz) + ss.obs_variance;
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Numerical(format!(
                "predictive variance {f} at index {t} is not positive"
            )));
        }
        let tp = t_mat * &p;
        let mut next = &tp * &t_tr + &rqr;
        let k = if obs {
            let k = (t_mat * &pz) / f;
            next.ger(-f, &k, &k, 1.0);
            k
        } else {
            DVector::zeros(z.len())
        };
        symmetrize(&mut next);
        track.p.push(std::mem::replace(&mut p, next));
        track.f.push(f);
        track.k.push(k);
        track.z.push(z);
    }
    track.p.push(p);
    Ok(track)
}

/// Predicted state means and innovations for data `y` started from `a1`.
pub(crate) fn mean_pass(
    ss: &StateSpace,
    track: &CovarianceTrack,
    y: &[Option<f64>],
    a1: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut a = Vec::with_capacity(y.len() + 1);
    let mut v = Vec::with_capacity(y.len());
    let mut cur = a1.clone();
    for (t, obs) in y.iter().enumerate() {
        let mut next = &ss.transition * &cur;
        let innov = match obs {
            Some(value) => {
                let innov = value - track.z[t].dot(&cur);
                next.axpy(innov, &track.k[t], 1.0);
                innov
            }
            None => 0.0,
        };
        v.push(innov);
        a.push(std::mem::replace(&mut cur, next));
    }
    a.push(cur);
    (a, v)
}

/// Fast state smoother: smoothed means only.
pub(crate) fn smooth_means(
    ss: &StateSpace,
    track: &CovarianceTrack,
    a: &[DVector<f64>],
    v: &[f64],
) -> Vec<DVector<f64>> {
    let n = v.len();
    let m = ss.state_dim();
    let t_tr = ss.transition.transpose();
    let mut r = DVector::zeros(m);
    let mut out = vec![DVector::zeros(m); n];
    for t in (0..n).rev() {
        // r_{t-1} = Z v / F + L' r_t, with L = T - K Z'.
        let mut prev = &t_tr * &r;
        if track.observed[t] {
            let kr = track.k[t].dot(&r);
            prev.axpy(v[t] / track.f[t] - kr, &track.z[t], 1.0);
        }
        r = prev;
        out[t] = &a[t] + &track.p[t] * &r;
    }
    out
}

fn observed_mask(y: &[Option<f64>]) -> Result<Vec<bool>> {
    y.iter()
        .map(|v| match v {
            Some(x) if !x.is_finite() => Err(Error::Data("non-finite observation".into())),
            Some(_) => Ok(true),
            None => Ok(false),
        })
        .collect()
}

pub fn kalman_filter(ss: &StateSpace, y: &[Option<f64>]) -> Result<FilterOutput> {
    ss.validate()?;
    check_length(ss, y.len())?;
    let observed = observed_mask(y)?;
    let track = covariance_pass(ss, &observed)?;
    let (a, v) = mean_pass(ss, &track, y, &ss.initial_mean);

    let n = y.len();
    let mut filtered_means = Vec::with_capacity(n);
    let mut filtered_covs = Vec::with_capacity(n);
    let mut innovations = Vec::with_capacity(n);
    let mut log_likelihood = 0.0;
    for t in 0..n {
        let p = &track.p[t];
        if observed[t] {
            let f = track.f[t];
            let pz = p * &track.z[t];
            filtered_means.push(&a[t] + &pz * (v[t] / f));
            let mut pf = p.clone();
            pf.ger(-1.0 / f, &pz, &pz, 1.0);
            symmetrize(&mut pf);
            filtered_covs.push(pf);
            innovations.push(Some(v[t]));
            log_likelihood -= 0.5 * ((2.0 * PI).ln() + f.ln() + v[t] * v[t] / f);
        } else {
            filtered_means.push(a[t].clone());
            filtered_covs.push(p.clone());
            innovations.push(None);
        }
    }
    Ok(FilterOutput {
        predicted_means: a,
        predicted_covs: track.p,
        filtered_means,
        filtered_covs,
        innovations,
        innovation_variances: track.f,
        log_likelihood,
    })
}

/// Smoothed state means and covariances `E[alpha_t | y]`, `Var[alpha_t | y]`.
pub fn kalman_smoother(ss: &StateSpace, y: &[Option<f64>]) -> Result<SmootherOutput> {
    ss.validate()?;
    check_length(ss, y.len())?;
    let observed = observed_mask(y)?;
    let track = covariance_pass(ss, &observed)?;
    let (a, v) = mean_pass(ss, &track, y, &ss.initial_mean);
    let n = y.len();
    let m = ss.state_dim();
    let t_mat = &ss.transition;
    let mut r = DVector::zeros(m);
    let mut big_n = DMatrix::zeros(m, m);
    let mut means = vec![DVector::zeros(m); n];
    let mut covs = vec![DMatrix::zeros(m, m); n];
    for t in (0..n).rev() {
        if observed[t] {
            let z = &track.z[t];
            let f = track.f[t];
            let mut l = t_mat.clone();
            l.ger(-1.0, &track.k[t], z, 1.0);
            r = z * (v[t] / f) + l.transpose() * &r;
            big_n = z * z.transpose() / f + l.transpose() * &big_n * &l;
        } else {
            r = t_mat.transpose() * &r;
            big_n = t_mat.transpose() * &big_n * t_mat;
        }
        symmetrize(&mut big_n);
        let p = &track.p[t];
        means[t] = &a[t] + p * &r;
        let mut cov = p - p * &big_n * p;
        symmetrize(&mut cov);
        covs[t] = cov;
    }
    Ok(SmootherOutput { means, covs })
}
