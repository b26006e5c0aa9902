//! Brute-force references shared by integration tests.
#![allow(dead_code)]

use demand_impact::bsts::{assemble, ModelSpec, StateSpace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::ContinuousCDF;

/// Mean and covariance of the stacked states `(a_1, ..., a_n)` and of `y`,
/// built by propagating the model equations directly.
pub struct JointGaussian {
    pub state_mean: DVector<f64>,
    pub state_cov: DMatrix<f64>,
    pub y_mean: DVector<f64>,
    pub y_cov: DMatrix<f64>,
    /// Cov(stacked states, y)
    pub cross: DMatrix<f64>,
}

pub fn joint_gaussian(ss: &StateSpace, n: usize) -> JointGaussian {
    let m = ss.state_dim();
    let q = ss.state_noise_cov();
    let t = &ss.transition;
    // a_t = T^{t-1} a_1 + sum_{s<t} T^{t-1-s} R n_s
    let mut powers = vec![DMatrix::<f64>::identity(m, m)];
    for i in 1..n {
        powers.push(t * &powers[i - 1]);
    }
    let mut state_mean = DVector::zeros(m * n);
    let mut state_cov = DMatrix::zeros(m * n, m * n);
    for i in 0..n {
        state_mean
            .rows_mut(i * m, m)
            .copy_from(&(&powers[i] * &ss.initial_mean));
        for j in 0..n {
            let mut c = &powers[i] * &ss.initial_cov * powers[j].transpose();
            for s in 0..i.min(j) {
                c += &powers[i - 1 - s] * &q * powers[j - 1 - s].transpose();
            }
            state_cov.view_mut((i * m, j * m), (m, m)).copy_from(&c);
        }
    }
    let mut load = DMatrix::zeros(n, m * n);
    for i in 0..n {
        let z = ss.z_at(i);
        load.view_mut((i, i * m), (1, m)).copy_from(&z.transpose());
    }
    let y_mean = &load * &state_mean;
    let y_cov = &load * &state_cov * load.transpose() + DMatrix::identity(n, n) * ss.obs_variance;
    let cross = &state_cov * load.transpose();
    JointGaussian {
        state_mean,
        state_cov,
        y_mean,
        y_cov,
        cross,
    }
}

/// Gaussian log density of the observed entries of `y`.
pub fn log_density(joint: &JointGaussian, y: &[Option<f64>]) -> f64 {
    let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_some()).collect();
    if idx.is_empty() {
        return 0.0;
    }
    let k = idx.len();
    let cov = DMatrix::from_fn(k, k, |a, b| joint.y_cov[(idx[a], idx[b])]);
    let resid = DVector::from_fn(k, |a, _| y[idx[a]].unwrap() - joint.y_mean[idx[a]]);
    let chol = cov.cholesky().expect("observation covariance is positive definite");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let sol = chol.solve(&resid);
    -0.5 * (k as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + resid.dot(&sol))
}

/// E[a_t | y] and Var(a_t | y) for every t by Gaussian conditioning.
pub fn conditional_states(
    joint: &JointGaussian,
    y: &[Option<f64>],
    m: usize,
) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let n = y.len();
    let idx: Vec<usize> = (0..n).filter(|&i| y[i].is_some()).collect();
    let k = idx.len();
    let cov = DMatrix::from_fn(k, k, |a, b| joint.y_cov[(idx[a], idx[b])]);
    let cross = DMatrix::from_fn(m * n, k, |r, b| joint.cross[(r, idx[b])]);
    let resid = DVector::from_fn(k, |a, _| y[idx[a]].unwrap() - joint.y_mean[idx[a]]);
    let inv = cov.try_inverse().expect("invertible");
    let mean = &joint.state_mean + &cross * &inv * resid;
    let cov_post = &joint.state_cov - &cross * &inv * cross.transpose();
    let means = (0..n).map(|t| mean.rows(t * m, m).into_owned()).collect();
    let covs = (0..n)
        .map(|t| cov_post.view((t * m, t * m), (m, m)).into_owned())
        .collect();
    (means, covs)
}

/// A random model with at most 10 states and randomized parameters.
pub fn random_model<R: Rng>(rng: &mut R, n: usize) -> StateSpace {
    loop {
        let mut spec = ModelSpec::local_level();
        if rng.random_bool(0.5) {
            spec = spec.with_trend();
        }
        if rng.random_bool(0.6) {
            spec = spec.with_seasonal(rng.random_range(2..=7));
        }
        let k = rng.random_range(0..=3usize);
        if k > 0 {
            let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-2.0..2.0));
            spec = spec.with_regression(x);
        }
        if spec.structure().state_dim() > 10 {
            continue;
        }
        let mut ss = assemble(&spec, n).unwrap();
        let q: Vec<f64> = (0..ss.n_disturbances()).map(|_| rng.random_range(0.01..1.0)).collect();
        ss.set_variances(rng.random_range(0.05..2.0), &q).unwrap();
        if k > 0 {
            let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
            ss.set_coefficients(&beta).unwrap();
        }
        ss.set_initial_variance(rng.random_range(0.5..5.0));
        for (i, c) in ss.layout.clone().iter().enumerate() {
            if *c != demand_impact::bsts::Component::Regression {
                ss.initial_mean[i] = rng.random_range(-1.0..1.0);
            }
        }
        return ss;
    }
}

/// A series simulated from the model itself.
pub fn simulate_series<R: Rng>(ss: &StateSpace, n: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::StandardNormal;
    let m = ss.state_dim();
    let mut state = ss.initial_mean.clone();
    for i in 0..m {
        let sd = ss.initial_cov[(i, i)].sqrt();
        state[i] += sd * rng.sample::<f64, _>(StandardNormal);
    }
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        let e: f64 = rng.sample(StandardNormal);
        y.push(ss.z_at(t).dot(&state) + ss.obs_variance.sqrt() * e);
        let eta = DVector::from_fn(ss.n_disturbances(), |j, _| {
            ss.state_variances[j].sqrt() * rng.sample::<f64, _>(StandardNormal)
        });
        state = &ss.transition * &state + &ss.selection * eta;
    }
    y
}

/// Panel from `ln E_t = a + b' m_t + rho ln E_{t-1} + u_t` with MA(1)
/// errors `u_t = e_t + theta e_{t-1}`, so the first lag is endogenous and
/// the second is a valid instrument. Mobility terms follow AR(1) paths.
pub fn partial_adjustment_panel<R: Rng>(
    rng: &mut R,
    areas: usize,
    days: usize,
    coefficients: [f64; 5],
    persistence: f64,
    theta: f64,
) -> Vec<demand_impact::gmm::AreaSeries> {
    use rand_distr::StandardNormal;
    let start = chrono::NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
    let burn = 50;
    (0..areas)
        .map(|a| {
            let mut m = [0.0f64; 4];
            let mut ln_e = 0.0;
            let mut e_prev = 0.0;
            let mut rows = Vec::with_capacity(days);
            for t in 0..burn + days {
                for (j, v) in m.iter_mut().enumerate() {
                    let center = [0.08, -0.15, -0.1, -0.03][j];
                    *v = center + 0.8 * (*v - center) + 0.03 * rng.sample::<f64, _>(StandardNormal);
                }
                let e = 0.02 * rng.sample::<f64, _>(StandardNormal);
                let u = e + theta * e_prev;
                e_prev = e;
                ln_e = coefficients[0]
                    + coefficients[1] * m[0]
                    + coefficients[2] * m[1]
                    + coefficients[3] * m[2]
                    + coefficients[4] * m[3]
                    + persistence * ln_e
                    + u;
                if t >= burn {
                    let date = start + chrono::Duration::days((t - burn) as i64);
                    rows.push((date, ln_e, m));
                }
            }
            demand_impact::gmm::AreaSeries {
                area_id: format!("area{a:02}"),
                rows,
            }
        })
        .collect()
}

/// Pooled-variance two-sample t-test, two-sided p.
pub fn pooled_t_p(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss: f64 = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
    let df = (a.len() + b.len() - 2) as f64;
    let sp2 = ss / df;
    let t = (ma - mb) / (sp2 * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    2.0 * statrs::distribution::StudentsT::new(0.0, 1.0, df).unwrap().sf(t.abs())
}

/// Monte-Carlo quantile of max-min of k normals over sqrt(chi2_df/df).
pub fn monte_carlo_quantile(k: usize, df: f64, p: f64, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi = ChiSquared::new(df).unwrap();
    let mut q: Vec<f64> = (0..n)
        .map(|_| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for _ in 0..k {
                let z: f64 = rng.sample(StandardNormal);
                lo = lo.min(z);
                hi = hi.max(z);
            }
            (hi - lo) / (chi.sample(&mut rng) / df).sqrt()
        })
        .collect();
    q.sort_by(f64::total_cmp);
    q[(p * n as f64) as usize]
}
