use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kalman::{check_length, covariance_pass, mean_pass, smooth_means, CovarianceTrack};
use super::StateSpace;
use crate::error::{Error, Result};

/// One joint draw of the state path from `p(alpha | y, theta)`.
///
/// Mean-correction simulation smoother: simulate `(alpha+, y+)` from the
/// model, then shift `alpha+` by the smoothed mean of `y - y+` started from a
/// zero initial mean. Works with singular state covariances (pinned
/// regression state, partially observed seasonal block).
pub fn simulation_smoother<R: Rng + ?Sized>(
    ss: &StateSpace,
    y: &[Option<f64>],
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    ss.validate()?;
    check_length(ss, y.len())?;
    let observed: Vec<bool> = y.iter().map(Option::is_some).collect();
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite observation".into()));
    }
    let track = covariance_pass(ss, &observed)?;
    Ok(simulate_with_track(ss, &track, y, rng))
}

pub(crate) fn simulate_with_track<R: Rng + ?Sized>(
    ss: &StateSpace,
    track: &CovarianceTrack,
    y: &[Option<f64>],
    rng: &mut R,
) -> Vec<DVector<f64>> {
    let n = y.len();
    let m = ss.state_dim();
    let factor = psd_factor(&ss.initial_cov);
    let shocks = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut state = &ss.initial_mean + factor * shocks;
    let noise_sd: Vec<f64> = ss.state_variances.iter().map(|q| q.sqrt()).collect();
    let obs_sd = ss.obs_variance.sqrt();

    let mut alpha = Vec::with_capacity(n);
    let mut y_star = Vec::with_capacity(n);
    for (t, obs) in y.iter().enumerate() {
        y_star.push(obs.map(|value| {
            let eps: f64 = rng.sample(StandardNormal);
            value - (track.z[t].dot(&state) + obs_sd * eps)
        }));
        let eta = DVector::from_fn(noise_sd.len(), |j, _| {
            noise_sd[j] * rng.sample::<f64, _>(StandardNormal)
        });
        let next = &ss.transition * &state + &ss.selection * eta;
        alpha.push(std::mem::replace(&mut state, next));
    }
    let zero = DVector::zeros(m);
    let (a, v) = mean_pass(ss, track, &y_star, &zero);
    let correction = smooth_means(ss, track, &a, &v);
    for (path, c) in alpha.iter_mut().zip(correction) {
        *path += c;
    }
    alpha
}

/// `S` with `S S' = P` for symmetric positive semidefinite `P`.
pub(crate) fn psd_factor(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || p[(i, j)] == 0.0));
    if diagonal {
        return DMatrix::from_fn(n, n, |i, j| if i == j { p[(i, i)].max(0.0).sqrt() } else { 0.0 });
    }
    let eig = SymmetricEigen::new(p.clone());
    let mut s = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let scale = lambda.max(0.0).sqrt();
        s.column_mut(j).scale_mut(scale);
    }
    s
}
