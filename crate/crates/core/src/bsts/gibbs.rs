use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kalman::covariance_pass;
use super::simulate::simulate_with_track;
use super::{assemble, ModelSpec, ModelStructure};
use crate::error::{Error, Result};

/// Gamma prior on a precision (inverse variance), parameterized by shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    /// Prior worth `sample_size` observations with prior guess `sd` for the
    /// standard deviation.
    pub fn from_sd_guess(sd: f64, sample_size: f64) -> Self {
        GammaPrior {
            shape: 0.5 * sample_size,
            rate: 0.5 * sample_size * sd * sd,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("{name} prior needs positive shape and rate")))
        }
    }
}

/// Priors on the standardized scale (y and covariates centered and scaled
/// over the training window).
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub obs: GammaPrior,
    pub level: GammaPrior,
    pub slope: GammaPrior,
    pub seasonal: GammaPrior,
    pub beta_mean: DVector<f64>,
    pub beta_precision: DMatrix<f64>,
    /// Variance of the initial state of every free component.
    pub initial_state_variance: f64,
}

impl Priors {
    /// State sd guess 0.01, observation sd guess 0.1 (one prior observation
    /// each), beta ~ N(0, 100 I).
    pub fn standard(n_covariates: usize) -> Self {
        Priors::with_settings(n_covariates, 0.01, 0.1, 1.0, 0.0, 0.01, 1.0)
    }

    pub fn with_settings(
        n_covariates: usize,
        state_sd_guess: f64,
        obs_sd_guess: f64,
        prior_sample_size: f64,
        beta_mean: f64,
        beta_precision: f64,
        initial_state_variance: f64,
    ) -> Self {
        let state = GammaPrior::from_sd_guess(state_sd_guess, prior_sample_size);
        Priors {
            obs: GammaPrior::from_sd_guess(obs_sd_guess, prior_sample_size),
            level: state,
            slope: state,
            seasonal: state,
            beta_mean: DVector::from_element(n_covariates, beta_mean),
            beta_precision: DMatrix::identity(n_covariates, n_covariates) * beta_precision,
            initial_state_variance,
        }
    }

    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        self.obs.validate("observation")?;
        self.level.validate("level")?;
        self.slope.validate("slope")?;
        self.seasonal.validate("seasonal")?;
        if self.beta_mean.len() != n_covariates || self.beta_precision.shape() != (n_covariates, n_covariates) {
            return Err(Error::Dimension(format!(
                "coefficient prior has {} entries for {n_covariates} covariates",
                self.beta_mean.len()
            )));
        }
        if n_covariates > 0 {
            let sym = (&self.beta_precision + self.beta_precision.transpose()) * 0.5;
            if SymmetricEigen::new(sym).eigenvalues.min() < -1e-12 {
                return Err(Error::Config(
                    "coefficient prior precision is not positive semidefinite".into(),
                ));
            }
        }
        if !(self.initial_state_variance > 0.0) {
            return Err(Error::Config("initial state variance must be positive".into()));
        }
        Ok(())
    }

    fn for_component(&self, name: &str) -> GammaPrior {
        match name {
            "level" => self.level,
            "slope" => self.slope,
            _ => self.seasonal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_draws: usize,
    pub n_burn: usize,
    pub seed: u64,
}

impl McmcConfig {
    pub fn new(n_draws: usize, n_burn: usize, seed: u64) -> Self {
        McmcConfig { n_draws, n_burn, seed }
    }
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_draws: 10_000,
            n_burn: 2_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y_mean: f64,
    pub y_sd: f64,
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
}

impl Standardization {
    pub fn standardize_design(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.x_mean[j]) / self.x_sd[j])
    }
}

/// One retained Gibbs iteration, on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub obs_variance: f64,
    pub state_variances: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// State at the last training index.
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub structure: ModelStructure,
    pub draws: Vec<Draw>,
    pub n_burn: usize,
    pub seed: u64,
    pub spec_hash: String,
    pub n_train: usize,
    pub standardization: Standardization,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Split-chain potential scale reduction for every variance, reported
    /// as `(name, rhat)`. Not enforced.
    pub fn rhat(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let obs: Vec<f64> = self.draws.iter().map(|d| d.obs_variance).collect();
        out.push(("sigma2_obs".to_string(), split_rhat(&obs)));
        for (j, name) in self.structure.variance_names().iter().enumerate() {
            let chain: Vec<f64> = self.draws.iter().map(|d| d.state_variances[j]).collect();
            out.push((format!("sigma2_{name}"), split_rhat(&chain)));
        }
        out
    }

    /// Posterior mean of the coefficients on the original covariate scale
    /// (per unit of covariate, in units of y).
    pub fn coefficient_means(&self) -> Vec<f64> {
        let k = self.structure.n_covariates;
        let n = self.draws.len().max(1) as f64;
        (0..k)
            .map(|j| {
                let mean_std: f64 = self.draws.iter().map(|d| d.coefficients[j]).sum::<f64>() / n;
                mean_std * self.standardization.y_sd / self.standardization.x_sd[j]
            })
            .collect()
    }
}

/// Gelman-Rubin statistic on the two halves of one chain.
pub fn split_rhat(chain: &[f64]) -> f64 {
    let half = chain.len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts = [&chain[..half], &chain[chain.len() - half..]];
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let within: f64 = parts
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / 2.0;
    let grand = 0.5 * (means[0] + means[1]);
    let between = n * ((means[0] - grand).powi(2) + (means[1] - grand).powi(2));
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_hat = (n - 1.0) / n * within + between / n;
    (var_hat / within).sqrt()
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
    let sd = if n > 1 { (ss / (n as f64 - 1.0)).sqrt() } else { 0.0 };
    (mean, sd, n)
}

/// Variance floor and ceiling on the standardized scale (where var(y_pre) = 1).
const VARIANCE_FLOOR: f64 = 1e-12;
const VARIANCE_CEILING: f64 = 1e6;

fn draw_variance<R: Rng + ?Sized>(
    prior: GammaPrior,
    count: usize,
    sum_sq: f64,
    name: &str,
    rng: &mut R,
) -> Result<f64> {
    let shape = prior.shape + 0.5 * count as f64;
    let rate = prior.rate + 0.5 * sum_sq;
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(format!("{name} posterior: {e}")))?;
    let variance = (1.0 / gamma.sample(rng)).max(VARIANCE_FLOOR);
    if !(variance <= VARIANCE_CEILING) {
        return Err(Error::Divergence(format!(
            "{name} variance {variance:e} exceeds 1e6 times the training variance"
        )));
    }
    Ok(variance)
}

/// Fits the model to the training observations by Gibbs sampling.
///
/// `y_pre` holds the training window (missing entries allowed); the
/// regression design, when present, must have at least `y_pre.len()` rows and
/// its first `y_pre.len()` rows are used. The chain is fully determined by
/// `config.seed`.
pub fn gibbs_fit(
    spec: &ModelSpec,
    y_pre: &[Option<f64>],
    priors: &Priors,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    spec.validate()?;
    let structure = spec.structure();
    let n = y_pre.len();
    let m = structure.state_dim();
    if n < 3 * m {
        return Err(Error::InsufficientHistory(format!(
            "{n} training observations for a {m}-dimensional state (need {})",
            3 * m
        )));
    }
    if y_pre.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training observation".into()));
    }
    let (y_mean, y_sd, n_obs) = mean_sd(y_pre.iter().flatten().copied());
    if n_obs < 2 || !(y_sd > 0.0) {
        return Err(Error::Degenerate("training series has zero variance".into()));
    }
    let y: Vec<Option<f64>> = y_pre.iter().map(|v| v.map(|x| (x - y_mean) / y_sd)).collect();
    let observed: Vec<bool> = y.iter().map(Option::is_some).collect();

    let k = structure.n_covariates;
    priors.validate(k)?;
    let mut standardization = Standardization {
        y_mean,
        y_sd,
        x_mean: Vec::new(),
        x_sd: Vec::new(),
    };
    let x_std = match &spec.regression_design {
        Some(x) => {
            if x.nrows() < n {
                return Err(Error::Dimension(format!(
                    "regression design has {} rows, training window has {n}",
                    x.nrows()
                )));
            }
            for j in 0..k {
                let (mean, sd, _) = mean_sd((0..n).map(|i| x[(i, j)]));
                standardization.x_mean.push(mean);
                standardization.x_sd.push(if sd > 0.0 { sd } else { 1.0 });
            }
            Some(standardization.standardize_design(&x.rows(0, n).into_owned()))
        }
        None => None,
    };

    let std_spec = ModelSpec {
        regression_design: x_std.clone(),
        ..spec.clone()
    };
    let mut ss = assemble(&std_spec, n)?;
    ss.set_initial_variance(priors.initial_state_variance);
    let variance_names = structure.variance_names();
    let reg_index = ss.regression.as_ref().map(|r| r.state_index);

    // Observed rows of the standardized design, for the coefficient update.
    let obs_rows: Vec<usize> = (0..n).filter(|&t| observed[t]).collect();
    let x_obs = x_std
        .as_ref()
        .map(|x| DMatrix::from_fn(obs_rows.len(), k, |i, j| x[(obs_rows[i], j)]));
    let xtx = x_obs.as_ref().map(|x| x.transpose() * x);

    let mut obs_variance = priors.obs.rate / priors.obs.shape;
    let mut state_variances: Vec<f64> = variance_names
        .iter()
        .map(|name| {
            let p = priors.for_component(name);
            p.rate / p.shape
        })
        .collect();
    let mut beta = match (&x_obs, &xtx) {
        (Some(x), Some(xtx)) => {
            let yo = DVector::from_iterator(obs_rows.len(), obs_rows.iter().map(|&t| y[t].unwrap()));
            let lhs = xtx + &priors.beta_precision;
            let rhs = x.transpose() * yo + &priors.beta_precision * &priors.beta_mean;
            lhs.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k))
        }
        _ => DVector::zeros(0),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draws = Vec::with_capacity(config.n_draws);
    let t_mat = ss.transition.clone();
    let r_tr = ss.selection.transpose();
    let z_fixed = ss.z.clone();

    for iter in 0..(config.n_burn + config.n_draws) {
        ss.set_variances(obs_variance, &state_variances)?;
        ss.set_coefficients(beta.as_slice())?;
        let track = covariance_pass(&ss, &observed)?;
        let alpha = simulate_with_track(&ss, &track, &y, &mut rng);

        let mut sum_sq = vec![0.0; variance_names.len()];
        for t in 0..n.saturating_sub(1) {
            let eta = &r_tr * (&alpha[t + 1] - &t_mat * &alpha[t]);
            for (s, e) in sum_sq.iter_mut().zip(eta.iter()) {
                *s += e * e;
            }
        }
        for (j, name) in variance_names.iter().enumerate() {
            state_variances[j] = draw_variance(priors.for_component(name), n - 1, sum_sq[j], name, &mut rng)?;
        }

        let resid_sq: f64 = obs_rows
            .iter()
            .map(|&t| (y[t].unwrap() - track.z[t].dot(&alpha[t])).powi(2))
            .sum();
        obs_variance = draw_variance(priors.obs, obs_rows.len(), resid_sq, "observation", &mut rng)?;

        if let (Some(x), Some(xtx)) = (&x_obs, &xtx) {
            let resid = DVector::from_iterator(
                obs_rows.len(),
                obs_rows.iter().map(|&t| y[t].unwrap() - z_fixed.dot(&alpha[t])),
            );
            let precision = &priors.beta_precision + xtx / obs_variance;
            let rhs = &priors.beta_precision * &priors.beta_mean + x.transpose() * resid / obs_variance;
            let chol = precision
                .cholesky()
                .ok_or_else(|| Error::Numerical("coefficient posterior precision is singular".into()))?;
            let mean = chol.solve(&rhs);
            let shocks = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let offset = chol
                .l()
                .transpose()
                .solve_upper_triangular(&shocks)
                .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
            beta = mean + offset;
        }

        if iter >= config.n_burn {
            let mut final_state: Vec<f64> = alpha[n - 1].iter().copied().collect();
            if let Some(i) = reg_index {
                final_state[i] = 1.0;
            }
            draws.push(Draw {
                obs_variance,
                state_variances: state_variances.clone(),
                coefficients: beta.iter().copied().collect(),
                final_state,
            });
        }
    }
    Ok(PosteriorDraws {
        structure,
        draws,
        n_burn: config.n_burn,
        seed: config.seed,
        spec_hash: spec.hash(),
        n_train: n,
        standardization,
    })
}
