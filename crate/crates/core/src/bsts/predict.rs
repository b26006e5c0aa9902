use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{assemble, ModelSpec, PosteriorDraws};
use crate::error::{Error, Result};

/// Counterfactual paths: one row per posterior draw, one column per
/// post-event time index. Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    n_draws: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl PathMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let horizon = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != horizon) {
            return Err(Error::Dimension("ragged path rows".into()));
        }
        Ok(PathMatrix {
            n_draws: rows.len(),
            horizon,
            values: rows.concat(),
        })
    }

    pub fn zeros(n_draws: usize, horizon: usize) -> Self {
        PathMatrix {
            n_draws,
            horizon,
            values: vec![0.0; n_draws * horizon],
        }
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn row(&self, draw: usize) -> &[f64] {
        &self.values[draw * self.horizon..(draw + 1) * self.horizon]
    }

    pub fn row_mut(&mut self, draw: usize) -> &mut [f64] {
        &mut self.values[draw * self.horizon..(draw + 1) * self.horizon]
    }

    pub fn get(&self, draw: usize, t: usize) -> f64 {
        self.values[draw * self.horizon + t]
    }

    /// Draws at one time index.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.get(d, t)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_draws).map(move |d| self.row(d))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        PathMatrix {
            n_draws: self.n_draws,
            horizon: self.horizon,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Simulates `p(y~_{n+1..m} | y_{1..n})`: each draw's final training state is
/// propagated with fresh state noise, the regression mean and fresh
/// observation noise are added, and the result is mapped back to the
/// original scale.
pub fn posterior_predictive<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    spec: &ModelSpec,
    post_design: Option<&DMatrix<f64>>,
    horizon: usize,
    rng: &mut R,
) -> Result<PathMatrix> {
    let fitted = draws.structure;
    if spec.level != fitted.level || spec.trend != fitted.trend || spec.seasonal_period != fitted.seasonal_period {
        return Err(Error::Dimension(
            "model specification does not match the fitted structure".into(),
        ));
    }
    let x_std = match (fitted.n_covariates, post_design) {
        (0, None) => None,
        (0, Some(_)) => {
            return Err(Error::Dimension(
                "post-event design given for a model without regression".into(),
            ))
        }
        (_, None) => return Err(Error::Dimension("post-event design missing".into())),
        (k, Some(x)) => {
            if x.ncols() != k {
                return Err(Error::Dimension(format!(
                    "post-event design has {} columns, model fitted {k}",
                    x.ncols()
                )));
            }
            if x.nrows() != horizon {
                return Err(Error::Dimension(format!(
                    "post-event design has {} rows for horizon {horizon}",
                    x.nrows()
                )));
            }
            Some(draws.standardization.standardize_design(x))
        }
    };
    let mut paths = PathMatrix::zeros(draws.n_draws(), horizon);
    if horizon == 0 {
        return Ok(paths);
    }
    let structural = ModelSpec {
        level: fitted.level,
        trend: fitted.trend,
        seasonal_period: fitted.seasonal_period,
        regression_design: x_std,
    };
    let mut ss = assemble(&structural, horizon)?;
    let m = ss.state_dim();
    let y_mean = draws.standardization.y_mean;
    let y_sd = draws.standardization.y_sd;

    for (d, draw) in draws.draws.iter().enumerate() {
        if draw.final_state.len() != m {
            return Err(Error::Dimension(format!(
                "draw {d} has a {}-dimensional state, model has {m}",
                draw.final_state.len()
            )));
        }
        ss.set_coefficients(&draw.coefficients)?;
        let noise_sd: Vec<f64> = draw.state_variances.iter().map(|v| v.sqrt()).collect();
        let obs_sd = draw.obs_variance.sqrt();
        let mut state = DVector::from_column_slice(&draw.final_state);
        let row = paths.row_mut(d);
        for (h, out) in row.iter_mut().enumerate() {
            let eta = DVector::from_fn(noise_sd.len(), |j, _| {
                noise_sd[j] * rng.sample::<f64, _>(StandardNormal)
            });
            state = &ss.transition * &state + &ss.selection * eta;
            let eps: f64 = rng.sample(StandardNormal);
            let y_std = ss.z_at(h).dot(&state) + obs_sd * eps;
            *out = y_mean + y_sd * y_std;
        }
    }
    Ok(paths)
}
