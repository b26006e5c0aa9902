//! Bayesian structural time-series engine.
//!
//! A [`ModelSpec`] lists the components (local level, local linear trend,
//! sum-to-zero seasonal block, static regression). [`assemble`] compiles it
//! into a linear Gaussian [`StateSpace`]; [`kalman_filter`] and
//! [`simulation_smoother`] run on that representation; [`gibbs_fit`]
//! alternates state draws with conjugate variance and coefficient updates;
//! [`posterior_predictive`] simulates counterfactual paths past the training
//! window.
//!
//! The regression enters as a state pinned at 1 whose observation loading at
//! time `t` is `beta' x_t`, so coefficients stay static over time.

mod draws_io;
mod gibbs;
mod kalman;
mod predict;
mod simulate;
mod state_space;

pub use draws_io::{read_draws, write_draws};
pub use gibbs::{gibbs_fit, split_rhat, Draw, GammaPrior, McmcConfig, PosteriorDraws, Priors, Standardization};
pub use kalman::{kalman_filter, kalman_smoother, FilterOutput, SmootherOutput};
pub use predict::{posterior_predictive, PathMatrix};
pub use simulate::simulation_smoother;
pub use state_space::{assemble, Component, StateSpace};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Structural part of a model: which components are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub level: bool,
    pub trend: bool,
    pub seasonal_period: Option<usize>,
    pub n_covariates: usize,
}

impl ModelStructure {
    pub fn state_dim(&self) -> usize {
        let mut dim = 0;
        if self.level {
            dim += 1;
        }
        if self.trend {
            dim += 1;
        }
        if let Some(s) = self.seasonal_period {
            dim += s - 1;
        }
        if self.n_covariates > 0 {
            dim += 1;
        }
        dim
    }

    /// Names of the state-disturbance variances, in the order of `Q`'s diagonal.
    pub fn variance_names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.level {
            names.push("level");
        }
        if self.trend {
            names.push("slope");
        }
        if self.seasonal_period.is_some() {
            names.push("seasonal");
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub level: bool,
    pub trend: bool,
    pub seasonal_period: Option<usize>,
    /// One row per time index 1..m, one column per covariate.
    pub regression_design: Option<DMatrix<f64>>,
}

impl ModelSpec {
    pub fn local_level() -> Self {
        ModelSpec {
            level: true,
            trend: false,
            seasonal_period: None,
            regression_design: None,
        }
    }

    pub fn with_trend(mut self) -> Self {
        self.trend = true;
        self
    }

    pub fn with_seasonal(mut self, period: usize) -> Self {
        self.seasonal_period = Some(period);
        self
    }

    pub fn with_regression(mut self, design: DMatrix<f64>) -> Self {
        self.regression_design = Some(design);
        self
    }

    pub fn structure(&self) -> ModelStructure {
        ModelStructure {
            level: self.level,
            trend: self.trend,
            seasonal_period: self.seasonal_period,
            n_covariates: self.regression_design.as_ref().map_or(0, |x| x.ncols()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trend && !self.level {
            return Err(Error::Config("a trend component requires a level".into()));
        }
        if let Some(s) = self.seasonal_period {
            if s < 2 {
                return Err(Error::Config(format!("seasonal period {s} must be at least 2")));
            }
        }
        if let Some(x) = &self.regression_design {
            if x.ncols() == 0 {
                return Err(Error::Config("regression design has no columns".into()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("regression design has non-finite entries".into()));
            }
        }
        if self.structure().state_dim() == 0 {
            return Err(Error::Config("model has no components".into()));
        }
        Ok(())
    }

    /// Short content hash over the structure and the design values.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let s = self.structure();
        h.update(format!(
            "level={};trend={};seasonal={:?};covariates={}",
            s.level, s.trend, s.seasonal_period, s.n_covariates
        ));
        if let Some(x) = &self.regression_design {
            h.update((x.nrows() as u64).to_le_bytes());
            for v in x.iter() {
                h.update(v.to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
