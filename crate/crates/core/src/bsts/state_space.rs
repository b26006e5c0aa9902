use nalgebra::{DMatrix, DVector};

use super::ModelSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Level,
    Slope,
    Seasonal,
    Regression,
}

/// Regression loading: the state at `state_index` is pinned at 1 and its
/// observation coefficient at time `t` is `design.row(t) * coefficients`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTerm {
    pub state_index: usize,
    pub design: DMatrix<f64>,
    pub coefficients: DVector<f64>,
}

/// Univariate linear Gaussian state-space model
///
/// ```text
/// y_t       = Z_t' a_t + e_t,      e_t ~ N(0, obs_variance)
/// a_{t+1}   = T a_t + R n_t,       n_t ~ N(0, diag(state_variances))
/// a_1       ~ N(initial_mean, initial_cov)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    /// Time-invariant part of `Z_t`; zero at the regression state.
    pub z: DVector<f64>,
    pub transition: DMatrix<f64>,
    pub selection: DMatrix<f64>,
    pub state_variances: Vec<f64>,
    pub obs_variance: f64,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    pub regression: Option<RegressionTerm>,
    /// Component owning each state coordinate.
    pub layout: Vec<Component>,
    /// Series length fixed by the regression design, if any.
    pub n_time: Option<usize>,
}

impl StateSpace {
    pub fn state_dim(&self) -> usize {
        self.z.len()
    }

    pub fn n_disturbances(&self) -> usize {
        self.selection.ncols()
    }

    /// `Z_t` at zero-based time `t`.
    pub fn z_at(&self, t: usize) -> DVector<f64> {
        let mut z = self.z.clone();
        if let Some(reg) = &self.regression {
            z[reg.state_index] = self.regression_offset(t);
        }
        z
    }

    pub fn regression_offset(&self, t: usize) -> f64 {
        match &self.regression {
            Some(reg) => reg.design.row(t).dot(&reg.coefficients.transpose()),
            None => 0.0,
        }
    }

    /// `R diag(Q) R'`.
    pub fn state_noise_cov(&self) -> DMatrix<f64> {
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&self.state_variances));
        &self.selection * q * self.selection.transpose()
    }

    pub fn set_variances(&mut self, obs_variance: f64, state_variances: &[f64]) -> Result<()> {
        if state_variances.len() != self.n_disturbances() {
            return Err(Error::Dimension(format!(
                "{} state variances for {} disturbances",
                state_variances.len(),
                self.n_disturbances()
            )));
        }
        self.obs_variance = obs_variance;
        self.state_variances = state_variances.to_vec();
        Ok(())
    }

    pub fn set_coefficients(&mut self, beta: &[f64]) -> Result<()> {
        match &mut self.regression {
            Some(reg) if reg.coefficients.len() == beta.len() => {
                reg.coefficients = DVector::from_column_slice(beta);
                Ok(())
            }
            Some(reg) => Err(Error::Dimension(format!(
                "{} coefficients for {} covariates",
                beta.len(),
                reg.coefficients.len()
            ))),
            None if beta.is_empty() => Ok(()),
            None => Err(Error::Dimension("model has no regression".into())),
        }
    }

    /// Sets a diagonal initial covariance on every free state; the pinned
    /// regression state keeps mean 1 and variance 0.
    pub fn set_initial_variance(&mut self, variance: f64) {
        let m = self.state_dim();
        self.initial_cov = DMatrix::zeros(m, m);
        for (i, c) in self.layout.iter().enumerate() {
            if *c != Component::Regression {
                self.initial_cov[(i, i)] = variance;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.state_dim();
        if self.transition.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "transition is {:?}, state dimension {m}",
                self.transition.shape()
            )));
        }
        if self.selection.nrows() != m || self.selection.ncols() != self.state_variances.len() {
            return Err(Error::Dimension("selection does not match Q".into()));
        }
        if self.initial_mean.len() != m || self.initial_cov.shape() != (m, m) {
            return Err(Error::Dimension("initial state does not match state dimension".into()));
        }
        if self.state_variances.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::Numerical("state variances must be non-negative".into()));
        }
        if !(self.obs_variance > 0.0) {
            return Err(Error::Numerical("observation variance must be positive".into()));
        }
        Ok(())
    }
}

/// Compiles a model specification into state-space form. Variances are set
/// to 1 and the initial state to N(0, I) (regression state pinned at 1);
/// callers overwrite them before filtering.
pub fn assemble(spec: &ModelSpec, n_time: usize) -> Result<StateSpace> {
    spec.validate()?;
    if let Some(x) = &spec.regression_design {
        if x.nrows() != n_time {
            return Err(Error::Dimension(format!(
                "regression design has {} rows, series has {n_time}",
                x.nrows()
            )));
        }
    }
    let structure = spec.structure();
    let m = structure.state_dim();
    let n_noise = structure.variance_names().len();

    let mut z = DVector::zeros(m);
    let mut t = DMatrix::zeros(m, m);
    let mut r = DMatrix::zeros(m, n_noise);
    let mut layout = Vec::with_capacity(m);
    let mut idx = 0;
    let mut noise = 0;

    if spec.level {
        z[idx] = 1.0;
        t[(idx, idx)] = 1.0;
        r[(idx, noise)] = 1.0;
        layout.push(Component::Level);
        noise += 1;
        if spec.trend {
            t[(idx, idx + 1)] = 1.0;
            t[(idx + 1, idx + 1)] = 1.0;
            r[(idx + 1, noise)] = 1.0;
            layout.push(Component::Slope);
            noise += 1;
            idx += 1;
        }
        idx += 1;
    }
    if let Some(s) = spec.seasonal_period {
        let k = s - 1;
        z[idx] = 1.0;
        for j in 0..k {
            t[(idx, idx + j)] = -1.0;
        }
        for j in 1..k {
            t[(idx + j, idx + j - 1)] = 1.0;
        }
        r[(idx, noise)] = 1.0;
        layout.extend(std::iter::repeat_n(Component::Seasonal, k));
        idx += k;
    }
    let regression = spec.regression_design.as_ref().map(|x| {
        t[(idx, idx)] = 1.0;
        layout.push(Component::Regression);
        RegressionTerm {
            state_index: idx,
            design: x.clone(),
            coefficients: DVector::zeros(x.ncols()),
        }
    });

    let mut initial_mean = DVector::zeros(m);
    if let Some(reg) = &regression {
        initial_mean[reg.state_index] = 1.0;
    }
    let mut ss = StateSpace {
        z,
        transition: t,
        selection: r,
        state_variances: vec![1.0; n_noise],
        obs_variance: 1.0,
        initial_mean,
        initial_cov: DMatrix::zeros(m, m),
        regression,
        layout,
        n_time: spec.regression_design.as_ref().map(|x| x.nrows()),
    };
    ss.set_initial_variance(1.0);
    Ok(ss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_only_is_scalar_random_walk() {
        let ss = assemble(&ModelSpec::local_level(), 10).unwrap();
        assert_eq!(ss.state_dim(), 1);
        assert_eq!(ss.transition, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(ss.z, DVector::from_element(1, 1.0));
        assert_eq!(ss.selection, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn weekly_seasonal_block_matches_hand_built_matrix() {
        let ss = assemble(&ModelSpec::local_level().with_seasonal(7), 10).unwrap();
        assert_eq!(ss.state_dim(), 7);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(7, 7, &[
            1.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.0,
            0.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0,
            0.0,  1.0,  0.0,  0.0,  0.0,  0.0,  0.0,
            0.0,  0.0,  1.0,  0.0,  0.0,  0.0,  0.0,
            0.0,  0.0,  0.0,  1.0,  0.0,  0.0,  0.0,
            0.0,  0.0,  0.0,  0.0,  1.0,  0.0,  0.0,
            0.0,  0.0,  0.0,  0.0,  0.0,  1.0,  0.0,
        ]);
        assert_eq!(ss.transition, expected);
        assert_eq!(ss.z.as_slice(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(ss.selection.ncols(), 2);
        assert_eq!(ss.selection[(0, 0)], 1.0);
        assert_eq!(ss.selection[(1, 1)], 1.0);
    }

    #[test]
    fn full_default_model_has_nine_states() {
        let x = DMatrix::from_fn(20, 3, |i, j| (i * 3 + j) as f64);
        let spec = ModelSpec::local_level()
            .with_trend()
            .with_seasonal(7)
            .with_regression(x);
        let mut ss = assemble(&spec, 20).unwrap();
        assert_eq!(ss.state_dim(), 9);
        let mut t = DMatrix::zeros(9, 9);
        t[(0, 0)] = 1.0;
        t[(0, 1)] = 1.0;
        t[(1, 1)] = 1.0;
        for j in 0..6 {
            t[(2, 2 + j)] = -1.0;
        }
        for j in 1..6 {
            t[(2 + j, 2 + j - 1)] = 1.0;
        }
        t[(8, 8)] = 1.0;
        assert_eq!(ss.transition, t);
        assert_eq!(ss.initial_mean[8], 1.0);
        assert_eq!(ss.initial_cov[(8, 8)], 0.0);
        assert_eq!(ss.selection.ncols(), 3);
        assert!(ss.selection.row(8).iter().all(|&v| v == 0.0));
        ss.set_coefficients(&[1.0, 0.5, -1.0]).unwrap();
        // row 4 is (12, 13, 14)
        assert_eq!(ss.z_at(4)[8], 12.0 + 6.5 - 14.0);
    }

    #[test]
    fn design_length_mismatch_is_rejected() {
        let spec = ModelSpec::local_level().with_regression(DMatrix::zeros(5, 1));
        assert!(matches!(assemble(&spec, 6), Err(Error::Dimension(_))));
    }

    #[test]
    fn trend_without_level_is_rejected() {
        let spec = ModelSpec {
            level: false,
            trend: true,
            seasonal_period: None,
            regression_design: None,
        };
        assert!(assemble(&spec, 5).is_err());
    }

    #[test]
    fn seasonal_block_has_exact_period() {
        for s in 2..=12 {
            let spec = ModelSpec {
                level: false,
                trend: false,
                seasonal_period: Some(s),
                regression_design: None,
            };
            let ss = assemble(&spec, 1).unwrap();
            let mut p = DMatrix::identity(s - 1, s - 1);
            for _ in 0..s {
                p = &ss.transition * p;
            }
            assert_eq!(p, DMatrix::identity(s - 1, s - 1), "period {s}");
        }
    }
}
