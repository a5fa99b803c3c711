//! Square-root cubature filtering with robust error-entropy measurement
//! updates, plus the UKF, CKF, SRCKF and MCC-CKF baselines.

use alloc::vec::Vec;

use crate::criterion::MixtureKernel;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, Matrix, SquareRootFactor};

mod cubature;
mod model;
mod robust;
mod ukf;

pub use cubature::{
    ckf_predict, ckf_update, srckf_measurement_setup, srckf_predict, srckf_update, CubaturePointSet, MeasurementSetup,
    Prediction,
};
pub use model::{BatteryModel, LinearModel, StateSpaceModel};
pub use robust::{
    entropy_weights, gmmee_fixed_point_update, mcc_update, mcc_weights, GmmeeConfig, MccConfig, COST_SLACK,
    DIVERGENCE_NORM, GAIN_PIVOT_TOL,
};
pub use ukf::{ukf_step, UkfParams};

use robust::{fixed_point_update, Posterior};

/// Why a robust step was replaced by the plain square-root cubature update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FallbackReason {
    SingularGain,
    Diverged,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    /// `y − ŷ` of the step.
    pub innovation: Vec<f64>,
    /// Fixed-point iterations performed; zero for non-iterative updates.
    pub iterations: u32,
    pub cap_reached: bool,
    pub fallback: Option<FallbackReason>,
    /// Posterior factor needed an eigenvalue repair.
    pub cov_repaired: bool,
    /// The tracked cost fell between two successive iterates.
    pub cost_decreased: bool,
}

impl StepDiagnostics {
    pub(crate) fn plain(innovation: Vec<f64>) -> Self {
        StepDiagnostics { innovation, ..Default::default() }
    }
}

/// Posterior mean, square-root covariance and per-step diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub x_hat: Vec<f64>,
    pub sqrt_cov: SquareRootFactor,
    pub diagnostics: StepDiagnostics,
}

impl FilterState {
    pub fn new(x0: &[f64], p0: &Matrix) -> Result<Self> {
        if p0.rows() != x0.len() {
            return Err(Error::DimensionMismatch);
        }
        if !x0.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FilterState { x_hat: x0.to_vec(), sqrt_cov: cholesky_lower(p0)?, diagnostics: StepDiagnostics::default() })
    }

    pub fn covariance(&self) -> Matrix {
        self.sqrt_cov.covariance()
    }
}

/// Which filter runs and with what parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FilterVariant {
    Ukf(UkfParams),
    Ckf,
    Srckf,
    MccCkf(MccConfig),
    /// Error-entropy square-root cubature filter. Single-kernel mixtures
    /// give GMEE (or MEE for α = 2); two Gaussian kernels give MMEE.
    Entropy(GmmeeConfig),
}

impl FilterVariant {
    pub fn name(&self) -> &'static str {
        match self {
            FilterVariant::Ukf(_) => "UKF",
            FilterVariant::Ckf => "CKF",
            FilterVariant::Srckf => "SRCKF",
            FilterVariant::MccCkf(_) => "MCC-CKF",
            FilterVariant::Entropy(c) => entropy_label(&c.mixture),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            FilterVariant::Ukf(p) => p.validate(n),
            FilterVariant::MccCkf(c) => c.validate(),
            FilterVariant::Entropy(c) => c.validate(),
            FilterVariant::Ckf | FilterVariant::Srckf => Ok(()),
        }
    }
}

fn entropy_label(mk: &MixtureKernel) -> &'static str {
    let single = mk.eta == 0.0 || mk.eta == 1.0 || mk.k1 == mk.k2;
    let active: Vec<_> = mk.components().map(|(_, k)| k).collect();
    let gaussian = active.iter().all(|k| k.alpha == 2.0);
    match (single, gaussian) {
        (true, true) => "MEE",
        (true, false) => "GMEE",
        (false, true) => "MMEE",
        (false, false) => "GMMEE",
    }
}

/// A model bound to a filter variant, with the noise factors cached.
#[derive(Clone, Debug)]
pub struct Filter<M> {
    model: M,
    variant: FilterVariant,
    bq: SquareRootFactor,
    br: SquareRootFactor,
}

impl<M: StateSpaceModel> Filter<M> {
    pub fn new(model: M, variant: FilterVariant) -> Result<Self> {
        variant.validate(model.state_dim())?;
        let bq = cholesky_lower(model.q_cov())?;
        let br = cholesky_lower(model.r_cov())?;
        Ok(Filter { model, variant, bq, br })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn variant(&self) -> &FilterVariant {
        &self.variant
    }

    /// One predict + update cycle.
    ///
    /// A robust entropy update that breaks down is replaced by the plain
    /// square-root cubature update for this step, flagged in the diagnostics.
    pub fn step(&self, state: &FilterState, input: f64, y: &[f64], dt: f64) -> Result<FilterState> {
        let m = &self.model;
        if y.len() != m.meas_dim() || state.x_hat.len() != m.state_dim() {
            return Err(Error::DimensionMismatch);
        }
        match &self.variant {
            FilterVariant::Ukf(p) => ukf_step(state, input, y, dt, m, p),
            FilterVariant::Ckf => {
                let pred = ckf_predict(state, input, dt, m)?;
                let setup = srckf_measurement_setup(&pred, input, m)?;
                ckf_update(&pred, &setup, y, m.r_cov())
            }
            FilterVariant::Srckf => {
                let pred = srckf_predict(state, input, dt, m, &self.bq)?;
                let setup = srckf_measurement_setup(&pred, input, m)?;
                srckf_update(&pred, &setup, y, &self.br)
            }
            FilterVariant::MccCkf(c) => {
                let pred = ckf_predict(state, input, dt, m)?;
                let setup = srckf_measurement_setup(&pred, input, m)?;
                let bw = c.bandwidth;
                fixed_point_update(&pred, &setup, y, c.fp_tol, c.fp_max_iter, Posterior::Full, |e| mcc_weights(e, bw), None)
                    .or_else(|reason| {
                        let mut s = ckf_update(&pred, &setup, y, m.r_cov())?;
                        s.diagnostics.fallback = Some(reason);
                        Ok(s)
                    })
            }
            FilterVariant::Entropy(c) => {
                let pred = srckf_predict(state, input, dt, m, &self.bq)?;
                let setup = srckf_measurement_setup(&pred, input, m)?;
                let mk = c.mixture;
                let eps = c.singularity_eps;
                let objective = move |e: &[f64]| crate::criterion::cost(e, &mk).unwrap_or(0.0);
                fixed_point_update(
                    &pred,
                    &setup,
                    y,
                    c.fp_tol,
                    c.fp_max_iter,
                    Posterior::SquareRoot,
                    |e| entropy_weights(e, &mk, eps),
                    Some(&objective),
                )
                .or_else(|reason| {
                    let mut s = srckf_update(&pred, &setup, y, &self.br)?;
                    s.diagnostics.fallback = Some(reason);
                    Ok(s)
                })
            }
        }
    }
}

/// Free-function form of [`Filter::step`].
pub fn filter_step<M: StateSpaceModel>(
    state: &FilterState,
    input: f64,
    measurement: &[f64],
    dt: f64,
    filter: &Filter<M>,
) -> Result<FilterState> {
    filter.step(state, input, measurement, dt)
}
