use alloc::vec::Vec;

use super::model::StateSpaceModel;
use super::{FilterState, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, psd_repair, tria, Matrix, SquareRootFactor};

/// Third-degree spherical-radial cubature rule: `ξᵢ = ±√n·eᵢ`, weights `1/(2n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubaturePointSet {
    /// n×2n generator matrix; column `i + n` is the negation of column `i`.
    pub points: Matrix,
}

impl CubaturePointSet {
    pub fn new(n: usize) -> Self {
        let r = libm::sqrt(n as f64);
        let mut points = Matrix::zeros(n, 2 * n);
        for i in 0..n {
            points[(i, i)] = r;
            points[(i, i + n)] = -r;
        }
        CubaturePointSet { points }
    }

    pub fn dim(&self) -> usize {
        self.points.rows()
    }

    pub fn count(&self) -> usize {
        self.points.cols()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.count() as f64
    }

    /// Points `S·ξᵢ + x` as the columns of an n×2n matrix.
    pub fn spread(&self, x: &[f64], s: &SquareRootFactor) -> Matrix {
        let mut pts = s.matrix() * &self.points;
        for i in 0..pts.rows() {
            for j in 0..pts.cols() {
                pts[(i, j)] += x[i];
            }
        }
        pts
    }
}

/// Column mean and the centered columns scaled by `1/√count`.
fn mean_and_deviations(cols: &Matrix) -> (Vec<f64>, Matrix) {
    let (r, c) = (cols.rows(), cols.cols());
    let w = 1.0 / c as f64;
    let mean: Vec<f64> = (0..r).map(|i| cols.row(i).iter().sum::<f64>() * w).collect();
    let s = libm::sqrt(w);
    let mut dev = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            dev[(i, j)] = (cols[(i, j)] - mean[i]) * s;
        }
    }
    (mean, dev)
}

fn map_columns(pts: &Matrix, rows: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Matrix {
    let mut out = Matrix::zeros(rows, pts.cols());
    for j in 0..pts.cols() {
        out.set_col(j, &f(&pts.col(j)));
    }
    out
}

/// Result of the cubature time update.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub x_pred: Vec<f64>,
    pub sqrt_p_pred: SquareRootFactor,
    /// Centered propagated points scaled by `1/√(2n)`.
    pub chi_star: Matrix,
}

/// Square-root time update: `S_pred = tria([χ*, B_Q])`.
pub fn srckf_predict<M: StateSpaceModel + ?Sized>(
    prev: &FilterState,
    input: f64,
    dt: f64,
    model: &M,
    bq: &SquareRootFactor,
) -> Result<Prediction> {
    let n = model.state_dim();
    let cps = CubaturePointSet::new(n);
    let pts = cps.spread(&prev.x_hat, &prev.sqrt_cov);
    let prop = map_columns(&pts, n, |x| model.transition(x, input, dt));
    let (x_pred, chi_star) = mean_and_deviations(&prop);
    let sqrt_p_pred = tria(&chi_star.hstack(bq.matrix()))?;
    Ok(Prediction { x_pred, sqrt_p_pred, chi_star })
}

/// Full-covariance time update `P = χ*χ*ᵀ + Q`, repaired and refactored.
pub fn ckf_predict<M: StateSpaceModel + ?Sized>(prev: &FilterState, input: f64, dt: f64, model: &M) -> Result<Prediction> {
    let n = model.state_dim();
    let cps = CubaturePointSet::new(n);
    let pts = cps.spread(&prev.x_hat, &prev.sqrt_cov);
    let prop = map_columns(&pts, n, |x| model.transition(x, input, dt));
    let (x_pred, chi_star) = mean_and_deviations(&prop);
    let p = psd_repair(&(&chi_star.gram() + model.q_cov()))?;
    Ok(Prediction { x_pred, sqrt_p_pred: cholesky_lower(&p)?, chi_star })
}

/// Quantities shared by every cubature measurement update.
#[derive(Clone, Debug)]
pub struct MeasurementSetup {
    pub y_pred: Vec<f64>,
    /// m×n statistical linearization `P_xyᵀ·P_pred⁻¹`.
    pub h_bar: Matrix,
    /// `blockdiag(B_p, B_r)` with `B_r` the factor of [`Self::r_eff`].
    pub b_tau: SquareRootFactor,
    /// `R + ζζᵀ − H̄·P_pred·H̄ᵀ`: nominal noise plus linearization residual.
    pub r_eff: Matrix,
    /// Centered fresh points scaled by `1/√(2n)` (n×2n).
    pub chi: Matrix,
    /// Centered predicted measurements scaled by `1/√(2n)` (m×2n).
    pub zeta: Matrix,
    pub p_xy: Matrix,
}

impl MeasurementSetup {
    pub fn sqrt_r_eff(&self, n: usize) -> Matrix {
        let m = self.y_pred.len();
        self.b_tau.matrix().block(n, n, m, m)
    }
}

/// Fresh cubature points around the prediction, predicted measurement,
/// pseudo-measurement matrix and the block factor `B_τ`.
pub fn srckf_measurement_setup<M: StateSpaceModel + ?Sized>(pred: &Prediction, input: f64, model: &M) -> Result<MeasurementSetup> {
    let n = model.state_dim();
    let m = model.meas_dim();
    let cps = CubaturePointSet::new(n);
    let pts = cps.spread(&pred.x_pred, &pred.sqrt_p_pred);
    let (_, chi) = mean_and_deviations(&pts);
    let ys = map_columns(&pts, m, |x| model.observation(x, input));
    let (y_pred, zeta) = mean_and_deviations(&ys);
    let p_xy = &chi * &zeta.transpose();

    let g = pred.sqrt_p_pred.solve(&p_xy);
    let h_bar = pred.sqrt_p_pred.solve_transposed(&g).transpose();
    let r_eff = (&(model.r_cov() + &zeta.gram()) - &(&g.transpose() * &g)).symmetrized();
    let b_r = cholesky_lower(&r_eff)?;
    let b_tau = SquareRootFactor::from_lower(pred.sqrt_p_pred.matrix().block_diag(b_r.matrix()))?;
    Ok(MeasurementSetup { y_pred, h_bar, b_tau, r_eff, chi, zeta, p_xy })
}

pub(crate) fn innovation(y: &[f64], y_pred: &[f64]) -> Result<Vec<f64>> {
    if y.len() != y_pred.len() {
        return Err(Error::DimensionMismatch);
    }
    Ok(y.iter().zip(y_pred).map(|(a, b)| a - b).collect())
}

fn apply_gain(x_pred: &[f64], k: &Matrix, innov: &[f64]) -> Vec<f64> {
    let dx = k.mul_vec(innov);
    x_pred.iter().zip(dx).map(|(x, d)| x + d).collect()
}

/// Square-root cubature measurement update with the nominal `R`.
pub fn srckf_update(pred: &Prediction, setup: &MeasurementSetup, y: &[f64], br: &SquareRootFactor) -> Result<FilterState> {
    let innov = innovation(y, &setup.y_pred)?;
    let s_yy = tria(&setup.zeta.hstack(br.matrix()))?;
    // K = P_xy·S_yy⁻ᵀ·S_yy⁻¹
    let k = s_yy.solve_transposed(&s_yy.solve(&setup.p_xy.transpose())).transpose();
    let x_hat = apply_gain(&pred.x_pred, &k, &innov);
    let resid = &setup.chi - &(&k * &setup.zeta);
    let sqrt_cov = tria(&resid.hstack(&(&k * br.matrix())))?;
    Ok(FilterState { x_hat, sqrt_cov, diagnostics: StepDiagnostics::plain(innov) })
}

/// Full-covariance cubature measurement update.
pub fn ckf_update(pred: &Prediction, setup: &MeasurementSetup, y: &[f64], r: &Matrix) -> Result<FilterState> {
    let innov = innovation(y, &setup.y_pred)?;
    let p_yy = &setup.zeta.gram() + r;
    let s_yy = cholesky_lower(&p_yy)?;
    let k = s_yy.solve_covariance(&setup.p_xy.transpose()).transpose();
    let x_hat = apply_gain(&pred.x_pred, &k, &innov);
    let p = &pred.sqrt_p_pred.covariance() - &(&(&k * &p_yy) * &k.transpose());
    let sqrt_cov = cholesky_lower(&psd_repair(&p)?)?;
    Ok(FilterState { x_hat, sqrt_cov, diagnostics: StepDiagnostics::plain(innov) })
}
