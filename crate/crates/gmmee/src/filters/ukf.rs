use alloc::vec::Vec;

use super::model::StateSpaceModel;
use super::{FilterState, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, psd_repair, Matrix, SquareRootFactor};

/// Scaled unscented transform parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UkfParams {
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams { kappa: 0.0, alpha: 1e-3, beta: 2.0 }
    }
}

impl UkfParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha > 0.0) || !(n as f64 + self.kappa > 0.0) {
            return Err(Error::InvalidParameter("UKF needs alpha > 0 and n + kappa > 0"));
        }
        Ok(())
    }
}

struct SigmaSet {
    points: Matrix,
    wm: Vec<f64>,
    wc: Vec<f64>,
}

fn sigma_points(x: &[f64], s: &SquareRootFactor, p: &UkfParams) -> SigmaSet {
    let n = x.len();
    let nf = n as f64;
    let lambda = p.alpha * p.alpha * (nf + p.kappa) - nf;
    let gamma = libm::sqrt(nf + lambda);
    let mut points = Matrix::zeros(n, 2 * n + 1);
    for i in 0..n {
        points[(i, 0)] = x[i];
        for j in 0..n {
            let d = gamma * s.matrix()[(i, j)];
            points[(i, 1 + j)] = x[i] + d;
            points[(i, 1 + n + j)] = x[i] - d;
        }
    }
    let w = 1.0 / (2.0 * (nf + lambda));
    let mut wm = alloc::vec![w; 2 * n + 1];
    let mut wc = wm.clone();
    wm[0] = lambda / (nf + lambda);
    wc[0] = wm[0] + (1.0 - p.alpha * p.alpha + p.beta);
    SigmaSet { points, wm, wc }
}

fn weighted_mean(cols: &Matrix, wm: &[f64]) -> Vec<f64> {
    (0..cols.rows()).map(|i| cols.row(i).iter().zip(wm).map(|(a, w)| a * w).sum()).collect()
}

fn weighted_cross(a: &Matrix, am: &[f64], b: &Matrix, bm: &[f64], wc: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for k in 0..wc.len() {
        for i in 0..a.rows() {
            let da = a[(i, k)] - am[i];
            for j in 0..b.rows() {
                out[(i, j)] += wc[k] * da * (b[(j, k)] - bm[j]);
            }
        }
    }
    out
}

fn map_columns(pts: &Matrix, rows: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Matrix {
    let mut out = Matrix::zeros(rows, pts.cols());
    for j in 0..pts.cols() {
        out.set_col(j, &f(&pts.col(j)));
    }
    out
}

/// One unscented Kalman filter step (predict then update).
pub fn ukf_step<M: StateSpaceModel + ?Sized>(
    state: &FilterState,
    input: f64,
    y: &[f64],
    dt: f64,
    model: &M,
    params: &UkfParams,
) -> Result<FilterState> {
    let n = model.state_dim();
    let m = model.meas_dim();
    if y.len() != m {
        return Err(Error::DimensionMismatch);
    }
    let sp = sigma_points(&state.x_hat, &state.sqrt_cov, params);
    let prop = map_columns(&sp.points, n, |x| model.transition(x, input, dt));
    let x_pred = weighted_mean(&prop, &sp.wm);
    let p_pred = psd_repair(&(&weighted_cross(&prop, &x_pred, &prop, &x_pred, &sp.wc) + model.q_cov()))?;
    let s_pred = cholesky_lower(&p_pred)?;

    let sp = sigma_points(&x_pred, &s_pred, params);
    let ys = map_columns(&sp.points, m, |x| model.observation(x, input));
    let y_pred = weighted_mean(&ys, &sp.wm);
    let p_yy = &weighted_cross(&ys, &y_pred, &ys, &y_pred, &sp.wc) + model.r_cov();
    let p_xy = weighted_cross(&sp.points, &x_pred, &ys, &y_pred, &sp.wc);
    let s_yy = cholesky_lower(&p_yy)?;
    let k = s_yy.solve_covariance(&p_xy.transpose()).transpose();
    let innov: Vec<f64> = y.iter().zip(&y_pred).map(|(a, b)| a - b).collect();
    let dx = k.mul_vec(&innov);
    let x_hat = x_pred.iter().zip(dx).map(|(a, b)| a + b).collect();
    let p = &p_pred - &(&(&k * &p_yy) * &k.transpose());
    let sqrt_cov = cholesky_lower(&psd_repair(&p)?)?;
    Ok(FilterState { x_hat, sqrt_cov, diagnostics: StepDiagnostics::plain(innov) })
}
