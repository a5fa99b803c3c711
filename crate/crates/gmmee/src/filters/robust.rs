//! Fixed-point robust measurement updates on the whitened regression
//! `D = W·x + e`, `D = B_τ⁻¹[x_pred; ỹ]`, `W = B_τ⁻¹[I; H̄]`.

use alloc::vec::Vec;

use super::cubature::{innovation, MeasurementSetup, Prediction};
use super::{FallbackReason, FilterState, StepDiagnostics};
use crate::criterion::{cost, kernel_weight_matrices, MixtureKernel, SINGULARITY_EPS};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, psd_repair, tria, Matrix, SquareRootFactor};

/// Iterates whose norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// Relative pivot floor for the weighted normal matrix.
pub const GAIN_PIVOT_TOL: f64 = 1e-14;
/// Relative slack before a drop in the cost counts as a decrease.
pub const COST_SLACK: f64 = 1e-9;
/// Smallest fraction of a fixed-point step tried while backtracking.
pub const MIN_STEP: f64 = 1.0 / 64.0;

/// Settings of the mixture error-entropy measurement update.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmmeeConfig {
    pub mixture: MixtureKernel,
    pub fp_tol: f64,
    pub fp_max_iter: u32,
    pub singularity_eps: f64,
}

impl GmmeeConfig {
    pub const DEFAULT_FP_TOL: f64 = 1e-6;
    pub const DEFAULT_FP_MAX_ITER: u32 = 20;

    pub fn new(mixture: MixtureKernel) -> Self {
        GmmeeConfig {
            mixture,
            fp_tol: Self::DEFAULT_FP_TOL,
            fp_max_iter: Self::DEFAULT_FP_MAX_ITER,
            singularity_eps: SINGULARITY_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mixture.validate()?;
        if !(self.fp_tol > 0.0) || self.fp_max_iter < 1 || !(self.singularity_eps > 0.0) {
            return Err(Error::InvalidParameter("fixed-point tolerance, cap and epsilon must be positive"));
        }
        Ok(())
    }
}

/// Settings of the correntropy measurement update.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MccConfig {
    /// Gaussian kernel bandwidth on whitened residuals.
    pub bandwidth: f64,
    pub fp_tol: f64,
    pub fp_max_iter: u32,
}

impl MccConfig {
    pub fn new(bandwidth: f64) -> Self {
        MccConfig { bandwidth, fp_tol: 1e-6, fp_max_iter: 20 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !(self.fp_tol > 0.0) || self.fp_max_iter < 1 {
            return Err(Error::InvalidParameter("MCC bandwidth, tolerance and cap must be positive"));
        }
        Ok(())
    }
}

/// Per-residual weights of the mixture criterion, scaled so the largest is 1.
///
/// Each residual is weighted by the diagonal of the Laplacian `Λ̄ − Λ`, that
/// is by `Σ_{j≠i} Λᵢⱼ`, accumulated over kernels with the constants
/// `l_c = η_c·α_c/β_c^α_c`. The off-diagonal part of the Laplacian is dropped:
/// the full pairwise form is invariant to shifting every residual and leaves
/// the prior direction unconstrained.
pub fn entropy_weights(e: &[f64], mixture: &MixtureKernel, eps: f64) -> Result<Vec<f64>> {
    let l = e.len();
    let mut log_w = alloc::vec![f64::NEG_INFINITY; l];
    for (eta_c, k) in mixture.components() {
        let log_l = libm::log(eta_c) + k.log_gradient_scale();
        let lam = kernel_weight_matrices(e, &k, eps).lam;
        for (i, lw) in log_w.iter_mut().enumerate() {
            let s: f64 = (0..l).filter(|&j| j != i).map(|j| lam[(i, j)]).sum();
            if s > 0.0 {
                *lw = log_add(*lw, libm::log(s) + log_l);
            }
        }
    }
    normalize_log_weights(log_w)
}

/// Gaussian correntropy weights `exp(−eᵢ²/(2σ²))`, scaled so the largest is 1.
pub fn mcc_weights(e: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    let s2 = 2.0 * bandwidth * bandwidth;
    normalize_log_weights(e.iter().map(|v| -v * v / s2).collect())
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

fn normalize_log_weights(log_w: Vec<f64>) -> Result<Vec<f64>> {
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NumericBreakdown);
    }
    Ok(log_w.into_iter().map(|v| libm::exp(v - top)).collect())
}

/// How the posterior factor is formed after the gain is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Posterior {
    /// `tria([(I − K·H̄)·B_p, K·B_r])`.
    SquareRoot,
    /// Joseph covariance, eigen-repaired, then Cholesky.
    Full,
}

/// Whitened regression terms that stay fixed across iterations.
struct Regression {
    d: Vec<f64>,
    w: Matrix,
    e_meas: Matrix,
    innov: Vec<f64>,
}

fn regression(pred: &Prediction, setup: &MeasurementSetup, y: &[f64]) -> Result<Regression> {
    let n = pred.x_pred.len();
    let m = setup.y_pred.len();
    let innov = innovation(y, &setup.y_pred)?;
    // ỹ = y − ŷ + H̄·x_pred
    let hx = setup.h_bar.mul_vec(&pred.x_pred);
    let mut rhs = pred.x_pred.clone();
    rhs.extend(innov.iter().zip(&hx).map(|(a, b)| a + b));
    let d = setup.b_tau.solve(&Matrix::column(&rhs)).col(0);
    let w = setup.b_tau.solve(&Matrix::identity(n).vstack(&setup.h_bar));
    let e_meas = setup.b_tau.solve(&Matrix::zeros(n, m).vstack(&Matrix::identity(m)));
    Ok(Regression { d, w, e_meas, innov })
}

fn residual(r: &Regression, x: &[f64]) -> Vec<f64> {
    let wx = r.w.mul_vec(x);
    r.d.iter().zip(wx).map(|(d, v)| d - v).collect()
}

/// `K = (Wᵀ·Ω·W)⁻¹·Wᵀ·Ω·B_τ⁻¹[0; I]` for diagonal `Ω`.
fn weighted_gain(r: &Regression, omega: &[f64]) -> Result<Matrix> {
    let (l, n) = (r.w.rows(), r.w.cols());
    let m = r.e_meas.cols();
    let mut ow = r.w.clone();
    let mut oe = r.e_meas.clone();
    for i in 0..l {
        for j in 0..n {
            ow[(i, j)] *= omega[i];
        }
        for j in 0..m {
            oe[(i, j)] *= omega[i];
        }
    }
    let wt = r.w.transpose();
    let mm = &wt * &ow;
    let nn = &wt * &oe;
    let f = strict_cholesky(&mm).ok_or(Error::NumericBreakdown)?;
    Ok(f.solve_covariance(&nn))
}

/// Cholesky without jitter; `None` when a pivot falls below
/// `GAIN_PIVOT_TOL·max diag`.
fn strict_cholesky(a: &Matrix) -> Option<SquareRootFactor> {
    let n = a.rows();
    let scale = a.diagonal().iter().cloned().fold(0.0, f64::max);
    if !(scale > 0.0) || !a.is_finite() {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > GAIN_PIVOT_TOL * scale) {
            return None;
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    SquareRootFactor::from_lower(l).ok()
}

fn offset(x: &[f64], dx: &[f64]) -> Vec<f64> {
    x.iter().zip(dx).map(|(a, b)| a + b).collect()
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Shared fixed-point loop. `weights` maps a whitened residual to `diag(Ω)`;
/// `objective` is tracked across iterates for diagnostics.
pub(crate) fn fixed_point_update(
    pred: &Prediction,
    setup: &MeasurementSetup,
    y: &[f64],
    tol: f64,
    max_iter: u32,
    posterior: Posterior,
    weights: impl Fn(&[f64]) -> Result<Vec<f64>>,
    objective: Option<&dyn Fn(&[f64]) -> f64>,
) -> core::result::Result<FilterState, FallbackReason> {
    let n = pred.x_pred.len();
    let reg = regression(pred, setup, y).map_err(|_| FallbackReason::SingularGain)?;
    let mut x = pred.x_pred.clone();
    let mut j_prev = objective.map(|f| f(&residual(&reg, &x)));
    let mut diag = StepDiagnostics::plain(reg.innov.clone());
    let mut gain: Option<Matrix> = None;
    for it in 1..=max_iter {
        let e = residual(&reg, &x);
        let omega = weights(&e).map_err(|_| FallbackReason::SingularGain)?;
        let mut k = weighted_gain(&reg, &omega).map_err(|_| FallbackReason::SingularGain)?;
        let mut x_new = offset(&pred.x_pred, &k.mul_vec(&reg.innov));
        if !x_new.iter().all(|v| v.is_finite()) || norm(&x_new) > DIVERGENCE_NORM {
            return Err(FallbackReason::Diverged);
        }
        let mut stalled = false;
        if let (Some(f), Some(jp)) = (objective, j_prev) {
            // Backtrack towards the current iterate while the cost drops.
            let floor = jp - COST_SLACK * jp.abs();
            let mut j = f(&residual(&reg, &x_new));
            let mut t = 1.0;
            while j < floor && t > MIN_STEP {
                t *= 0.5;
                k = match &gain {
                    Some(g) => g + &(&k - g).scaled(0.5),
                    None => k.scaled(0.5),
                };
                x_new = offset(&pred.x_pred, &k.mul_vec(&reg.innov));
                j = f(&residual(&reg, &x_new));
            }
            if j < floor {
                stalled = true;
                // Only a first step can be accepted below the floor.
                diag.cost_decreased = gain.is_none();
            }
            j_prev = Some(j);
        }
        diag.iterations = it;
        if stalled && gain.is_some() {
            break;
        }
        let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let rel = norm(&step) / norm(&x).max(1e-12);
        x = x_new;
        gain = Some(k);
        if rel < tol {
            break;
        }
        if it == max_iter {
            diag.cap_reached = true;
        }
    }
    let k = gain.ok_or(FallbackReason::SingularGain)?;

    let mut a = Matrix::identity(n);
    a = &a - &(&k * &setup.h_bar);
    let b_r = setup.sqrt_r_eff(n);
    let a_bp = &a * pred.sqrt_p_pred.matrix();
    let k_br = &k * &b_r;
    let sqrt_cov = match posterior {
        Posterior::SquareRoot => match tria(&a_bp.hstack(&k_br)) {
            Ok(s) => s,
            Err(_) => {
                diag.cov_repaired = true;
                joseph_factor(&a_bp, &k_br).map_err(|_| FallbackReason::SingularGain)?
            }
        },
        Posterior::Full => joseph_factor(&a_bp, &k_br).map_err(|_| FallbackReason::SingularGain)?,
    };
    Ok(FilterState { x_hat: x, sqrt_cov, diagnostics: diag })
}

fn joseph_factor(a_bp: &Matrix, k_br: &Matrix) -> Result<SquareRootFactor> {
    let p = &a_bp.gram() + &k_br.gram();
    cholesky_lower(&psd_repair(&p)?)
}

/// Mixture error-entropy fixed-point measurement update.
///
/// Returns [`Error::NumericBreakdown`] when the weighted normal matrix is
/// singular or the iterate diverges; [`super::Filter`] then falls back to the
/// plain square-root cubature update.
pub fn gmmee_fixed_point_update(
    pred: &Prediction,
    setup: &MeasurementSetup,
    y: &[f64],
    cfg: &GmmeeConfig,
) -> Result<FilterState> {
    let mk = cfg.mixture;
    let eps = cfg.singularity_eps;
    let objective = move |e: &[f64]| cost(e, &mk).unwrap_or(0.0);
    fixed_point_update(
        pred,
        setup,
        y,
        cfg.fp_tol,
        cfg.fp_max_iter,
        Posterior::SquareRoot,
        |e| entropy_weights(e, &mk, eps),
        Some(&objective),
    )
    .map_err(|_| Error::NumericBreakdown)
}

/// Correntropy fixed-point measurement update on full covariances.
pub fn mcc_update(pred: &Prediction, setup: &MeasurementSetup, y: &[f64], cfg: &MccConfig) -> Result<FilterState> {
    let bw = cfg.bandwidth;
    fixed_point_update(pred, setup, y, cfg.fp_tol, cfg.fp_max_iter, Posterior::Full, |e| mcc_weights(e, bw), None)
        .map_err(|_| Error::NumericBreakdown)
}
