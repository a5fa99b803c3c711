//! Generalized Gaussian kernels, their two-component mixture and the
//! second-order information potential built on them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{ln_gamma, Matrix};

/// Default clamp for `|eⱼ − eᵢ|` in the `|·|^(α−2)` factor.
pub const SINGULARITY_EPS: f64 = 1e-8;
/// Log-densities below this are flushed to zero.
pub const LOG_FLUSH: f64 = -700.0;

/// Generalized Gaussian density with shape `alpha` and bandwidth `beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GgdKernel {
    pub alpha: f64,
    pub beta: f64,
}

impl GgdKernel {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let k = GgdKernel { alpha, beta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter("kernel alpha must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter("kernel beta must be positive"));
        }
        Ok(())
    }

    /// `ln(α / (2β·Γ(1/α)))`.
    pub fn log_norm(&self) -> f64 {
        let lg = ln_gamma(1.0 / self.alpha).unwrap_or(f64::NAN);
        libm::log(self.alpha) - core::f64::consts::LN_2 - libm::log(self.beta) - lg
    }

    #[inline]
    fn log_density_with(&self, log_norm: f64, e: f64) -> f64 {
        log_norm - libm::pow(libm::fabs(e / self.beta), self.alpha)
    }

    /// `ln(α/β^α)`, the log of the leading constant of the kernel's gradient.
    pub fn log_gradient_scale(&self) -> f64 {
        libm::log(self.alpha) - self.alpha * libm::log(self.beta)
    }
}

#[inline]
fn flush_exp(x: f64) -> f64 {
    if x < LOG_FLUSH {
        0.0
    } else {
        libm::exp(x)
    }
}

/// `η·G₁ + (1−η)·G₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureKernel {
    pub eta: f64,
    pub k1: GgdKernel,
    pub k2: GgdKernel,
}

impl MixtureKernel {
    pub fn new(eta: f64, k1: GgdKernel, k2: GgdKernel) -> Result<Self> {
        let mk = MixtureKernel { eta, k1, k2 };
        mk.validate()?;
        Ok(mk)
    }

    /// A mixture that is exactly one kernel.
    pub fn single(k: GgdKernel) -> Self {
        MixtureKernel { eta: 1.0, k1: k, k2: k }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter("mixture eta must lie in [0, 1]"));
        }
        self.k1.validate()?;
        self.k2.validate()
    }

    /// Components with non-zero mixing weight, as `(weight, kernel)`.
    pub fn components(&self) -> impl Iterator<Item = (f64, GgdKernel)> {
        [(self.eta, self.k1), (1.0 - self.eta, self.k2)]
            .into_iter()
            .filter(|(w, _)| *w > 0.0)
    }
}

/// Generalized Gaussian density `α/(2βΓ(1/α))·exp(−|e/β|^α)`.
pub fn ggd_density(kernel: &GgdKernel, e: f64) -> f64 {
    flush_exp(kernel.log_density_with(kernel.log_norm(), e))
}

pub fn mixture_density(mk: &MixtureKernel, e: f64) -> f64 {
    mk.eta * ggd_density(&mk.k1, e) + (1.0 - mk.eta) * ggd_density(&mk.k2, e)
}

/// `(1/L²)·Σᵢ Σⱼ κ(eᵢ − eⱼ)`, self-pairs included.
pub fn information_potential(errors: &[f64], mk: &MixtureKernel) -> Result<f64> {
    let l = errors.len();
    if l == 0 {
        return Err(Error::EmptyInput);
    }
    let (n1, n2) = (mk.k1.log_norm(), mk.k2.log_norm());
    let mut acc = 0.0;
    for &ei in errors {
        for &ej in errors {
            let d = ei - ej;
            acc += mk.eta * flush_exp(mk.k1.log_density_with(n1, d))
                + (1.0 - mk.eta) * flush_exp(mk.k2.log_density_with(n2, d));
        }
    }
    Ok(acc / (l * l) as f64)
}

/// Cost maximized by the robust measurement update.
pub fn cost(errors: &[f64], mk: &MixtureKernel) -> Result<f64> {
    information_potential(errors, mk)
}

/// Pairwise weights `Λ` and their row-sum diagonal `Λ̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelWeightMatrices {
    pub lam: Matrix,
    pub lam_bar: Matrix,
}

impl KernelWeightMatrices {
    /// `Λ̄ − Λ`.
    pub fn laplacian(&self) -> Matrix {
        &self.lam_bar - &self.lam
    }
}

/// `Λᵢⱼ = G(eⱼ − eᵢ)·max(|eⱼ − eᵢ|, ε)^(α−2)`, `Λ̄ = diag(Σⱼ Λᵢⱼ)`.
pub fn kernel_weight_matrices(errors: &[f64], kernel: &GgdKernel, epsilon: f64) -> KernelWeightMatrices {
    let l = errors.len();
    let ln_norm = kernel.log_norm();
    let ln_eps = libm::log(epsilon);
    let mut lam = Matrix::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let d = errors[j] - errors[i];
            let ad = libm::fabs(d);
            let ln_base = if ad > epsilon { libm::log(ad) } else { ln_eps };
            let mut v = kernel.log_density_with(ln_norm, d);
            if kernel.alpha != 2.0 {
                v += (kernel.alpha - 2.0) * ln_base;
            }
            let w = flush_exp(v);
            lam[(i, j)] = w;
            lam[(j, i)] = w;
        }
    }
    let mut lam_bar = Matrix::zeros(l, l);
    for i in 0..l {
        lam_bar[(i, i)] = lam.row(i).iter().sum();
    }
    KernelWeightMatrices { lam, lam_bar }
}

/// Gradient of [`cost`] with respect to the error vector.
///
/// `∂J/∂e = −(2/L²)·Σ_c l_c·(Λ̄_c − Λ_c)·e` with `l_c = η_c·α_c/β_c^α_c`.
pub fn cost_gradient(errors: &[f64], mk: &MixtureKernel, epsilon: f64) -> Result<Vec<f64>> {
    let l = errors.len();
    if l == 0 {
        return Err(Error::EmptyInput);
    }
    let mut g = vec![0.0; l];
    for (w, k) in mk.components() {
        let lc = w * libm::exp(k.log_gradient_scale());
        let lap = kernel_weight_matrices(errors, &k, epsilon).laplacian();
        let le = lap.mul_vec(errors);
        for (gi, v) in g.iter_mut().zip(le) {
            *gi -= 2.0 * lc * v / (l * l) as f64;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(a: f64, b: f64) -> GgdKernel {
        GgdKernel::new(a, b).unwrap()
    }

    #[test]
    fn density_at_origin() {
        let inv_sqrt_pi = 0.564_189_583_547_756_3;
        assert!((ggd_density(&k(2.0, 1.0), 0.0) - inv_sqrt_pi).abs() < 1e-15);
        assert!((ggd_density(&k(1.0, 1.0), 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn density_is_even_and_flushes() {
        let kk = k(3.0, 0.5);
        assert_eq!(ggd_density(&kk, 0.3), ggd_density(&kk, -0.3));
        assert_eq!(ggd_density(&k(2.0, 1e-5), 1.0), 0.0);
    }

    #[test]
    fn mixture_degenerates() {
        let (a, b) = (k(3.0, 0.2), k(1.5, 2.0));
        for e in [-1.0, -0.1, 0.0, 0.05, 3.0] {
            let m1 = MixtureKernel::new(1.0, a, b).unwrap();
            assert_eq!(mixture_density(&m1, e), ggd_density(&a, e));
            let m0 = MixtureKernel::new(0.0, a, b).unwrap();
            assert_eq!(mixture_density(&m0, e), ggd_density(&b, e));
            let mh = MixtureKernel::new(0.5, a, a).unwrap();
            assert!((mixture_density(&mh, e) - ggd_density(&a, e)).abs() <= 1e-16);
        }
    }

    #[test]
    fn potential_constant_vector_and_empty() {
        let mk = MixtureKernel::new(0.3, k(2.0, 1.0), k(4.0, 0.5)).unwrap();
        let peak = mixture_density(&mk, 0.0);
        assert!((information_potential(&[0.7; 5], &mk).unwrap() - peak).abs() < 1e-15);
        assert!((information_potential(&[-2.0], &mk).unwrap() - peak).abs() < 1e-15);
        assert_eq!(information_potential(&[], &mk), Err(Error::EmptyInput));
    }

    #[test]
    fn weights_two_by_two() {
        let kk = k(3.0, 0.8);
        let d = 0.4;
        let w = kernel_weight_matrices(&[0.0, d], &kk, 1e-8);
        let off = ggd_density(&kk, d) * libm::pow(d, 1.0);
        let diag = ggd_density(&kk, 0.0) * 1e-8;
        assert!((w.lam[(0, 1)] - off).abs() <= 1e-15 * off);
        assert_eq!(w.lam[(0, 1)], w.lam[(1, 0)]);
        assert!((w.lam[(0, 0)] - diag).abs() <= 1e-14 * diag);
        let ones = w.laplacian().mul_vec(&[1.0, 1.0]);
        assert!(ones.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn weights_gaussian_equal_density() {
        let kk = k(2.0, 0.7);
        let e = [0.1, -0.3, 0.9, 0.2];
        let w = kernel_weight_matrices(&e, &kk, 1e-8);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(w.lam[(i, j)], ggd_density(&kk, e[j] - e[i]));
            }
        }
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(GgdKernel::new(0.0, 1.0).is_err());
        assert!(GgdKernel::new(2.0, -1.0).is_err());
        assert!(MixtureKernel::new(1.5, k(2.0, 1.0), k(2.0, 1.0)).is_err());
    }
}
