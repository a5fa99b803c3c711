//! Robust state estimation for lithium-ion cells.
//!
//! * [`linalg`]: small dense factorizations (Cholesky, triangularization, PSD repair).
//! * [`criterion`]: generalized Gaussian kernels and the mixture information potential.
//! * [`battery`]: second-order RC cell model, OCV polynomial, synthetic traces.
//! * [`noise`]: Gaussian/Laplace/Uniform samplers and gated mixtures.
//! * [`filters`]: square-root cubature filtering with mixture error-entropy
//!   measurement updates, and UKF/CKF/SRCKF/MCC-CKF baselines.
//! * [`tsga`]: tree-seed/genetic hybrid optimizer for kernel tuning.
//!
//! The crate is `no_std` and needs only `alloc`.
//!
//! # Example
//!
//! ```
//! use gmmee::criterion::{GgdKernel, MixtureKernel};
//! use gmmee::filters::{Filter, FilterState, FilterVariant, GmmeeConfig, LinearModel};
//! use gmmee::linalg::Matrix;
//!
//! let model = LinearModel::new(
//!     Matrix::identity(1), vec![0.0],
//!     Matrix::identity(1), vec![0.0],
//!     Matrix::from_diag(&[1e-4]), Matrix::from_diag(&[1e-2]),
//! ).unwrap();
//! let k = GgdKernel::new(2.0, 1e6).unwrap();
//! let cfg = GmmeeConfig::new(MixtureKernel::new(0.5, k, k).unwrap());
//! let filter = Filter::new(model, FilterVariant::Entropy(cfg)).unwrap();
//! let mut s = FilterState::new(&[0.0], &Matrix::identity(1)).unwrap();
//! for y in [1.0, 1.1, 0.9] {
//!     s = filter.step(&s, 0.0, &[y], 1.0).unwrap();
//! }
//! assert!((s.x_hat[0] - 1.0).abs() < 0.1);
//! ```
#![no_std]

extern crate alloc;

pub mod battery;
pub mod criterion;
pub mod error;
pub mod filters;
pub mod linalg;
pub mod noise;
pub mod tsga;

pub use error::{Error, Result};
