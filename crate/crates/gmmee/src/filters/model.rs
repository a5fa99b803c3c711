use alloc::vec::Vec;

use crate::battery::{transition_array, EcmParams, OcvCurve};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Discrete-time model `x' = f(x, u, dt) + w`, `y = h(x, u) + r`.
///
/// Implementations must be free of side effects; filters call `transition`
/// and `observation` once per cubature or sigma point.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn transition(&self, x: &[f64], input: f64, dt: f64) -> Vec<f64>;
    fn observation(&self, x: &[f64], input: f64) -> Vec<f64>;
    fn q_cov(&self) -> &Matrix;
    fn r_cov(&self) -> &Matrix;
}

/// The cell model with state `(soc, u1, u2)` and terminal-voltage output.
#[derive(Clone, Debug)]
pub struct BatteryModel {
    pub params: EcmParams,
    pub ocv: OcvCurve,
    q: Matrix,
    r: Matrix,
}

impl BatteryModel {
    pub fn new(params: EcmParams, ocv: OcvCurve, q: Matrix, r_var: f64) -> Result<Self> {
        params.validate()?;
        ocv.validate()?;
        if q.rows() != 3 || q.cols() != 3 {
            return Err(Error::DimensionMismatch);
        }
        if !(r_var > 0.0) {
            return Err(Error::InvalidParameter("measurement variance must be positive"));
        }
        Ok(BatteryModel { params, ocv, q, r: Matrix::from_diag(&[r_var]) })
    }
}

impl StateSpaceModel for BatteryModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition(&self, x: &[f64], input: f64, dt: f64) -> Vec<f64> {
        transition_array(x, input, dt, &self.params).to_vec()
    }

    fn observation(&self, x: &[f64], input: f64) -> Vec<f64> {
        alloc::vec![self.ocv.eval(x[0]) - input * self.params.r0 - x[1] - x[2]]
    }

    fn q_cov(&self) -> &Matrix {
        &self.q
    }

    fn r_cov(&self) -> &Matrix {
        &self.r
    }
}

/// `x' = F·x + g·u`, `y = H·x + d·u`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub f: Matrix,
    pub g: Vec<f64>,
    pub h: Matrix,
    pub d: Vec<f64>,
    q: Matrix,
    r: Matrix,
}

impl LinearModel {
    pub fn new(f: Matrix, g: Vec<f64>, h: Matrix, d: Vec<f64>, q: Matrix, r: Matrix) -> Result<Self> {
        let n = f.rows();
        let m = h.rows();
        if !f.is_square() || g.len() != n || h.cols() != n || d.len() != m {
            return Err(Error::DimensionMismatch);
        }
        if q.rows() != n || !q.is_square() || r.rows() != m || !r.is_square() {
            return Err(Error::DimensionMismatch);
        }
        Ok(LinearModel { f, g, h, d, q, r })
    }
}

impl StateSpaceModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.f.rows()
    }

    fn meas_dim(&self) -> usize {
        self.h.rows()
    }

    fn transition(&self, x: &[f64], input: f64, _dt: f64) -> Vec<f64> {
        let mut out = self.f.mul_vec(x);
        for (o, g) in out.iter_mut().zip(&self.g) {
            *o += g * input;
        }
        out
    }

    fn observation(&self, x: &[f64], input: f64) -> Vec<f64> {
        let mut out = self.h.mul_vec(x);
        for (o, d) in out.iter_mut().zip(&self.d) {
            *o += d * input;
        }
        out
    }

    fn q_cov(&self) -> &Matrix {
        &self.q
    }

    fn r_cov(&self) -> &Matrix {
        &self.r
    }
}
