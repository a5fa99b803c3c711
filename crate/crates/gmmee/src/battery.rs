//! Second-order RC equivalent-circuit cell model.
//!
//! Discharge current is positive. SOC is a fraction in `[0, 1]`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{lstsq, symmetric_eigen, Matrix};
use crate::noise::{sample_gaussian, NoiseSampler};

pub const OCV_ORDER: usize = 6;
/// Condition estimate above which an OCV fit is rejected.
pub const OCV_COND_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EcmParams {
    /// Ohmic resistance (Ω).
    pub r0: f64,
    pub r1: f64,
    /// Farads.
    pub c1: f64,
    pub r2: f64,
    pub c2: f64,
    /// Capacity in coulombs.
    pub q_max: f64,
    /// Coulomb efficiency.
    pub lambda: f64,
}

impl EcmParams {
    pub fn from_amp_hours(r0: f64, r1: f64, c1: f64, r2: f64, c2: f64, q_ah: f64, lambda: f64) -> Result<Self> {
        let p = EcmParams { r0, r1, c1, r2, c2, q_max: q_ah * 3600.0, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.r0, self.r1, self.c1, self.r2, self.c2, self.q_max];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("resistances, capacitances and capacity must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter("coulomb efficiency must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn capacity_ah(&self) -> f64 {
        self.q_max / 3600.0
    }

    pub fn tau1(&self) -> f64 {
        self.r1 * self.c1
    }

    pub fn tau2(&self) -> f64 {
        self.r2 * self.c2
    }
}

/// Sixth-order OCV polynomial, coefficients in ascending powers of SOC.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OcvCurve {
    pub coeffs: [f64; OCV_ORDER + 1],
    pub soc_min: f64,
    pub soc_max: f64,
}

impl OcvCurve {
    pub fn new(coeffs: [f64; OCV_ORDER + 1], soc_min: f64, soc_max: f64) -> Result<Self> {
        let c = OcvCurve { coeffs, soc_min, soc_max };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::InvalidParameter("OCV validity range must satisfy 0 <= soc_min < soc_max <= 1"));
        }
        Ok(())
    }

    pub fn eval(&self, soc: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * soc + c)
    }

    /// Non-decreasing over the validity range at 1e-3 resolution.
    pub fn is_monotone(&self) -> bool {
        let steps = libm::ceil((self.soc_max - self.soc_min) / 1e-3) as usize;
        let mut prev = self.eval(self.soc_min);
        for k in 1..=steps {
            let s = (self.soc_min + k as f64 * 1e-3).min(self.soc_max);
            let v = self.eval(s);
            if v < prev {
                return false;
            }
            prev = v;
        }
        true
    }

    pub fn in_range(&self, soc: f64) -> bool {
        soc >= self.soc_min && soc <= self.soc_max
    }
}

pub fn ocv_eval(curve: &OcvCurve, soc: f64) -> f64 {
    curve.eval(soc)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BatteryState {
    pub soc: f64,
    /// Electrochemical polarization voltage (V).
    pub u1: f64,
    /// Concentration polarization voltage (V).
    pub u2: f64,
}

impl BatteryState {
    pub fn new(soc: f64, u1: f64, u2: f64) -> Self {
        BatteryState { soc, u1, u2 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.soc, self.u1, self.u2]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        BatteryState { soc: x[0], u1: x[1], u2: x[2] }
    }

    /// Clamps SOC into `[0, 1]`; returns whether it had to.
    pub fn clamp_soc(&mut self) -> bool {
        let c = self.soc.clamp(0.0, 1.0);
        let changed = c != self.soc;
        self.soc = c;
        changed
    }

    pub fn is_finite(&self) -> bool {
        self.soc.is_finite() && self.u1.is_finite() && self.u2.is_finite()
    }
}

/// Exact zero-order-hold discretization of the RC dynamics, without clamping.
pub fn transition_array(x: &[f64], current: f64, dt: f64, p: &EcmParams) -> [f64; 3] {
    let a1 = libm::exp(-dt / p.tau1());
    let a2 = libm::exp(-dt / p.tau2());
    [
        x[0] - p.lambda * dt * current / p.q_max,
        a1 * x[1] + p.r1 * (1.0 - a1) * current,
        a2 * x[2] + p.r2 * (1.0 - a2) * current,
    ]
}

/// One step of the cell dynamics. SOC is not clamped here; see
/// [`BatteryState::clamp_soc`].
pub fn state_transition(s: &BatteryState, current: f64, dt: f64, p: &EcmParams) -> Result<BatteryState> {
    let next = BatteryState::from_slice(&transition_array(&s.to_array(), current, dt, p));
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite)
    }
}

/// Terminal voltage `OCV(soc) − I·R₀ − U₁ − U₂`.
pub fn measure_voltage(s: &BatteryState, current: f64, p: &EcmParams, ocv: &OcvCurve) -> f64 {
    ocv.eval(s.soc) - current * p.r0 - s.u1 - s.u2
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcvFit {
    pub curve: OcvCurve,
    /// Root-mean-square voltage residual over the fitted points (V).
    pub rmse: f64,
    pub condition: f64,
}

/// Least-squares polynomial fit of the OCV curve, `order ≤ 6`.
pub fn fit_ocv(points: &[(f64, f64)], order: usize) -> Result<OcvFit> {
    if order > OCV_ORDER {
        return Err(Error::InvalidParameter("OCV order above 6"));
    }
    if points.len() < order + 1 {
        return Err(Error::InvalidParameter("too few OCV points for the requested order"));
    }
    if points.iter().any(|(s, v)| !s.is_finite() || !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut socs: Vec<f64> = points.iter().map(|p| p.0).collect();
    socs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if socs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("OCV points need distinct SOC values"));
    }
    let (lo, hi) = (socs[0], socs[socs.len() - 1]);
    if hi - lo < 0.3 {
        return Err(Error::InvalidParameter("OCV points must span at least 0.3 of the SOC range"));
    }
    let cols = order + 1;
    let mut a = Matrix::zeros(points.len(), cols);
    let mut b = Vec::with_capacity(points.len());
    for (i, &(s, v)) in points.iter().enumerate() {
        let mut pw = 1.0;
        for j in 0..cols {
            a[(i, j)] = pw;
            pw *= s;
        }
        b.push(v);
    }
    let (x, cond) = lstsq(&a, &b)?;
    if cond > OCV_COND_LIMIT {
        return Err(Error::IllConditioned { estimate: cond });
    }
    let mut coeffs = [0.0; OCV_ORDER + 1];
    coeffs[..cols].copy_from_slice(&x);
    let curve = OcvCurve::new(coeffs, lo.max(0.0), hi.min(1.0))?;
    let sse: f64 = points.iter().map(|&(s, v)| (curve.eval(s) - v) * (curve.eval(s) - v)).sum();
    Ok(OcvFit { curve, rmse: libm::sqrt(sse / points.len() as f64), condition: cond })
}

/// Ampere-hour integration `soc_k = soc₀ − (λ·dt/Q)·Σ_{i≤k} I_i`.
pub fn coulomb_count(soc0: f64, currents: &[f64], dt: f64, p: &EcmParams) -> Vec<f64> {
    let k = p.lambda * dt / p.q_max;
    let mut acc = 0.0;
    currents
        .iter()
        .map(|&i| {
            acc += i;
            soc0 - k * acc
        })
        .collect()
}

/// Ground truth produced by [`simulate_trace`].
///
/// Sample `k` holds the state after applying `current[k]`, the terminal voltage
/// measured at that state under `current[k]`, and `t[k] = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedTrace {
    pub dt: f64,
    pub t: Vec<f64>,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub soc_true: Vec<f64>,
    pub states: Vec<BatteryState>,
    /// Number of steps at which SOC had to be clamped into `[0, 1]`.
    pub clamped_steps: usize,
    pub initial: BatteryState,
}

/// Rolls the model forward with additive process noise `w ~ N(0, Q)` and
/// measurement noise from `meas_noise`.
pub fn simulate_trace<N: NoiseSampler + ?Sized>(
    p: &EcmParams,
    ocv: &OcvCurve,
    currents: &[f64],
    dt: f64,
    initial: BatteryState,
    process_noise_cov: &Matrix,
    meas_noise: &N,
    rng_seed: u64,
) -> Result<SimulatedTrace> {
    p.validate()?;
    if currents.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive"));
    }
    if process_noise_cov.rows() != 3 || process_noise_cov.cols() != 3 {
        return Err(Error::DimensionMismatch);
    }
    let mut w_rng = crate::noise::substream(rng_seed, 0);
    let mut v_rng = crate::noise::substream(rng_seed, 1);
    let q_root = noise_root(process_noise_cov)?;

    let n = currents.len();
    let mut out = SimulatedTrace {
        dt,
        t: Vec::with_capacity(n),
        current: currents.to_vec(),
        voltage: Vec::with_capacity(n),
        soc_true: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        clamped_steps: 0,
        initial,
    };
    let mut s = initial;
    for (k, &i) in currents.iter().enumerate() {
        s = state_transition(&s, i, dt, p)?;
        if let Some(root) = &q_root {
            let z = [
                sample_gaussian(0.0, 1.0, &mut w_rng),
                sample_gaussian(0.0, 1.0, &mut w_rng),
                sample_gaussian(0.0, 1.0, &mut w_rng),
            ];
            let w = root.mul_vec(&z);
            s.soc += w[0];
            s.u1 += w[1];
            s.u2 += w[2];
        }
        if s.clamp_soc() {
            out.clamped_steps += 1;
        }
        out.t.push(k as f64 * dt);
        out.voltage.push(measure_voltage(&s, i, p, ocv) + meas_noise.sample_volts(&mut v_rng));
        out.soc_true.push(s.soc);
        out.states.push(s);
    }
    Ok(out)
}

/// `V·diag(√λ)` for a PSD covariance, or `None` when it is identically zero.
fn noise_root(q: &Matrix) -> Result<Option<Matrix>> {
    if !q.is_finite() {
        return Err(Error::NonFinite);
    }
    if q.max_abs() == 0.0 {
        return Ok(None);
    }
    let (vals, vecs) = symmetric_eigen(&q.symmetrized());
    if vals.iter().any(|&l| l < -1e-12 * q.max_abs()) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut root = vecs;
    for (j, &l) in vals.iter().enumerate() {
        let s = libm::sqrt(l.max(0.0));
        for i in 0..3 {
            root[(i, j)] *= s;
        }
    }
    Ok(Some(root))
}

/// Synthetic load-current shapes.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ProfileKind {
    Constant,
    /// Discharge for `duty·period` seconds, then rest.
    Pulse { period: f64, duty: f64 },
    /// Slow random walk between levels with frequent idle dwells.
    UrbanLike,
    /// Sustained high load with short bursts and fast transients.
    HighwayLike,
}

/// Generates `round(duration/dt)` current samples bounded by `amplitude` in magnitude.
pub fn generate_current_profile(kind: ProfileKind, duration: f64, dt: f64, amplitude: f64, rng_seed: u64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(duration >= dt) {
        return Err(Error::InvalidParameter("profile needs dt > 0 and duration >= dt"));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter("profile amplitude must be non-negative"));
    }
    let n = libm::round(duration / dt) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let out = match kind {
        ProfileKind::Constant => alloc::vec![amplitude; n],
        ProfileKind::Pulse { period, duty } => {
            if !(period >= dt) || !(0.0..=1.0).contains(&duty) {
                return Err(Error::InvalidParameter("pulse needs period >= dt and duty in [0, 1]"));
            }
            let per = libm::round(period / dt) as usize;
            let on = libm::round(duty * per as f64) as usize;
            (0..n).map(|k| if k % per < on { amplitude } else { 0.0 }).collect()
        }
        ProfileKind::UrbanLike => segments(n, dt, &mut rng, |rng| {
            if rng.random::<f64>() < 0.3 {
                (0.0, rng.random_range(3.0..15.0))
            } else {
                (amplitude * rng.random_range(-0.3..1.0), rng.random_range(5.0..30.0))
            }
        }, 0.15 * amplitude, amplitude, 2.0),
        ProfileKind::HighwayLike => segments(n, dt, &mut rng, |rng| {
            let level = if rng.random::<f64>() < 0.25 { 1.0 } else { rng.random_range(0.35..0.8) };
            (amplitude * level, rng.random_range(2.0..10.0))
        }, 0.05 * amplitude, amplitude, 0.3),
    };
    Ok(out)
}

/// Piecewise targets followed by a first-order lag with additive jitter.
fn segments(
    n: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
    mut next: impl FnMut(&mut ChaCha8Rng) -> (f64, f64),
    jitter: f64,
    ceiling: f64,
    lag_s: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let a = libm::exp(-dt / lag_s);
    let mut level = 0.0;
    let mut target = 0.0;
    let mut left = 0usize;
    for _ in 0..n {
        if left == 0 {
            let (t, dur) = next(rng);
            target = t;
            left = (libm::round(dur / dt) as usize).max(1);
        }
        left -= 1;
        level = a * level + (1.0 - a) * target;
        let noisy = if target == 0.0 { level } else { level + jitter * (2.0 * rng.random::<f64>() - 1.0) };
        out.push(noisy.clamp(-ceiling, ceiling));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EcmParams {
        EcmParams::from_amp_hours(0.02, 0.01, 1000.0, 0.015, 6666.7, 3.0, 1.0).unwrap()
    }

    #[test]
    fn zero_input_decays() {
        let p = params();
        let s = BatteryState::new(0.8, 0.05, -0.02);
        let n = state_transition(&s, 0.0, 0.1, &p).unwrap();
        assert_eq!(n.soc, 0.8);
        assert!((n.u1 - 0.05 * libm::exp(-0.1 / p.tau1())).abs() < 1e-17);
        assert!((n.u2 + 0.02 * libm::exp(-0.1 / p.tau2())).abs() < 1e-17);
    }

    #[test]
    fn full_discharge_in_one_step() {
        let p = params();
        let i = p.q_max / 3600.0;
        let n = state_transition(&BatteryState::new(1.0, 0.0, 0.0), i, 3600.0, &p).unwrap();
        assert!(n.soc.abs() < 1e-15);
    }

    #[test]
    fn voltage_open_circuit() {
        let p = params();
        let c = OcvCurve::new([3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        assert_eq!(measure_voltage(&BatteryState::new(0.5, 0.0, 0.0), 0.0, &p, &c), 3.5);
        let mut p2 = p;
        p2.r0 *= 2.0;
        let s = BatteryState::new(0.4, 0.01, 0.02);
        let d = measure_voltage(&s, 2.0, &p, &c) - measure_voltage(&s, 2.0, &p2, &c);
        assert!((d - 2.0 * p.r0).abs() < 1e-15);
    }

    #[test]
    fn coulomb_constant_half_hour() {
        let p = params();
        let i = p.q_max / 3600.0;
        let tr = coulomb_count(1.0, &alloc::vec![i; 1800], 1.0, &p);
        assert!((tr[1799] - 0.5).abs() < 1e-12);
        assert!(coulomb_count(0.7, &[0.0; 10], 0.1, &p).iter().all(|&s| s == 0.7));
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (0.5 + 0.01 * i as f64, 3.7)).collect();
        assert!(fit_ocv(&pts, 6).is_err());
        assert!(fit_ocv(&pts[..3], 6).is_err());
    }

    #[test]
    fn profiles() {
        let c = generate_current_profile(ProfileKind::Constant, 10.0, 0.1, 3.0, 1).unwrap();
        assert_eq!(c.len(), 100);
        assert!(c.iter().all(|&v| v == 3.0));
        let p = generate_current_profile(ProfileKind::Pulse { period: 10.0, duty: 0.5 }, 100.0, 0.1, 4.0, 1).unwrap();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!((mean - 2.0).abs() < 1e-12);
        let u = generate_current_profile(ProfileKind::UrbanLike, 1800.0, 0.1, 6.0, 3).unwrap();
        assert_eq!(u.len(), 18000);
        assert!(u.iter().all(|v| v.abs() <= 6.0));
        assert!(u.iter().filter(|v| v.abs() < 0.05).count() > 1000);
        let h = generate_current_profile(ProfileKind::HighwayLike, 600.0, 0.1, 9.0, 3).unwrap();
        assert!(h.iter().all(|v| v.abs() <= 9.0));
    }
}
