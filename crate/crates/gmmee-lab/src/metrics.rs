//! SOC error statistics, per-step timing and diagnostic flag counts.

use serde::{Deserialize, Serialize};

use gmmee::filters::StepDiagnostics;

/// Error statistics in percentage points of SOC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub max_abs: f64,
}

impl ErrorStats {
    /// `None` for an empty trace.
    pub fn from_abs_errors(abs_err: &[f64]) -> Option<Self> {
        if abs_err.is_empty() {
            return None;
        }
        let n = abs_err.len() as f64;
        let mae = abs_err.iter().sum::<f64>() / n;
        let mse = abs_err.iter().map(|e| e * e).sum::<f64>() / n;
        let max_abs = abs_err.iter().fold(0.0_f64, |m, e| m.max(*e));
        Some(ErrorStats { mae, mse, rmse: mse.sqrt(), max_abs })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub max_ms: f64,
    pub mean_ms: f64,
}

impl Timing {
    pub fn from_durations_ms(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Timing::default();
        }
        Timing {
            max_ms: ms.iter().fold(0.0_f64, |m, v| m.max(*v)),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    /// Steps whose fixed-point loop hit the iteration cap.
    pub fp_cap: usize,
    /// Steps that fell back to the plain cubature update.
    pub fallback: usize,
    pub cov_repaired: usize,
    /// Steps where the tracked cost decreased between iterates.
    pub cost_decrease: usize,
}

impl FlagCounts {
    pub fn record(&mut self, d: &StepDiagnostics) {
        self.fp_cap += usize::from(d.cap_reached);
        self.fallback += usize::from(d.fallback.is_some());
        self.cov_repaired += usize::from(d.cov_repaired);
        self.cost_decrease += usize::from(d.cost_decreased);
    }
}

/// Per-step traces in percentage points, aligned after warm-up.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: Vec<usize>,
    pub t_s: Vec<f64>,
    pub soc_est_pct: Vec<f64>,
    pub soc_true_pct: Option<Vec<f64>>,
    pub abs_err_pct: Option<Vec<f64>>,
}

impl StepTrace {
    pub fn len(&self) -> usize {
        self.step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step.is_empty()
    }
}

/// Outcome of one filter over one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub filter: String,
    /// Steps filtered before truncation at the SOC cutoff.
    pub steps: usize,
    pub dt: f64,
    pub seed: Option<u64>,
    /// `None` when the dataset carries no ground truth.
    pub errors: Option<ErrorStats>,
    pub timing: Timing,
    pub flags: FlagCounts,
    pub trace: StepTrace,
}

impl MetricsReport {
    /// RMSE in percentage points, NaN without ground truth.
    pub fn rmse(&self) -> f64 {
        self.errors.map_or(f64::NAN, |e| e.rmse)
    }

    pub fn mae(&self) -> f64 {
        self.errors.map_or(f64::NAN, |e| e.mae)
    }

    pub fn abs_errors(&self) -> &[f64] {
        self.trace.abs_err_pct.as_deref().unwrap_or(&[])
    }
}

/// Mean of the first and last tenth of a trace.
pub fn decile_means(trace: &[f64]) -> Option<(f64, f64)> {
    let k = trace.len() / 10;
    if k == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&trace[..k]), mean(&trace[trace.len() - k..])))
}

/// Linear-interpolated quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
