//! Monotone OCV template behind the bundled reference curve.

use gmmee::battery::{fit_ocv, OcvFit, OCV_ORDER};

pub const TEMPLATE_POINTS: usize = 101;

/// Smooth monotone OCV shape spanning 3.0 V at empty to 4.2 V at full.
pub fn template_ocv(soc: f64) -> f64 {
    3.0 + 0.45 * soc + 0.6 * soc.powi(3) + 0.15 * (1.0 - (-20.0 * soc).exp())
}

pub fn template_points() -> Vec<(f64, f64)> {
    (0..TEMPLATE_POINTS)
        .map(|k| {
            let s = k as f64 / (TEMPLATE_POINTS - 1) as f64;
            (s, template_ocv(s))
        })
        .collect()
}

/// Sixth-order least-squares fit of the template.
pub fn fit_reference_ocv() -> gmmee::Result<OcvFit> {
    fit_ocv(&template_points(), OCV_ORDER)
}
