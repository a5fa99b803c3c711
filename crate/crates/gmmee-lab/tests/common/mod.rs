#![allow(dead_code)]

use std::path::PathBuf;

use gmmee::battery::ProfileKind;
use gmmee::noise::{MixedNoiseSpec, NoiseUnit};
use gmmee_lab::config::TraceSource;
use gmmee_lab::{ExperimentConfig, FilterConfig};

pub fn reference_gmmee() -> FilterConfig {
    FilterConfig::gmmee(0.5, 1.5, 3.0, 30.0, 0.3)
}

/// Scenario settings of the bundled configs on a trace of `steps` samples.
pub fn scenario(noise: MixedNoiseSpec, filter: FilterConfig, steps: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::reference(noise, filter);
    let e = &mut cfg.experiment;
    e.soc0 = 0.9;
    e.truth_q = [1e-8; 3];
    e.source = TraceSource::Synthetic {
        profile: ProfileKind::UrbanLike,
        duration_s: steps as f64 * 0.1,
        dt: 0.1,
        amplitude: 6.0,
        profile_seed: 7,
    };
    cfg
}

pub fn uniform(filter: FilterConfig, steps: usize) -> ExperimentConfig {
    scenario(MixedNoiseSpec::uniform_mixture(NoiseUnit::Millivolt), filter, steps)
}

pub fn laplace(filter: FilterConfig, steps: usize) -> ExperimentConfig {
    scenario(MixedNoiseSpec::laplace_mixture(NoiseUnit::Millivolt), filter, steps)
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/scenarios").join(name)
}
