//! Measurement-noise samplers and reproducible random streams.

use rand::distr::{Distribution as _, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Generator used for every stochastic stream in the crate.
pub type NoiseRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> NoiseRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `index` of the generator seeded by `master`.
pub fn substream(master: u64, index: u64) -> NoiseRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Deterministic child seed for trial `index` of a run seeded by `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn sample_gaussian<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + libm::sqrt(variance) * z
}

/// Laplace draw with scale `b = √(variance/2)` by CDF inversion.
pub fn sample_laplace<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> f64 {
    let b = libm::sqrt(variance / 2.0);
    let u: f64 = Open01.sample(rng);
    let u = u - 0.5;
    mean - b * u.signum() * libm::log(1.0 - 2.0 * libm::fabs(u))
}

pub fn sample_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// One noise component.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "dist", rename_all = "lowercase"))]
pub enum NoiseDist {
    Gaussian { mean: f64, var: f64 },
    Laplace { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl NoiseDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseDist::Gaussian { mean, var } | NoiseDist::Laplace { mean, var } => {
                if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
                    return Err(Error::InvalidParameter("noise variance must be positive"));
                }
            }
            NoiseDist::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidParameter("uniform noise needs lo < hi"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseDist::Gaussian { mean, var } => sample_gaussian(mean, var, rng),
            NoiseDist::Laplace { mean, var } => sample_laplace(mean, var, rng),
            NoiseDist::Uniform { lo, hi } => sample_uniform(lo, hi, rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseDist::Gaussian { mean, .. } | NoiseDist::Laplace { mean, .. } => mean,
            NoiseDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseDist::Gaussian { var, .. } | NoiseDist::Laplace { var, .. } => var,
            NoiseDist::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }
}

/// Unit in which a noise specification's parameters are written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseUnit {
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "V"))]
    Volt,
    #[cfg_attr(feature = "serde", serde(rename = "mV"))]
    Millivolt,
}

impl NoiseUnit {
    /// Volts per unit.
    pub fn to_volts(self) -> f64 {
        match self {
            NoiseUnit::Volt => 1.0,
            NoiseUnit::Millivolt => 1e-3,
        }
    }
}

/// Bernoulli-gated mixture: with probability `c` the contaminant, else the base.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixedNoiseSpec {
    pub c: f64,
    pub base: NoiseDist,
    pub contaminant: NoiseDist,
    #[cfg_attr(feature = "serde", serde(default))]
    pub unit: NoiseUnit,
}

impl MixedNoiseSpec {
    pub const DEFAULT_C: f64 = 0.95;

    /// Gaussian base (mean 0.1, variance 10) gated against a Uniform[−4, 2] contaminant.
    pub fn uniform_mixture(unit: NoiseUnit) -> Self {
        MixedNoiseSpec {
            c: Self::DEFAULT_C,
            base: NoiseDist::Gaussian { mean: 0.1, var: 10.0 },
            contaminant: NoiseDist::Uniform { lo: -4.0, hi: 2.0 },
            unit,
        }
    }

    /// Gaussian base (mean 0.1, variance 10) gated against a Laplace(1, 1) contaminant.
    pub fn laplace_mixture(unit: NoiseUnit) -> Self {
        MixedNoiseSpec {
            c: Self::DEFAULT_C,
            base: NoiseDist::Gaussian { mean: 0.1, var: 10.0 },
            contaminant: NoiseDist::Laplace { mean: 1.0, var: 1.0 },
            unit,
        }
    }

    pub fn gaussian(mean: f64, var: f64, unit: NoiseUnit) -> Self {
        let g = NoiseDist::Gaussian { mean, var };
        MixedNoiseSpec { c: 0.0, base: g, contaminant: g, unit }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::InvalidParameter("contamination probability must lie in [0, 1]"));
        }
        self.base.validate()?;
        self.contaminant.validate()
    }

    /// Mixture mean in the spec's unit.
    pub fn mean(&self) -> f64 {
        self.c * self.contaminant.mean() + (1.0 - self.c) * self.base.mean()
    }

    /// Mixture variance in the spec's unit (law of total variance).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let (mc, mb) = (self.contaminant.mean(), self.base.mean());
        self.c * (self.contaminant.variance() + (mc - m) * (mc - m))
            + (1.0 - self.c) * (self.base.variance() + (mb - m) * (mb - m))
    }

    /// Variance of the base component converted to V².
    pub fn base_variance_volts2(&self) -> f64 {
        let s = self.unit.to_volts();
        self.base.variance() * s * s
    }
}

/// A scalar measurement-noise source returning volts.
pub trait NoiseSampler {
    fn sample_volts(&self, rng: &mut NoiseRng) -> f64;
}

impl NoiseSampler for MixedNoiseSpec {
    fn sample_volts(&self, rng: &mut NoiseRng) -> f64 {
        sample_mixed(self, rng) * self.unit.to_volts()
    }
}

/// Noise-free source.
pub struct Silent;

impl NoiseSampler for Silent {
    fn sample_volts(&self, _rng: &mut NoiseRng) -> f64 {
        0.0
    }
}

/// One draw from the mixture, in the spec's unit.
pub fn sample_mixed<R: Rng + ?Sized>(spec: &MixedNoiseSpec, rng: &mut R) -> f64 {
    let gate: f64 = rng.random();
    if gate < spec.c {
        spec.contaminant.sample(rng)
    } else {
        spec.base.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let spec = MixedNoiseSpec::laplace_mixture(NoiseUnit::Volt);
        let mut a = rng_from_seed(9);
        let mut b = rng_from_seed(9);
        for _ in 0..100 {
            assert_eq!(sample_mixed(&spec, &mut a), sample_mixed(&spec, &mut b));
        }
    }

    #[test]
    fn substreams_differ() {
        let mut a = substream(1, 0);
        let mut b = substream(1, 1);
        let xa: u64 = a.random();
        let xb: u64 = b.random();
        assert_ne!(xa, xb);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }

    #[test]
    fn closed_form_moments() {
        let u = MixedNoiseSpec::uniform_mixture(NoiseUnit::Volt);
        assert!((u.mean() - (0.95 * -1.0 + 0.05 * 0.1)).abs() < 1e-15);
        let l = MixedNoiseSpec::laplace_mixture(NoiseUnit::Volt);
        assert!((l.mean() - 0.955).abs() < 1e-15);
        assert_eq!(l.base_variance_volts2(), 10.0);
        let mv = MixedNoiseSpec::laplace_mixture(NoiseUnit::Millivolt);
        assert!((mv.base_variance_volts2() - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn validation() {
        let mut s = MixedNoiseSpec::uniform_mixture(NoiseUnit::Volt);
        s.c = 1.2;
        assert!(s.validate().is_err());
        s.c = 0.5;
        s.contaminant = NoiseDist::Uniform { lo: 2.0, hi: -4.0 };
        assert!(s.validate().is_err());
    }
}
