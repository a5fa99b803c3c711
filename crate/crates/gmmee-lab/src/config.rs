//! Experiment configuration (JSON or TOML) and its resolution into core types.

use std::path::{Path, PathBuf};

use gmmee::battery::{EcmParams, OcvCurve, ProfileKind};
use gmmee::criterion::{GgdKernel, MixtureKernel};
use gmmee::filters::{FilterVariant, GmmeeConfig, MccConfig, UkfParams};
use gmmee::noise::MixedNoiseSpec;
use gmmee::tsga::TsgaConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};

pub const REFERENCE_PARAMS_TOML: &str = include_str!("../data/reference_params.toml");
pub const REFERENCE_OCV_JSON: &str = include_str!("../data/reference_ocv.json");

/// Cell parameters as written in config files (capacity in Ah).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EcmSpec {
    pub r0: f64,
    pub r1: f64,
    pub c1: f64,
    pub r2: f64,
    pub c2: f64,
    pub capacity_ah: f64,
    #[serde(default = "one")]
    pub lambda: f64,
}

fn one() -> f64 {
    1.0
}

impl EcmSpec {
    pub fn to_params(&self) -> Result<EcmParams> {
        EcmParams::from_amp_hours(self.r0, self.r1, self.c1, self.r2, self.c2, self.capacity_ah, self.lambda)
            .map_err(|e| LabError::Config(format!("model: {e}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ModelRef {
    File { file: PathBuf },
    Inline(EcmSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OcvRef {
    File { file: PathBuf },
    Inline(OcvCurve),
}

/// Filter selection in the `{"filter": "...", ...}` form.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "filter", deny_unknown_fields)]
pub enum FilterConfig {
    #[serde(rename = "ukf")]
    Ukf {
        #[serde(default)]
        kappa: f64,
        #[serde(default = "ukf_alpha")]
        alpha: f64,
        #[serde(default = "ukf_beta")]
        beta: f64,
    },
    #[serde(rename = "ckf")]
    Ckf,
    #[serde(rename = "srckf")]
    Srckf,
    #[serde(rename = "mcc-ckf")]
    MccCkf {
        bandwidth: f64,
        #[serde(default = "fp_tol")]
        fp_tol: f64,
        #[serde(default = "fp_max_iter")]
        fp_max_iter: u32,
    },
    #[serde(rename = "mee-ckf")]
    Mee {
        beta: f64,
        #[serde(default = "fp_tol")]
        fp_tol: f64,
        #[serde(default = "fp_max_iter")]
        fp_max_iter: u32,
    },
    #[serde(rename = "gmee-ckf")]
    Gmee {
        alpha: f64,
        beta: f64,
        #[serde(default = "fp_tol")]
        fp_tol: f64,
        #[serde(default = "fp_max_iter")]
        fp_max_iter: u32,
    },
    #[serde(rename = "mmee-ckf")]
    Mmee {
        eta: f64,
        beta1: f64,
        beta2: f64,
        #[serde(default = "fp_tol")]
        fp_tol: f64,
        #[serde(default = "fp_max_iter")]
        fp_max_iter: u32,
    },
    #[serde(rename = "gmmee-srckf")]
    Gmmee {
        eta: f64,
        alpha1: f64,
        alpha2: f64,
        beta1: f64,
        beta2: f64,
        #[serde(default = "fp_tol")]
        fp_tol: f64,
        #[serde(default = "fp_max_iter")]
        fp_max_iter: u32,
        #[serde(default = "singularity_eps")]
        singularity_eps: f64,
    },
}

fn ukf_alpha() -> f64 {
    UkfParams::default().alpha
}
fn ukf_beta() -> f64 {
    UkfParams::default().beta
}
fn fp_tol() -> f64 {
    GmmeeConfig::DEFAULT_FP_TOL
}
fn fp_max_iter() -> u32 {
    GmmeeConfig::DEFAULT_FP_MAX_ITER
}
fn singularity_eps() -> f64 {
    gmmee::criterion::SINGULARITY_EPS
}

impl FilterConfig {
    pub fn gmmee(eta: f64, alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Self {
        FilterConfig::Gmmee {
            eta,
            alpha1,
            alpha2,
            beta1,
            beta2,
            fp_tol: fp_tol(),
            fp_max_iter: fp_max_iter(),
            singularity_eps: singularity_eps(),
        }
    }

    pub fn mee(beta: f64) -> Self {
        FilterConfig::Mee { beta, fp_tol: fp_tol(), fp_max_iter: fp_max_iter() }
    }

    pub fn gmee(alpha: f64, beta: f64) -> Self {
        FilterConfig::Gmee { alpha, beta, fp_tol: fp_tol(), fp_max_iter: fp_max_iter() }
    }

    pub fn mmee(eta: f64, beta1: f64, beta2: f64) -> Self {
        FilterConfig::Mmee { eta, beta1, beta2, fp_tol: fp_tol(), fp_max_iter: fp_max_iter() }
    }

    pub fn mcc(bandwidth: f64) -> Self {
        FilterConfig::MccCkf { bandwidth, fp_tol: fp_tol(), fp_max_iter: fp_max_iter() }
    }

    pub fn ukf() -> Self {
        let p = UkfParams::default();
        FilterConfig::Ukf { kappa: p.kappa, alpha: p.alpha, beta: p.beta }
    }

    /// Row label; also fixes the comparison-table order.
    pub fn label(&self) -> &'static str {
        match self {
            FilterConfig::Ukf { .. } => "UKF",
            FilterConfig::Ckf => "CKF",
            FilterConfig::Srckf => "SRCKF",
            FilterConfig::MccCkf { .. } => "MCC-CKF",
            FilterConfig::Mee { .. } => "MEE",
            FilterConfig::Gmee { .. } => "GMEE",
            FilterConfig::Mmee { .. } => "MMEE",
            FilterConfig::Gmmee { .. } => "GMMEE",
        }
    }

    pub fn table_rank(&self) -> usize {
        TABLE_ORDER.iter().position(|l| *l == self.label()).unwrap_or(TABLE_ORDER.len())
    }

    pub fn is_entropy(&self) -> bool {
        matches!(self, FilterConfig::Mee { .. } | FilterConfig::Gmee { .. } | FilterConfig::Mmee { .. } | FilterConfig::Gmmee { .. })
    }

    pub fn to_variant(&self) -> Result<FilterVariant> {
        let kern = |a: f64, b: f64| GgdKernel::new(a, b).map_err(|e| LabError::Config(format!("filter kernel: {e}")));
        let entropy = |mk: MixtureKernel, tol: f64, cap: u32, eps: f64| {
            let mut c = GmmeeConfig::new(mk);
            c.fp_tol = tol;
            c.fp_max_iter = cap;
            c.singularity_eps = eps;
            FilterVariant::Entropy(c)
        };
        let mix = |eta: f64, k1: GgdKernel, k2: GgdKernel| {
            MixtureKernel::new(eta, k1, k2).map_err(|e| LabError::Config(format!("filter mixture: {e}")))
        };
        let v = match *self {
            FilterConfig::Ukf { kappa, alpha, beta } => FilterVariant::Ukf(UkfParams { kappa, alpha, beta }),
            FilterConfig::Ckf => FilterVariant::Ckf,
            FilterConfig::Srckf => FilterVariant::Srckf,
            FilterConfig::MccCkf { bandwidth, fp_tol, fp_max_iter } => {
                FilterVariant::MccCkf(MccConfig { bandwidth, fp_tol, fp_max_iter })
            }
            FilterConfig::Mee { beta, fp_tol, fp_max_iter } => {
                entropy(MixtureKernel::single(kern(2.0, beta)?), fp_tol, fp_max_iter, singularity_eps())
            }
            FilterConfig::Gmee { alpha, beta, fp_tol, fp_max_iter } => {
                entropy(MixtureKernel::single(kern(alpha, beta)?), fp_tol, fp_max_iter, singularity_eps())
            }
            FilterConfig::Mmee { eta, beta1, beta2, fp_tol, fp_max_iter } => {
                entropy(mix(eta, kern(2.0, beta1)?, kern(2.0, beta2)?)?, fp_tol, fp_max_iter, singularity_eps())
            }
            FilterConfig::Gmmee { eta, alpha1, alpha2, beta1, beta2, fp_tol, fp_max_iter, singularity_eps } => entropy(
                mix(eta, kern(alpha1, beta1)?, kern(alpha2, beta2)?)?,
                fp_tol,
                fp_max_iter,
                singularity_eps,
            ),
        };
        v.validate(3).map_err(|e| LabError::Config(format!("filter: {e}")))?;
        Ok(v)
    }

    /// Same variant with the four kernel parameters `(α₁, α₂, β₁, β₂)` replaced.
    pub fn with_kernel_params(&self, p: &[f64]) -> Result<FilterConfig> {
        match *self {
            FilterConfig::Gmmee { eta, fp_tol, fp_max_iter, singularity_eps, .. } => Ok(FilterConfig::Gmmee {
                eta,
                alpha1: p[0],
                alpha2: p[1],
                beta1: p[2],
                beta2: p[3],
                fp_tol,
                fp_max_iter,
                singularity_eps,
            }),
            FilterConfig::Mmee { eta, fp_tol, fp_max_iter, .. } => {
                Ok(FilterConfig::Mmee { eta, beta1: p[2], beta2: p[3], fp_tol, fp_max_iter })
            }
            FilterConfig::Gmee { fp_tol, fp_max_iter, .. } => {
                Ok(FilterConfig::Gmee { alpha: p[0], beta: p[2], fp_tol, fp_max_iter })
            }
            _ => Err(LabError::Config("kernel tuning needs an entropy filter (gmmee-srckf, mmee-ckf or gmee-ckf)".into())),
        }
    }
}

/// Row order of comparison tables.
pub const TABLE_ORDER: [&str; 8] = ["UKF", "CKF", "SRCKF", "MCC-CKF", "MEE", "GMEE", "MMEE", "GMMEE"];

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    Synthetic {
        profile: ProfileKind,
        duration_s: f64,
        #[serde(default = "default_dt")]
        dt: f64,
        amplitude: f64,
        #[serde(default)]
        profile_seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

fn default_dt() -> f64 {
    0.1
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Synthetic {
            profile: ProfileKind::UrbanLike,
            duration_s: 360.0,
            dt: default_dt(),
            amplitude: 6.0,
            profile_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub source: TraceSource,
    /// True initial SOC of synthetic traces.
    pub soc0: f64,
    /// Filter's initial SOC; defaults to the true initial SOC.
    pub init_soc: Option<f64>,
    pub p0: [f64; 3],
    pub q: [f64; 3],
    /// Measurement variance handed to the filter (V²); defaults to the base
    /// Gaussian variance of the noise spec.
    pub r: Option<f64>,
    /// Process-noise variances used when synthesizing the truth.
    pub truth_q: [f64; 3],
    /// Evaluation stops once true SOC falls below this fraction.
    pub soc_cutoff: f64,
    pub warmup: usize,
    pub seed: Option<u64>,
    pub trials: usize,
    pub temperature: Option<String>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            source: TraceSource::default(),
            soc0: 1.0,
            init_soc: None,
            p0: [0.01, 0.01, 0.06],
            q: [1e-6; 3],
            r: None,
            truth_q: [0.0; 3],
            soc_cutoff: 0.10,
            warmup: 0,
            seed: None,
            trials: 1,
            temperature: None,
        }
    }
}

/// Kernel tuning: optimizer controls plus the frozen/fresh evaluation plan.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TuneSettings {
    #[serde(flatten)]
    pub optimizer: TsgaConfig,
    /// Frozen noise seeds averaged by the fitness function.
    pub fitness_trials: usize,
    /// Fresh seeds used to re-evaluate the winner.
    pub fresh_trials: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings { optimizer: TsgaConfig::default(), fitness_trials: 2, fresh_trials: 20 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelRef,
    pub ocv: OcvRef,
    #[serde(default)]
    pub noise: Option<MixedNoiseSpec>,
    pub filter: FilterConfig,
    #[serde(default)]
    pub experiment: ExperimentSettings,
    #[serde(default)]
    pub tsga: Option<TuneSettings>,
    /// Filters of a comparison table; defaults to the full baseline set.
    #[serde(default)]
    pub compare: Option<Vec<FilterConfig>>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Built-in reference cell and OCV with the given noise and filter.
    pub fn reference(noise: MixedNoiseSpec, filter: FilterConfig) -> Self {
        ExperimentConfig {
            model: ModelRef::Inline(reference_ecm()),
            ocv: OcvRef::Inline(reference_ocv()),
            noise: Some(noise),
            filter,
            experiment: ExperimentSettings::default(),
            tsga: None,
            compare: None,
            base_dir: None,
        }
    }

    /// Loads a JSON (`.json`) or TOML (anything else) file, applying
    /// `key.path=value` overrides before deserializing.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        let mut value = parse_value(&text, path)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn params(&self) -> Result<EcmParams> {
        match &self.model {
            ModelRef::Inline(s) => s.to_params(),
            ModelRef::File { file } => {
                let path = self.resolve(file);
                let text = std::fs::read_to_string(&path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
                let v = parse_value(&text, &path)?;
                let spec: EcmSpec = serde_json::from_value(v).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
                spec.to_params()
            }
        }
    }

    pub fn ocv_curve(&self) -> Result<OcvCurve> {
        let curve = match &self.ocv {
            OcvRef::Inline(c) => *c,
            OcvRef::File { file } => {
                let path = self.resolve(file);
                let text = std::fs::read_to_string(&path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
                parse_ocv_json(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?
            }
        };
        curve.validate().map_err(|e| LabError::Config(format!("ocv: {e}")))?;
        Ok(curve)
    }

    pub fn noise_spec(&self) -> Result<MixedNoiseSpec> {
        let n = self.noise.ok_or_else(|| LabError::Config("noise block required for synthetic traces".into()))?;
        n.validate().map_err(|e| LabError::Config(format!("noise: {e}")))?;
        Ok(n)
    }

    /// Measurement variance for the filter, in V².
    pub fn r_variance(&self) -> Result<f64> {
        match (self.experiment.r, &self.noise) {
            (Some(r), _) if r > 0.0 => Ok(r),
            (Some(_), _) => Err(LabError::Config("experiment.r must be positive".into())),
            (None, Some(n)) => Ok(n.base_variance_volts2()),
            (None, None) => Err(LabError::Config("set experiment.r or provide a noise block".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.trials < 1 {
            return Err(LabError::Config("experiment.trials must be at least 1".into()));
        }
        if e.p0.iter().chain(&e.q).any(|v| !(*v > 0.0)) {
            return Err(LabError::Config("p0 and q entries must be positive".into()));
        }
        if e.truth_q.iter().any(|v| !(*v >= 0.0)) {
            return Err(LabError::Config("truth_q entries must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&e.soc_cutoff) {
            return Err(LabError::Config("soc_cutoff must lie in [0, 1)".into()));
        }
        self.params()?;
        let curve = self.ocv_curve()?;
        if !curve.is_monotone() {
            eprintln!("warning: OCV curve is not monotone over [{}, {}]", curve.soc_min, curve.soc_max);
        }
        self.filter.to_variant()?;
        if let Some(c) = &self.compare {
            for f in c {
                f.to_variant()?;
            }
        }
        if let Some(t) = &self.tsga {
            t.optimizer.validate().map_err(|m| LabError::Config(format!("tsga: {m}")))?;
        }
        self.r_variance()?;
        Ok(())
    }
}

pub fn parse_value(text: &str, path: &Path) -> Result<Value> {
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    } else {
        let t: toml::Value = toml::from_str(text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }
}

/// `a.b.c=value`, with `value` parsed as JSON when possible, else as a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| LabError::Config(format!("override `{spec}` is not key=value")))?;
    let val: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| LabError::Config(format!("override `{key}`: `{part}` is not inside a table")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), val);
            return Ok(());
        }
        cur = obj.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

pub fn parse_ocv_json(text: &str) -> std::result::Result<OcvCurve, String> {
    let c: OcvCurve = serde_json::from_str(text).map_err(|e| e.to_string())?;
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

pub fn reference_ecm() -> EcmSpec {
    let v: toml::Value = toml::from_str(REFERENCE_PARAMS_TOML).expect("bundled reference params");
    v.try_into().expect("bundled reference params")
}

pub fn reference_ocv() -> OcvCurve {
    parse_ocv_json(REFERENCE_OCV_JSON).expect("bundled reference OCV")
}
