//! Dataset synthesis, filter runs, comparisons, Monte Carlo sweeps and kernel tuning.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gmmee::battery::{generate_current_profile, simulate_trace, BatteryState};
use gmmee::filters::{BatteryModel, Filter, FilterState};
use gmmee::linalg::Matrix;
use gmmee::noise::derive_seed;
use gmmee::tsga::{optimize, Objective, TsgaError};

use crate::config::{ExperimentConfig, FilterConfig, TraceSource};
use crate::dataset::{load_dataset_csv_with, Dataset, DatasetMeta, TruthMode};
use crate::error::{LabError, Result};
use crate::metrics::{quantile_sorted, ErrorStats, FlagCounts, MetricsReport, StepTrace, Timing};

/// Offset separating fresh re-evaluation seeds from the frozen fitness seeds.
const FRESH_SEED_OFFSET: u64 = 1 << 32;
const OPTIMIZER_STREAM: u64 = u64::MAX;

/// Seed for stochastic sources: the explicit one, else the config's.
pub fn resolve_seed(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Option<u64>> {
    match (&cfg.experiment.source, seed.or(cfg.experiment.seed)) {
        (TraceSource::Synthetic { .. }, None) => {
            Err(LabError::Config("a seed is required for synthetic traces (--seed or experiment.seed)".into()))
        }
        (_, s) => Ok(s),
    }
}

/// Synthesizes (with `seed` driving process and measurement noise) or loads the trace.
pub fn build_dataset(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<Dataset> {
    let e = &cfg.experiment;
    match &e.source {
        TraceSource::Synthetic { profile, duration_s, dt, amplitude, profile_seed } => {
            let seed = resolve_seed(cfg, seed)?.expect("synthetic seed resolved");
            if !(0.0..=1.0).contains(&e.soc0) {
                return Err(LabError::Config("experiment.soc0 must lie in [0, 1]".into()));
            }
            let params = cfg.params()?;
            let ocv = cfg.ocv_curve()?;
            let noise = cfg.noise_spec()?;
            let currents = generate_current_profile(*profile, *duration_s, *dt, *amplitude, *profile_seed)
                .map_err(|err| LabError::Config(format!("experiment.source: {err}")))?;
            let q = Matrix::from_diag(&e.truth_q);
            let tr = simulate_trace(&params, &ocv, &currents, *dt, BatteryState::new(e.soc0, 0.0, 0.0), &q, &noise, seed)?;
            let ds = Dataset {
                t: tr.t,
                current: tr.current,
                voltage: tr.voltage,
                soc_true: Some(tr.soc_true),
                temp_c: None,
                meta: DatasetMeta {
                    source: "synthetic".into(),
                    dt: *dt,
                    temperature: e.temperature.clone(),
                    seed: Some(seed),
                    soc_initial: Some(e.soc0),
                },
            };
            ds.validate()?;
            Ok(ds)
        }
        TraceSource::Csv { path } => {
            let mut ds = load_dataset_csv_with(&cfg.resolve(path), TruthMode::Optional)?;
            ds.meta.temperature = e.temperature.clone();
            Ok(ds)
        }
    }
}

/// First sample index whose true SOC is below the cutoff (trace length if none).
pub fn cutoff_index(ds: &Dataset, cutoff: f64) -> usize {
    ds.soc_true.as_ref().and_then(|s| s.iter().position(|v| *v < cutoff)).unwrap_or(ds.len())
}

fn initial_soc(cfg: &ExperimentConfig, ds: &Dataset) -> Result<f64> {
    cfg.experiment
        .init_soc
        .or(ds.meta.soc_initial)
        .or_else(|| ds.soc_true.as_ref().map(|s| s[0]))
        .ok_or_else(|| LabError::Config("experiment.init_soc is required for data without soc_true".into()))
}

/// Builds the filter described by `filter` for the configured cell.
pub fn build_filter(cfg: &ExperimentConfig, filter: &FilterConfig) -> Result<Filter<BatteryModel>> {
    let model = BatteryModel::new(cfg.params()?, cfg.ocv_curve()?, Matrix::from_diag(&cfg.experiment.q), cfg.r_variance()?)?;
    Ok(Filter::new(model, filter.to_variant()?)?)
}

/// Runs `filter` over `ds` and scores it against the ground truth.
pub fn run_on_dataset(cfg: &ExperimentConfig, filter: &FilterConfig, ds: &Dataset) -> Result<MetricsReport> {
    let f = build_filter(cfg, filter)?;
    let e = &cfg.experiment;
    let n = cutoff_index(ds, e.soc_cutoff);
    if n <= e.warmup {
        return Err(LabError::Data(format!("only {n} samples before the SOC cutoff, warm-up is {}", e.warmup)));
    }
    let dt = ds.dt();
    let mut state = FilterState::new(&[initial_soc(cfg, ds)?, 0.0, 0.0], &Matrix::from_diag(&e.p0))?;
    let mut soc_est = Vec::with_capacity(n);
    let mut ms = Vec::with_capacity(n);
    let mut flags = FlagCounts::default();
    for k in 0..n {
        let t0 = Instant::now();
        state = f.step(&state, ds.current[k], &[ds.voltage[k]], dt)?;
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
        flags.record(&state.diagnostics);
        soc_est.push(state.x_hat[0]);
    }

    let w = e.warmup;
    let soc_true_pct: Option<Vec<f64>> = ds.soc_true.as_ref().map(|s| s[w..n].iter().map(|v| 100.0 * v).collect());
    let soc_est_pct: Vec<f64> = soc_est[w..].iter().map(|v| 100.0 * v).collect();
    let abs_err_pct: Option<Vec<f64>> =
        soc_true_pct.as_ref().map(|tr| tr.iter().zip(&soc_est_pct).map(|(a, b)| (a - b).abs()).collect());
    Ok(MetricsReport {
        filter: filter.label().to_string(),
        steps: n,
        dt,
        seed: ds.meta.seed,
        errors: abs_err_pct.as_deref().and_then(ErrorStats::from_abs_errors),
        timing: Timing::from_durations_ms(&ms),
        flags,
        trace: StepTrace {
            step: (w..n).collect(),
            t_s: ds.t[w..n].to_vec(),
            soc_est_pct,
            soc_true_pct,
            abs_err_pct,
        },
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<MetricsReport> {
    cfg.validate()?;
    let ds = build_dataset(cfg, seed)?;
    run_on_dataset(cfg, &cfg.filter, &ds)
}

/// Baseline kernels shared by the comparison and Monte Carlo tables.
pub mod baseline {
    use crate::config::FilterConfig;

    pub const MCC_BANDWIDTH: f64 = 1.0;
    pub const MEE_BETA: f64 = 1.0;
    pub const GMEE_ALPHA: f64 = 2.5;
    pub const GMEE_BETA: f64 = 1.0;
    pub const MMEE_ETA: f64 = 0.5;
    pub const MMEE_BETAS: (f64, f64) = (1.0, 0.5);

    pub fn mcc() -> FilterConfig {
        FilterConfig::mcc(MCC_BANDWIDTH)
    }
    pub fn mee() -> FilterConfig {
        FilterConfig::mee(MEE_BETA)
    }
    pub fn gmee() -> FilterConfig {
        FilterConfig::gmee(GMEE_ALPHA, GMEE_BETA)
    }
    pub fn mmee() -> FilterConfig {
        FilterConfig::mmee(MMEE_ETA, MMEE_BETAS.0, MMEE_BETAS.1)
    }
}

/// The eight table rows; the GMMEE row is the configured filter when it is one.
pub fn default_comparison_filters(cfg: &ExperimentConfig) -> Vec<FilterConfig> {
    let gmmee = match cfg.filter {
        f @ FilterConfig::Gmmee { .. } => f,
        _ => FilterConfig::gmmee(0.5, 1.5, 3.0, 30.0, 0.3),
    };
    vec![
        FilterConfig::ukf(),
        FilterConfig::Ckf,
        FilterConfig::Srckf,
        baseline::mcc(),
        baseline::mee(),
        baseline::gmee(),
        baseline::mmee(),
        gmmee,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seed: Option<u64>,
    /// Rows in table order.
    pub rows: Vec<MetricsReport>,
}

impl ComparisonTable {
    pub fn row(&self, label: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.filter == label)
    }
}

/// Runs every filter of the comparison over one shared noisy trace.
pub fn run_comparison(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<ComparisonTable> {
    cfg.validate()?;
    let ds = build_dataset(cfg, seed)?;
    let mut filters = cfg.compare.clone().unwrap_or_else(|| default_comparison_filters(cfg));
    filters.sort_by_key(FilterConfig::table_rank);
    let rows = filters.par_iter().map(|f| run_on_dataset(cfg, f, &ds)).collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable { seed: ds.meta.seed, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

/// Quartiles of the per-step absolute error across trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBands {
    pub t_s: Vec<f64>,
    pub q1: Vec<f64>,
    pub median: Vec<f64>,
    pub q3: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub filter: String,
    pub master_seed: u64,
    pub trials: usize,
    pub trial_seeds: Vec<u64>,
    /// RMSE of each successful trial, in trial order.
    pub rmse: Vec<f64>,
    pub failed: Vec<FailedTrial>,
    pub mean: f64,
    /// Sample standard deviation (zero for a single trial).
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub timing: Timing,
    pub flags: FlagCounts,
    pub bands: ErrorBands,
}

impl MonteCarloSummary {
    fn from_trials(filter: &FilterConfig, master: u64, seeds: &[u64], outcomes: Vec<std::result::Result<MetricsReport, String>>) -> Self {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(r) if r.errors.is_some() => ok.push(r),
                Ok(_) => failed.push(FailedTrial { index: i, seed: seeds[i], error: "no ground truth".into() }),
                Err(error) => failed.push(FailedTrial { index: i, seed: seeds[i], error }),
            }
        }
        let rmse: Vec<f64> = ok.iter().map(MetricsReport::rmse).collect();
        let mut sorted = rmse.clone();
        sorted.sort_by(f64::total_cmp);
        let n = rmse.len() as f64;
        let mean = rmse.iter().sum::<f64>() / n;
        let std = if rmse.len() > 1 { (rmse.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        let mut flags = FlagCounts::default();
        for r in &ok {
            flags.fp_cap += r.flags.fp_cap;
            flags.fallback += r.flags.fallback;
            flags.cov_repaired += r.flags.cov_repaired;
            flags.cost_decrease += r.flags.cost_decrease;
        }
        let timing = Timing {
            max_ms: ok.iter().map(|r| r.timing.max_ms).fold(0.0, f64::max),
            mean_ms: ok.iter().map(|r| r.timing.mean_ms).sum::<f64>() / n,
        };
        MonteCarloSummary {
            filter: filter.label().to_string(),
            master_seed: master,
            trials: seeds.len(),
            trial_seeds: seeds.to_vec(),
            mean,
            std,
            min: sorted.first().copied().unwrap_or(f64::NAN),
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted.last().copied().unwrap_or(f64::NAN),
            timing,
            flags,
            bands: error_bands(&ok),
            rmse,
            failed,
        }
    }
}

fn error_bands(reports: &[MetricsReport]) -> ErrorBands {
    let len = reports.iter().map(|r| r.abs_errors().len()).min().unwrap_or(0);
    let mut b = ErrorBands::default();
    if len == 0 {
        return b;
    }
    b.t_s = reports[0].trace.t_s[..len].to_vec();
    let mut col = Vec::with_capacity(reports.len());
    for k in 0..len {
        col.clear();
        col.extend(reports.iter().map(|r| r.abs_errors()[k]));
        col.sort_by(f64::total_cmp);
        b.q1.push(quantile_sorted(&col, 0.25));
        b.median.push(quantile_sorted(&col, 0.5));
        b.q3.push(quantile_sorted(&col, 0.75));
    }
    b
}

/// Seeds of the Monte Carlo trials: independent substreams of `master`.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|i| derive_seed(master, i)).collect()
}

/// Monte Carlo over `trials` noise realizations, every filter seeing the same traces.
/// Trials that fail are listed in the summary rather than aborting the sweep.
pub fn monte_carlo_filters(
    cfg: &ExperimentConfig,
    filters: &[FilterConfig],
    master_seed: u64,
    trials: usize,
) -> Result<Vec<MonteCarloSummary>> {
    cfg.validate()?;
    if trials < 1 {
        return Err(LabError::Config("trials must be at least 1".into()));
    }
    let seeds = trial_seeds(master_seed, trials);
    monte_carlo_on_seeds(cfg, filters, master_seed, &seeds)
}

fn monte_carlo_on_seeds(
    cfg: &ExperimentConfig,
    filters: &[FilterConfig],
    master_seed: u64,
    seeds: &[u64],
) -> Result<Vec<MonteCarloSummary>> {
    // One row per trial, one column per filter.
    let grid: Vec<Vec<std::result::Result<MetricsReport, String>>> = seeds
        .par_iter()
        .map(|&s| match build_dataset(cfg, Some(s)) {
            Ok(ds) => filters.iter().map(|f| run_on_dataset(cfg, f, &ds).map_err(|e| e.to_string())).collect(),
            Err(e) => {
                let msg = e.to_string();
                filters.iter().map(|_| Err(msg.clone())).collect()
            }
        })
        .collect();
    let mut columns: Vec<Vec<_>> = filters.iter().map(|_| Vec::with_capacity(seeds.len())).collect();
    for row in grid {
        for (c, r) in columns.iter_mut().zip(row) {
            c.push(r);
        }
    }
    Ok(filters
        .iter()
        .zip(columns)
        .map(|(f, c)| MonteCarloSummary::from_trials(f, master_seed, seeds, c))
        .collect())
}

pub fn monte_carlo(cfg: &ExperimentConfig, master_seed: u64, trials: usize) -> Result<MonteCarloSummary> {
    Ok(monte_carlo_filters(cfg, &[cfg.filter], master_seed, trials)?.remove(0))
}

/// Mean RMSE of an entropy filter over frozen noise realizations, as a function
/// of the kernel parameters `(α₁, α₂, β₁, β₂)`.
pub struct KernelObjective<'a> {
    cfg: &'a ExperimentConfig,
    datasets: Vec<Dataset>,
}

impl<'a> KernelObjective<'a> {
    pub fn new(cfg: &'a ExperimentConfig, seeds: &[u64]) -> Result<Self> {
        cfg.filter.with_kernel_params(&[2.0, 2.0, 1.0, 1.0])?;
        let datasets = seeds.iter().map(|&s| build_dataset(cfg, Some(s))).collect::<Result<Vec<_>>>()?;
        Ok(KernelObjective { cfg, datasets })
    }

    /// Numeric breakdowns score `+∞` so the search steers away from them.
    fn score(&self, position: &[f64]) -> Result<f64> {
        let f = self.cfg.filter.with_kernel_params(position)?;
        let mut total = 0.0;
        for ds in &self.datasets {
            match run_on_dataset(self.cfg, &f, ds) {
                Ok(r) => total += r.rmse(),
                Err(LabError::Numeric(_)) => return Ok(f64::INFINITY),
                Err(e) => return Err(e),
            }
        }
        Ok(total / self.datasets.len() as f64)
    }
}

impl Objective for KernelObjective<'_> {
    type Error = LabError;

    fn evaluate(&self, position: &[f64]) -> Result<f64> {
        self.score(position)
    }

    fn evaluate_batch(&self, positions: &[Vec<f64>]) -> Vec<Result<f64>> {
        positions.par_iter().map(|p| self.score(p)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorCallCounts {
    pub tsa: u64,
    pub ga: u64,
    pub explore: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    /// `(α₁, α₂, β₁, β₂)`.
    pub best_params: Vec<f64>,
    pub best_filter: FilterConfig,
    /// Mean RMSE of the winner over the frozen seeds.
    pub best_fitness: f64,
    pub frozen_seeds: Vec<u64>,
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub counts: OperatorCallCounts,
    pub wall_time_s: f64,
    /// The winner re-evaluated on seeds never seen by the search.
    pub fresh: MonteCarloSummary,
}

/// Frozen fitness seeds of a tuning run.
pub fn frozen_seeds(master: u64, n: usize) -> Vec<u64> {
    trial_seeds(master, n)
}

/// Fresh re-evaluation seeds of a tuning run, disjoint from the frozen ones.
pub fn fresh_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(master, FRESH_SEED_OFFSET + i)).collect()
}

/// Searches the kernel parameters of the configured entropy filter.
pub fn tune_kernels(cfg: &ExperimentConfig, master_seed: u64) -> Result<TuneReport> {
    cfg.validate()?;
    let tune = cfg.tsga.clone().unwrap_or_default();
    if tune.fitness_trials < 1 || tune.fresh_trials < 1 {
        return Err(LabError::Config("tsga.fitness_trials and tsga.fresh_trials must be at least 1".into()));
    }
    if tune.optimizer.bounds.len() != 4 {
        return Err(LabError::Config("tsga.bounds must list (alpha1, alpha2, beta1, beta2)".into()));
    }
    let mut opt = tune.optimizer.clone();
    opt.rng_seed = derive_seed(master_seed, OPTIMIZER_STREAM);

    let started = Instant::now();
    let seeds = frozen_seeds(master_seed, tune.fitness_trials);
    let objective = KernelObjective::new(cfg, &seeds)?;
    let res = optimize(&objective, &opt).map_err(|e| match e {
        TsgaError::InvalidConfig(m) => LabError::Config(format!("tsga: {m}")),
        TsgaError::FitnessFailure { error: Some(inner), .. } => inner,
        e @ TsgaError::FitnessFailure { error: None, .. } => LabError::Optimizer(e.to_string()),
    })?;
    let best_filter = cfg.filter.with_kernel_params(&res.best.position)?;
    let mut fresh_cfg = cfg.clone();
    fresh_cfg.filter = best_filter;
    let fresh = monte_carlo_on_seeds(&fresh_cfg, &[best_filter], master_seed, &fresh_seeds(master_seed, tune.fresh_trials))?.remove(0);
    Ok(TuneReport {
        best_params: res.best.position,
        best_filter,
        best_fitness: res.best.fitness,
        frozen_seeds: seeds,
        history: res.history,
        evaluations: res.evaluations,
        counts: OperatorCallCounts { tsa: res.counts.tsa, ga: res.counts.ga, explore: res.counts.explore },
        wall_time_s: started.elapsed().as_secs_f64(),
        fresh,
    })
}
