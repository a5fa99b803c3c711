//! Tree-seed search hybridized with real-coded genetic operators.
//!
//! Each tree spawns seeds; per seed dimension a search-tendency gate picks
//! either the best-guided tree-seed move or crossover plus mutation against a
//! random peer. Trees are replaced greedily by their best seed.
//!
//! Dimensions flagged `log_scale` are searched in `ln` coordinates: every
//! operator, bound and mutation width applies to `ln x`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::noise::sample_gaussian;

/// Closed search interval of one dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub log_scale: bool,
}

impl Bound {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Bound { lo, hi, log_scale: false }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Bound { lo, hi, log_scale: true }
    }

    fn to_internal(&self, x: f64) -> f64 {
        if self.log_scale {
            libm::log(x)
        } else {
            x
        }
    }

    fn from_internal(&self, u: f64) -> f64 {
        let x = if self.log_scale { libm::exp(u) } else { u };
        x.clamp(self.lo, self.hi)
    }

    fn internal_range(&self) -> (f64, f64) {
        (self.to_internal(self.lo), self.to_internal(self.hi))
    }

    /// Clamp in internal coordinates.
    pub fn clamp_internal(&self, u: f64) -> f64 {
        let (lo, hi) = self.internal_range();
        u.clamp(lo, hi)
    }

    /// Midpoint in internal coordinates (geometric mean for log dimensions).
    pub fn midpoint(&self) -> f64 {
        let (lo, hi) = self.internal_range();
        self.from_internal(0.5 * (lo + hi))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Exploration rule used when the search-tendency gate does not fire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExploreRule {
    /// Crossover and mutation (the hybrid).
    #[default]
    Genetic,
    /// `w·R + σ·(R − R_peer)` (plain tree-seed search).
    TreeSeed,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TsgaConfig {
    pub population: usize,
    pub max_iter: usize,
    /// Search tendency: probability of the best-guided move per dimension.
    pub st: f64,
    pub w_start: f64,
    pub w_end: f64,
    pub seed_frac_lo: f64,
    pub seed_frac_hi: f64,
    pub bounds: Vec<Bound>,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation_sigma_frac: f64,
    pub explore: ExploreRule,
    pub rng_seed: u64,
}

impl Default for TsgaConfig {
    fn default() -> Self {
        TsgaConfig {
            population: 10,
            max_iter: 20,
            st: 0.6,
            w_start: 0.9,
            w_end: 0.4,
            seed_frac_lo: 0.10,
            seed_frac_hi: 0.25,
            bounds: default_kernel_bounds(),
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma_frac: 0.1,
            explore: ExploreRule::Genetic,
            rng_seed: 0,
        }
    }
}

/// `(α₁, α₂, β₁, β₂)` bounds: α in `[1.2, 6]`, β log-scaled in `[1e-3, 1e2]`.
pub fn default_kernel_bounds() -> Vec<Bound> {
    alloc::vec![Bound::linear(1.2, 6.0), Bound::linear(1.2, 6.0), Bound::log(1e-3, 1e2), Bound::log(1e-3, 1e2)]
}

impl TsgaConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.population < 2 {
            return Err("population must be at least 2");
        }
        if self.max_iter < 1 {
            return Err("max_iter must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.st) {
            return Err("st must lie in [0, 1]");
        }
        if !(0.0 < self.seed_frac_lo && self.seed_frac_lo <= self.seed_frac_hi && self.seed_frac_hi <= 1.0) {
            return Err("seed fractions must satisfy 0 < lo <= hi <= 1");
        }
        if self.bounds.is_empty() {
            return Err("at least one bound is required");
        }
        for b in &self.bounds {
            if !(b.lo <= b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
                return Err("bounds need lo <= hi");
            }
            if b.log_scale && !(b.lo > 0.0) {
                return Err("log-scaled bounds must be positive");
            }
        }
        let rates = [self.crossover_rate, self.mutation_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) || !(self.mutation_sigma_frac >= 0.0) {
            return Err("GA rates must lie in [0, 1] and sigma fraction must be non-negative");
        }
        Ok(())
    }

    /// Seeds per tree: `[⌈lo·N⌉, ⌈hi·N⌉]`, at least one.
    pub fn seed_count_range(&self) -> (usize, usize) {
        let n = self.population as f64;
        let lo = (libm::ceil(self.seed_frac_lo * n) as usize).max(1);
        let hi = (libm::ceil(self.seed_frac_hi * n) as usize).max(lo);
        (lo, hi)
    }

    /// Linear inertia schedule from `w_start` to `w_end`.
    pub fn inertia(&self, iter: usize) -> f64 {
        if self.max_iter <= 1 {
            return self.w_start;
        }
        let f = iter as f64 / (self.max_iter - 1) as f64;
        self.w_start + (self.w_end - self.w_start) * f
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub position: Vec<f64>,
    /// `f64::INFINITY` until evaluated.
    pub fitness: f64,
}

/// Eq.-(33)-style best-guided move in internal coordinates, clamped.
pub fn tsa_seed_value(current: f64, best: f64, peer: f64, w: f64, sigma: f64, bound: &Bound) -> f64 {
    bound.clamp_internal(w * current + sigma * (best - peer))
}

/// Exploratory move `w·R + σ·(R − R_peer)`, clamped.
pub fn tsa_explore_value(current: f64, peer: f64, w: f64, sigma: f64, bound: &Bound) -> f64 {
    bound.clamp_internal(w * current + sigma * (current - peer))
}

/// Arithmetic crossover with weight `u` (if any), then additive mutation `z`
/// in units of the internal range (if any), clamped.
pub fn ga_offspring_value(current: f64, peer: f64, u: Option<f64>, z: Option<f64>, sigma_frac: f64, bound: &Bound) -> f64 {
    let mut child = match u {
        Some(u) => u * current + (1.0 - u) * peer,
        None => current,
    };
    if let Some(z) = z {
        let (lo, hi) = bound.internal_range();
        child += z * sigma_frac * (hi - lo);
    }
    bound.clamp_internal(child)
}

/// Random-draw wrapper over [`tsa_seed_value`] with `σ ~ U[−1, 1]`.
pub fn tsa_seed_dim<R: Rng + ?Sized>(current: f64, best: f64, peer: f64, w: f64, bound: &Bound, rng: &mut R) -> f64 {
    let sigma = rng.random_range(-1.0..=1.0);
    tsa_seed_value(current, best, peer, w, sigma, bound)
}

/// Random-draw wrapper over [`tsa_explore_value`].
pub fn tsa_seed_dim_exploratory<R: Rng + ?Sized>(current: f64, peer: f64, w: f64, bound: &Bound, rng: &mut R) -> f64 {
    let sigma = rng.random_range(-1.0..=1.0);
    tsa_explore_value(current, peer, w, sigma, bound)
}

/// Random-draw wrapper over [`ga_offspring_value`].
pub fn ga_offspring_dim<R: Rng + ?Sized>(current: f64, peer: f64, cfg: &TsgaConfig, bound: &Bound, rng: &mut R) -> f64 {
    let u = if rng.random::<f64>() < cfg.crossover_rate { Some(rng.random::<f64>()) } else { None };
    let z = if rng.random::<f64>() < cfg.mutation_rate { Some(sample_gaussian(0.0, 1.0, rng)) } else { None };
    ga_offspring_value(current, peer, u, z, cfg.mutation_sigma_frac, bound)
}

/// Uniform initial population inside the bounds (log-uniform on log dimensions).
pub fn init_population(cfg: &TsgaConfig) -> Vec<Individual> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    init_with(cfg, &mut rng)
}

fn init_with<R: Rng + ?Sized>(cfg: &TsgaConfig, rng: &mut R) -> Vec<Individual> {
    (0..cfg.population)
        .map(|_| Individual {
            position: cfg
                .bounds
                .iter()
                .map(|b| {
                    let (lo, hi) = b.internal_range();
                    b.from_internal(lo + rng.random::<f64>() * (hi - lo))
                })
                .collect(),
            fitness: f64::INFINITY,
        })
        .collect()
}

/// Something to minimize.
pub trait Objective {
    type Error;

    fn evaluate(&self, position: &[f64]) -> Result<f64, Self::Error>;

    /// Evaluates independent positions. Implementations may run them
    /// concurrently but must return results in input order.
    fn evaluate_batch(&self, positions: &[Vec<f64>]) -> Vec<Result<f64, Self::Error>> {
        positions.iter().map(|p| self.evaluate(p)).collect()
    }
}

/// Adapts an infallible closure into an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    type Error = core::convert::Infallible;

    fn evaluate(&self, position: &[f64]) -> Result<f64, Self::Error> {
        Ok((self.0)(position))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TsgaError<E> {
    InvalidConfig(&'static str),
    /// The objective failed (or returned NaN, `error = None`) at `position`.
    FitnessFailure { position: Vec<f64>, error: Option<E> },
}

impl<E: core::fmt::Display> core::fmt::Display for TsgaError<E> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TsgaError::InvalidConfig(m) => write!(f, "invalid TSGA configuration: {m}"),
            TsgaError::FitnessFailure { position, error: Some(e) } => {
                write!(f, "fitness evaluation failed at {position:?}: {e}")
            }
            TsgaError::FitnessFailure { position, error: None } => {
                write!(f, "fitness evaluation returned NaN at {position:?}")
            }
        }
    }
}

impl<E: core::fmt::Debug + core::fmt::Display> core::error::Error for TsgaError<E> {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OperatorCounts {
    /// Best-guided tree-seed dimension updates.
    pub tsa: u64,
    /// Crossover/mutation dimension updates.
    pub ga: u64,
    /// Plain exploratory tree-seed dimension updates.
    pub explore: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsgaResult {
    pub best: Individual,
    /// Best fitness after each iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub counts: OperatorCounts,
}

fn evaluate_all<O: Objective>(obj: &O, positions: &[Vec<f64>]) -> Result<Vec<f64>, TsgaError<O::Error>> {
    let out = obj.evaluate_batch(positions);
    let mut fit = Vec::with_capacity(out.len());
    for (p, r) in positions.iter().zip(out) {
        match r {
            Ok(v) if v.is_nan() => return Err(TsgaError::FitnessFailure { position: p.clone(), error: None }),
            Ok(v) => fit.push(v),
            Err(e) => return Err(TsgaError::FitnessFailure { position: p.clone(), error: Some(e) }),
        }
    }
    Ok(fit)
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Runs the hybrid search for `cfg.max_iter` generations.
///
/// Seeds of one generation are generated from the population as it stood at
/// the start of that generation and evaluated as a single batch, so the
/// result does not depend on how the objective schedules evaluations.
pub fn optimize<O: Objective>(objective: &O, cfg: &TsgaConfig) -> Result<TsgaResult, TsgaError<O::Error>> {
    cfg.validate().map_err(TsgaError::InvalidConfig)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let dims = cfg.bounds.len();
    let n = cfg.population;
    let mut pop = init_with(cfg, &mut rng);
    let positions: Vec<Vec<f64>> = pop.iter().map(|t| t.position.clone()).collect();
    let fit = evaluate_all(objective, &positions)?;
    for (t, f) in pop.iter_mut().zip(fit) {
        t.fitness = f;
    }
    let mut evaluations = n;
    let mut best = pop[argmin(&pop.iter().map(|t| t.fitness).collect::<Vec<_>>())].clone();
    let mut history = Vec::with_capacity(cfg.max_iter);
    let mut counts = OperatorCounts::default();
    let (ns_lo, ns_hi) = cfg.seed_count_range();

    for iter in 0..cfg.max_iter {
        let w = cfg.inertia(iter);
        let internal: Vec<Vec<f64>> = pop
            .iter()
            .map(|t| t.position.iter().zip(&cfg.bounds).map(|(x, b)| b.to_internal(*x)).collect())
            .collect();
        let best_u: Vec<f64> = best.position.iter().zip(&cfg.bounds).map(|(x, b)| b.to_internal(*x)).collect();

        let mut seeds: Vec<Vec<f64>> = Vec::new();
        let mut owner: Vec<usize> = Vec::new();
        for i in 0..n {
            let ns = rng.random_range(ns_lo..=ns_hi);
            for _ in 0..ns {
                let mut s = Vec::with_capacity(dims);
                for (j, b) in cfg.bounds.iter().enumerate() {
                    let mut r = rng.random_range(0..n - 1);
                    if r >= i {
                        r += 1;
                    }
                    let cur = internal[i][j];
                    let peer = internal[r][j];
                    let u = if rng.random::<f64>() < cfg.st {
                        counts.tsa += 1;
                        tsa_seed_dim(cur, best_u[j], peer, w, b, &mut rng)
                    } else {
                        match cfg.explore {
                            ExploreRule::Genetic => {
                                counts.ga += 1;
                                ga_offspring_dim(cur, peer, cfg, b, &mut rng)
                            }
                            ExploreRule::TreeSeed => {
                                counts.explore += 1;
                                tsa_seed_dim_exploratory(cur, peer, w, b, &mut rng)
                            }
                        }
                    };
                    s.push(b.from_internal(u));
                }
                seeds.push(s);
                owner.push(i);
            }
        }

        let fit = evaluate_all(objective, &seeds)?;
        evaluations += seeds.len();
        let mut start = 0;
        while start < seeds.len() {
            let i = owner[start];
            let end = start + owner[start..].iter().take_while(|&&o| o == i).count();
            let k = start + argmin(&fit[start..end]);
            if fit[k] < pop[i].fitness {
                pop[i] = Individual { position: seeds[k].clone(), fitness: fit[k] };
            }
            start = end;
        }
        let cur = &pop[argmin(&pop.iter().map(|t| t.fitness).collect::<Vec<_>>())];
        if cur.fitness < best.fitness {
            best = cur.clone();
        }
        history.push(best.fitness);
    }
    Ok(TsgaResult { best, history, evaluations, counts })
}
