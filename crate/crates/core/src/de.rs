//! Differential evolution (rand/1/bin) over the last `o` couplings and the PST
//! scale `J₀`.
//!
//! The cost of a candidate is
//!
//! ```text
//! Σ_{t ≤ T/2} (1 − S(t))² + λ Σ_{t > T/2} S(t)²
//! ```
//!
//! on the grid `t = Δt, 2Δt, …, ⌊T/Δt⌋Δt`, so a good clock holds its
//! excitation for the first half of the window and releases it in the second.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, generation, member)`, so results do not depend on how the
//! population is scheduled across threads and a checkpoint only has to store
//! the population.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{build_effective_matrix, expand_profile, ChainSpec, CouplingProfile};
use crate::error::{Error, Result};
use crate::metrics::{tick_statistics, TickStatistics};
use crate::propagate::{Propagator, State};
use crate::spectral::decompose_effective;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Serializes non-finite costs as `null`.
mod cost_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|x| x.unwrap_or(f64::INFINITY))
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DEConfig {
    pub population: usize,
    pub mutation_factor: f64,
    pub crossover_rate: f64,
    pub generations: usize,
    pub lambda: f64,
    /// Cost window `T`; `None` means `10√N`.
    pub window: Option<f64>,
    /// Number of tail couplings optimized.
    pub o: usize,
    /// `[low, high]` per parameter (tail couplings then `J₀`); `None` for defaults.
    pub bounds: Option<Vec<[f64; 2]>>,
    pub seed: u64,
    pub grid_step: f64,
    pub gamma: f64,
}

impl Default for DEConfig {
    fn default() -> Self {
        DEConfig {
            population: 40,
            mutation_factor: 0.7,
            crossover_rate: 0.9,
            generations: 400,
            lambda: 1.0,
            window: None,
            o: 4,
            bounds: None,
            seed: 0,
            grid_step: 0.05,
            gamma: 1.0,
        }
    }
}

impl DEConfig {
    pub fn window_for(&self, n_sites: usize) -> f64 {
        self.window.unwrap_or(10.0 * (n_sites as f64).sqrt())
    }

    /// Default bounds: tail couplings in `[0.01, 1]`, `J₀` in `[0.1, 10]/√N`.
    pub fn bounds_for(&self, n_sites: usize) -> Vec<[f64; 2]> {
        if let Some(b) = &self.bounds {
            return b.clone();
        }
        let root = (n_sites as f64).sqrt();
        let mut b = vec![[0.01, 1.0]; self.o];
        b.push([0.1 / root, 10.0 / root]);
        b
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if n_sites < 2 {
            return bad(format!("chain needs N >= 2, got {n_sites}"));
        }
        if self.population < 4 {
            return bad(format!(
                "population must be at least 4, got {}",
                self.population
            ));
        }
        if !(0.0..=2.0).contains(&self.mutation_factor) {
            return bad(format!(
                "mutation factor must lie in [0, 2], got {}",
                self.mutation_factor
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!(
                "crossover rate must lie in [0, 1], got {}",
                self.crossover_rate
            ));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return bad(format!(
                "grid step must be positive, got {}",
                self.grid_step
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        let window = self.window_for(n_sites);
        if !(window > 0.0 && window.is_finite()) {
            return bad(format!("window must be positive, got {window}"));
        }
        if self.o + 1 > n_sites {
            return bad(format!(
                "o = {} tail couplings do not fit N = {n_sites}",
                self.o
            ));
        }
        let bounds = self.bounds_for(n_sites);
        if bounds.len() != self.o + 1 {
            return bad(format!(
                "expected {} bounds, got {}",
                self.o + 1,
                bounds.len()
            ));
        }
        for [lo, hi] in &bounds {
            if !(*lo > 0.0 && lo < hi && hi.is_finite()) {
                return bad(format!(
                    "bounds must satisfy 0 < low < high, got [{lo}, {hi}]"
                ));
            }
        }
        Ok(())
    }

    /// True when a run with `self` can continue a run started with `other`:
    /// everything but the generation count must agree.
    pub fn resumable_from(&self, other: &DEConfig) -> bool {
        let mut a = self.clone();
        a.generations = other.generations;
        &a == other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Tail couplings `J_{N−o}..J_{N−1}` then `J₀`.
    pub params: Vec<f64>,
    #[serde(with = "cost_serde")]
    pub cost: f64,
}

/// Chain spec for a parameter vector: PST with the tail replaced.
pub fn spec_from_params(params: &[f64], n_sites: usize, gamma: f64) -> Result<ChainSpec> {
    let (j0, tail) = params
        .split_last()
        .ok_or_else(|| Error::InvalidInput("empty parameter vector".into()))?;
    let profile = if tail.is_empty() {
        CouplingProfile::Pst { j0: *j0 }
    } else {
        CouplingProfile::PstWithTailOverrides {
            j0: *j0,
            tail_overrides: tail.to_vec(),
            o: None,
        }
    };
    expand_profile(&profile, n_sites, gamma)
}

/// Window cost of a chain, evaluated by direct propagation on the cost grid.
pub fn survival_cost(spec: &ChainSpec, window: f64, lambda: f64, grid_step: f64) -> f64 {
    survival_cost_bounded(spec, window, lambda, grid_step, f64::INFINITY)
}

/// Like [`survival_cost`], but stops as soon as the partial sum reaches
/// `bound`. Every term is non-negative, so a returned value `>= bound`
/// certifies that the full cost is at least `bound` too.
pub fn survival_cost_bounded(
    spec: &ChainSpec,
    window: f64,
    lambda: f64,
    grid_step: f64,
    bound: f64,
) -> f64 {
    let Ok(prop) = Propagator::new(&build_effective_matrix(spec)) else {
        return f64::INFINITY;
    };
    let steps = (window / grid_step + 1e-9).floor() as usize;
    let half = 0.5 * window;
    let stepper = prop.stepper(grid_step);
    let mut work = prop.workspace();
    let mut psi = State::site(prop.dim(), 0);
    let (mut early, mut late) = (0.0, 0.0);
    for k in 1..=steps {
        prop.step(&stepper, &mut psi, &mut work);
        let s = psi.norm_sqr();
        if k as f64 * grid_step <= half {
            early += (1.0 - s) * (1.0 - s);
        } else {
            late += s * s;
        }
        if early + lambda * late >= bound {
            return early + lambda * late;
        }
    }
    let total = early + lambda * late;
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Cost of a parameter vector; out-of-bounds or failing candidates cost `∞`.
pub fn cost(params: &[f64], n_sites: usize, config: &DEConfig) -> f64 {
    cost_bounded(params, n_sites, config, f64::INFINITY)
}

/// Cost evaluation that may stop early once the result is known to be `>= bound`.
pub fn cost_bounded(params: &[f64], n_sites: usize, config: &DEConfig, bound: f64) -> f64 {
    let bounds = config.bounds_for(n_sites);
    let inside = params.len() == bounds.len()
        && params
            .iter()
            .zip(&bounds)
            .all(|(p, [lo, hi])| p.is_finite() && lo <= p && p <= hi);
    if !inside {
        return f64::INFINITY;
    }
    match spec_from_params(params, n_sites, config.gamma) {
        Ok(spec) => survival_cost_bounded(
            &spec,
            config.window_for(n_sites),
            config.lambda,
            config.grid_step,
            bound,
        ),
        Err(_) => f64::INFINITY,
    }
}

/// Reflects `v` into `[lo, hi]` and clamps whatever still falls outside.
fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let r = if v < lo {
        lo + (lo - v)
    } else if v > hi {
        hi - (v - hi)
    } else {
        v
    };
    r.clamp(lo, hi)
}

/// `x_a + F(x_b − x_c)` with `a, b, c` distinct and different from `target`.
pub fn mutate<R: Rng>(
    population: &[Vec<f64>],
    target: usize,
    factor: f64,
    bounds: &[[f64; 2]],
    rng: &mut R,
) -> Vec<f64> {
    let m = population.len();
    assert!(m >= 4, "mutation needs at least four members");
    let mut pick = |taken: &[usize]| loop {
        let i = rng.random_range(0..m);
        if !taken.contains(&i) {
            return i;
        }
    };
    let a = pick(&[target]);
    let b = pick(&[target, a]);
    let c = pick(&[target, a, b]);
    population[a]
        .iter()
        .zip(&population[b])
        .zip(&population[c])
        .zip(bounds)
        .map(|(((xa, xb), xc), [lo, hi])| reflect(xa + factor * (xb - xc), *lo, *hi))
        .collect()
}

/// Binomial crossover: component `j` comes from the mutant when `r_j < CR`,
/// and one randomly chosen component always does.
pub fn crossover<R: Rng>(mutant: &[f64], target: &[f64], rate: f64, rng: &mut R) -> Vec<f64> {
    assert_eq!(mutant.len(), target.len());
    let forced = rng.random_range(0..mutant.len());
    mutant
        .iter()
        .zip(target)
        .enumerate()
        .map(|(j, (m, t))| {
            let r: f64 = rng.random();
            if r < rate || j == forced {
                *m
            } else {
                *t
            }
        })
        .collect()
}

/// The trial replaces the target only if strictly cheaper.
pub fn select<'a>(trial: &'a Candidate, target: &'a Candidate) -> &'a Candidate {
    if trial.cost < target.cost {
        trial
    } else {
        target
    }
}

fn member_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Resumable optimizer state. The random streams are a function of
/// `(seed, generation, member)`, so no generator state is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub n_sites: usize,
    pub config: DEConfig,
    /// Completed generations.
    pub generation: usize,
    pub population: Vec<Candidate>,
    /// Best cost after initialization and after each generation.
    #[serde(with = "cost_serde::vec")]
    pub cost_trace: Vec<f64>,
    pub evaluations: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if cp.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::ResumeMismatch(format!(
                "checkpoint schema {} is not supported (expected {})",
                cp.schema_version, CHECKPOINT_SCHEMA_VERSION
            )));
        }
        Ok(cp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub n_sites: usize,
    pub config: DEConfig,
    pub best: Candidate,
    #[serde(with = "cost_serde::vec")]
    pub cost_trace: Vec<f64>,
    pub evaluations: u64,
    pub statistics: TickStatistics,
    pub spec: ChainSpec,
}

pub struct Optimizer {
    state: Checkpoint,
    bounds: Vec<[f64; 2]>,
}

impl Optimizer {
    /// Draws and evaluates the initial population.
    pub fn new(n_sites: usize, config: DEConfig) -> Result<Self> {
        config.validate(n_sites)?;
        let bounds = config.bounds_for(n_sites);
        let mut rng = member_rng(config.seed, 0);
        let params: Vec<Vec<f64>> = (0..config.population)
            .map(|_| {
                bounds
                    .iter()
                    .map(|[lo, hi]| rng.random_range(*lo..*hi))
                    .collect()
            })
            .collect();
        let population: Vec<Candidate> = params
            .into_par_iter()
            .map(|p| Candidate {
                cost: cost(&p, n_sites, &config),
                params: p,
            })
            .collect();
        if population.iter().all(|c| !c.cost.is_finite()) {
            return Err(Error::Optimizer(
                "every initial candidate failed to evaluate; widen the parameter bounds".into(),
            ));
        }
        let best = population
            .iter()
            .map(|c| c.cost)
            .fold(f64::INFINITY, f64::min);
        let evaluations = population.len() as u64;
        Ok(Optimizer {
            state: Checkpoint {
                schema_version: CHECKPOINT_SCHEMA_VERSION,
                n_sites,
                config,
                generation: 0,
                population,
                cost_trace: vec![best],
                evaluations,
            },
            bounds,
        })
    }

    /// Continues from a checkpoint; `config` may only differ in its generation count.
    pub fn resume(checkpoint: Checkpoint, n_sites: usize, config: DEConfig) -> Result<Self> {
        if checkpoint.n_sites != n_sites {
            return Err(Error::ResumeMismatch(format!(
                "checkpoint is for N = {}, requested N = {n_sites}",
                checkpoint.n_sites
            )));
        }
        if !config.resumable_from(&checkpoint.config) {
            return Err(Error::ResumeMismatch(
                "optimizer settings differ from the checkpoint".into(),
            ));
        }
        config.validate(n_sites)?;
        if checkpoint.population.len() != config.population
            || checkpoint.cost_trace.len() != checkpoint.generation + 1
        {
            return Err(Error::ResumeMismatch(
                "checkpoint is internally inconsistent".into(),
            ));
        }
        if checkpoint.generation > config.generations {
            return Err(Error::ResumeMismatch(format!(
                "checkpoint is at generation {}, beyond the requested {}",
                checkpoint.generation, config.generations
            )));
        }
        let bounds = config.bounds_for(n_sites);
        let mut state = checkpoint;
        state.config = config;
        Ok(Optimizer { state, bounds })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.generation >= self.state.config.generations
    }

    pub fn best(&self) -> &Candidate {
        self.state
            .population
            .iter()
            .reduce(|best, c| if c.cost < best.cost { c } else { best })
            .expect("population is never empty")
    }

    /// Runs one generation.
    pub fn step(&mut self) {
        let st = &self.state;
        let cfg = &st.config;
        let params: Vec<Vec<f64>> = st.population.iter().map(|c| c.params.clone()).collect();
        let generation = st.generation as u64;
        let trials: Vec<Candidate> = (0..cfg.population)
            .into_par_iter()
            .map(|i| {
                let mut rng = member_rng(cfg.seed, ((generation + 1) << 32) | i as u64);
                let mutant = mutate(&params, i, cfg.mutation_factor, &self.bounds, &mut rng);
                let trial = crossover(&mutant, &params[i], cfg.crossover_rate, &mut rng);
                // A trial only matters if it beats its target, so its cost
                // need not be resolved beyond the target's.
                Candidate {
                    cost: cost_bounded(&trial, st.n_sites, cfg, st.population[i].cost),
                    params: trial,
                }
            })
            .collect();
        let next: Vec<Candidate> = trials
            .into_iter()
            .zip(&self.state.population)
            .map(|(trial, target)| select(&trial, target).clone())
            .collect();
        self.state.evaluations += next.len() as u64;
        self.state.population = next;
        self.state.generation += 1;
        let best = self.best().cost;
        self.state.cost_trace.push(best);
    }

    /// Runs the remaining generations, calling `on_generation` after each one.
    pub fn run_with<F>(&mut self, mut on_generation: F) -> Result<()>
    where
        F: FnMut(&Checkpoint) -> Result<()>,
    {
        while !self.is_done() {
            self.step();
            on_generation(&self.state)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<OptimizationResult> {
        let best = self.best().clone();
        let st = self.state;
        let spec = spec_from_params(&best.params, st.n_sites, st.config.gamma)?;
        let spectrum = decompose_effective(&build_effective_matrix(&spec))?;
        let statistics = tick_statistics(&spectrum)?;
        Ok(OptimizationResult {
            n_sites: st.n_sites,
            config: st.config,
            best,
            cost_trace: st.cost_trace,
            evaluations: st.evaluations,
            statistics,
            spec,
        })
    }
}

/// Full optimization run.
pub fn optimize(n_sites: usize, config: &DEConfig) -> Result<OptimizationResult> {
    let mut opt = Optimizer::new(n_sites, config.clone())?;
    opt.run_with(|_| Ok(()))?;
    opt.finish()
}
