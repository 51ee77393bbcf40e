//! Langevin-Monte-Carlo sampling of protocol space.
//!
//! One iteration ("sweep") is `L` single-site attempts at uniformly random
//! sites. A proposal adds Gaussian noise of width `sigma` to one amplitude;
//! proposals that leave `[−1, 1]` are rejected outright, the rest are
//! accepted with probability `min(1, exp(−β L ΔI))`, or `min(1, exp(−β ΔI))`
//! when the cost is taken as intensive.
//!
//! The quantum cost keeps forward states `U_k⋯U_1|ψ₀⟩` and backward states
//! `U_{k+1}†⋯U_L†|ψ*⟩` at every step boundary, so evaluating a single-site
//! proposal needs one step propagator and one matrix-vector product. Stale
//! cache entries after an accepted move are rebuilt lazily, and everything is
//! recomputed from scratch once per sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{slice_magnetization, Protocol, SampleSet};
use crate::quantum::linalg::{inner, C64};
use crate::quantum::{infidelity_of, ChebyshevPropagator, ControlProblem, Mat4, QuantumState};

/// How the first protocol of every run is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum InitKind {
    /// Each site uniform on `[0, 1]`.
    UniformUnit,
    /// Each site uniform on `[−1, 1]`.
    UniformSymmetric,
    Zero,
    Given(Vec<f64>),
}

/// Geometric ramp of β from `beta_start` (capped at the target) to the
/// target β over the first `ramp_sweeps` burn-in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Anneal {
    pub enabled: bool,
    pub beta_start: f64,
    pub ramp_sweeps: usize,
}

impl Default for Anneal {
    fn default() -> Self {
        Anneal {
            enabled: true,
            beta_start: 1e2,
            ramp_sweeps: 1 << 14,
        }
    }
}

impl Anneal {
    pub fn off() -> Self {
        Anneal {
            enabled: false,
            ..Anneal::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmcConfig {
    /// Number of piecewise-constant steps `L`.
    pub steps: usize,
    /// Protocol duration `T`.
    pub duration: f64,
    pub beta: f64,
    pub sigma: f64,
    pub burn_in: usize,
    /// Sweeps between two recorded samples.
    pub delta_n: usize,
    /// Samples per run `M`.
    pub samples: usize,
    /// Independent runs `R`.
    pub runs: usize,
    pub anneal: Anneal,
    pub seed: u64,
    pub init: InitKind,
    /// Scale the cost by `L` in the acceptance test.
    pub extensive: bool,
}

impl Default for LmcConfig {
    fn default() -> Self {
        LmcConfig {
            steps: 64,
            duration: 3.0,
            beta: 1e6,
            sigma: 1e-2,
            burn_in: 1 << 15,
            delta_n: 1 << 14,
            samples: 1 << 12,
            runs: 64,
            anneal: Anneal::default(),
            seed: 0,
            init: InitKind::UniformSymmetric,
            extensive: true,
        }
    }
}

impl LmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.steps == 0 {
            return bad("steps (L) must be at least 1".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.delta_n == 0 || self.samples == 0 {
            return bad("delta_n and samples must be at least 1".into());
        }
        if self.runs < 2 {
            return bad(format!("need at least 2 runs, got {}", self.runs));
        }
        let a = &self.anneal;
        if a.enabled && !(a.beta_start.is_finite() && a.beta_start > 0.0) {
            return bad(format!("anneal beta_start must be positive, got {}", a.beta_start));
        }
        if let InitKind::Given(v) = &self.init {
            if v.len() != self.steps || v.iter().any(|x| !(x.abs() <= 1.0)) {
                return bad("given initial protocol must have L amplitudes in [-1, 1]".into());
            }
        }
        Ok(())
    }

    /// Inverse temperature entering the Metropolis test for a nominal β.
    pub fn acceptance_beta(&self, beta: f64) -> f64 {
        if self.extensive {
            beta * self.steps as f64
        } else {
            beta
        }
    }

    /// β used during burn-in sweep `k`.
    pub fn burn_in_beta(&self, k: usize) -> f64 {
        let a = &self.anneal;
        if a.enabled && a.ramp_sweeps > 1 && k < a.ramp_sweeps {
            let start = a.beta_start.min(self.beta);
            let frac = k as f64 / (a.ramp_sweeps - 1) as f64;
            start * (self.beta / start).powf(frac)
        } else {
            self.beta
        }
    }
}

/// Random stream of run `run_index`: the ChaCha key comes from the base seed
/// and the run index selects the stream, so streams never overlap.
pub fn run_rng(seed: u64, run_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index as u64);
    rng
}

pub fn init_protocol<R: Rng>(config: &LmcConfig, rng: &mut R) -> Result<Protocol> {
    let values = match &config.init {
        InitKind::UniformUnit => (0..config.steps).map(|_| rng.random::<f64>()).collect(),
        InitKind::UniformSymmetric => (0..config.steps).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        InitKind::Zero => vec![0.0; config.steps],
        InitKind::Given(v) => v.clone(),
    };
    Protocol::new(values, config.duration)
}

/// Metropolis acceptance probability `min(1, exp(−β ΔI))`.
pub fn acceptance_probability(delta: f64, beta: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else {
        (-beta * delta).exp()
    }
}

/// A cost over protocol amplitudes that can score single-site changes.
pub trait SiteCost {
    /// Rebuilds all internal state for `values` and returns the cost.
    fn reset(&mut self, values: &[f64]) -> f64;
    /// Recomputes the cost of the committed state from scratch, discarding
    /// any accumulated roundoff. Defaults to a full reset.
    fn refresh(&mut self, values: &[f64]) -> f64 {
        self.reset(values)
    }
    /// Cost after changing `site` to `value`, leaving the current state intact.
    fn propose(&mut self, values: &[f64], site: usize, value: f64) -> f64;
    /// Commits the most recent proposal.
    fn commit(&mut self, site: usize, value: f64);
}

/// Infidelity with cached forward/backward states.
#[derive(Debug, Clone)]
pub struct QuantumCost {
    problem: ControlProblem,
    propagator: ChebyshevPropagator,
    unitaries: Vec<Mat4>,
    forward: Vec<[C64; 4]>,
    backward: Vec<[C64; 4]>,
    /// `forward[..=forward_valid]` are current.
    forward_valid: usize,
    /// `backward[backward_valid..]` are current.
    backward_valid: usize,
    pending: Option<Mat4>,
}

impl QuantumCost {
    pub fn new(problem: ControlProblem, steps: usize, duration: f64) -> Self {
        let zero = [C64::new(0.0, 0.0); 4];
        QuantumCost {
            problem,
            propagator: ChebyshevPropagator::new(problem.params, duration / steps as f64),
            unitaries: vec![Mat4::identity(); steps],
            forward: vec![zero; steps + 1],
            backward: vec![zero; steps + 1],
            forward_valid: 0,
            backward_valid: steps,
            pending: None,
        }
    }

    fn ensure_forward(&mut self, upto: usize) {
        while self.forward_valid < upto {
            let k = self.forward_valid;
            self.forward[k + 1] = self.unitaries[k].apply(&self.forward[k]);
            self.forward_valid += 1;
        }
    }

    fn ensure_backward(&mut self, from: usize) {
        while self.backward_valid > from {
            let k = self.backward_valid - 1;
            self.backward[k] = self.unitaries[k].apply_adjoint(&self.backward[k + 1]);
            self.backward_valid -= 1;
        }
    }

    fn current_from_cache(&mut self) -> f64 {
        let steps = self.unitaries.len();
        self.ensure_forward(steps);
        infidelity_of(&self.problem.target, &QuantumState::new(self.forward[steps]))
    }
}

impl SiteCost for QuantumCost {
    fn reset(&mut self, values: &[f64]) -> f64 {
        let steps = values.len();
        assert_eq!(steps, self.unitaries.len());
        for (u, &s) in self.unitaries.iter_mut().zip(values) {
            *u = self.propagator.step(s);
        }
        self.refresh(values)
    }

    /// Step unitaries are exact functions of the committed amplitudes, so only
    /// the cached states are rebuilt.
    fn refresh(&mut self, values: &[f64]) -> f64 {
        let steps = values.len();
        self.forward[0] = self.problem.initial.amplitudes;
        self.forward_valid = 0;
        self.backward[steps] = self.problem.target.amplitudes;
        self.backward_valid = steps;
        self.ensure_backward(0);
        self.pending = None;
        self.current_from_cache()
    }

    fn propose(&mut self, _values: &[f64], site: usize, value: f64) -> f64 {
        self.ensure_forward(site);
        self.ensure_backward(site + 1);
        let u = self.propagator.step(value);
        let amp = inner(&self.backward[site + 1], &u.apply(&self.forward[site]));
        self.pending = Some(u);
        (1.0 - amp.norm_sqr()).clamp(0.0, 1.0)
    }

    fn commit(&mut self, site: usize, _value: f64) {
        let u = self.pending.take().expect("commit without a proposal");
        self.forward[site + 1] = u.apply(&self.forward[site]);
        self.backward[site] = u.apply_adjoint(&self.backward[site + 1]);
        self.unitaries[site] = u;
        self.forward_valid = site + 1;
        self.backward_valid = site;
    }
}

/// Result of one attempted single-site update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attempt {
    Accepted { delta: f64 },
    Rejected { delta: f64 },
    OutOfBounds,
}

/// A single Markov chain over protocol amplitudes.
#[derive(Debug, Clone)]
pub struct Chain<C: SiteCost> {
    values: Vec<f64>,
    cost: C,
    current: f64,
    pub beta: f64,
    pub sigma: f64,
    rng: ChaCha8Rng,
    attempts: u64,
    accepts: u64,
}

impl<C: SiteCost> Chain<C> {
    pub fn new(mut cost: C, values: Vec<f64>, beta: f64, sigma: f64, rng: ChaCha8Rng) -> Self {
        let current = cost.reset(&values);
        Chain {
            values,
            cost,
            current,
            beta,
            sigma,
            rng,
            attempts: 0,
            accepts: 0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cost as tracked incrementally.
    pub fn cost(&self) -> f64 {
        self.current
    }

    pub fn cost_model(&mut self) -> &mut C {
        &mut self.cost
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepts as f64 / self.attempts as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.attempts = 0;
        self.accepts = 0;
    }

    /// Proposes `s_site + ξ` with `ξ ~ N(0, σ²)`.
    pub fn attempt_site_update(&mut self, site: usize) -> Attempt {
        let xi: f64 = self.rng.sample(StandardNormal);
        self.attempt_value(site, self.values[site] + self.sigma * xi)
    }

    /// Metropolis step towards an explicit proposal.
    pub fn attempt_value(&mut self, site: usize, proposal: f64) -> Attempt {
        self.attempts += 1;
        if !(proposal.abs() <= 1.0) {
            return Attempt::OutOfBounds;
        }
        let candidate = self.cost.propose(&self.values, site, proposal);
        let delta = candidate - self.current;
        let accept = delta <= 0.0 || self.rng.random::<f64>() < acceptance_probability(delta, self.beta);
        if accept {
            self.cost.commit(site, proposal);
            self.values[site] = proposal;
            self.current = candidate;
            self.accepts += 1;
            Attempt::Accepted { delta }
        } else {
            Attempt::Rejected { delta }
        }
    }

    /// `L` attempts at uniformly random sites, then a full recomputation of
    /// the cost. Returns the number of accepted moves.
    pub fn sweep(&mut self) -> usize {
        let steps = self.values.len();
        let mut accepted = 0;
        for _ in 0..steps {
            let site = self.rng.random_range(0..steps);
            if let Attempt::Accepted { .. } = self.attempt_site_update(site) {
                accepted += 1;
            }
        }
        self.current = self.cost.refresh(&self.values);
        accepted
    }

    pub fn magnetization(&self) -> f64 {
        slice_magnetization(&self.values)
    }
}

/// Output of a single LMC run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmcRun {
    pub run_index: usize,
    pub seed: u64,
    pub samples: SampleSet,
    /// Accepted fraction of attempts during the sampling phase.
    pub acceptance_rate: f64,
    /// Smallest |m| over all post-burn-in sweeps.
    pub min_abs_m: f64,
    /// Running value of `min_abs_m` at each sample.
    pub min_abs_m_trace: Vec<f64>,
    /// Magnetization of each sample.
    pub per_sample_m: Vec<f64>,
    /// Lowest cost seen at any sweep boundary.
    pub best_infidelity: f64,
    pub best_protocol: Vec<f64>,
    /// Cost at the end of burn-in.
    pub burn_in_infidelity: f64,
    /// Largest cost at any post-burn-in sweep boundary.
    pub max_post_burn_in_infidelity: f64,
}

impl LmcRun {
    pub fn mean_abs_m(&self) -> f64 {
        self.per_sample_m.iter().map(|m| m.abs()).sum::<f64>() / self.per_sample_m.len() as f64
    }

    pub fn final_infidelity(&self) -> f64 {
        *self.samples.infidelities().last().expect("runs hold at least one sample")
    }
}

/// Runs the chain described by `config` on an arbitrary site cost.
pub fn run_with_cost<C: SiteCost>(cost: C, config: &LmcConfig, run_index: usize) -> Result<LmcRun> {
    config.validate()?;
    let mut rng = run_rng(config.seed, run_index);
    let init = init_protocol(config, &mut rng)?;
    let mut chain = Chain::new(
        cost,
        init.values().to_vec(),
        config.acceptance_beta(config.burn_in_beta(0)),
        config.sigma,
        rng,
    );

    let mut best_infidelity = chain.cost();
    let mut best_protocol = chain.values().to_vec();
    let mut track_best = |chain: &Chain<C>| {
        if chain.cost() < best_infidelity {
            best_infidelity = chain.cost();
            best_protocol.copy_from_slice(chain.values());
        }
    };

    for k in 0..config.burn_in {
        chain.beta = config.acceptance_beta(config.burn_in_beta(k));
        chain.sweep();
        track_best(&chain);
    }
    chain.beta = config.acceptance_beta(config.beta);
    chain.reset_counters();
    let burn_in_infidelity = chain.cost();

    let mut min_abs_m = f64::INFINITY;
    let mut max_post = chain.cost();
    let mut protocols = Vec::with_capacity(config.samples);
    let mut infidelities = Vec::with_capacity(config.samples);
    let mut min_abs_m_trace = Vec::with_capacity(config.samples);
    let mut per_sample_m = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        for _ in 0..config.delta_n {
            chain.sweep();
            track_best(&chain);
            min_abs_m = min_abs_m.min(chain.magnetization().abs());
            max_post = max_post.max(chain.cost());
        }
        protocols.push(Protocol::new(chain.values().to_vec(), config.duration)?);
        infidelities.push(chain.cost());
        min_abs_m_trace.push(min_abs_m);
        per_sample_m.push(chain.magnetization());
    }

    Ok(LmcRun {
        run_index,
        seed: config.seed,
        samples: SampleSet::new(run_index, config.seed, &protocols, infidelities)?,
        acceptance_rate: chain.acceptance_rate(),
        min_abs_m,
        min_abs_m_trace,
        per_sample_m,
        best_infidelity,
        best_protocol,
        burn_in_infidelity,
        max_post_burn_in_infidelity: max_post,
    })
}

pub fn run(problem: &ControlProblem, config: &LmcConfig, run_index: usize) -> Result<LmcRun> {
    run_with_cost(QuantumCost::new(*problem, config.steps, config.duration), config, run_index)
}

/// All `R` runs, in parallel, ordered by run index.
pub fn sample_ensemble(problem: &ControlProblem, config: &LmcConfig) -> Result<Vec<LmcRun>> {
    config.validate()?;
    (0..config.runs)
        .into_par_iter()
        .map(|r| run(problem, config, r))
        .collect()
}
