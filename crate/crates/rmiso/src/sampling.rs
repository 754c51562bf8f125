//! Recurrent index sequences and recurrence-constant estimation.
//!
//! The solver only requires that every component index is sampled again in
//! bounded expected time. This module provides the four standard recurrent
//! samplers (i.i.d., simple random walk on a graph, cyclic, reshuffling),
//! visit bookkeeping (last-passage times and staleness), and estimators of
//! the constants that govern convergence speed:
//!
//! - hitting time `t_hit`: worst case (over target and conditioning state)
//!   expected return time,
//! - target time `t_target`: weight-averaged expected return time,
//! - cover time `t_cov`: expected time until every index has been revisited.
//!
//! Estimation is analytic where exact values are known (uniform i.i.d.,
//! cyclic with uniform weights) and Monte Carlo otherwise. Monte-Carlo
//! replicas draw from independent, counter-addressed RNG streams so parallel
//! and sequential estimation produce identical numbers.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;

const WEIGHT_TOL: f64 = 1e-12;

/// The index set `{0, .., size-1}`, its weighting, and an optional graph
/// topology for walk-based samplers.
#[derive(Clone, Debug)]
pub struct IndexSpace {
    weights: Vec<f64>,
    topology: Option<Graph>,
}

impl IndexSpace {
    pub fn new(weights: Vec<f64>, topology: Option<Graph>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("index space must be nonempty"));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::config("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::config(format!(
                "weights must sum to 1 (got {total:.15})"
            )));
        }
        if let Some(graph) = &topology {
            if graph.len() != weights.len() {
                return Err(Error::config(format!(
                    "graph has {} vertices but index space has {} entries",
                    graph.len(),
                    weights.len()
                )));
            }
            if !graph.is_connected() {
                return Err(Error::config("topology must be connected"));
            }
        }
        Ok(IndexSpace { weights, topology })
    }

    pub fn uniform(size: usize) -> Self {
        let w = vec![1.0 / size as f64; size];
        IndexSpace::new(w, None).expect("uniform weights are valid")
    }

    pub fn uniform_on(graph: Graph) -> Result<Self> {
        let w = vec![1.0 / graph.len() as f64; graph.len()];
        IndexSpace::new(w, Some(graph))
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, v: usize) -> f64 {
        self.weights[v]
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn topology(&self) -> Option<&Graph> {
        self.topology.as_ref()
    }

    pub fn has_uniform_weights(&self) -> bool {
        let u = 1.0 / self.size() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= WEIGHT_TOL)
    }
}

/// Sampling algorithm variants. All are recurrent.
#[derive(Clone, Debug)]
pub enum SamplerKind {
    /// Independent draws from a fixed distribution over indices.
    Iid { distribution: Vec<f64> },
    /// Simple random walk on the space's topology, started at `start`
    /// (the start vertex itself is not emitted).
    RandomWalk { start: usize },
    /// Deterministic cycle through a fixed permutation of the indices.
    Cyclic { permutation: Vec<usize> },
    /// Cyclic with a fresh uniform permutation drawn at every epoch boundary
    /// (epochs are aligned to multiples of the index count from step 1).
    Reshuffle,
}

impl SamplerKind {
    pub fn iid_uniform(size: usize) -> Self {
        SamplerKind::Iid {
            distribution: vec![1.0 / size as f64; size],
        }
    }

    pub fn cyclic_natural(size: usize) -> Self {
        SamplerKind::Cyclic {
            permutation: (0..size).collect(),
        }
    }

    pub fn validate(&self, space: &IndexSpace) -> Result<()> {
        let n = space.size();
        match self {
            SamplerKind::Iid { distribution } => {
                if distribution.len() != n {
                    return Err(Error::config("i.i.d. distribution length mismatch"));
                }
                if distribution.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                    return Err(Error::config("i.i.d. distribution must be nonnegative"));
                }
                let total: f64 = distribution.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::config("i.i.d. distribution must sum to 1"));
                }
            }
            SamplerKind::RandomWalk { start } => {
                if space.topology().is_none() {
                    return Err(Error::config(
                        "random-walk sampling requires a connected topology",
                    ));
                }
                if *start >= n {
                    return Err(Error::config(format!(
                        "random-walk start {start} out of range for {n} indices"
                    )));
                }
            }
            SamplerKind::Cyclic { permutation } => {
                if permutation.len() != n {
                    return Err(Error::config("cyclic permutation length mismatch"));
                }
                let mut seen = vec![false; n];
                for &p in permutation {
                    if p >= n || seen[p] {
                        return Err(Error::config(
                            "cyclic permutation must be a bijection on the index set",
                        ));
                    }
                    seen[p] = true;
                }
            }
            SamplerKind::Reshuffle => {}
        }
        Ok(())
    }

    fn label(&self) -> &'static str {
        match self {
            SamplerKind::Iid { .. } => "iid",
            SamplerKind::RandomWalk { .. } => "random_walk",
            SamplerKind::Cyclic { .. } => "cyclic",
            SamplerKind::Reshuffle => "reshuffle",
        }
    }
}

/// Sampling history: step counter, current index, last-passage times and
/// visit counts. Steps are 1-based; the last passage of a never-visited
/// index is 1 by convention.
#[derive(Clone, Debug)]
pub struct VisitLog {
    step: u64,
    current: Option<usize>,
    last_passage: Vec<u64>, // 0 = never visited
    visit_counts: Vec<u64>,
}

impl VisitLog {
    pub fn new(size: usize) -> Self {
        VisitLog {
            step: 0,
            current: None,
            last_passage: vec![0; size],
            visit_counts: vec![0; size],
        }
    }

    pub fn size(&self) -> usize {
        self.last_passage.len()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn current(&self) -> Option<usize> {
        self.current
    }

    pub fn record(&mut self, v: usize) {
        debug_assert!(v < self.last_passage.len());
        self.step += 1;
        self.current = Some(v);
        self.last_passage[v] = self.step;
        self.visit_counts[v] += 1;
    }

    pub fn visited(&self, v: usize) -> bool {
        self.last_passage[v] > 0
    }

    pub fn visit_count(&self, v: usize) -> u64 {
        self.visit_counts[v]
    }

    /// Last passage time `k^v(n)`: the most recent step at which `v` was
    /// sampled, or 1 if it never was.
    pub fn last_passage(&self, v: usize) -> Result<u64> {
        if v >= self.last_passage.len() {
            return Err(Error::domain(format!(
                "index {v} out of range for {} indices",
                self.last_passage.len()
            )));
        }
        Ok(self.last_passage[v].max(1))
    }

    /// `max_v (n - k^v(n))`, the staleness term of the dynamic proximal
    /// regularizer.
    pub fn dynamic_staleness(&self) -> u64 {
        if self.step == 0 {
            return 0;
        }
        self.last_passage
            .iter()
            .map(|&k| self.step - k.max(1))
            .max()
            .unwrap_or(0)
    }

    pub(crate) fn raw_last_passage(&self) -> &[u64] {
        &self.last_passage
    }

    pub(crate) fn restore(
        step: u64,
        current: Option<usize>,
        last_passage: Vec<u64>,
        visit_counts: Vec<u64>,
    ) -> Self {
        VisitLog {
            step,
            current,
            last_passage,
            visit_counts,
        }
    }
}

#[derive(Clone, Debug)]
enum SamplerState {
    Iid { cumulative: Vec<f64> },
    RandomWalk { position: usize },
    Cyclic { position: usize },
    Reshuffle { order: Vec<usize>, position: usize },
}

/// A seeded, single-threaded index sampler. Identical seed and configuration
/// produce a bit-identical index sequence.
#[derive(Clone, Debug)]
pub struct Sampler {
    kind: SamplerKind,
    size: usize,
    graph: Option<Graph>,
    rng: ChaCha8Rng,
    state: SamplerState,
}

impl Sampler {
    pub fn new(kind: SamplerKind, space: &IndexSpace, seed: u64) -> Result<Self> {
        Sampler::with_stream(kind, space, seed, 0)
    }

    /// Same as [`Sampler::new`] but on a dedicated RNG stream; used to give
    /// Monte-Carlo replicas independent randomness under one seed.
    pub fn with_stream(
        kind: SamplerKind,
        space: &IndexSpace,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        kind.validate(space)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let state = match &kind {
            SamplerKind::Iid { distribution } => {
                let mut cumulative = Vec::with_capacity(distribution.len());
                let mut acc = 0.0;
                for p in distribution {
                    acc += p;
                    cumulative.push(acc);
                }
                if let Some(last) = cumulative.last_mut() {
                    *last = 1.0;
                }
                SamplerState::Iid { cumulative }
            }
            SamplerKind::RandomWalk { start } => SamplerState::RandomWalk { position: *start },
            SamplerKind::Cyclic { .. } => SamplerState::Cyclic { position: 0 },
            SamplerKind::Reshuffle => SamplerState::Reshuffle {
                order: Vec::new(),
                position: 0,
            },
        };
        Ok(Sampler {
            kind,
            size: space.size(),
            graph: space.topology().cloned(),
            rng,
            state,
        })
    }

    pub fn kind(&self) -> &SamplerKind {
        &self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Emits the next index and advances the log.
    pub fn next_index(&mut self, log: &mut VisitLog) -> Result<usize> {
        if log.size() != self.size {
            return Err(Error::domain("visit log size mismatch"));
        }
        let v = match &mut self.state {
            SamplerState::Iid { cumulative } => {
                let u: f64 = self.rng.random();
                cumulative.partition_point(|c| *c <= u).min(self.size - 1)
            }
            SamplerState::RandomWalk { position } => {
                let graph = self
                    .graph
                    .as_ref()
                    .ok_or_else(|| Error::config("random walk without topology"))?;
                let neighbors = graph.neighbors(*position);
                if neighbors.is_empty() {
                    return Err(Error::config(format!(
                        "vertex {} has no neighbors",
                        *position
                    )));
                }
                let pick = self.rng.random_range(0..neighbors.len());
                *position = neighbors[pick];
                *position
            }
            SamplerState::Cyclic { position } => {
                let permutation = match &self.kind {
                    SamplerKind::Cyclic { permutation } => permutation,
                    _ => unreachable!(),
                };
                let v = permutation[*position];
                *position = (*position + 1) % self.size;
                v
            }
            SamplerState::Reshuffle { order, position } => {
                if *position == order.len() {
                    *order = (0..self.size).collect();
                    order.shuffle(&mut self.rng);
                    *position = 0;
                }
                let v = order[*position];
                *position += 1;
                v
            }
        };
        log.record(v);
        Ok(v)
    }

    pub(crate) fn rng_state(&self) -> (u64, u128) {
        (self.rng.get_stream(), self.rng.get_word_pos())
    }

    pub(crate) fn state_words(&self) -> (u64, u64, u64) {
        // (variant-specific scalar, reshuffle position, unused)
        match &self.state {
            SamplerState::Iid { .. } => (0, 0, 0),
            SamplerState::RandomWalk { position } => (*position as u64, 0, 0),
            SamplerState::Cyclic { position } => (*position as u64, 0, 0),
            SamplerState::Reshuffle { order, position } => {
                (*position as u64, order.len() as u64, 0)
            }
        }
    }

    pub(crate) fn reshuffle_order(&self) -> Option<&[usize]> {
        match &self.state {
            SamplerState::Reshuffle { order, .. } => Some(order),
            _ => None,
        }
    }

    pub(crate) fn restore_state(
        &mut self,
        scalar: u64,
        order: Option<Vec<usize>>,
        stream: u64,
        word_pos: u128,
    ) {
        self.rng.set_stream(stream);
        self.rng.set_word_pos(word_pos);
        match &mut self.state {
            SamplerState::Iid { .. } => {}
            SamplerState::RandomWalk { position } | SamplerState::Cyclic { position } => {
                *position = scalar as usize;
            }
            SamplerState::Reshuffle { order: o, position } => {
                *position = scalar as usize;
                if let Some(order) = order {
                    *o = order;
                }
            }
        }
    }
}

/// How a [`RecurrenceEstimates`] was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateMethod {
    Analytic,
    MonteCarlo,
}

impl std::fmt::Display for EstimateMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimateMethod::Analytic => write!(f, "analytic"),
            EstimateMethod::MonteCarlo => write!(f, "monte_carlo"),
        }
    }
}

/// Point estimates of the recurrence constants with replica-wise standard
/// errors. Monte-Carlo hitting times are estimated as the maximum, over
/// target index and observed conditioning state, of time-averaged return
/// times (the supremum in the definition is not estimable from finite
/// samples); target times are plain time averages; cover times average the
/// per-step maximum return time over all targets.
#[derive(Clone, Debug)]
pub struct RecurrenceEstimates {
    pub t_hit: f64,
    pub t_target: f64,
    pub t_cov: f64,
    pub stderr_hit: f64,
    pub stderr_target: f64,
    pub stderr_cov: f64,
    pub method: EstimateMethod,
    pub replicas: u64,
    pub horizon: u64,
    /// Return times that did not occur within the lookahead horizon and were
    /// imputed as `horizon + 1`.
    pub censored: u64,
    /// Total `(observation time, target)` pairs measured.
    pub observations: u64,
    /// Time-averaged mean return time per target index (Monte Carlo only).
    pub per_target: Vec<f64>,
    pub per_target_stderr: Vec<f64>,
}

impl RecurrenceEstimates {
    pub fn censor_fraction(&self) -> f64 {
        if self.observations == 0 {
            0.0
        } else {
            self.censored as f64 / self.observations as f64
        }
    }
}

/// Upper bound on the cover time in terms of the hitting time:
/// `(2 t_hit + 1) * log2(4 |V|)`.
pub fn t_cov_bound(t_hit: f64, size: usize) -> f64 {
    (2.0 * t_hit + 1.0) * (4.0 * size as f64).log2()
}

/// Estimates the recurrence constants, exactly where a closed form is
/// available (uniform i.i.d.; cyclic with uniform weights) and by Monte
/// Carlo otherwise. Monte-Carlo estimates with more than 1% of return times
/// censored by the horizon are rejected.
pub fn estimate_recurrence(
    kind: &SamplerKind,
    space: &IndexSpace,
    replicas: u64,
    horizon: u64,
    seed: u64,
) -> Result<RecurrenceEstimates> {
    if replicas < 1 {
        return Err(Error::config("replicas must be at least 1"));
    }
    if horizon < space.size() as u64 {
        return Err(Error::config(format!(
            "horizon {horizon} is smaller than the index count {}",
            space.size()
        )));
    }
    kind.validate(space)?;
    if let Some(est) = analytic_recurrence(kind, space, replicas, horizon) {
        return Ok(est);
    }
    let est = monte_carlo_recurrence(kind, space, replicas, horizon, seed)?;
    let fraction = est.censor_fraction();
    if fraction > 0.01 {
        return Err(Error::Censored {
            censored: est.censored,
            observations: est.observations,
            fraction,
        });
    }
    Ok(est)
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn analytic_recurrence(
    kind: &SamplerKind,
    space: &IndexSpace,
    replicas: u64,
    horizon: u64,
) -> Option<RecurrenceEstimates> {
    let n = space.size() as f64;
    let exact = |t_hit: f64, t_target: f64, t_cov: f64| RecurrenceEstimates {
        t_hit,
        t_target,
        t_cov,
        stderr_hit: 0.0,
        stderr_target: 0.0,
        stderr_cov: 0.0,
        method: EstimateMethod::Analytic,
        replicas,
        horizon,
        censored: 0,
        observations: 0,
        per_target: Vec::new(),
        per_target_stderr: Vec::new(),
    };
    match kind {
        SamplerKind::Iid { distribution } => {
            let u = 1.0 / n;
            let uniform = distribution.iter().all(|p| (p - u).abs() <= WEIGHT_TOL);
            // Uniform draws: every conditional return time is geometric with
            // mean |V|; covering is the classical coupon collector.
            uniform.then(|| exact(n, n, n * harmonic(space.size())))
        }
        SamplerKind::Cyclic { .. } if space.has_uniform_weights() => {
            // One full pass revisits everything: t_hit = |V| and the
            // average-target constant is (|V| - 1) / 2.
            Some(exact(n, (n - 1.0) / 2.0, n))
        }
        _ => None,
    }
}

struct ReplicaStats {
    t_target: f64,
    t_cov: f64,
    per_target: Vec<f64>,
    state_sums: Vec<f64>,
    state_counts: Vec<u64>,
    censored: u64,
}

/// Always-Monte-Carlo estimation (no censoring cutoff applied; inspect
/// [`RecurrenceEstimates::censor_fraction`]).
///
/// Each replica simulates `2 * horizon` steps and measures, for every
/// observation time `n <= horizon` and every target `v`, the return time to
/// `v` after `n` with a lookahead of `horizon` steps; unobserved returns are
/// imputed as `horizon + 1` and counted as censored.
pub fn monte_carlo_recurrence(
    kind: &SamplerKind,
    space: &IndexSpace,
    replicas: u64,
    horizon: u64,
    seed: u64,
) -> Result<RecurrenceEstimates> {
    kind.validate(space)?;
    if replicas < 1 {
        return Err(Error::config("replicas must be at least 1"));
    }
    let horizon_us = horizon as usize;
    let size = space.size();
    let stats: Vec<ReplicaStats> = (0..replicas)
        .into_par_iter()
        .map(|replica| -> Result<ReplicaStats> {
            let mut sampler = Sampler::with_stream(kind.clone(), space, seed, replica + 1)?;
            let mut log = VisitLog::new(size);
            simulate_replica(&mut sampler, &mut log, space, horizon_us)
        })
        .collect::<Result<Vec<_>>>()?;

    let r = replicas as f64;
    let mean_of = |f: &dyn Fn(&ReplicaStats) -> f64| stats.iter().map(|s| f(s)).sum::<f64>() / r;
    let stderr_of = |f: &dyn Fn(&ReplicaStats) -> f64, mean: f64| {
        if replicas < 2 {
            return f64::INFINITY;
        }
        let var = stats.iter().map(|s| (f(s) - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    };

    let t_target = mean_of(&|s: &ReplicaStats| s.t_target);
    let t_cov = mean_of(&|s: &ReplicaStats| s.t_cov);
    let mut per_target = vec![0.0; size];
    let mut per_target_stderr = vec![0.0; size];
    for v in 0..size {
        let mean = stats.iter().map(|s| s.per_target[v]).sum::<f64>() / r;
        per_target[v] = mean;
        per_target_stderr[v] = stderr_of(&|s: &ReplicaStats| s.per_target[v], mean);
    }

    // Hitting time: per (state, target) cell, the conditional mean return
    // time pooled over every replica, then maximized over cells. Pooling
    // first keeps the maximum's selection bias shrinking with the replica
    // count.
    let mut pooled_sums = vec![0.0f64; size * size];
    let mut pooled_counts = vec![0u64; size];
    for s in &stats {
        for (acc, x) in pooled_sums.iter_mut().zip(&s.state_sums) {
            *acc += x;
        }
        for (acc, c) in pooled_counts.iter_mut().zip(&s.state_counts) {
            *acc += c;
        }
    }
    let mut t_hit = 0.0f64;
    let mut argmax_cell = (0usize, 0usize);
    for w in 0..size {
        if pooled_counts[w] == 0 {
            continue;
        }
        for v in 0..size {
            let m = pooled_sums[w * size + v] / pooled_counts[w] as f64;
            if m > t_hit {
                t_hit = m;
                argmax_cell = (w, v);
            }
        }
    }
    // Standard error of the chosen cell's mean across replicas.
    let stderr_hit = {
        let (w, v) = argmax_cell;
        let cell_means: Vec<f64> = stats
            .iter()
            .filter(|s| s.state_counts[w] > 0)
            .map(|s| s.state_sums[w * size + v] / s.state_counts[w] as f64)
            .collect();
        if cell_means.len() < 2 {
            f64::INFINITY
        } else {
            let k = cell_means.len() as f64;
            let mean = cell_means.iter().sum::<f64>() / k;
            let var = cell_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        }
    };

    Ok(RecurrenceEstimates {
        t_hit,
        t_target,
        t_cov,
        stderr_hit,
        stderr_target: stderr_of(&|s: &ReplicaStats| s.t_target, t_target),
        stderr_cov: stderr_of(&|s: &ReplicaStats| s.t_cov, t_cov),
        method: EstimateMethod::MonteCarlo,
        replicas,
        horizon,
        censored: stats.iter().map(|s| s.censored).sum(),
        observations: replicas * horizon * size as u64,
        per_target,
        per_target_stderr,
    })
}

fn simulate_replica(
    sampler: &mut Sampler,
    log: &mut VisitLog,
    space: &IndexSpace,
    horizon: usize,
) -> Result<ReplicaStats> {
    let size = space.size();
    let total = 2 * horizon;
    // trajectory[t] = v_t for t = 1..=total
    let mut trajectory = vec![0usize; total + 1];
    for t in 1..=total {
        trajectory[t] = sampler.next_index(log)?;
    }

    let mut state_sums = vec![0.0f64; size * size];
    let mut state_counts = vec![0u64; size];
    let mut target_sums = vec![0.0f64; size];
    let mut max_return = vec![0.0f64; horizon + 1];
    let mut censored = 0u64;

    for n in 1..=horizon {
        state_counts[trajectory[n]] += 1;
    }

    let mut tau = vec![0.0f64; horizon + 1];
    for v in 0..size {
        // Backward sweep: next visit to v strictly after each time index.
        let mut next_visit = usize::MAX;
        for t in (1..=total).rev() {
            if t <= horizon {
                tau[t] = if next_visit != usize::MAX && next_visit - t <= horizon {
                    (next_visit - t) as f64
                } else {
                    censored += 1;
                    (horizon + 1) as f64
                };
            }
            if trajectory[t] == v {
                next_visit = t;
            }
        }
        for n in 1..=horizon {
            let t = tau[n];
            state_sums[trajectory[n] * size + v] += t;
            target_sums[v] += t;
            if t > max_return[n] {
                max_return[n] = t;
            }
        }
    }

    let n_obs = horizon as f64;
    let per_target: Vec<f64> = target_sums.iter().map(|s| s / n_obs).collect();
    let t_target = per_target
        .iter()
        .zip(space.weights())
        .map(|(m, w)| m * w)
        .sum();
    let t_cov = max_return[1..=horizon].iter().sum::<f64>() / n_obs;

    Ok(ReplicaStats {
        t_target,
        t_cov,
        per_target,
        state_sums,
        state_counts,
        censored,
    })
}

/// Exact expected return times for the simple random walk, by first-step
/// analysis: `m[(w, v)]` is the expected number of steps for the walk
/// started at `w` to next visit `v` (a full return when `w == v`). Solved as
/// one linear system per target.
pub fn walk_return_times(graph: &Graph) -> Result<Array2<f64>> {
    if !graph.is_connected() {
        return Err(Error::config("walk analysis requires a connected graph"));
    }
    let n = graph.len();
    let mut m = Array2::<f64>::zeros((n, n));
    for v in 0..n {
        // h[w] = expected steps to hit v from w, h[v] = 0.
        let others: Vec<usize> = (0..n).filter(|w| *w != v).collect();
        let idx: Vec<Option<usize>> = {
            let mut map = vec![None; n];
            for (i, &w) in others.iter().enumerate() {
                map[w] = Some(i);
            }
            map
        };
        let k = others.len();
        let mut a = vec![0.0f64; k * k];
        let mut rhs = vec![1.0f64; k];
        for (i, &w) in others.iter().enumerate() {
            a[i * k + i] = 1.0;
            let d = graph.degree(w) as f64;
            for &u in graph.neighbors(w) {
                if let Some(j) = idx[u] {
                    a[i * k + j] -= 1.0 / d;
                }
            }
        }
        let h = solve_dense(&mut a, &mut rhs, k)?;
        for w in 0..n {
            let d = graph.degree(w) as f64;
            let mut expected = 1.0;
            for &u in graph.neighbors(w) {
                if let Some(j) = idx[u] {
                    expected += h[j] / d;
                }
            }
            m[(w, v)] = expected;
        }
    }
    Ok(m)
}

/// Expected value of the Monte-Carlo estimator's per-target and averaged
/// statistics for a random walk started at `start` and observed at times
/// `1..=n_obs`: the exact return times of [`walk_return_times`] weighted by
/// the exact occupation measure of the observation window.
pub fn walk_expected_estimates(
    graph: &Graph,
    weights: &[f64],
    start: usize,
    n_obs: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = graph.len();
    if weights.len() != n || start >= n {
        return Err(Error::domain("weights or start incompatible with graph"));
    }
    let m = walk_return_times(graph)?;
    // occupation[w] = (1/n_obs) * sum_{t=1..n_obs} P(v_t = w | v_0 = start)
    let mut dist = vec![0.0f64; n];
    dist[start] = 1.0;
    let mut occupation = vec![0.0f64; n];
    for _ in 0..n_obs {
        let mut next = vec![0.0f64; n];
        for w in 0..n {
            if dist[w] == 0.0 {
                continue;
            }
            let share = dist[w] / graph.degree(w) as f64;
            for &u in graph.neighbors(w) {
                next[u] += share;
            }
        }
        dist = next;
        for w in 0..n {
            occupation[w] += dist[w];
        }
    }
    for o in &mut occupation {
        *o /= n_obs as f64;
    }
    let per_target: Vec<f64> = (0..n)
        .map(|v| (0..n).map(|w| occupation[w] * m[(w, v)]).sum())
        .collect();
    let t_target = per_target
        .iter()
        .zip(weights)
        .map(|(m, w)| m * w)
        .sum::<f64>();
    Ok((per_target, t_target))
}

pub(crate) fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    // Gaussian elimination with partial pivoting; systems here are tiny.
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let cand = a[row * n + col].abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best < 1e-14 {
            return Err(Error::domain("singular system in walk analysis"));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Descriptive label for CLI output.
pub fn sampler_label(kind: &SamplerKind) -> &'static str {
    kind.label()
}
