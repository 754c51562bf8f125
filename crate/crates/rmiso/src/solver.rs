//! The outer incremental surrogate-minimization loop.
//!
//! Each step samples an index, rebuilds that component's surrogate at the
//! current iterate, swaps it into the average, and minimizes the average
//! plus the variant's regularizer:
//!
//! - `Miso`: no regularizer (requires strongly convex surrogates for the
//!   classical guarantees),
//! - `ConstantProx`: `+ (rho/2) ||theta - theta_prev||^2`,
//! - `DynamicProx`: `rho_n = rho + max_v (n - k^v(n))`, the staleness of the
//!   most out-of-date surrogate,
//! - `DiminishingRadius`: minimization restricted to a ball of radius `r_n`
//!   around the previous iterate.
//!
//! The loop tracks the run-level quantities the convergence analysis is
//! built on: monotone surrogate values, the proximal step-energy budget
//! `sum (rho_n + mu)/2 ||step||^2 <= delta_0`, the stale-surrogate gap sum
//! bounded by `delta_0 / pi_min`, trust-region feasibility, and the global
//! optimality of "long points" (radius steps that end strictly inside the
//! ball).

use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::inner::{
    gradient_mapping_norm, minimize_prox, minimize_radius, stationarity_measure, FeasibleSet,
    InnerTolerance,
};
use crate::point::ParameterPoint;
use crate::problems::FiniteSumProblem;
use crate::sampling::{IndexSpace, Sampler, SamplerKind, VisitLog};
use crate::surrogate::AveragedSurrogate;

pub const MONO_REL_TOL: f64 = 1e-9;
pub const ENERGY_SLACK: f64 = 1e-6;
pub const GAP_SLACK: f64 = 1e-6;
pub const RADIUS_SLACK: f64 = 1e-9;
pub const LONG_POINT_GATE: f64 = 1e-7;
pub const LONG_POINT_TOL: f64 = 1e-5;
pub const DRIFT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Miso,
    ConstantProx,
    DynamicProx,
    DiminishingRadius,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Miso => "miso",
            Variant::ConstantProx => "rmiso_cpr",
            Variant::DynamicProx => "rmiso_dpr",
            Variant::DiminishingRadius => "rmiso_dr",
        }
    }

    pub fn parse(text: &str) -> Result<Variant> {
        match text {
            "miso" => Ok(Variant::Miso),
            "rmiso_cpr" | "cpr" => Ok(Variant::ConstantProx),
            "rmiso_dpr" | "dpr" => Ok(Variant::DynamicProx),
            "rmiso_dr" | "dr" => Ok(Variant::DiminishingRadius),
            other => Err(Error::config(format!("unknown solver variant {other:?}"))),
        }
    }
}

/// Trust-region radius schedule. The default `scale / (sqrt(n) ln(n + 1))`
/// is positive, nonincreasing, non-summable, and square-summable; custom
/// schedules are spot-checked for positivity and monotonicity only.
#[derive(Clone)]
pub enum RadiusSchedule {
    InvSqrtLog { scale: f64 },
    Custom(Arc<dyn Fn(u64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for RadiusSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RadiusSchedule::InvSqrtLog { scale } => {
                write!(f, "InvSqrtLog {{ scale: {scale} }}")
            }
            RadiusSchedule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Default for RadiusSchedule {
    fn default() -> Self {
        RadiusSchedule::InvSqrtLog { scale: 1.0 }
    }
}

impl RadiusSchedule {
    pub fn radius(&self, n: u64) -> f64 {
        match self {
            RadiusSchedule::InvSqrtLog { scale } => {
                scale / ((n as f64).sqrt() * ((n + 1) as f64).ln())
            }
            RadiusSchedule::Custom(f) => f(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut previous = f64::INFINITY;
        for n in 1..=32u64 {
            let r = self.radius(n);
            if !(r > 0.0) {
                return Err(Error::config(format!("radius r_{n} = {r} must be positive")));
            }
            if r > previous {
                return Err(Error::config("radius schedule must be nonincreasing"));
            }
            previous = r;
        }
        Ok(())
    }

    pub fn scale(&self) -> Option<f64> {
        match self {
            RadiusSchedule::InvSqrtLog { scale } => Some(*scale),
            RadiusSchedule::Custom(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub variant: Variant,
    /// Base proximal weight (ignored by the diminishing-radius variant).
    pub rho: f64,
    pub radius: RadiusSchedule,
    pub seed: u64,
    /// Emit one record every `record_every` steps (expensive diagnostics are
    /// computed only on emitted steps). Invariant accumulation is never
    /// thinned.
    pub record_every: u64,
    pub invariant_checks: bool,
    pub tol: InnerTolerance,
    /// Track `||grad f(theta_n)||` at every step (oracle studies).
    pub track_grad_norms: bool,
    /// Track the objective at every step.
    pub track_objective: bool,
}

impl SolverConfig {
    pub fn new(variant: Variant, rho: f64, seed: u64) -> Self {
        SolverConfig {
            variant,
            rho,
            radius: RadiusSchedule::default(),
            seed,
            record_every: 1,
            invariant_checks: true,
            tol: InnerTolerance::default(),
            track_grad_norms: false,
            track_objective: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho < 0.0 {
            return Err(Error::config("rho must be nonnegative"));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be at least 1"));
        }
        self.tol.validate()?;
        if self.variant == Variant::DiminishingRadius {
            self.radius.validate()?;
        }
        Ok(())
    }
}

/// Per-step metrics. Expensive fields (`objective`, `stationarity`,
/// `error_grad_norm`) are NaN on steps that are not emitted.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub n: u64,
    pub objective: f64,
    pub surrogate_value: f64,
    pub stationarity: f64,
    pub error_grad_norm: f64,
    pub rho_n: f64,
    pub radius_n: f64,
    pub step_norm: f64,
    pub sampled_index: usize,
    pub staleness_max: u64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct LongPointCheck {
    pub n: u64,
    pub residual: f64,
    pub passed: bool,
}

/// Aggregates of a finished run: emitted records plus the invariant ledger.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<IterationRecord>,
    pub steps: u64,
    pub delta0: f64,
    pub pi_min: f64,
    pub mu: f64,
    pub rho: f64,
    /// `sum (rho_n + mu)/2 ||theta_n - theta_{n-1}||^2` (proximal variants).
    pub energy_sum: f64,
    /// `sum h_{n-1}^{v_n}(theta_{n-1})`: stale surrogate gaps measured just
    /// before each replacement.
    pub gap_sum: f64,
    pub step_sq_sum: f64,
    /// `sum r_n^2` (diminishing radius only).
    pub radius_sq_sum: f64,
    pub min_stationarity: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub max_mono_violation: f64,
    pub max_intermediate_violation: f64,
    pub max_majorization_violation: f64,
    pub max_aggregate_drift: f64,
    pub dr_max_step_excess: f64,
    pub long_points: Vec<LongPointCheck>,
    pub grad_norm_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn monotone_ok(&self) -> bool {
        self.max_mono_violation <= MONO_REL_TOL && self.max_intermediate_violation <= MONO_REL_TOL
    }

    pub fn energy_ok(&self) -> bool {
        self.energy_sum <= self.delta0 + ENERGY_SLACK
    }

    pub fn gap_ok(&self) -> bool {
        self.gap_sum <= self.delta0 / self.pi_min + GAP_SLACK
    }

    pub fn radius_feasible_ok(&self) -> bool {
        self.dr_max_step_excess <= RADIUS_SLACK
    }

    pub fn long_points_ok(&self) -> bool {
        self.long_points.iter().all(|c| c.passed)
    }

    pub fn majorization_ok(&self) -> bool {
        self.max_majorization_violation <= MONO_REL_TOL
    }

    pub fn drift_ok(&self) -> bool {
        self.max_aggregate_drift <= DRIFT_TOL
    }

    pub fn all_ok(&self) -> bool {
        self.monotone_ok()
            && self.energy_ok()
            && self.gap_ok()
            && self.radius_feasible_ok()
            && self.long_points_ok()
            && self.majorization_ok()
            && self.drift_ok()
    }
}

/// Test hook: `RMISO_MUTATE=dpr-rho` makes the dynamic-proximal variant
/// minimize with a fraction of the regularization it reports, which the
/// energy-budget check must catch.
fn mutation_hook() -> Option<String> {
    std::env::var("RMISO_MUTATE").ok().filter(|s| !s.is_empty())
}

pub struct SolverState<P: FiniteSumProblem> {
    problem: P,
    config: SolverConfig,
    set: FeasibleSet,
    sampler: Sampler,
    log: VisitLog,
    avg: AveragedSurrogate,
    theta: ParameterPoint,
    n: u64,
    prev_gbar: f64,
    delta0: f64,
    mu: f64,
    pi_min: f64,
    initial_objective: f64,
    // run accumulators
    energy_sum: f64,
    gap_sum: f64,
    step_sq_sum: f64,
    radius_sq_sum: f64,
    min_stationarity: f64,
    max_mono_violation: f64,
    max_intermediate_violation: f64,
    max_majorization_violation: f64,
    max_aggregate_drift: f64,
    dr_max_step_excess: f64,
    long_points: Vec<LongPointCheck>,
    records: Vec<IterationRecord>,
    grad_norm_trace: Vec<f64>,
    objective_trace: Vec<f64>,
    warnings: Vec<String>,
    last_step_norm: f64,
    last_radius: f64,
    started: Instant,
    mutation: Option<String>,
}

impl<P: FiniteSumProblem> SolverState<P> {
    /// Builds one surrogate per index anchored at the initial point, so the
    /// averaged surrogate starts tight: `gbar_0(theta_0) = f(theta_0)`.
    pub fn init(
        mut problem: P,
        topology: Option<Graph>,
        sampler_kind: SamplerKind,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        let space = IndexSpace::new(problem.weights(), topology)?;
        if space.min_weight() <= 0.0 {
            // The stale-gap budget divides by the smallest weight.
            return Err(Error::config("component weights must be strictly positive"));
        }
        let sampler = Sampler::new(sampler_kind, &space, config.seed)?;
        let set = problem.feasible_set();
        set.validate()?;
        let theta = problem.initial_point(config.seed);
        if !set.contains(&theta, 1e-9) {
            return Err(Error::domain("initial point is infeasible"));
        }
        let m = problem.num_components();
        let mut records = Vec::with_capacity(m);
        for v in 0..m {
            records.push(problem.build_surrogate(v, &theta)?);
        }
        let avg = AveragedSurrogate::new(records, space.weights().to_vec())?;
        let initial_objective = problem.objective(&theta);
        let gbar0 = avg.value(&theta);
        let tightness = (gbar0 - initial_objective).abs();
        if tightness > 1e-9 * (1.0 + initial_objective.abs()) {
            return Err(Error::config(format!(
                "initial surrogates are not tight: gbar_0 - f = {:.3e}",
                gbar0 - initial_objective
            )));
        }
        let delta0 = gbar0 - problem.objective_lower_bound();
        let mu = avg.min_convexity();
        let mut warnings = Vec::new();
        if config.variant == Variant::Miso && mu <= 0.0 {
            let estimate = avg.nmf_convexity_estimate().unwrap_or(0.0);
            if estimate <= 0.0 {
                warnings.push(
                    "plain incremental minimization without strong convexity: \
                     a minimizer may not exist; inner-solver failures are surfaced"
                        .to_string(),
                );
            }
        }
        let pi_min = space.min_weight();
        let log = VisitLog::new(m);
        Ok(SolverState {
            problem,
            config,
            set,
            sampler,
            log,
            avg,
            theta,
            n: 0,
            prev_gbar: gbar0,
            delta0,
            mu,
            pi_min,
            initial_objective,
            energy_sum: 0.0,
            gap_sum: 0.0,
            step_sq_sum: 0.0,
            radius_sq_sum: 0.0,
            min_stationarity: f64::INFINITY,
            max_mono_violation: 0.0,
            max_intermediate_violation: 0.0,
            max_majorization_violation: 0.0,
            max_aggregate_drift: 0.0,
            dr_max_step_excess: 0.0,
            long_points: Vec::new(),
            records: Vec::new(),
            grad_norm_trace: Vec::new(),
            objective_trace: Vec::new(),
            warnings,
            last_step_norm: f64::NAN,
            last_radius: f64::NAN,
            started: Instant::now(),
            mutation: mutation_hook(),
        })
    }

    pub fn theta(&self) -> &ParameterPoint {
        &self.theta
    }

    pub fn step_count(&self) -> u64 {
        self.n
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn averaged_surrogate(&self) -> &AveragedSurrogate {
        &self.avg
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn visit_log(&self) -> &VisitLog {
        &self.log
    }

    pub fn error_gradient_norm_now(&self) -> f64 {
        self.avg
            .error_gradient_norm(|p| self.problem.objective_grad(p), &self.theta)
    }

    /// One outer iteration.
    pub fn step(&mut self) -> Result<IterationRecord> {
        self.n += 1;
        let n = self.n;
        let v = self.sampler.next_index(&mut self.log).map_err(|e| {
            Error::config(format!("sampling failed at step {n}: {e}"))
        })?;

        // Stale-surrogate gap of the freshly sampled index, measured before
        // replacement; its running sum is bounded by delta_0 / pi_min.
        let stale_value = self.avg.record(v).value(&self.theta);
        let component_value = self.problem.component_value(v, &self.theta);
        self.gap_sum += stale_value - component_value;

        let fresh = self.problem.build_surrogate(v, &self.theta)?;
        self.avg.replace(v, fresh)?;

        // Refreshing one surrogate cannot raise the average at the anchor.
        let intermediate = self.avg.value(&self.theta);
        let denom = 1.0 + self.prev_gbar.abs();
        self.max_intermediate_violation = self
            .max_intermediate_violation
            .max((intermediate - self.prev_gbar) / denom);

        let staleness = self.log.dynamic_staleness();
        let (rho_n, radius_n, theta_new) = match self.config.variant {
            Variant::Miso => {
                let theta_new =
                    minimize_prox(&self.avg, &self.set, &self.theta, 0.0, &self.config.tol)
                        .map_err(|e| annotate(e, n, v))?;
                (0.0, f64::NAN, theta_new)
            }
            Variant::ConstantProx => {
                let rho = self.config.rho;
                let theta_new =
                    minimize_prox(&self.avg, &self.set, &self.theta, rho, &self.config.tol)
                        .map_err(|e| annotate(e, n, v))?;
                (rho, f64::NAN, theta_new)
            }
            Variant::DynamicProx => {
                let rho_n = self.config.rho + staleness as f64;
                let effective = if self.mutation.as_deref() == Some("dpr-rho") {
                    0.01 * rho_n
                } else {
                    rho_n
                };
                let theta_new =
                    minimize_prox(&self.avg, &self.set, &self.theta, effective, &self.config.tol)
                        .map_err(|e| annotate(e, n, v))?;
                (rho_n, f64::NAN, theta_new)
            }
            Variant::DiminishingRadius => {
                let radius = self.config.radius.radius(n);
                let theta_new =
                    minimize_radius(&self.avg, &self.set, &self.theta, radius, &self.config.tol)
                        .map_err(|e| annotate(e, n, v))?;
                (f64::NAN, radius, theta_new)
            }
        };

        let step_norm = theta_new.dist(&self.theta);
        self.step_sq_sum += step_norm * step_norm;
        if rho_n.is_finite() {
            self.energy_sum += 0.5 * (rho_n + self.mu) * step_norm * step_norm;
        }
        if radius_n.is_finite() {
            self.radius_sq_sum += radius_n * radius_n;
            self.dr_max_step_excess = self.dr_max_step_excess.max(step_norm - radius_n);
        }
        self.last_step_norm = step_norm;
        self.last_radius = radius_n;
        self.theta = theta_new;

        let gbar = self.avg.value(&self.theta);
        self.max_mono_violation = self
            .max_mono_violation
            .max((gbar - self.prev_gbar) / (1.0 + self.prev_gbar.abs()));
        self.prev_gbar = gbar;

        if self.config.invariant_checks {
            if self.config.variant == Variant::DiminishingRadius {
                if let Some(check) = self.long_point_check() {
                    self.long_points.push(check);
                }
            }
            if n % 101 == 0 {
                self.max_aggregate_drift =
                    self.max_aggregate_drift.max(self.avg.aggregate_drift());
            }
        }
        if self.config.track_grad_norms {
            let g = self.problem.objective_grad(&self.theta);
            self.grad_norm_trace.push(g.norm());
        }
        if self.config.track_objective {
            self.objective_trace.push(self.problem.objective(&self.theta));
        }

        let emit = n % self.config.record_every == 0;
        let (objective, stationarity, error_grad_norm) = if emit {
            let grad_f = self.problem.objective_grad(&self.theta);
            let objective = self.problem.objective(&self.theta);
            let stationarity = match &self.set {
                FeasibleSet::NonnegRowBall { .. } => {
                    gradient_mapping_norm(&self.set, &self.theta, &grad_f)
                }
                set => stationarity_measure(&grad_f, set, &self.theta)?,
            };
            let mut err = self.avg.grad(&self.theta);
            err.add_scaled(-1.0, &grad_f);
            let error_grad_norm = err.norm();
            self.min_stationarity = self.min_stationarity.min(stationarity);
            self.max_majorization_violation = self
                .max_majorization_violation
                .max((objective - gbar) / (1.0 + objective.abs()));
            (objective, stationarity, error_grad_norm)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };

        let record = IterationRecord {
            n,
            objective,
            surrogate_value: gbar,
            stationarity,
            error_grad_norm,
            rho_n,
            radius_n,
            step_norm,
            sampled_index: v,
            staleness_max: staleness,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        if emit {
            self.records.push(record.clone());
        }
        Ok(record)
    }

    /// Diagnostic for the most recent diminishing-radius step: when it ended
    /// strictly inside the trust ball ("long point"), the averaged surrogate
    /// must be globally stationary over the whole feasible set. Returns
    /// `None` when not applicable (no step yet, or a boundary step).
    pub fn long_point_check(&self) -> Option<LongPointCheck> {
        if self.config.variant != Variant::DiminishingRadius {
            return None;
        }
        if !self.last_step_norm.is_finite() || !self.last_radius.is_finite() {
            return None;
        }
        if self.last_step_norm >= self.last_radius - LONG_POINT_GATE {
            return None;
        }
        let residual = gradient_mapping_norm(&self.set, &self.theta, &self.avg.grad(&self.theta));
        Some(LongPointCheck {
            n: self.n,
            residual,
            passed: residual <= LONG_POINT_TOL,
        })
    }

    /// Runs `n_steps` further iterations and returns the accumulated
    /// summary. The final step always emits a record.
    pub fn run(&mut self, n_steps: u64) -> Result<RunSummary> {
        if n_steps < 1 {
            return Err(Error::config("run needs at least one step"));
        }
        let target = self.n + n_steps;
        while self.n < target {
            if self.n + 1 == target && (target % self.config.record_every != 0) {
                // Force final-step diagnostics by emitting it.
                let saved = self.config.record_every;
                self.config.record_every = 1;
                let result = self.step();
                self.config.record_every = saved;
                result?;
            } else {
                self.step()?;
            }
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> RunSummary {
        let final_objective = self
            .records
            .last()
            .map(|r| r.objective)
            .filter(|o| o.is_finite())
            .unwrap_or_else(|| self.problem.objective(&self.theta));
        RunSummary {
            records: self.records.clone(),
            steps: self.n,
            delta0: self.delta0,
            pi_min: self.pi_min,
            mu: self.mu,
            rho: self.config.rho,
            energy_sum: self.energy_sum,
            gap_sum: self.gap_sum,
            step_sq_sum: self.step_sq_sum,
            radius_sq_sum: self.radius_sq_sum,
            min_stationarity: self.min_stationarity,
            initial_objective: self.initial_objective,
            final_objective,
            max_mono_violation: self.max_mono_violation,
            max_intermediate_violation: self.max_intermediate_violation,
            max_majorization_violation: self.max_majorization_violation,
            max_aggregate_drift: self.max_aggregate_drift,
            dr_max_step_excess: self.dr_max_step_excess,
            long_points: self.long_points.clone(),
            grad_norm_trace: self.grad_norm_trace.clone(),
            objective_trace: self.objective_trace.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub(crate) fn snapshot_parts(
        &self,
    ) -> (
        &SolverConfig,
        &Sampler,
        &VisitLog,
        &AveragedSurrogate,
        &ParameterPoint,
        SnapshotAccumulators,
    ) {
        (
            &self.config,
            &self.sampler,
            &self.log,
            &self.avg,
            &self.theta,
            SnapshotAccumulators {
                n: self.n,
                prev_gbar: self.prev_gbar,
                delta0: self.delta0,
                mu: self.mu,
                pi_min: self.pi_min,
                initial_objective: self.initial_objective,
                energy_sum: self.energy_sum,
                gap_sum: self.gap_sum,
                step_sq_sum: self.step_sq_sum,
                radius_sq_sum: self.radius_sq_sum,
                last_step_norm: self.last_step_norm,
                last_radius: self.last_radius,
            },
        )
    }

    pub(crate) fn restore_parts(
        &mut self,
        sampler_scalar: u64,
        reshuffle_order: Option<Vec<usize>>,
        rng_stream: u64,
        rng_word_pos: u128,
        log: VisitLog,
        theta: ParameterPoint,
        acc: SnapshotAccumulators,
    ) {
        self.sampler
            .restore_state(sampler_scalar, reshuffle_order, rng_stream, rng_word_pos);
        self.log = log;
        self.theta = theta;
        self.n = acc.n;
        self.prev_gbar = acc.prev_gbar;
        self.delta0 = acc.delta0;
        self.mu = acc.mu;
        self.pi_min = acc.pi_min;
        self.initial_objective = acc.initial_objective;
        self.energy_sum = acc.energy_sum;
        self.gap_sum = acc.gap_sum;
        self.step_sq_sum = acc.step_sq_sum;
        self.radius_sq_sum = acc.radius_sq_sum;
        self.last_step_norm = acc.last_step_norm;
        self.last_radius = acc.last_radius;
        self.records.clear();
        self.grad_norm_trace.clear();
        self.objective_trace.clear();
        self.long_points.clear();
    }

    pub(crate) fn avg_mut(&mut self) -> &mut AveragedSurrogate {
        &mut self.avg
    }

    pub(crate) fn problem_mut(&mut self) -> &mut P {
        &mut self.problem
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SnapshotAccumulators {
    pub n: u64,
    pub prev_gbar: f64,
    pub delta0: f64,
    pub mu: f64,
    pub pi_min: f64,
    pub initial_objective: f64,
    pub energy_sum: f64,
    pub gap_sum: f64,
    pub step_sq_sum: f64,
    pub radius_sq_sum: f64,
    pub last_step_norm: f64,
    pub last_radius: f64,
}

fn annotate(e: Error, n: u64, v: usize) -> Error {
    match e {
        Error::NoConvergence { context, residual } => Error::NoConvergence {
            context: format!("{context} at step {n} (index {v})"),
            residual,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadProblem;

    fn quad_state(variant: Variant, rho: f64, seed: u64) -> SolverState<QuadProblem> {
        let problem = QuadProblem::synthetic(4, 3, seed);
        let config = SolverConfig::new(variant, rho, seed);
        SolverState::init(
            problem,
            None,
            SamplerKind::cyclic_natural(4),
            config,
        )
        .unwrap()
    }

    #[test]
    fn init_is_tight_and_error_free() {
        let state = quad_state(Variant::ConstantProx, 1.0, 3);
        assert!(state.error_gradient_norm_now() < 1e-8);
        let f0 = state.problem().objective(state.theta());
        assert!((state.avg.value(state.theta()) - f0).abs() <= 1e-9 * (1.0 + f0.abs()));
    }

    #[test]
    fn single_component_first_step_is_proximal_point() {
        // With one component the first step minimizes that component's
        // surrogate plus the proximal term.
        let problem = QuadProblem::synthetic(1, 2, 5);
        let optimum = problem.optimum().clone();
        let config = SolverConfig::new(Variant::Miso, 0.0, 5);
        let mut state =
            SolverState::init(problem, None, SamplerKind::cyclic_natural(1), config).unwrap();
        state.step().unwrap();
        // Exact quadratic surrogate of a quadratic: one step can overshoot
        // the optimum only through the shared curvature bound; iterating a
        // few steps converges.
        for _ in 0..50 {
            state.step().unwrap();
        }
        assert!(state.theta().dist(&optimum) < 1e-8);
    }

    #[test]
    fn two_component_fixed_point_is_the_mean() {
        // Components (1/2)(theta - c)^2 with centers 0 and 2 and exact
        // curvature: iterates converge to the stationary mean at 1.
        let centers = vec![
            ParameterPoint::from_vec(vec![0.0]),
            ParameterPoint::from_vec(vec![2.0]),
        ];
        let problem = QuadProblem::new(centers, vec![1.0, 1.0]).unwrap();
        let config = SolverConfig::new(Variant::Miso, 0.0, 0);
        let mut state =
            SolverState::init(problem, None, SamplerKind::cyclic_natural(2), config).unwrap();
        for _ in 0..200 {
            state.step().unwrap();
        }
        assert!((state.theta().as_slice()[0] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn dpr_rho_tracks_staleness() {
        let mut state = quad_state(Variant::DynamicProx, 50.0, 7);
        let mut seen_positive = false;
        for _ in 0..12 {
            let record = state.step().unwrap();
            assert!((record.rho_n - 50.0 - record.staleness_max as f64).abs() < 1e-12);
            if record.staleness_max > 0 {
                seen_positive = true;
            }
        }
        assert!(seen_positive);
    }

    #[test]
    fn dr_steps_respect_radius() {
        let mut state = quad_state(Variant::DiminishingRadius, 0.0, 11);
        for _ in 0..100 {
            let record = state.step().unwrap();
            assert!(record.step_norm <= record.radius_n + RADIUS_SLACK);
        }
        let summary = state.summary();
        assert!(summary.radius_feasible_ok());
        assert!(summary.long_points_ok());
    }

    #[test]
    fn long_point_check_gates_on_step_length() {
        // Far-away optimum: every early step sits on the trust boundary, so
        // the diagnostic reports not-applicable.
        let centers = vec![ParameterPoint::from_vec(vec![50.0, 50.0])];
        let problem = QuadProblem::new(centers, vec![1.0]).unwrap();
        let mut config = SolverConfig::new(Variant::DiminishingRadius, 0.0, 1);
        config.invariant_checks = false;
        let mut state =
            SolverState::init(problem, None, SamplerKind::cyclic_natural(1), config).unwrap();
        state.step().unwrap();
        assert!(state.long_point_check().is_none(), "boundary step is skipped");

        // Near optimum: the ball becomes inactive and the check fires and
        // passes.
        let centers = vec![ParameterPoint::from_vec(vec![0.0, 0.0])];
        let problem = QuadProblem::new(centers, vec![1.0]).unwrap();
        let mut config = SolverConfig::new(Variant::DiminishingRadius, 0.0, 1);
        config.invariant_checks = false;
        let mut state =
            SolverState::init(problem, None, SamplerKind::cyclic_natural(1), config).unwrap();
        let mut fired = false;
        for _ in 0..50 {
            state.step().unwrap();
            if let Some(check) = state.long_point_check() {
                assert!(check.passed, "residual {}", check.residual);
                fired = true;
            }
        }
        assert!(fired, "no long point encountered");
    }

    #[test]
    fn miso_without_strong_convexity_is_flagged() {
        let problem = crate::problems::NmfProblem::synthetic(3, 5, 6, 2, 9);
        let config = SolverConfig::new(Variant::Miso, 0.0, 9);
        let state =
            SolverState::init(problem, None, SamplerKind::cyclic_natural(3), config).unwrap();
        // The factorization aggregate usually starts positive definite, in
        // which case no warning is needed; when the estimate is zero the
        // warning must be present.
        let estimate = state.averaged_surrogate().nmf_convexity_estimate().unwrap();
        if estimate <= 0.0 {
            assert!(!state.summary().warnings.is_empty());
        }
    }

    #[test]
    fn surrogate_values_monotone_across_variants() {
        for (variant, rho) in [
            (Variant::Miso, 0.0),
            (Variant::ConstantProx, 2.0),
            (Variant::DynamicProx, 2.0),
            (Variant::DiminishingRadius, 0.0),
        ] {
            for seed in 0..3 {
                let mut state = quad_state(variant, rho, seed);
                let summary = state.run(300).unwrap();
                assert!(
                    summary.monotone_ok(),
                    "variant {:?} seed {seed}: violation {:.3e}",
                    variant,
                    summary.max_mono_violation
                );
                assert!(summary.gap_ok());
                assert!(summary.energy_ok());
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_records() {
        let run = |seed: u64| {
            let mut state = quad_state(Variant::ConstantProx, 1.0, seed);
            state.run(50).unwrap()
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.objective.to_bits(), y.objective.to_bits());
            assert_eq!(x.surrogate_value.to_bits(), y.surrogate_value.to_bits());
            assert_eq!(x.step_norm.to_bits(), y.step_norm.to_bits());
            assert_eq!(x.sampled_index, y.sampled_index);
        }
    }
}
