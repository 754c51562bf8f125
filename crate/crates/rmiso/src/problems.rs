//! Concrete finite-sum objectives and their data plumbing.
//!
//! Three families: synthetic quadratics (closed-form optimum, used as the
//! oracle problem), distributed nonnegative matrix factorization over
//! per-index data shards, and logistic regression with the bounded nonconvex
//! regularizer `0.01 * sum theta_i^2 / (1 + theta_i^2)` on label-homogeneous
//! shards. Loaders cover dense CSV matrices, the sparse `label index:value`
//! classification format, and the big-endian IDX image container.

use std::fs;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inner::{minimize_prox, minimize_radius, FeasibleSet, InnerTolerance};
use crate::point::ParameterPoint;
use crate::surrogate::{
    build_prox_linear, build_variational_nmf, AveragedSurrogate, Component, FnComponent,
    SurrogateRecord,
};

/// A weighted finite-sum objective the solver can run on: per-component
/// values and gradients, a feasible set, and a surrogate builder.
pub trait FiniteSumProblem {
    fn num_components(&self) -> usize;
    /// Shape of the parameter iterate.
    fn param_shape(&self) -> (usize, usize);
    fn weights(&self) -> Vec<f64> {
        vec![1.0 / self.num_components() as f64; self.num_components()]
    }
    fn feasible_set(&self) -> FeasibleSet;
    fn component_value(&self, v: usize, theta: &ParameterPoint) -> f64;
    fn component_grad(&self, v: usize, theta: &ParameterPoint) -> ParameterPoint;

    fn objective(&self, theta: &ParameterPoint) -> f64 {
        self.weights()
            .iter()
            .enumerate()
            .map(|(v, w)| w * self.component_value(v, theta))
            .sum()
    }

    fn objective_grad(&self, theta: &ParameterPoint) -> ParameterPoint {
        let mut out = ParameterPoint::zeros(theta.rows(), theta.cols());
        for (v, w) in self.weights().iter().enumerate() {
            out.add_scaled(*w, &self.component_grad(v, theta));
        }
        out
    }

    /// Known lower bound on the objective over the feasible set, used for
    /// the initial-gap budget in the run diagnostics.
    fn objective_lower_bound(&self) -> f64;

    /// Builds a fresh majorizing surrogate of component `v` anchored at
    /// `anchor`. May update problem-internal caches (factorization codes).
    fn build_surrogate(&mut self, v: usize, anchor: &ParameterPoint) -> Result<SurrogateRecord>;

    fn initial_point(&self, seed: u64) -> ParameterPoint;

    /// Global smoothness preset used by prox-linear surrogates and the
    /// `rho = L * t_target` heuristic.
    fn smoothness(&self) -> f64;

    /// Per-index data matrix handle when the problem stores one (the
    /// factorization shards); used to re-link variational surrogates when
    /// restoring a snapshot.
    fn shard_data(&self, _v: usize) -> Option<Arc<Array2<f64>>> {
        None
    }

    /// Refreshes a cached code block on snapshot restore.
    fn restore_cached_code(&mut self, _v: usize, _code: &Array2<f64>) {}
}

impl<T: FiniteSumProblem + ?Sized> FiniteSumProblem for Box<T> {
    fn num_components(&self) -> usize {
        (**self).num_components()
    }

    fn param_shape(&self) -> (usize, usize) {
        (**self).param_shape()
    }

    fn weights(&self) -> Vec<f64> {
        (**self).weights()
    }

    fn feasible_set(&self) -> FeasibleSet {
        (**self).feasible_set()
    }

    fn component_value(&self, v: usize, theta: &ParameterPoint) -> f64 {
        (**self).component_value(v, theta)
    }

    fn component_grad(&self, v: usize, theta: &ParameterPoint) -> ParameterPoint {
        (**self).component_grad(v, theta)
    }

    fn objective(&self, theta: &ParameterPoint) -> f64 {
        (**self).objective(theta)
    }

    fn objective_grad(&self, theta: &ParameterPoint) -> ParameterPoint {
        (**self).objective_grad(theta)
    }

    fn objective_lower_bound(&self) -> f64 {
        (**self).objective_lower_bound()
    }

    fn build_surrogate(&mut self, v: usize, anchor: &ParameterPoint) -> Result<SurrogateRecord> {
        (**self).build_surrogate(v, anchor)
    }

    fn initial_point(&self, seed: u64) -> ParameterPoint {
        (**self).initial_point(seed)
    }

    fn smoothness(&self) -> f64 {
        (**self).smoothness()
    }

    fn shard_data(&self, v: usize) -> Option<Arc<Array2<f64>>> {
        (**self).shard_data(v)
    }

    fn restore_cached_code(&mut self, v: usize, code: &Array2<f64>) {
        (**self).restore_cached_code(v, code)
    }
}

// ---------------------------------------------------------------------------
// Synthetic quadratics
// ---------------------------------------------------------------------------

/// Finite sum of quadratics `f^v = (kappa_v / 2) ||theta - c_v||^2` with a
/// cached closed-form optimum.
pub struct QuadProblem {
    centers: Vec<ParameterPoint>,
    curvatures: Vec<f64>,
    optimum: ParameterPoint,
    optimum_value: f64,
}

impl QuadProblem {
    pub fn new(centers: Vec<ParameterPoint>, curvatures: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != curvatures.len() {
            return Err(Error::config("need one curvature per center"));
        }
        if curvatures.iter().any(|k| *k <= 0.0) {
            return Err(Error::config("curvatures must be positive"));
        }
        let shape = centers[0].shape();
        if centers.iter().any(|c| c.shape() != shape) {
            return Err(Error::config("centers must share one shape"));
        }
        let n = centers.len() as f64;
        let total_curv: f64 = curvatures.iter().sum();
        let mut optimum = ParameterPoint::zeros(shape.0, shape.1);
        for (c, k) in centers.iter().zip(&curvatures) {
            optimum.add_scaled(k / total_curv, c);
        }
        let mut problem = QuadProblem {
            centers,
            curvatures,
            optimum,
            optimum_value: 0.0,
        };
        problem.optimum_value = problem.objective(&problem.optimum.clone());
        let _ = n;
        Ok(problem)
    }

    /// Random instance with centers in `[-1, 1]^dim` and curvatures in
    /// `[0.5, 1.5]`.
    pub fn synthetic(components: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<ParameterPoint> = (0..components)
            .map(|_| {
                ParameterPoint::from_vec(
                    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                )
            })
            .collect();
        let curvatures: Vec<f64> = (0..components)
            .map(|_| 0.5 + rng.random::<f64>())
            .collect();
        QuadProblem::new(centers, curvatures).expect("synthetic instance is valid")
    }

    pub fn optimum(&self) -> &ParameterPoint {
        &self.optimum
    }

    fn component(&self, v: usize) -> impl Component + '_ {
        let center = self.centers[v].clone();
        let grad_center = center.clone();
        let kappa = self.curvatures[v];
        FnComponent::new(
            move |p: &ParameterPoint| 0.5 * kappa * p.dist(&center).powi(2),
            move |p: &ParameterPoint| {
                let mut g = p.sub(&grad_center);
                g.scale(kappa);
                g
            },
        )
    }
}

impl FiniteSumProblem for QuadProblem {
    fn num_components(&self) -> usize {
        self.centers.len()
    }

    fn param_shape(&self) -> (usize, usize) {
        self.centers[0].shape()
    }

    fn feasible_set(&self) -> FeasibleSet {
        FeasibleSet::Unconstrained
    }

    fn component_value(&self, v: usize, theta: &ParameterPoint) -> f64 {
        0.5 * self.curvatures[v] * theta.dist(&self.centers[v]).powi(2)
    }

    fn component_grad(&self, v: usize, theta: &ParameterPoint) -> ParameterPoint {
        let mut g = theta.sub(&self.centers[v]);
        g.scale(self.curvatures[v]);
        g
    }

    fn objective_lower_bound(&self) -> f64 {
        self.optimum_value
    }

    fn build_surrogate(&mut self, v: usize, anchor: &ParameterPoint) -> Result<SurrogateRecord> {
        let l = self.smoothness();
        build_prox_linear(&self.component(v), anchor, l)
    }

    fn initial_point(&self, seed: u64) -> ParameterPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ab_17e3);
        let (rows, cols) = self.param_shape();
        let mut p = ParameterPoint::zeros(rows, cols);
        for x in p.as_mut_slice() {
            *x = rng.random::<f64>() * 4.0 - 2.0;
        }
        p
    }

    fn smoothness(&self) -> f64 {
        self.curvatures.iter().cloned().fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Distributed nonnegative matrix factorization
// ---------------------------------------------------------------------------

/// Per-index factorization problem: each index owns a nonnegative data
/// matrix `X_v`, the dictionary `W` is shared (nonnegative entries, rows in
/// the unit ball), and component losses are the minimal reconstruction
/// errors `inf_H 0.5 ||X_v - W H||_F^2 + alpha ||H||_1` over `H >= 0`.
pub struct NmfProblem {
    shards: Vec<Arc<Array2<f64>>>,
    rank: usize,
    alpha: f64,
    codes: Vec<Array2<f64>>,
    tol: InnerTolerance,
}

impl NmfProblem {
    pub fn new(shards: Vec<Array2<f64>>, rank: usize, alpha: f64) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::config("need at least one data shard"));
        }
        if rank == 0 {
            return Err(Error::config("rank must be positive"));
        }
        if alpha < 0.0 {
            return Err(Error::config("l1 weight must be nonnegative"));
        }
        let p = shards[0].nrows();
        for (v, x) in shards.iter().enumerate() {
            if x.nrows() != p {
                return Err(Error::config(format!(
                    "shard {v} has {} rows, expected {p}",
                    x.nrows()
                )));
            }
            if x.iter().any(|e| *e < 0.0 || !e.is_finite()) {
                return Err(Error::config(format!("shard {v} must be nonnegative")));
            }
        }
        let codes = shards
            .iter()
            .map(|x| Array2::zeros((rank, x.ncols())))
            .collect();
        // Code subproblems keep the default tolerance but get a much larger
        // sweep budget: coordinate descent slows down sharply on
        // near-collinear dictionary columns, and a failed resolve would
        // poison objective evaluations.
        let tol = InnerTolerance {
            max_iters: 500_000,
            ..InnerTolerance::default()
        };
        Ok(NmfProblem {
            shards: shards.into_iter().map(Arc::new).collect(),
            rank,
            alpha,
            codes,
            tol,
        })
    }

    /// Overrides the tolerance used by the internal code solves.
    pub fn with_tolerance(mut self, tol: InnerTolerance) -> Self {
        self.tol = tol;
        self
    }

    /// Low-rank nonnegative data with a small positive noise floor.
    pub fn synthetic(
        num_shards: usize,
        rows: usize,
        cols_per_shard: usize,
        rank: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dictionary = Array2::<f64>::zeros((rows, rank));
        dictionary.iter_mut().for_each(|x| *x = rng.random::<f64>());
        for mut row in dictionary.rows_mut() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        let shards: Vec<Array2<f64>> = (0..num_shards)
            .map(|_| {
                let mut code = Array2::<f64>::zeros((rank, cols_per_shard));
                code.iter_mut().for_each(|x| {
                    // Sparse-ish nonnegative codes.
                    let u = rng.random::<f64>();
                    *x = if u < 0.4 { 0.0 } else { u };
                });
                let mut x = dictionary.dot(&code);
                x.iter_mut()
                    .for_each(|e| *e += 0.02 * rng.random::<f64>());
                x
            })
            .collect();
        NmfProblem::new(shards, rank, 1.0 / 28.0).expect("synthetic shards are valid")
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shard(&self, v: usize) -> &Arc<Array2<f64>> {
        &self.shards[v]
    }

    pub fn cached_code(&self, v: usize) -> &Array2<f64> {
        &self.codes[v]
    }

    pub(crate) fn set_cached_code(&mut self, v: usize, code: Array2<f64>) {
        self.codes[v] = code;
    }

    /// Re-solves the code subproblem at `w`; the component loss is the
    /// attained minimum.
    fn solve_component(&self, v: usize, w: &ParameterPoint) -> Result<(f64, Array2<f64>)> {
        let x = &*self.shards[v];
        let h = crate::inner::nnls_l1(x, w.matrix(), self.alpha, &self.tol)?;
        let residual = x - &w.matrix().dot(&h);
        let value = 0.5 * residual.iter().map(|e| e * e).sum::<f64>()
            + self.alpha * h.iter().map(|e| e.abs()).sum::<f64>();
        Ok((value, h))
    }
}

impl FiniteSumProblem for NmfProblem {
    fn num_components(&self) -> usize {
        self.shards.len()
    }

    fn param_shape(&self) -> (usize, usize) {
        (self.shards[0].nrows(), self.rank)
    }

    fn feasible_set(&self) -> FeasibleSet {
        FeasibleSet::NonnegRowBall {
            rows: self.shards[0].nrows(),
            cols: self.rank,
        }
    }

    fn component_value(&self, v: usize, theta: &ParameterPoint) -> f64 {
        self.solve_component(v, theta)
            .map(|(value, _)| value)
            .unwrap_or(f64::INFINITY)
    }

    fn component_grad(&self, v: usize, theta: &ParameterPoint) -> ParameterPoint {
        // With the code block at its own minimizer the partial gradient in W
        // is the total gradient of the infimum.
        match self.solve_component(v, theta) {
            Ok((_, h)) => {
                let residual = theta.matrix().dot(&h) - &**self.shards[v].as_ref();
                ParameterPoint::from_matrix(residual.dot(&h.t()))
            }
            Err(_) => ParameterPoint::zeros(theta.rows(), theta.cols()),
        }
    }

    fn objective_lower_bound(&self) -> f64 {
        0.0
    }

    fn build_surrogate(&mut self, v: usize, anchor: &ParameterPoint) -> Result<SurrogateRecord> {
        let record = nmf_component_surrogate(self, v, anchor)?;
        Ok(record)
    }

    fn initial_point(&self, seed: u64) -> ParameterPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e11_0b5f);
        let (rows, cols) = self.param_shape();
        let mut w = Array2::<f64>::zeros((rows, cols));
        w.iter_mut().for_each(|x| *x = rng.random::<f64>());
        for mut row in w.rows_mut() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        ParameterPoint::from_matrix(w)
    }

    fn smoothness(&self) -> f64 {
        // Code entries are bounded by the data scale on the feasible set;
        // the Gram spectrum bound below is loose but safe for presets.
        self.shards
            .iter()
            .map(|x| x.iter().map(|e| e * e).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn shard_data(&self, v: usize) -> Option<Arc<Array2<f64>>> {
        Some(self.shards[v].clone())
    }

    fn restore_cached_code(&mut self, v: usize, code: &Array2<f64>) {
        self.set_cached_code(v, code.clone());
    }
}

/// Builds the variational surrogate of component `v` at `w_prev` (solving
/// the code update) and refreshes the problem's cached code for `v`.
pub fn nmf_component_surrogate(
    problem: &mut NmfProblem,
    v: usize,
    w_prev: &ParameterPoint,
) -> Result<SurrogateRecord> {
    let data = problem.shards[v].clone();
    let record = build_variational_nmf(data, w_prev, problem.alpha, &problem.tol)?;
    let (code, _, _) = record.variational_parts().expect("variational record");
    let code = code.clone();
    problem.set_cached_code(v, code);
    Ok(record)
}

/// Dictionary step kinds for [`nmf_dictionary_update`].
#[derive(Clone, Copy, Debug)]
pub enum DictionaryStep {
    Prox { rho: f64 },
    Radius { radius: f64 },
}

/// One dictionary update: minimizes the averaged factorization surrogate
/// over the row-ball set, with either proximal or trust-region damping.
pub fn nmf_dictionary_update(
    avg: &AveragedSurrogate,
    set: &FeasibleSet,
    w_prev: &ParameterPoint,
    step: DictionaryStep,
    tol: &InnerTolerance,
) -> Result<ParameterPoint> {
    if avg.nmf_stats().is_none() {
        return Err(Error::config(
            "dictionary update requires a factorization aggregate",
        ));
    }
    match step {
        DictionaryStep::Prox { rho } => minimize_prox(avg, set, w_prev, rho, tol),
        DictionaryStep::Radius { radius } => minimize_radius(avg, set, w_prev, radius, tol),
    }
}

// ---------------------------------------------------------------------------
// Logistic regression with a nonconvex regularizer
// ---------------------------------------------------------------------------

/// One sparse classification row: sorted feature indices, values, and a
/// label in {-1, +1}.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub label: f64,
}

impl SparseRow {
    pub fn dot(&self, theta: &ParameterPoint) -> f64 {
        let flat = theta.as_slice();
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(i, v)| v * flat[*i as usize])
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

const REG_COEFF: f64 = 0.01;

/// `0.01 * sum_i theta_i^2 / (1 + theta_i^2)`, bounded by `0.01 * dim`.
pub fn nonconvex_regularizer(theta: &ParameterPoint) -> f64 {
    REG_COEFF
        * theta
            .as_slice()
            .iter()
            .map(|t| t * t / (1.0 + t * t))
            .sum::<f64>()
}

/// Exact gradient of the regularizer: `0.02 * theta_i / (1 + theta_i^2)^2`.
pub fn nonconvex_regularizer_grad(theta: &ParameterPoint) -> ParameterPoint {
    let mut g = theta.clone();
    for t in g.as_mut_slice() {
        let denom = (1.0 + *t * *t).powi(2);
        *t = 2.0 * REG_COEFF * *t / denom;
    }
    g
}

fn logistic_loss(margin: f64) -> f64 {
    // ln(1 + exp(-margin)) without overflow.
    if -margin > 35.0 {
        -margin
    } else {
        (-margin).exp().ln_1p()
    }
}

pub struct LogRegProblem {
    shards: Vec<Vec<SparseRow>>,
    dim: usize,
    smoothness: f64,
}

impl LogRegProblem {
    pub fn new(shards: Vec<Vec<SparseRow>>, dim: usize) -> Result<Self> {
        if shards.is_empty() || shards.iter().any(|s| s.is_empty()) {
            return Err(Error::config("every shard must be nonempty"));
        }
        let mut max_row_norm_sq = 0.0f64;
        for shard in &shards {
            for row in shard {
                if row.label != 1.0 && row.label != -1.0 {
                    return Err(Error::config(format!(
                        "labels must be +1 or -1, got {}",
                        row.label
                    )));
                }
                if row
                    .indices
                    .iter()
                    .any(|i| *i as usize >= dim)
                {
                    return Err(Error::config("feature index out of range"));
                }
                max_row_norm_sq = max_row_norm_sq.max(row.norm_sq());
            }
        }
        // Logistic curvature is at most ||x||^2 / 4; the regularizer's
        // second derivative is bounded by 0.02.
        let smoothness = max_row_norm_sq / 4.0 + 2.0 * REG_COEFF;
        Ok(LogRegProblem {
            shards,
            dim,
            smoothness,
        })
    }

    /// Overrides the smoothness preset (experiment configurations fix a
    /// global constant).
    pub fn with_smoothness(mut self, l: f64) -> Self {
        self.smoothness = l;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shards(&self) -> &[Vec<SparseRow>] {
        &self.shards
    }

    pub fn label_homogeneous(&self) -> bool {
        self.shards
            .iter()
            .all(|s| s.iter().all(|r| r.label == s[0].label))
    }
}

impl FiniteSumProblem for LogRegProblem {
    fn num_components(&self) -> usize {
        self.shards.len()
    }

    fn param_shape(&self) -> (usize, usize) {
        (self.dim, 1)
    }

    fn feasible_set(&self) -> FeasibleSet {
        FeasibleSet::Unconstrained
    }

    fn component_value(&self, v: usize, theta: &ParameterPoint) -> f64 {
        let shard = &self.shards[v];
        let mean_loss = shard
            .iter()
            .map(|row| logistic_loss(row.label * row.dot(theta)))
            .sum::<f64>()
            / shard.len() as f64;
        mean_loss + nonconvex_regularizer(theta)
    }

    fn component_grad(&self, v: usize, theta: &ParameterPoint) -> ParameterPoint {
        let shard = &self.shards[v];
        let mut g = nonconvex_regularizer_grad(theta);
        let scale = 1.0 / shard.len() as f64;
        for row in shard {
            let margin = row.label * row.dot(theta);
            // d/dz ln(1 + e^{-z}) = -1 / (1 + e^{z})
            let factor = -row.label / (1.0 + margin.exp());
            let flat = g.as_mut_slice();
            for (i, x) in row.indices.iter().zip(&row.values) {
                flat[*i as usize] += scale * factor * x;
            }
        }
        g
    }

    fn objective_lower_bound(&self) -> f64 {
        0.0
    }

    fn build_surrogate(&mut self, v: usize, anchor: &ParameterPoint) -> Result<SurrogateRecord> {
        let value = self.component_value(v, anchor);
        let grad = self.component_grad(v, anchor);
        Ok(crate::surrogate::prox_linear_from_parts(
            anchor.clone(),
            value,
            grad,
            self.smoothness,
        ))
    }

    fn initial_point(&self, _seed: u64) -> ParameterPoint {
        ParameterPoint::zeros(self.dim, 1)
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }
}

// ---------------------------------------------------------------------------
// Sharding
// ---------------------------------------------------------------------------

/// Deterministic label-homogeneous sharding: rows are grouped by label
/// (labels in ascending order, input order preserved within a label) and
/// each group is cut into batches of `batch` rows; leftover rows form a
/// final smaller shard per label. `expected_vertices` is validated against
/// the produced shard count.
pub fn shard_by_label(
    rows: &[SparseRow],
    expected_vertices: usize,
    batch: usize,
) -> Result<Vec<Vec<SparseRow>>> {
    if rows.is_empty() {
        return Err(Error::domain("cannot shard an empty row set"));
    }
    if batch == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let mut labels: Vec<f64> = rows.iter().map(|r| r.label).collect();
    labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    labels.dedup();
    if expected_vertices < labels.len() {
        return Err(Error::config(format!(
            "requested {expected_vertices} vertices for {} labels",
            labels.len()
        )));
    }
    let mut shards = Vec::new();
    for label in labels {
        let group: Vec<SparseRow> = rows.iter().filter(|r| r.label == label).cloned().collect();
        for chunk in group.chunks(batch) {
            shards.push(chunk.to_vec());
        }
    }
    if shards.len() != expected_vertices {
        return Err(Error::config(format!(
            "batching produced {} shards but {expected_vertices} were requested",
            shards.len()
        )));
    }
    Ok(shards)
}

/// Canonical row order (label, then indices, then value bits); applying this
/// before [`shard_by_label`] makes shard contents invariant to input
/// permutations within a label.
pub fn canonical_sort(rows: &mut [SparseRow]) {
    rows.sort_by(|a, b| {
        a.label
            .partial_cmp(&b.label)
            .unwrap()
            .then_with(|| a.indices.cmp(&b.indices))
            .then_with(|| {
                let av: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
                let bv: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
                av.cmp(&bv)
            })
    });
}

// ---------------------------------------------------------------------------
// Synthetic data and loaders
// ---------------------------------------------------------------------------

/// Deterministic sparse classification rows in the `label index:value`
/// schema: a planted separator with noisy margins, roughly balanced labels.
pub fn synthetic_classification(rows: usize, dim: usize, seed: u64) -> Vec<SparseRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let separator: Vec<f64> = (0..dim)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let nnz = (dim / 4).max(2).min(dim);
    (0..rows)
        .map(|_| {
            let mut picked: Vec<u32> = Vec::with_capacity(nnz);
            while picked.len() < nnz {
                let i = rng.random_range(0..dim) as u32;
                if !picked.contains(&i) {
                    picked.push(i);
                }
            }
            picked.sort_unstable();
            let values: Vec<f64> = picked
                .iter()
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            let margin: f64 = picked
                .iter()
                .zip(&values)
                .map(|(i, v)| separator[*i as usize] * v)
                .sum();
            let noise = rng.random::<f64>() - 0.5;
            let label = if margin + 0.3 * noise >= 0.0 { 1.0 } else { -1.0 };
            SparseRow {
                indices: picked,
                values,
                label,
            }
        })
        .collect()
}

/// Dense matrix CSV: comma-separated values, one row per line, optional
/// header skipped via `has_header`.
pub fn load_dense_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if has_header && lineno == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
        let values = parsed.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!(
                        "expected {} columns, found {}",
                        first.len(),
                        values.len()
                    ),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "no data rows".into(),
        });
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.concat();
    Array2::from_shape_vec((flat.len() / ncols, ncols), flat).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}

/// Sparse classification text format: `label index:value ...` per line with
/// 1-based feature indices (stored 0-based). Returns rows and the inferred
/// dimension.
pub fn load_sparse_classification(path: impl AsRef<Path>) -> Result<(Vec<SparseRow>, usize)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_sparse_classification(&text, &path.display().to_string())
}

pub fn parse_sparse_classification(text: &str, origin: &str) -> Result<(Vec<SparseRow>, usize)> {
    let mut rows = Vec::new();
    let mut dim = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().ok_or_else(|| Error::Parse {
            path: origin.into(),
            line: lineno + 1,
            message: "missing label".into(),
        })?;
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            path: origin.into(),
            line: lineno + 1,
            message: format!("invalid label {label_tok:?}"),
        })?;
        if label != 1.0 && label != -1.0 {
            return Err(Error::Parse {
                path: origin.into(),
                line: lineno + 1,
                message: format!("labels must be +1/-1, got {label}"),
            });
        }
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in parts {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: lineno + 1,
                message: format!("expected index:value, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                path: origin.into(),
                line: lineno + 1,
                message: format!("invalid feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: lineno + 1,
                    message: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                path: origin.into(),
                line: lineno + 1,
                message: format!("invalid feature value {val:?}"),
            })?;
            indices.push((idx - 1) as u32);
            values.push(val);
            dim = dim.max(idx);
        }
        rows.push(SparseRow {
            indices,
            values,
            label,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: origin.into(),
            line: 0,
            message: "no rows".into(),
        });
    }
    Ok((rows, dim))
}

/// Serializes rows in the same `label index:value` schema (1-based indices).
pub fn format_sparse_classification(rows: &[SparseRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(if row.label > 0.0 { "+1" } else { "-1" });
        for (i, v) in row.indices.iter().zip(&row.values) {
            out.push_str(&format!(" {}:{}", i + 1, v));
        }
        out.push('\n');
    }
    out
}

/// IDX image container (big-endian magic 0x00000803, then count/rows/cols as
/// u32 and unsigned-byte pixels). Pixels are scaled to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Array2<f64>>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    let be_u32 = |offset: usize| -> Result<u32> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 0,
                message: "truncated idx header".into(),
            })
    };
    if be_u32(0)? != 0x0000_0803 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "bad idx image magic".into(),
        });
    }
    let count = be_u32(4)? as usize;
    let rows = be_u32(8)? as usize;
    let cols = be_u32(12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("idx payload too short: {} < {expected}", bytes.len()),
        });
    }
    let mut images = Vec::with_capacity(count);
    for k in 0..count {
        let start = 16 + k * rows * cols;
        let data: Vec<f64> = bytes[start..start + rows * cols]
            .iter()
            .map(|b| *b as f64 / 255.0)
            .collect();
        images.push(Array2::from_shape_vec((rows, cols), data).expect("idx image shape"));
    }
    Ok(images)
}

/// IDX label container (magic 0x00000801).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
    if bytes.len() < 8 || u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) != 0x0000_0801
    {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "bad idx label magic".into(),
        });
    }
    let count = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    if bytes.len() < 8 + count {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "idx label payload too short".into(),
        });
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Groups images by label and concatenates batches of `batch` images along
/// the horizontal axis into one shard matrix each; leftovers per label form
/// a final smaller shard.
pub fn image_shards(
    images: &[Array2<f64>],
    labels: &[u8],
    batch: usize,
) -> Result<Vec<Array2<f64>>> {
    if images.len() != labels.len() {
        return Err(Error::domain("image/label count mismatch"));
    }
    if images.is_empty() || batch == 0 {
        return Err(Error::domain("need images and a positive batch size"));
    }
    let rows = images[0].nrows();
    let mut distinct: Vec<u8> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut shards = Vec::new();
    for label in distinct {
        let group: Vec<usize> = (0..images.len()).filter(|i| labels[*i] == label).collect();
        for chunk in group.chunks(batch) {
            let total_cols: usize = chunk.iter().map(|i| images[*i].ncols()).sum();
            let mut shard = Array2::<f64>::zeros((rows, total_cols));
            let mut offset = 0;
            for &i in chunk {
                let img = &images[i];
                shard
                    .slice_mut(ndarray::s![.., offset..offset + img.ncols()])
                    .assign(img);
                offset += img.ncols();
            }
            shards.push(shard);
        }
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::central_gradient;
    use ndarray::array;

    #[test]
    fn quad_optimum_is_weighted_center_mean() {
        let centers = vec![
            ParameterPoint::from_vec(vec![0.0, 1.0]),
            ParameterPoint::from_vec(vec![2.0, 3.0]),
        ];
        let problem = QuadProblem::new(centers, vec![1.0, 1.0]).unwrap();
        assert!(problem.optimum().dist(&ParameterPoint::from_vec(vec![1.0, 2.0])) < 1e-12);
        let g = problem.objective_grad(problem.optimum());
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn logreg_value_at_zero_is_log_two() {
        let rows = synthetic_classification(40, 8, 3);
        let shards = vec![rows];
        let problem = LogRegProblem::new(shards, 8).unwrap();
        let zero = ParameterPoint::zeros(8, 1);
        assert!((problem.component_value(0, &zero) - (2.0f64).ln()).abs() < 1e-12);
        assert!(nonconvex_regularizer_grad(&zero).norm() == 0.0);
    }

    #[test]
    fn regularizer_value_at_ones() {
        let p = 7;
        let ones = ParameterPoint::from_vec(vec![1.0; p]);
        assert!((nonconvex_regularizer(&ones) - 0.005 * p as f64).abs() < 1e-12);
        let big = ParameterPoint::from_vec(vec![1e6; p]);
        assert!(nonconvex_regularizer(&big) <= REG_COEFF * p as f64);
    }

    #[test]
    fn logreg_gradient_matches_finite_differences() {
        let rows = synthetic_classification(25, 10, 9);
        let problem = LogRegProblem::new(vec![rows], 10).unwrap();
        let mut theta = ParameterPoint::zeros(10, 1);
        for (i, x) in theta.as_mut_slice().iter_mut().enumerate() {
            *x = 0.3 * ((i as f64) - 4.0) / 5.0;
        }
        let analytic = problem.component_grad(0, &theta);
        let numeric = central_gradient(|p| problem.component_value(0, p), &theta, 1e-6);
        assert!(analytic.dist(&numeric) <= 1e-5 * (1.0 + numeric.norm()));
    }

    #[test]
    fn logreg_empirical_smoothness_bound() {
        let rows = synthetic_classification(30, 6, 5);
        let problem = LogRegProblem::new(vec![rows], 6).unwrap();
        let l = problem.smoothness();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = ParameterPoint::from_vec(
                (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
            );
            let b = ParameterPoint::from_vec(
                (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
            );
            let ga = problem.component_grad(0, &a);
            let gb = problem.component_grad(0, &b);
            assert!(ga.dist(&gb) <= l * a.dist(&b) + 1e-9);
        }
    }

    #[test]
    fn shard_sizes_match_batching() {
        let mut rows = Vec::new();
        for _ in 0..250 {
            rows.push(SparseRow {
                indices: vec![0],
                values: vec![1.0],
                label: 1.0,
            });
        }
        let shards = shard_by_label(&rows, 3, 100).unwrap();
        let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![100, 100, 50]);

        let mut two_labels = Vec::new();
        for i in 0..200 {
            two_labels.push(SparseRow {
                indices: vec![0],
                values: vec![1.0],
                label: if i < 100 { -1.0 } else { 1.0 },
            });
        }
        let shards = shard_by_label(&two_labels, 2, 100).unwrap();
        assert_eq!(shards.len(), 2);
        assert!(shards
            .iter()
            .all(|s| s.iter().all(|r| r.label == s[0].label)));
    }

    #[test]
    fn sharding_invariant_under_permutation_after_canonical_sort() {
        let mut rows = synthetic_classification(120, 6, 44);
        let mut shuffled = rows.clone();
        shuffled.rotate_left(17);
        shuffled.swap(3, 90);
        canonical_sort(&mut rows);
        canonical_sort(&mut shuffled);
        assert_eq!(rows, shuffled);
        let a = shard_by_label(&rows, expected_count(&rows, 25), 25).unwrap();
        let b = shard_by_label(&shuffled, expected_count(&shuffled, 25), 25).unwrap();
        let sizes = |s: &Vec<Vec<SparseRow>>| s.iter().map(|x| x.len()).collect::<Vec<_>>();
        assert_eq!(sizes(&a), sizes(&b));
    }

    fn expected_count(rows: &[SparseRow], batch: usize) -> usize {
        let mut labels: Vec<f64> = rows.iter().map(|r| r.label).collect();
        labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        labels.dedup();
        labels
            .iter()
            .map(|l| {
                let n = rows.iter().filter(|r| r.label == *l).count();
                n.div_ceil(batch)
            })
            .sum()
    }

    #[test]
    fn sparse_format_roundtrip() {
        let rows = synthetic_classification(30, 12, 8);
        let text = format_sparse_classification(&rows);
        let (parsed, dim) = parse_sparse_classification(&text, "mem").unwrap();
        assert!(dim <= 12);
        assert_eq!(parsed.len(), rows.len());
        for (a, b) in parsed.iter().zip(&rows) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.indices, b.indices);
        }
    }

    #[test]
    fn dense_csv_loader() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        use std::io::Write;
        writeln!(file, "a,b,c\n1,2,3\n4,5,6").unwrap();
        let m = load_dense_csv(file.path(), true).unwrap();
        assert_eq!(m, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn idx_roundtrip_small() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&3u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
        bytes.extend_from_slice(&[255, 204, 153, 102, 51, 0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.idx");
        fs::write(&path, &bytes).unwrap();
        let images = load_idx_images(&path).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].shape(), &[2, 3]);
        assert!((images[0][(0, 1)] - 0.2).abs() < 1e-12);

        let mut lbl = Vec::new();
        lbl.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbl.extend_from_slice(&2u32.to_be_bytes());
        lbl.extend_from_slice(&[7, 3]);
        let lpath = dir.path().join("lbl.idx");
        fs::write(&lpath, &lbl).unwrap();
        assert_eq!(load_idx_labels(&lpath).unwrap(), vec![7, 3]);

        let shards = image_shards(&images, &[1, 1], 2).unwrap();
        assert_eq!(shards.len(), 1);
        assert_eq!(shards[0].shape(), &[2, 6]);
    }

    #[test]
    fn nmf_surrogate_tight_on_exact_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w_true = Array2::from_shape_fn((6, 2), |_| rng.random::<f64>() * 0.5);
        let codes: Vec<Array2<f64>> = (0..3)
            .map(|_| Array2::from_shape_fn((2, 5), |_| rng.random::<f64>()))
            .collect();
        let shards: Vec<Array2<f64>> = codes.iter().map(|h| w_true.dot(h)).collect();
        let mut problem = NmfProblem::new(shards, 2, 0.0).unwrap();
        let anchor = ParameterPoint::from_matrix(w_true.clone());
        let record = nmf_component_surrogate(&mut problem, 0, &anchor).unwrap();
        assert!(record.value(&anchor) <= 1e-8);
    }

    #[test]
    fn nmf_surrogate_majorizes_resolved_component() {
        let mut problem = NmfProblem::synthetic(4, 5, 8, 2, 21);
        let anchor = problem.initial_point(3);
        let record = nmf_component_surrogate(&mut problem, 1, &anchor).unwrap();
        let set = problem.feasible_set();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..100 {
            let probe = ParameterPoint::from_matrix(Array2::from_shape_fn((5, 2), |_| {
                rng.random::<f64>()
            }));
            let probe = set.project(&probe);
            let f_v = problem.component_value(1, &probe);
            assert!(record.value(&probe) >= f_v - 1e-9);
        }
    }

    #[test]
    fn dictionary_update_scalar_cases() {
        // A = 1, B = 0.5: interior minimizer of 0.5 A w^2 - B w on [0, 1].
        let mk = |data_val: f64| {
            let anchor = ParameterPoint::from_matrix(array![[0.4]]);
            crate::surrogate::variational_from_parts(
                anchor,
                Arc::new(array![[data_val]]),
                array![[1.0]],
                0.0,
                1.0,
            )
        };
        let set = FeasibleSet::NonnegRowBall { rows: 1, cols: 1 };
        let tol = InnerTolerance::default();
        let prev = ParameterPoint::from_matrix(array![[0.4]]);

        let avg = AveragedSurrogate::new(vec![mk(0.5)], vec![1.0]).unwrap();
        let w = nmf_dictionary_update(&avg, &set, &prev, DictionaryStep::Prox { rho: 0.0 }, &tol)
            .unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 1e-7);

        // B = 2: unconstrained argmin 2 clipped to the row cap 1.
        let avg = AveragedSurrogate::new(vec![mk(2.0)], vec![1.0]).unwrap();
        let w = nmf_dictionary_update(&avg, &set, &prev, DictionaryStep::Prox { rho: 0.0 }, &tol)
            .unwrap();
        assert!((w.as_slice()[0] - 1.0).abs() < 1e-7);
    }
}
