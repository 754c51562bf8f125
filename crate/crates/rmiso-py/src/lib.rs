//! Python bindings: samplers and recurrence estimation, the inner kernels,
//! and config-free solver runs on the built-in problem families. Matrices
//! cross the boundary as nested lists; per-run metrics come back as a dict
//! of column vectors.

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rmiso::graph::Graph;
use rmiso::inner::{nnls_l1, FeasibleSet, InnerTolerance};
use rmiso::point::ParameterPoint;
use rmiso::problems::{
    shard_by_label, synthetic_classification, FiniteSumProblem, LogRegProblem, NmfProblem,
    QuadProblem,
};
use rmiso::sampling::{
    estimate_recurrence as core_estimate, monte_carlo_recurrence, IndexSpace,
    SamplerKind, Sampler as CoreSampler, VisitLog,
};
use rmiso::solver::{RunSummary, SolverConfig, SolverState, Variant};

fn to_py_err(e: rmiso::Error) -> PyErr {
    match e {
        rmiso::Error::Config(_) | rmiso::Error::Domain(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_graph(name: &str, size: usize) -> PyResult<Graph> {
    let graph = match name {
        "cycle" => Graph::cycle(size),
        "complete" => Graph::complete(size),
        "lonely" => Graph::lonely(size),
        path => Graph::from_edge_list_file(path).map_err(to_py_err)?,
    };
    if graph.len() != size {
        return Err(PyValueError::new_err(format!(
            "graph has {} vertices, expected {size}",
            graph.len()
        )));
    }
    Ok(graph)
}

fn parse_sampler(kind: &str, size: usize, start: usize) -> PyResult<SamplerKind> {
    Ok(match kind {
        "iid" => SamplerKind::iid_uniform(size),
        "cyclic" => SamplerKind::cyclic_natural(size),
        "reshuffle" => SamplerKind::Reshuffle,
        "random_walk" => SamplerKind::RandomWalk { start },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown sampler kind {other:?}"
            )))
        }
    })
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what} must be nonempty")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what} rows differ in length")));
    }
    let flat: Vec<f64> = rows.concat();
    Array2::from_shape_vec((flat.len() / cols, cols), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A seeded recurrent index sampler with visit bookkeeping.
#[pyclass(name = "Sampler")]
struct PySampler {
    sampler: CoreSampler,
    log: VisitLog,
}

#[pymethods]
impl PySampler {
    #[new]
    #[pyo3(signature = (kind, size, seed=0, graph=None, start=0))]
    fn new(kind: &str, size: usize, seed: u64, graph: Option<&str>, start: usize) -> PyResult<Self> {
        let sampler_kind = parse_sampler(kind, size, start)?;
        let topology = graph.map(|g| parse_graph(g, size)).transpose()?;
        let space = IndexSpace::new(vec![1.0 / size as f64; size], topology).map_err(to_py_err)?;
        let sampler = CoreSampler::new(sampler_kind, &space, seed).map_err(to_py_err)?;
        Ok(PySampler {
            sampler,
            log: VisitLog::new(size),
        })
    }

    /// Draws the next index and advances the visit log.
    fn next_index(&mut self) -> PyResult<usize> {
        self.sampler.next_index(&mut self.log).map_err(to_py_err)
    }

    /// Last step at which `v` was sampled (1 if never).
    fn last_passage(&self, v: usize) -> PyResult<u64> {
        self.log.last_passage(v).map_err(to_py_err)
    }

    /// `max_v (n - k^v(n))`: staleness of the most outdated index.
    fn staleness(&self) -> u64 {
        self.log.dynamic_staleness()
    }

    fn step(&self) -> u64 {
        self.log.step()
    }

    fn visit_count(&self, v: usize) -> u64 {
        self.log.visit_count(v)
    }
}

/// Estimates the recurrence constants of a sampler. Returns a dict with
/// `t_hit`, `t_target`, `t_cov`, their standard errors, the method tag, and
/// the censoring fraction.
#[pyfunction]
#[pyo3(signature = (kind, size, replicas=1000, horizon=None, seed=0, graph=None, start=0, monte_carlo=false))]
#[allow(clippy::too_many_arguments)]
fn estimate_recurrence(
    py: Python<'_>,
    kind: &str,
    size: usize,
    replicas: u64,
    horizon: Option<u64>,
    seed: u64,
    graph: Option<&str>,
    start: usize,
    monte_carlo: bool,
) -> PyResult<Py<PyDict>> {
    let sampler_kind = parse_sampler(kind, size, start)?;
    let topology = graph.map(|g| parse_graph(g, size)).transpose()?;
    let space = IndexSpace::new(vec![1.0 / size as f64; size], topology).map_err(to_py_err)?;
    let horizon = horizon.unwrap_or(20 * size as u64);
    let est = if monte_carlo {
        monte_carlo_recurrence(&sampler_kind, &space, replicas, horizon, seed)
    } else {
        core_estimate(&sampler_kind, &space, replicas, horizon, seed)
    }
    .map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("t_hit", est.t_hit)?;
    dict.set_item("t_target", est.t_target)?;
    dict.set_item("t_cov", est.t_cov)?;
    dict.set_item("stderr_hit", est.stderr_hit)?;
    dict.set_item("stderr_target", est.stderr_target)?;
    dict.set_item("stderr_cov", est.stderr_cov)?;
    dict.set_item("method", est.method.to_string())?;
    dict.set_item("replicas", est.replicas)?;
    dict.set_item("horizon", est.horizon)?;
    dict.set_item("censor_fraction", est.censor_fraction())?;
    Ok(dict.into())
}

/// Cover-time bound `(2 t_hit + 1) log2(4 size)`.
#[pyfunction]
fn t_cov_bound(t_hit: f64, size: usize) -> f64 {
    rmiso::sampling::t_cov_bound(t_hit, size)
}

/// Nonnegative L1-regularized least squares: minimizes
/// `0.5 ||x - w h||_F^2 + alpha ||h||_1` over `h >= 0`.
#[pyfunction]
#[pyo3(signature = (x, w, alpha=0.0))]
fn nnls(x: Vec<Vec<f64>>, w: Vec<Vec<f64>>, alpha: f64) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix_from_rows(x, "x")?;
    let w = matrix_from_rows(w, "w")?;
    let tol = InnerTolerance {
        max_iters: 500_000,
        ..InnerTolerance::default()
    };
    let h = nnls_l1(&x, &w, alpha, &tol).map_err(to_py_err)?;
    Ok(matrix_to_rows(&h))
}

/// Projection onto matrices with nonnegative entries and unit-capped row
/// norms.
#[pyfunction]
fn project_nonneg_row_ball(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix_from_rows(x, "x")?;
    let set = FeasibleSet::NonnegRowBall {
        rows: m.nrows(),
        cols: m.ncols(),
    };
    let projected = set.project(&ParameterPoint::from_matrix(m));
    Ok(matrix_to_rows(projected.matrix()))
}

fn parse_variant(name: &str) -> PyResult<Variant> {
    Variant::parse(name).map_err(to_py_err)
}

fn summary_to_dict(py: Python<'_>, summary: &RunSummary) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    let records = &summary.records;
    let column = |f: &dyn Fn(&rmiso::solver::IterationRecord) -> f64| -> Vec<f64> {
        records.iter().map(f).collect()
    };
    dict.set_item("iter", records.iter().map(|r| r.n).collect::<Vec<_>>())?;
    dict.set_item("objective", column(&|r| r.objective))?;
    dict.set_item("surrogate", column(&|r| r.surrogate_value))?;
    dict.set_item("stationarity", column(&|r| r.stationarity))?;
    dict.set_item("error_grad_norm", column(&|r| r.error_grad_norm))?;
    dict.set_item("step_norm", column(&|r| r.step_norm))?;
    dict.set_item("rho_n", column(&|r| r.rho_n))?;
    dict.set_item("radius_n", column(&|r| r.radius_n))?;
    dict.set_item(
        "sampled_index",
        records.iter().map(|r| r.sampled_index).collect::<Vec<_>>(),
    )?;
    dict.set_item("delta0", summary.delta0)?;
    dict.set_item("energy_sum", summary.energy_sum)?;
    dict.set_item("gap_sum", summary.gap_sum)?;
    dict.set_item("step_sq_sum", summary.step_sq_sum)?;
    dict.set_item("min_stationarity", summary.min_stationarity)?;
    dict.set_item("initial_objective", summary.initial_objective)?;
    dict.set_item("final_objective", summary.final_objective)?;
    dict.set_item("checks_passed", summary.all_ok())?;
    Ok(dict.into())
}

#[allow(clippy::too_many_arguments)]
fn run_problem<P: FiniteSumProblem>(
    py: Python<'_>,
    problem: P,
    sampler: &str,
    graph: Option<&str>,
    start: usize,
    variant: &str,
    rho: f64,
    iters: u64,
    seed: u64,
    record_every: u64,
) -> PyResult<Py<PyDict>> {
    let size = problem.num_components();
    let kind = parse_sampler(sampler, size, start)?;
    let topology = graph.map(|g| parse_graph(g, size)).transpose()?;
    let mut config = SolverConfig::new(parse_variant(variant)?, rho, seed);
    config.record_every = record_every;
    let mut state = SolverState::init(problem, topology, kind, config).map_err(to_py_err)?;
    let summary = state.run(iters).map_err(to_py_err)?;
    summary_to_dict(py, &summary)
}

/// Runs the solver on a synthetic quadratic finite sum.
#[pyfunction]
#[pyo3(signature = (components=8, dim=4, variant="rmiso_cpr", rho=10.0, iters=500, seed=0,
                    sampler="cyclic", graph=None, start=0, record_every=1, data_seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_quadratic(
    py: Python<'_>,
    components: usize,
    dim: usize,
    variant: &str,
    rho: f64,
    iters: u64,
    seed: u64,
    sampler: &str,
    graph: Option<&str>,
    start: usize,
    record_every: u64,
    data_seed: u64,
) -> PyResult<Py<PyDict>> {
    let problem = QuadProblem::synthetic(components, dim, data_seed);
    run_problem(
        py, problem, sampler, graph, start, variant, rho, iters, seed, record_every,
    )
}

/// Runs the solver on a distributed factorization problem built from the
/// given nonnegative shard matrices.
#[pyfunction]
#[pyo3(signature = (shards, rank, alpha=0.0357142857142857, variant="rmiso_cpr", rho=50.0,
                    iters=500, seed=0, sampler="cyclic", graph=None, start=0, record_every=1))]
#[allow(clippy::too_many_arguments)]
fn run_nmf(
    py: Python<'_>,
    shards: Vec<Vec<Vec<f64>>>,
    rank: usize,
    alpha: f64,
    variant: &str,
    rho: f64,
    iters: u64,
    seed: u64,
    sampler: &str,
    graph: Option<&str>,
    start: usize,
    record_every: u64,
) -> PyResult<Py<PyDict>> {
    let shards: Vec<Array2<f64>> = shards
        .into_iter()
        .map(|s| matrix_from_rows(s, "shard"))
        .collect::<PyResult<_>>()?;
    let problem = NmfProblem::new(shards, rank, alpha).map_err(to_py_err)?;
    run_problem(
        py, problem, sampler, graph, start, variant, rho, iters, seed, record_every,
    )
}

/// Runs the solver on synthetic label-sharded logistic regression with the
/// bounded nonconvex regularizer.
#[pyfunction]
#[pyo3(signature = (rows=600, dim=20, batch=60, variant="rmiso_cpr", rho=50.0, iters=500,
                    seed=0, sampler="reshuffle", graph=None, start=0, record_every=1, data_seed=0))]
#[allow(clippy::too_many_arguments)]
fn run_logreg(
    py: Python<'_>,
    rows: usize,
    dim: usize,
    batch: usize,
    variant: &str,
    rho: f64,
    iters: u64,
    seed: u64,
    sampler: &str,
    graph: Option<&str>,
    start: usize,
    record_every: u64,
    data_seed: u64,
) -> PyResult<Py<PyDict>> {
    let data = synthetic_classification(rows, dim, data_seed);
    let mut labels: Vec<f64> = data.iter().map(|r| r.label).collect();
    labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    labels.dedup();
    let expected: usize = labels
        .iter()
        .map(|l| data.iter().filter(|r| r.label == *l).count().div_ceil(batch))
        .sum();
    let shards = shard_by_label(&data, expected, batch).map_err(to_py_err)?;
    let problem = LogRegProblem::new(shards, dim).map_err(to_py_err)?;
    run_problem(
        py, problem, sampler, graph, start, variant, rho, iters, seed, record_every,
    )
}

#[pymodule]
fn rmiso_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySampler>()?;
    m.add_function(wrap_pyfunction!(estimate_recurrence, m)?)?;
    m.add_function(wrap_pyfunction!(t_cov_bound, m)?)?;
    m.add_function(wrap_pyfunction!(nnls, m)?)?;
    m.add_function(wrap_pyfunction!(project_nonneg_row_ball, m)?)?;
    m.add_function(wrap_pyfunction!(run_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(run_nmf, m)?)?;
    m.add_function(wrap_pyfunction!(run_logreg, m)?)?;
    Ok(())
}
