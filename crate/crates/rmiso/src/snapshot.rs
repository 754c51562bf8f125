//! Versioned binary snapshots for run resumption.
//!
//! The surrogate snapshot stores the per-index records and the incremental
//! aggregate bit-for-bit (header with a kind tag and dimensions, then
//! row-major little-endian f64 payloads). The solver snapshot wraps it with
//! the iterate, sampler/RNG state, visit log, and invariant accumulators, so
//! a restored run continues exactly where the original left off. Only the
//! prox-linear and variational families are serializable; the closure-backed
//! families are test-only.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::point::ParameterPoint;
use crate::problems::FiniteSumProblem;
use crate::sampling::VisitLog;
use crate::solver::{SolverState, Variant};
use crate::surrogate::{
    prox_linear_from_parts, variational_from_parts, AveragedSurrogate, SurrogateKind,
    SurrogateRecord,
};

const SURROGATE_MAGIC: &[u8; 4] = b"RMSS";
const SOLVER_MAGIC: &[u8; 4] = b"RMSV";
const VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        Writer { buf }
    }

    fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    fn u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn u128(&mut self, x: u128) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn f64_slice(&mut self, xs: &[f64]) {
        for x in xs {
            self.f64(*x);
        }
    }

    fn matrix(&mut self, m: &Array2<f64>) {
        self.u32(m.nrows() as u32);
        self.u32(m.ncols() as u32);
        for x in m.iter() {
            self.f64(*x);
        }
    }

    fn point(&mut self, p: &ParameterPoint) {
        self.u32(p.rows() as u32);
        self.u32(p.cols() as u32);
        self.f64_slice(p.as_slice());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[0..4] != magic {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        Ok(Reader { bytes, pos: 6 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Snapshot("truncated snapshot".into()));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        let b = self.take(16)?;
        Ok(u128::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let data = self.f64_vec(rows * cols)?;
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Snapshot(format!("bad matrix shape: {e}")))
    }

    fn point(&mut self) -> Result<ParameterPoint> {
        Ok(ParameterPoint::from_matrix(self.matrix()?))
    }
}

/// Serializes the averaged surrogate (records plus incremental aggregate).
pub fn write_surrogate_snapshot(avg: &AveragedSurrogate) -> Result<Vec<u8>> {
    let mut w = Writer::new(SURROGATE_MAGIC);
    let kind_tag = match avg.kind() {
        SurrogateKind::ProxLinear => 0u8,
        SurrogateKind::Variational => 1u8,
        other => {
            return Err(Error::Snapshot(format!(
                "surrogate kind {other:?} is not serializable"
            )))
        }
    };
    w.u8(kind_tag);
    w.u32(avg.len() as u32);
    w.f64_slice(avg.weights());
    match kind_tag {
        0 => {
            for record in avg.records() {
                let (value, grad, curvature) =
                    record.prox_linear_parts().expect("prox-linear record");
                w.point(&record.anchor);
                w.f64(value);
                w.point(grad);
                w.f64(curvature);
            }
            let (anchor_mean, grad_mean, curvature) =
                avg.prox_linear_aggregate().expect("prox-linear aggregate");
            let (const_term, _) = avg.aggregate_scalars();
            w.point(anchor_mean);
            w.point(grad_mean);
            w.f64(curvature);
            w.f64(const_term);
        }
        1 => {
            for record in avg.records() {
                let (code, _, alpha) = record.variational_parts().expect("variational record");
                w.point(&record.anchor);
                w.matrix(code);
                w.f64(alpha);
                w.f64(record.smoothness);
            }
            let (gram, cross, const_term) = avg.nmf_stats().expect("nmf aggregate");
            w.matrix(gram);
            w.matrix(cross);
            w.f64(const_term);
        }
        _ => unreachable!(),
    }
    Ok(w.buf)
}

/// Rebuilds an averaged surrogate from a snapshot. Variational records need
/// the per-index data matrices (`shards[v]`) to be re-attached.
pub fn read_surrogate_snapshot(
    bytes: &[u8],
    shards: Option<&[Arc<Array2<f64>>]>,
) -> Result<AveragedSurrogate> {
    let mut r = Reader::new(bytes, SURROGATE_MAGIC)?;
    let kind_tag = r.u8()?;
    let count = r.u32()? as usize;
    let weights = r.f64_vec(count)?;
    let mut records: Vec<SurrogateRecord> = Vec::with_capacity(count);
    match kind_tag {
        0 => {
            for _ in 0..count {
                let anchor = r.point()?;
                let value = r.f64()?;
                let grad = r.point()?;
                let curvature = r.f64()?;
                records.push(prox_linear_from_parts(anchor, value, grad, curvature));
            }
            let anchor_mean = r.point()?;
            let grad_mean = r.point()?;
            let curvature = r.f64()?;
            let const_term = r.f64()?;
            let mut avg = AveragedSurrogate::new(records, weights)?;
            avg.restore_aggregate(crate::surrogate::Aggregate::ProxLinear {
                anchor_mean,
                grad_mean,
                const_term,
                curvature,
            });
            Ok(avg)
        }
        1 => {
            let shards = shards.ok_or_else(|| {
                Error::Snapshot("variational snapshot needs the problem's data shards".into())
            })?;
            if shards.len() != count {
                return Err(Error::Snapshot(format!(
                    "snapshot has {count} records but {} shards were provided",
                    shards.len()
                )));
            }
            for v in 0..count {
                let anchor = r.point()?;
                let code = r.matrix()?;
                let alpha = r.f64()?;
                let smoothness = r.f64()?;
                records.push(variational_from_parts(
                    anchor,
                    shards[v].clone(),
                    code,
                    alpha,
                    smoothness,
                ));
            }
            let gram = r.matrix()?;
            let cross = r.matrix()?;
            let const_term = r.f64()?;
            let mut avg = AveragedSurrogate::new(records, weights)?;
            avg.restore_aggregate(crate::surrogate::Aggregate::Nmf {
                gram,
                cross,
                const_term,
            });
            Ok(avg)
        }
        other => Err(Error::Snapshot(format!("unknown kind tag {other}"))),
    }
}

fn variant_tag(variant: Variant) -> u8 {
    match variant {
        Variant::Miso => 0,
        Variant::ConstantProx => 1,
        Variant::DynamicProx => 2,
        Variant::DiminishingRadius => 3,
    }
}

/// Serializes the full solver state: iterate, sampler and RNG position,
/// visit log, invariant accumulators, and the surrogate snapshot.
pub fn write_solver_snapshot<P: FiniteSumProblem>(state: &SolverState<P>) -> Result<Vec<u8>> {
    let (config, sampler, log, avg, theta, acc) = state.snapshot_parts();
    let mut w = Writer::new(SOLVER_MAGIC);
    w.u8(variant_tag(config.variant));
    w.u64(acc.n);
    w.point(theta);
    for x in [
        acc.prev_gbar,
        acc.delta0,
        acc.mu,
        acc.pi_min,
        acc.initial_objective,
        acc.energy_sum,
        acc.gap_sum,
        acc.step_sq_sum,
        acc.radius_sq_sum,
        acc.last_step_norm,
        acc.last_radius,
    ] {
        w.f64(x);
    }
    let (stream, word_pos) = sampler.rng_state();
    w.u64(stream);
    w.u128(word_pos);
    let (scalar, _, _) = sampler.state_words();
    w.u64(scalar);
    match sampler.reshuffle_order() {
        Some(order) => {
            w.u8(1);
            w.u32(order.len() as u32);
            for &x in order {
                w.u32(x as u32);
            }
        }
        None => w.u8(0),
    }
    w.u64(log.step());
    w.u32(match log.current() {
        Some(v) => v as u32,
        None => u32::MAX,
    });
    w.u32(log.size() as u32);
    for v in 0..log.size() {
        w.u64(log.raw_last_passage()[v]);
    }
    for v in 0..log.size() {
        w.u64(log.visit_count(v));
    }
    let surrogate = write_surrogate_snapshot(avg)?;
    w.u64(surrogate.len() as u64);
    w.buf.extend_from_slice(&surrogate);
    Ok(w.buf)
}

/// Restores a solver run from a snapshot. The caller re-supplies the same
/// problem, topology, sampler kind, and configuration that produced it; the
/// restored state then continues the original trajectory exactly.
pub fn restore_solver_snapshot<P: FiniteSumProblem>(
    problem: P,
    topology: Option<crate::graph::Graph>,
    sampler_kind: crate::sampling::SamplerKind,
    config: crate::solver::SolverConfig,
    bytes: &[u8],
) -> Result<SolverState<P>> {
    let mut state = SolverState::init(problem, topology, sampler_kind, config.clone())?;
    let mut r = Reader::new(bytes, SOLVER_MAGIC)?;
    let tag = r.u8()?;
    if tag != variant_tag(config.variant) {
        return Err(Error::Snapshot(format!(
            "snapshot variant tag {tag} does not match configuration {:?}",
            config.variant
        )));
    }
    let n = r.u64()?;
    let theta = r.point()?;
    let mut scalars = [0.0f64; 11];
    for s in scalars.iter_mut() {
        *s = r.f64()?;
    }
    let rng_stream = r.u64()?;
    let rng_word_pos = r.u128()?;
    let sampler_scalar = r.u64()?;
    let reshuffle_order = if r.u8()? == 1 {
        let len = r.u32()? as usize;
        let mut order = Vec::with_capacity(len);
        for _ in 0..len {
            order.push(r.u32()? as usize);
        }
        Some(order)
    } else {
        None
    };
    let log_step = r.u64()?;
    let current_raw = r.u32()?;
    let size = r.u32()? as usize;
    let mut last_passage = Vec::with_capacity(size);
    for _ in 0..size {
        last_passage.push(r.u64()?);
    }
    let mut counts = Vec::with_capacity(size);
    for _ in 0..size {
        counts.push(r.u64()?);
    }
    let log = VisitLog::restore(
        log_step,
        if current_raw == u32::MAX {
            None
        } else {
            Some(current_raw as usize)
        },
        last_passage,
        counts,
    );
    let surrogate_len = r.u64()? as usize;
    let surrogate_bytes = r.take(surrogate_len)?;
    let shards: Option<Vec<Arc<Array2<f64>>>> = {
        let p = state.problem();
        let mut out = Vec::new();
        let mut any = false;
        for v in 0..p.num_components() {
            match p.shard_data(v) {
                Some(data) => {
                    any = true;
                    out.push(data);
                }
                None => out.push(Arc::new(Array2::zeros((0, 0)))),
            }
        }
        any.then_some(out)
    };
    let avg = read_surrogate_snapshot(surrogate_bytes, shards.as_deref())?;
    for (v, record) in avg.records().iter().enumerate() {
        if let Some((code, _, _)) = record.variational_parts() {
            state.problem_mut().restore_cached_code(v, code);
        }
    }
    *state.avg_mut() = avg;
    state.restore_parts(
        sampler_scalar,
        reshuffle_order,
        rng_stream,
        rng_word_pos,
        log,
        theta,
        crate::solver::SnapshotAccumulators {
            n,
            prev_gbar: scalars[0],
            delta0: scalars[1],
            mu: scalars[2],
            pi_min: scalars[3],
            initial_objective: scalars[4],
            energy_sum: scalars[5],
            gap_sum: scalars[6],
            step_sq_sum: scalars[7],
            radius_sq_sum: scalars[8],
            last_step_norm: scalars[9],
            last_radius: scalars[10],
        },
    );
    Ok(state)
}
