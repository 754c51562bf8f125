//! Run configuration files.
//!
//! Flat `key = value` pairs under `[section]` headers; `#` starts a comment.
//! Sections: `[problem]`, `[sampler]`, `[solver]`, `[run]`. Parsing then
//! re-serializing is idempotent, and referenced files are checked for
//! existence at parse time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};

use rmiso::graph::Graph;
use rmiso::inner::InnerTolerance;
use rmiso::problems::{
    image_shards, load_dense_csv, load_idx_images, load_idx_labels, load_sparse_classification,
    shard_by_label, synthetic_classification, FiniteSumProblem, LogRegProblem, NmfProblem,
    QuadProblem,
};
use rmiso::sampling::SamplerKind;
use rmiso::solver::{RadiusSchedule, SolverConfig, Variant};

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Quad {
        components: usize,
        dim: usize,
        data_seed: u64,
    },
    NmfSynthetic {
        shards: usize,
        rows: usize,
        cols: usize,
        rank: usize,
        alpha: f64,
        data_seed: u64,
    },
    NmfCsv {
        files: Vec<PathBuf>,
        header: bool,
        rank: usize,
        alpha: f64,
    },
    NmfIdx {
        images: PathBuf,
        labels: PathBuf,
        batch: usize,
        rank: usize,
        alpha: f64,
    },
    LogRegSynthetic {
        rows: usize,
        dim: usize,
        batch: usize,
        data_seed: u64,
        smoothness: Option<f64>,
    },
    LogRegFile {
        path: PathBuf,
        batch: usize,
        smoothness: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    Cycle,
    Complete,
    Lonely,
    EdgeList(PathBuf),
}

impl GraphSpec {
    pub fn parse(text: &str) -> GraphSpec {
        match text {
            "cycle" => GraphSpec::Cycle,
            "complete" => GraphSpec::Complete,
            "lonely" => GraphSpec::Lonely,
            other => GraphSpec::EdgeList(PathBuf::from(other)),
        }
    }

    pub fn build(&self, size: usize) -> Result<Graph> {
        let graph = match self {
            GraphSpec::Cycle => Graph::cycle(size),
            GraphSpec::Complete => Graph::complete(size),
            GraphSpec::Lonely => Graph::lonely(size),
            GraphSpec::EdgeList(path) => Graph::from_edge_list_file(path)?,
        };
        if graph.len() != size {
            bail!(
                "graph has {} vertices but the problem has {} components",
                graph.len(),
                size
            );
        }
        Ok(graph)
    }

    fn text(&self) -> String {
        match self {
            GraphSpec::Cycle => "cycle".into(),
            GraphSpec::Complete => "complete".into(),
            GraphSpec::Lonely => "lonely".into(),
            GraphSpec::EdgeList(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerSpecKind {
    Iid,
    RandomWalk,
    Cyclic,
    Reshuffle,
}

impl SamplerSpecKind {
    fn parse(text: &str) -> Result<Self> {
        Ok(match text {
            "iid" => SamplerSpecKind::Iid,
            "random_walk" => SamplerSpecKind::RandomWalk,
            "cyclic" => SamplerSpecKind::Cyclic,
            "reshuffle" => SamplerSpecKind::Reshuffle,
            other => bail!("unknown sampler kind {other:?}"),
        })
    }

    fn text(&self) -> &'static str {
        match self {
            SamplerSpecKind::Iid => "iid",
            SamplerSpecKind::RandomWalk => "random_walk",
            SamplerSpecKind::Cyclic => "cyclic",
            SamplerSpecKind::Reshuffle => "reshuffle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerSpecKind,
    pub graph: Option<GraphSpec>,
    pub start: usize,
}

impl SamplerSpec {
    pub fn build_kind(&self, size: usize) -> SamplerKind {
        match self.kind {
            SamplerSpecKind::Iid => SamplerKind::iid_uniform(size),
            SamplerSpecKind::RandomWalk => SamplerKind::RandomWalk { start: self.start },
            SamplerSpecKind::Cyclic => SamplerKind::cyclic_natural(size),
            SamplerSpecKind::Reshuffle => SamplerKind::Reshuffle,
        }
    }

    pub fn topology(&self, size: usize) -> Result<Option<Graph>> {
        match &self.graph {
            Some(spec) => Ok(Some(spec.build(size)?)),
            None => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RhoSpec {
    Auto,
    Value(f64),
}

impl RhoSpec {
    pub fn parse(text: &str) -> Result<RhoSpec> {
        if text == "auto" {
            return Ok(RhoSpec::Auto);
        }
        let value: f64 = text
            .parse()
            .map_err(|_| anyhow!("rho must be `auto` or a number, got {text:?}"))?;
        if value < 0.0 {
            bail!("rho must be nonnegative");
        }
        Ok(RhoSpec::Value(value))
    }

    fn text(&self) -> String {
        match self {
            RhoSpec::Auto => "auto".into(),
            RhoSpec::Value(v) => format!("{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub variant: Variant,
    pub rho: RhoSpec,
    pub radius_scale: f64,
    pub iters: u64,
    pub record_every: u64,
    pub invariant_checks: bool,
    pub grad_tol: f64,
    pub max_inner_iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub sampler: SamplerSpec,
    pub solver: SolverSpec,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub timing: bool,
}

impl RunConfig {
    pub fn solver_config(&self, seed: u64, rho: f64) -> SolverConfig {
        let mut config = SolverConfig::new(self.solver.variant, rho, seed);
        config.radius = RadiusSchedule::InvSqrtLog {
            scale: self.solver.radius_scale,
        };
        config.record_every = self.solver.record_every;
        config.invariant_checks = self.solver.invariant_checks;
        config.tol = InnerTolerance {
            grad_tol: self.solver.grad_tol,
            max_iters: self.solver.max_inner_iters,
            dykstra_tol: 1e-10,
        };
        config
    }
}

fn parse_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
        if current.is_empty() {
            bail!("line {}: key outside any [section]", lineno + 1);
        }
        sections
            .get_mut(&current)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

struct Section<'a> {
    name: &'static str,
    map: &'a BTreeMap<String, String>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Result<&'a str> {
        self.map
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| anyhow!("[{}] is missing key {key:?}", self.name))
    }

    fn opt(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key)?;
        raw.parse::<T>()
            .map_err(|e| anyhow!("[{}] {key} = {raw:?}: {e}", self.name))
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.opt(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|e| anyhow!("[{}] {key} = {raw:?}: {e}", self.name)),
            None => Ok(default),
        }
    }
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let sections = parse_sections(text)?;
    let section = |name: &'static str| -> Result<Section<'_>> {
        sections
            .get(name)
            .map(|map| Section { name, map })
            .ok_or_else(|| anyhow!("missing [{name}] section"))
    };

    let resolve = |raw: &str| -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() || base_dir == Path::new(".") || base_dir.as_os_str().is_empty() {
            p
        } else {
            base_dir.join(p)
        }
    };
    let existing = |raw: &str| -> Result<PathBuf> {
        let p = resolve(raw);
        if !p.exists() {
            bail!("referenced file {} does not exist", p.display());
        }
        Ok(p)
    };

    let p = section("problem")?;
    let problem = match p.get("kind")? {
        "quad" => ProblemSpec::Quad {
            components: p.parse("components")?,
            dim: p.parse("dim")?,
            data_seed: p.parse_or("data_seed", 0)?,
        },
        "nmf_synthetic" => ProblemSpec::NmfSynthetic {
            shards: p.parse("shards")?,
            rows: p.parse("rows")?,
            cols: p.parse("cols")?,
            rank: p.parse("rank")?,
            alpha: p.parse_or("alpha", 1.0 / 28.0)?,
            data_seed: p.parse_or("data_seed", 0)?,
        },
        "nmf_csv" => {
            let files: Vec<PathBuf> = p
                .get("files")?
                .split(';')
                .map(|f| existing(f.trim()))
                .collect::<Result<_>>()?;
            if files.is_empty() {
                bail!("[problem] files must list at least one CSV");
            }
            ProblemSpec::NmfCsv {
                files,
                header: p.parse_or("header", false)?,
                rank: p.parse("rank")?,
                alpha: p.parse_or("alpha", 1.0 / 28.0)?,
            }
        }
        "nmf_idx" => ProblemSpec::NmfIdx {
            images: existing(p.get("images")?)?,
            labels: existing(p.get("labels")?)?,
            batch: p.parse_or("batch", 100)?,
            rank: p.parse_or("rank", 15)?,
            alpha: p.parse_or("alpha", 1.0 / 28.0)?,
        },
        "logreg_synthetic" => ProblemSpec::LogRegSynthetic {
            rows: p.parse_or("rows", 2000)?,
            dim: p.parse("dim")?,
            batch: p.parse("batch")?,
            data_seed: p.parse_or("data_seed", 0)?,
            smoothness: match p.opt("smoothness") {
                Some(raw) => Some(raw.parse().map_err(|e| anyhow!("smoothness: {e}"))?),
                None => None,
            },
        },
        "logreg_file" => ProblemSpec::LogRegFile {
            path: existing(p.get("path")?)?,
            batch: p.parse("batch")?,
            smoothness: match p.opt("smoothness") {
                Some(raw) => Some(raw.parse().map_err(|e| anyhow!("smoothness: {e}"))?),
                None => None,
            },
        },
        other => bail!("unknown problem kind {other:?}"),
    };

    let s = section("sampler")?;
    let sampler = SamplerSpec {
        kind: SamplerSpecKind::parse(s.get("kind")?)?,
        graph: match s.opt("graph") {
            Some(raw) => {
                let spec = GraphSpec::parse(raw);
                if let GraphSpec::EdgeList(path) = &spec {
                    let resolved = existing(&path.display().to_string())?;
                    Some(GraphSpec::EdgeList(resolved))
                } else {
                    Some(spec)
                }
            }
            None => None,
        },
        start: s.parse_or("start", 0)?,
    };
    if sampler.kind == SamplerSpecKind::RandomWalk && sampler.graph.is_none() {
        bail!("[sampler] random_walk requires a graph");
    }

    let so = section("solver")?;
    let solver = SolverSpec {
        variant: Variant::parse(so.get("variant")?).map_err(|e| anyhow!("{e}"))?,
        rho: RhoSpec::parse(so.opt("rho").unwrap_or("0"))?,
        radius_scale: so.parse_or("radius_scale", 1.0)?,
        iters: so.parse("iters")?,
        record_every: so.parse_or("record_every", 1)?,
        invariant_checks: so.parse_or("invariant_checks", true)?,
        grad_tol: so.parse_or("grad_tol", 1e-8)?,
        max_inner_iters: so.parse_or("max_inner_iters", 10_000)?,
    };

    let r = section("run")?;
    let seeds: Vec<u64> = r
        .get("seeds")?
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|e| anyhow!("seed {t:?}: {e}"))
        })
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        bail!("[run] seeds must be nonempty");
    }
    let out = resolve(r.opt("out").unwrap_or("runs"));
    let timing = r.parse_or("timing", false)?;

    Ok(RunConfig {
        problem,
        sampler,
        solver,
        seeds,
        out,
        timing,
    })
}

pub fn serialize_config(config: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str("[problem]\n");
    match &config.problem {
        ProblemSpec::Quad {
            components,
            dim,
            data_seed,
        } => {
            let _ = writeln!(out, "kind = quad");
            let _ = writeln!(out, "components = {components}");
            let _ = writeln!(out, "dim = {dim}");
            let _ = writeln!(out, "data_seed = {data_seed}");
        }
        ProblemSpec::NmfSynthetic {
            shards,
            rows,
            cols,
            rank,
            alpha,
            data_seed,
        } => {
            let _ = writeln!(out, "kind = nmf_synthetic");
            let _ = writeln!(out, "shards = {shards}");
            let _ = writeln!(out, "rows = {rows}");
            let _ = writeln!(out, "cols = {cols}");
            let _ = writeln!(out, "rank = {rank}");
            let _ = writeln!(out, "alpha = {alpha}");
            let _ = writeln!(out, "data_seed = {data_seed}");
        }
        ProblemSpec::NmfCsv {
            files,
            header,
            rank,
            alpha,
        } => {
            let _ = writeln!(out, "kind = nmf_csv");
            let joined: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
            let _ = writeln!(out, "files = {}", joined.join(";"));
            let _ = writeln!(out, "header = {header}");
            let _ = writeln!(out, "rank = {rank}");
            let _ = writeln!(out, "alpha = {alpha}");
        }
        ProblemSpec::NmfIdx {
            images,
            labels,
            batch,
            rank,
            alpha,
        } => {
            let _ = writeln!(out, "kind = nmf_idx");
            let _ = writeln!(out, "images = {}", images.display());
            let _ = writeln!(out, "labels = {}", labels.display());
            let _ = writeln!(out, "batch = {batch}");
            let _ = writeln!(out, "rank = {rank}");
            let _ = writeln!(out, "alpha = {alpha}");
        }
        ProblemSpec::LogRegSynthetic {
            rows,
            dim,
            batch,
            data_seed,
            smoothness,
        } => {
            let _ = writeln!(out, "kind = logreg_synthetic");
            let _ = writeln!(out, "rows = {rows}");
            let _ = writeln!(out, "dim = {dim}");
            let _ = writeln!(out, "batch = {batch}");
            let _ = writeln!(out, "data_seed = {data_seed}");
            if let Some(l) = smoothness {
                let _ = writeln!(out, "smoothness = {l}");
            }
        }
        ProblemSpec::LogRegFile {
            path,
            batch,
            smoothness,
        } => {
            let _ = writeln!(out, "kind = logreg_file");
            let _ = writeln!(out, "path = {}", path.display());
            let _ = writeln!(out, "batch = {batch}");
            if let Some(l) = smoothness {
                let _ = writeln!(out, "smoothness = {l}");
            }
        }
    }
    out.push_str("\n[sampler]\n");
    let _ = writeln!(out, "kind = {}", config.sampler.kind.text());
    if let Some(graph) = &config.sampler.graph {
        let _ = writeln!(out, "graph = {}", graph.text());
    }
    let _ = writeln!(out, "start = {}", config.sampler.start);
    out.push_str("\n[solver]\n");
    let _ = writeln!(out, "variant = {}", config.solver.variant.label());
    let _ = writeln!(out, "rho = {}", config.solver.rho.text());
    let _ = writeln!(out, "radius_scale = {}", config.solver.radius_scale);
    let _ = writeln!(out, "iters = {}", config.solver.iters);
    let _ = writeln!(out, "record_every = {}", config.solver.record_every);
    let _ = writeln!(out, "invariant_checks = {}", config.solver.invariant_checks);
    let _ = writeln!(out, "grad_tol = {}", config.solver.grad_tol);
    let _ = writeln!(out, "max_inner_iters = {}", config.solver.max_inner_iters);
    out.push_str("\n[run]\n");
    let seeds: Vec<String> = config.seeds.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "seeds = {}", seeds.join(","));
    let _ = writeln!(out, "out = {}", config.out.display());
    let _ = writeln!(out, "timing = {}", config.timing);
    out
}

/// Builds the problem instance for one run.
pub fn build_problem(spec: &ProblemSpec) -> Result<Box<dyn FiniteSumProblem>> {
    Ok(match spec {
        ProblemSpec::Quad {
            components,
            dim,
            data_seed,
        } => Box::new(QuadProblem::synthetic(*components, *dim, *data_seed)),
        ProblemSpec::NmfSynthetic {
            shards,
            rows,
            cols,
            rank,
            alpha,
            data_seed,
        } => {
            let mut problem = NmfProblem::synthetic(*shards, *rows, *cols, *rank, *data_seed);
            if (problem.alpha() - alpha).abs() > 0.0 {
                problem = NmfProblem::new(
                    (0..problem.num_components())
                        .map(|v| (**problem.shard(v)).clone())
                        .collect(),
                    *rank,
                    *alpha,
                )?;
            }
            Box::new(problem)
        }
        ProblemSpec::NmfCsv {
            files,
            header,
            rank,
            alpha,
        } => {
            let shards: Vec<_> = files
                .iter()
                .map(|f| load_dense_csv(f, *header))
                .collect::<rmiso::Result<_>>()?;
            Box::new(NmfProblem::new(shards, *rank, *alpha)?)
        }
        ProblemSpec::NmfIdx {
            images,
            labels,
            batch,
            rank,
            alpha,
        } => {
            let images = load_idx_images(images)?;
            let labels = load_idx_labels(labels)?;
            let shards = image_shards(&images, &labels, *batch)?;
            Box::new(NmfProblem::new(shards, *rank, *alpha)?)
        }
        ProblemSpec::LogRegSynthetic {
            rows,
            dim,
            batch,
            data_seed,
            smoothness,
        } => {
            let data = synthetic_classification(*rows, *dim, *data_seed);
            let expected = expected_shards(&data, *batch);
            let shards = shard_by_label(&data, expected, *batch)?;
            let mut problem = LogRegProblem::new(shards, *dim)?;
            if let Some(l) = smoothness {
                problem = problem.with_smoothness(*l);
            }
            Box::new(problem)
        }
        ProblemSpec::LogRegFile {
            path,
            batch,
            smoothness,
        } => {
            let (data, dim) = load_sparse_classification(path)?;
            let expected = expected_shards(&data, *batch);
            let shards = shard_by_label(&data, expected, *batch)?;
            let mut problem = LogRegProblem::new(shards, dim)?;
            if let Some(l) = smoothness {
                problem = problem.with_smoothness(*l);
            }
            Box::new(problem)
        }
    })
}

fn expected_shards(rows: &[rmiso::problems::SparseRow], batch: usize) -> usize {
    let mut labels: Vec<f64> = rows.iter().map(|r| r.label).collect();
    labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    labels.dedup();
    labels
        .iter()
        .map(|l| rows.iter().filter(|r| r.label == *l).count().div_ceil(batch))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# demo configuration
[problem]
kind = quad
components = 6
dim = 3

[sampler]
kind = cyclic

[solver]
variant = rmiso_cpr
rho = 5
iters = 100

[run]
seeds = 1,2
out = out_dir
";

    #[test]
    fn roundtrip_is_idempotent() {
        let base = Path::new(".");
        let parsed = parse_config(SAMPLE, base).unwrap();
        let serialized = serialize_config(&parsed);
        let reparsed = parse_config(&serialized, base).unwrap();
        assert_eq!(parsed, reparsed);
        assert_eq!(serialized, serialize_config(&reparsed));
    }

    #[test]
    fn missing_file_rejected() {
        let text = "\
[problem]
kind = logreg_file
path = /nonexistent/file.txt
batch = 10

[sampler]
kind = iid

[solver]
variant = miso
iters = 10

[run]
seeds = 1
";
        assert!(parse_config(text, Path::new(".")).is_err());
    }

    #[test]
    fn random_walk_needs_graph() {
        let text = "\
[problem]
kind = quad
components = 4
dim = 2

[sampler]
kind = random_walk

[solver]
variant = miso
iters = 10

[run]
seeds = 1
";
        assert!(parse_config(text, Path::new(".")).is_err());
    }
}
