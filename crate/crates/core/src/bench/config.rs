//! TOML experiment configs and algorithm dispatch.
//!
//! ```toml
//! [graph]
//! kind = "path"        # path | complete | star | random | edges | file
//! n = 5
//! d = 1
//!
//! [functions]
//! default = "zero"
//! 2 = "point p=0"
//!
//! [run]
//! algorithm = "dykstra"  # dykstra | dual-ascent | apg
//! schedule = "tree"
//! x0 = [1, 2, 3, 4, 5]
//! gap_tol = 1e-9
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use crate::apg::{neg_dual, ApgState};
use crate::dual_ascent::AllocationState;
use crate::engine::{DykstraState, Problem, StopRule};
use crate::error::{Error, Result};
use crate::funcs::ConvexFunction;
use crate::graph::Graph;
use crate::linalg::BlockVector;
use crate::schedules::{Generator, ScheduleKind};

use super::oracle::{oracle_allocation, oracle_dykstra};
use super::trace::{write_trace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dykstra,
    DualAscent,
    Apg,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dykstra" => Ok(Algorithm::Dykstra),
            "dual-ascent" => Ok(Algorithm::DualAscent),
            "apg" => Ok(Algorithm::Apg),
            other => Err(Error::Config(format!("unknown algorithm '{other}' (dykstra, dual-ascent, apg)"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub kind: String,
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub d: usize,
    /// Edge probability beyond the random spanning tree (`random`).
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FunctionsSection {
    #[serde(default = "zero_spec")]
    pub default: String,
    /// Per-vertex overrides keyed by 0-based index.
    #[serde(flatten)]
    pub nodes: BTreeMap<String, String>,
}

impl Default for FunctionsSection {
    fn default() -> Self {
        FunctionsSection {
            default: zero_spec(),
            nodes: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default)]
    pub seed: u64,
    /// Either `n·d` values or one block replicated to every vertex.
    #[serde(default)]
    pub x0: Vec<f64>,
    /// Anchor weights `λ_i` (dykstra only).
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    /// Dual-ascent subsets, e.g. `"0,1;1,2"`.
    pub subsets: Option<String>,
    #[serde(default)]
    pub hubs: Vec<usize>,
    #[serde(default)]
    pub greedy: bool,
    #[serde(default)]
    pub parallel: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSection,
    #[serde(default)]
    pub functions: FunctionsSection,
    pub run: RunSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}
fn zero_spec() -> String {
    "zero".into()
}
fn default_algorithm() -> Algorithm {
    Algorithm::Dykstra
}
fn default_schedule() -> String {
    "tree".into()
}
fn default_max_cycles() -> usize {
    1000
}
fn default_gap_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<TraceRow>,
    /// The stopping criterion was met (and, for dual ascent, the run is not stuck).
    pub success: bool,
    pub message: String,
    /// Final primal estimate (consensus value for dual ascent), block by block.
    pub x: Vec<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !(self.run.gap_tol > 0.0) {
            return Err(Error::Config("run.gap_tol must be positive".into()));
        }
        if self.graph.d == 0 {
            return Err(Error::Config("graph.d must be positive".into()));
        }
        Ok(())
    }

    /// Builds the graph and returns it with the block dimension.
    pub fn build_graph(&self) -> Result<(Graph, usize)> {
        let g = &self.graph;
        let need_n = || g.n.ok_or_else(|| Error::Config(format!("graph kind '{}' needs n", g.kind)));
        let graph = match g.kind.as_str() {
            "path" => Graph::path(need_n()?),
            "complete" => Graph::complete(need_n()?),
            "star" => Graph::star(need_n()?.saturating_sub(1)),
            "random" => Graph::random_connected(need_n()?, g.p, g.seed),
            "edges" => Graph::new(need_n()?, &g.edges)?,
            "file" => {
                let file = g.file.as_ref().ok_or_else(|| Error::Config("graph kind 'file' needs file".into()))?;
                let path = self.base_dir.join(file);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                return Graph::from_text(&text);
            }
            other => return Err(Error::Config(format!("unknown graph kind '{other}'"))),
        };
        if graph.n_vertices() < 2 {
            return Err(Error::Config("graph needs at least two vertices".into()));
        }
        Ok((graph, g.d))
    }

    pub fn build_functions(&self, n: usize, dim: usize) -> Result<Vec<ConvexFunction<f64>>> {
        let mut specs = vec![self.functions.default.as_str(); n];
        for (k, spec) in &self.functions.nodes {
            let i: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("functions.{k}: keys are vertex indices or 'default'")))?;
            if i >= n {
                return Err(Error::Config(format!("functions.{k}: vertex out of range (n = {n})")));
            }
            specs[i] = spec;
        }
        specs.iter().map(|s| ConvexFunction::parse(s, dim)).collect()
    }

    pub fn build_x0(&self, n: usize, dim: usize) -> Result<BlockVector<f64>> {
        let x0 = &self.run.x0;
        if x0.is_empty() {
            Ok(BlockVector::zeros(n, dim))
        } else if x0.len() == n * dim {
            BlockVector::from_blocks(x0.chunks(dim).map(<[f64]>::to_vec).collect())
        } else if x0.len() == dim {
            Ok(BlockVector::replicate(x0, n))
        } else {
            Err(Error::Config(format!("run.x0 has {} values; expected {} or {dim}", x0.len(), n * dim)))
        }
    }

    pub fn subsets(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        match &self.run.subsets {
            Some(s) => parse_subsets(s, n),
            // default: every edge of the graph
            None => Ok(self.build_graph()?.0.edges().iter().map(|e| vec![e.lo(), e.hi()]).collect()),
        }
    }

    /// Centralized reference for the configured algorithm.
    pub fn oracle(&self) -> Result<Vec<f64>> {
        let (graph, dim) = self.build_graph()?;
        let n = graph.n_vertices();
        let funcs = self.build_functions(n, dim)?;
        let tol = self.run.gap_tol.min(1e-12);
        match self.run.algorithm {
            Algorithm::DualAscent => Ok(oracle_allocation(&funcs, tol)?.0.x),
            _ => Ok(oracle_dykstra(&funcs, &self.build_x0(n, dim)?, self.run.weights.as_deref(), tol)?.x),
        }
    }
}

/// Parses `"0,1;1,2"` into 0-based vertex subsets.
pub fn parse_subsets(text: &str, n: usize) -> Result<Vec<Vec<usize>>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let set = s
                .split(',')
                .map(|v| {
                    let i: usize = v.trim().parse().map_err(|_| Error::Config(format!("bad vertex '{v}' in subset '{s}'")))?;
                    if i >= n {
                        return Err(Error::Config(format!("vertex {i} out of range in subset '{s}'")));
                    }
                    Ok(i)
                })
                .collect::<Result<Vec<_>>>()?;
            if set.len() < 2 {
                return Err(Error::Config(format!("subset '{s}' needs at least two vertices")));
            }
            Ok(set)
        })
        .collect()
}

/// Runs the configured algorithm and writes the trace to `run.out` when set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = match cfg.run.algorithm {
        Algorithm::Dykstra => run_dykstra(cfg)?,
        Algorithm::DualAscent => run_dual_ascent(cfg)?,
        Algorithm::Apg => run_apg(cfg)?,
    };
    if let Some(out) = &cfg.run.out {
        let path = cfg.base_dir.join(out);
        let file = std::fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        write_trace(std::io::BufWriter::new(file), &outcome.rows)?;
    }
    Ok(outcome)
}

fn build_problem(cfg: &ExperimentConfig) -> Result<(Problem<f64>, Vec<f64>)> {
    let (graph, dim) = cfg.build_graph()?;
    let n = graph.n_vertices();
    let funcs = cfg.build_functions(n, dim)?;
    let x0 = cfg.build_x0(n, dim)?;
    let reference = oracle_dykstra(&funcs, &x0, cfg.run.weights.as_deref(), cfg.run.gap_tol.min(1e-12))?.x;
    let problem = match &cfg.run.weights {
        Some(w) => Problem::weighted(graph, funcs, x0, w)?,
        None => Problem::new(graph, funcs, x0)?,
    };
    Ok((problem, reference))
}

fn run_dykstra(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (problem, reference) = build_problem(cfg)?;
    let n = problem.n_vertices();
    let kind: ScheduleKind = cfg.run.schedule.parse()?;
    let mut source = Generator::new(problem.graph().clone(), kind, cfg.run.seed).with_hubs(cfg.run.hubs.clone());
    let reference = BlockVector::replicate(&reference, n);
    let mut state = DykstraState::new(problem);
    let mut stop = StopRule::new(1, cfg.run.gap_tol);
    stop.parallel = cfg.run.parallel;
    let mut rows = vec![TraceRow {
        iter: 0,
        f: Some(state.dual_objective()?),
        gap_lb: Some(state.gap_lower_bound()),
        dist_ref: Some(state.x_original().sub(&reference).max_abs()),
        sumz_sqrtn: None,
        wall_ns: 0,
    }];
    let start = Instant::now();
    let mut converged = false;
    // one cycle per call so each row gets its own timestamp
    for _ in 0..cfg.run.max_cycles {
        let report = state.run(&mut source, &stop, Some(&reference))?;
        let r = &report.records[0];
        rows.push(TraceRow {
            iter: r.cycle,
            f: Some(r.dual_objective),
            gap_lb: Some(r.gap_lb),
            dist_ref: r.dist_ref,
            sumz_sqrtn: Some(r.sum_z_over_sqrt_n),
            wall_ns: start.elapsed().as_nanos() as u64,
        });
        if report.converged {
            converged = true;
            break;
        }
    }
    let last = rows.last().expect("nonempty");
    let message = format!(
        "dykstra: {} after {} cycles, F = {:.12e}, gap_lb = {:.3e}, dist_ref = {:.3e}",
        if converged { "converged" } else { "cycle budget exhausted" },
        state.cycle(),
        last.f.unwrap_or(f64::NAN),
        last.gap_lb.unwrap_or(f64::NAN),
        last.dist_ref.unwrap_or(f64::NAN),
    );
    Ok(ExperimentOutcome {
        rows,
        success: converged,
        message,
        x: state.x_original().to_blocks(),
    })
}

fn run_dual_ascent(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (graph, dim) = cfg.build_graph()?;
    let n = graph.n_vertices();
    let funcs = cfg.build_functions(n, dim)?;
    let subsets = cfg.subsets(n)?;
    let reference = oracle_allocation(&funcs, 1e-12).ok().map(|(_, y)| y);
    let mut state = AllocationState::zero(funcs)?;
    let dist = |s: &AllocationState<f64>| reference.as_ref().map(|r| s.y().sub(r).max_abs());
    let mut rows = vec![TraceRow {
        iter: 0,
        f: Some(-state.objective()?),
        gap_lb: None,
        dist_ref: dist(&state),
        sumz_sqrtn: None,
        wall_ns: 0,
    }];
    let start = Instant::now();
    let mut pass_gain = 0.0;
    let mut settled = false;
    for k in 0..cfg.run.max_cycles {
        let step = state.ascend_subset(&subsets[k % subsets.len()])?;
        pass_gain += step.improvement;
        rows.push(TraceRow {
            iter: k + 1,
            f: Some(-state.objective()?),
            gap_lb: None,
            dist_ref: dist(&state),
            sumz_sqrtn: None,
            wall_ns: start.elapsed().as_nanos() as u64,
        });
        if (k + 1) % subsets.len() == 0 {
            if pass_gain <= cfg.run.gap_tol {
                settled = true;
                break;
            }
            pass_gain = 0.0;
        }
    }
    let report = state.detect_stuck(&subsets)?;
    rows.last_mut().expect("nonempty").gap_lb = Some(report.spread);
    let fmt = |x: &Vec<f64>| format!("{x:?}");
    let message = if report.stuck {
        format!(
            "dual-ascent: stuck; no subset improves G but subset consensus values disagree: {}",
            report.x_values.iter().map(fmt).collect::<Vec<_>>().join(" ")
        )
    } else {
        format!(
            "dual-ascent: {} after {} steps, G = {:.12e}, spread = {:.3e}",
            if settled { "settled" } else { "step budget exhausted" },
            state.step(),
            state.objective()?,
            report.spread
        )
    };
    let x = report.x_values.first().cloned().unwrap_or_default();
    Ok(ExperimentOutcome {
        rows,
        success: settled && !report.stuck,
        message,
        x: vec![x; n],
    })
}

fn run_apg(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (problem, reference) = build_problem(cfg)?;
    let n = problem.n_vertices();
    let reference = BlockVector::replicate(&reference, n);
    // strong duality: max F equals the primal optimum at the reference
    let target = -problem.primal_value(&reference)? + cfg.run.gap_tol;
    let mut state = ApgState::new(problem)?;
    let mut best = neg_dual(state.problem(), state.u())?;
    let row = |k: usize, best: f64, s: &ApgState<f64>, ns: u64| {
        let x = s.primal();
        TraceRow {
            iter: k,
            f: Some(-best),
            gap_lb: Some(0.5 * x.sub(&s.problem().consensus_projection(&x)).norm_sq()),
            dist_ref: Some(x.sub(&reference).max_abs()),
            sumz_sqrtn: None,
            wall_ns: ns,
        }
    };
    let mut rows = vec![row(0, best, &state, 0)];
    let start = Instant::now();
    let mut hit = best <= target;
    while !hit && state.iteration() < cfg.run.max_cycles {
        let step = state.iterate(cfg.run.greedy)?;
        best = best.min(step.neg_f);
        hit = best <= target;
        rows.push(row(state.iteration(), best, &state, start.elapsed().as_nanos() as u64));
    }
    let message = format!(
        "apg: {} after {} iterations, best F = {:.12e}, target = {:.12e}",
        if hit { "reached target" } else { "iteration budget exhausted" },
        state.iteration(),
        -best,
        -target,
    );
    Ok(ExperimentOutcome {
        rows,
        success: hit,
        message,
        x: state.primal().to_blocks(),
    })
}
