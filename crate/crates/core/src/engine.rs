//! Block dual coordinate ascent for
//! `min ½‖x − x₀‖² + Σ_{(i,j)} δ_{H_(i,j)}(x) + Σ_i f_i(x_i)`.
//!
//! The state keeps the primal estimate `x = x₀ − v_H − Σ z_i` together with
//! one dual per node (`z_i`, nonzero only in block `i`) and one [`EdgeDual`]
//! per graph edge. Edges outside the current cycle's edge set carry zero
//! duals.
//!
//! Weighted instances (`Σ λ_i/2 ‖x − x₀_i‖²`) run in the variables
//! `v_i = √λ_i x_i`. Consensus then reads `v_i / s_i = v_j / s_j` with
//! `s_i = √λ_i`, and an edge dual expands to `w / s_lo` at `lo`, `−w / s_hi`
//! at `hi`. All formulas below reduce to the plain ones when `s ≡ 1`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funcs::ConvexFunction;
use crate::graph::{self, Edge, EdgeDual, Graph};
use crate::linalg::{axpy, norm, BlockVector};
use crate::scalar::{Scalar, Tolerances};
use crate::schedules::ScheduleSource;

/// A consensus instance: graph, one function per vertex and the anchor `x₀`.
#[derive(Debug, Clone)]
pub struct Problem<S> {
    graph: Graph,
    funcs: Vec<ConvexFunction<S>>,
    x0: BlockVector<S>,
    scales: Option<Vec<S>>,
    tol: Tolerances<S>,
}

impl<S: Scalar> Problem<S> {
    pub fn new(graph: Graph, funcs: Vec<ConvexFunction<S>>, x0: BlockVector<S>) -> Result<Self> {
        if funcs.len() != graph.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: graph.n_vertices(),
                got: funcs.len(),
            });
        }
        if x0.n_blocks() != graph.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: graph.n_vertices(),
                got: x0.n_blocks(),
            });
        }
        if let Some(f) = funcs.iter().find(|f| f.dim() != x0.dim()) {
            return Err(Error::DimensionMismatch {
                expected: x0.dim(),
                got: f.dim(),
            });
        }
        if !graph.is_connected_graph() {
            return Err(Error::NotConnected);
        }
        Ok(Problem {
            graph,
            funcs,
            x0,
            scales: None,
            tol: Tolerances::default(),
        })
    }

    /// The weighted instance `min Σ λ_i/2 ‖x − x₀_i‖² + Σ f_i(x)` over
    /// consensus `x`, solved in the transformed variables `v = Q^{1/2} x`.
    pub fn weighted(
        graph: Graph,
        funcs: Vec<ConvexFunction<S>>,
        x0: BlockVector<S>,
        lambdas: &[S],
    ) -> Result<Self> {
        let t = transform_weighted(lambdas, &x0, &funcs)?;
        let mut p = Problem::new(graph, funcs, t.x0)?;
        if lambdas.iter().any(|&l| l != S::one()) {
            p.scales = Some(t.scales);
        }
        Ok(p)
    }

    pub fn with_tolerances(mut self, tol: Tolerances<S>) -> Self {
        self.tol = tol;
        self
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn funcs(&self) -> &[ConvexFunction<S>] {
        &self.funcs
    }

    /// Anchor in solver variables (`v₀ = Q^{1/2} x₀` for weighted instances).
    pub fn x0(&self) -> &BlockVector<S> {
        &self.x0
    }

    pub fn scales(&self) -> Option<&[S]> {
        self.scales.as_deref()
    }

    pub fn tolerances(&self) -> &Tolerances<S> {
        &self.tol
    }

    pub fn n_vertices(&self) -> usize {
        self.graph.n_vertices()
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    fn scale(&self, i: usize) -> S {
        self.scales.as_ref().map_or(S::one(), |s| s[i])
    }

    /// Solver variables back to the original ones (`x_i = v_i / s_i`).
    pub fn map_back(&self, v: &BlockVector<S>) -> BlockVector<S> {
        let mut out = v.clone();
        if let Some(s) = &self.scales {
            for (i, &si) in s.iter().enumerate() {
                for c in out.block_mut(i) {
                    *c /= si;
                }
            }
        }
        out
    }

    /// Adds the expanded edge dual (scaled when weighted) into `target`.
    pub fn expand_edge_into(&self, e: Edge, w: &[S], target: &mut BlockVector<S>) {
        target.add_to_block(e.lo(), S::one() / self.scale(e.lo()), w);
        target.add_to_block(e.hi(), -S::one() / self.scale(e.hi()), w);
    }

    /// `v_H = Σ` expanded edge duals; `edge_w` is indexed like `graph.edges()`.
    pub fn v_h(&self, edge_w: &[Vec<S>]) -> BlockVector<S> {
        let mut out = BlockVector::zeros(self.n_vertices(), self.dim());
        for (e, w) in self.graph.edges().iter().zip(edge_w) {
            self.expand_edge_into(*e, w, &mut out);
        }
        out
    }

    /// `f_i*` of the solver-space function at node `i`.
    pub fn node_conjugate(&self, i: usize, z: &[S]) -> Result<S> {
        match &self.scales {
            None => self.funcs[i].conjugate_eval(z),
            Some(s) => self.funcs[i].conjugate_eval(&crate::linalg::scale(s[i], z)),
        }
    }

    /// `prox` of the solver-space node function at `i` with step `tau`.
    pub fn node_prox(&self, i: usize, tau: S, y: &[S]) -> Result<Vec<S>> {
        let s = self.scale(i);
        if s == S::one() {
            return self.funcs[i].prox(tau, y);
        }
        // f(·/s): prox_{τ f(·/s)}(y) = s · prox_{τ/s² f}(y/s)
        let t = self.funcs[i].prox(tau / (s * s), &crate::linalg::scale(S::one() / s, y))?;
        Ok(crate::linalg::scale(s, &t))
    }

    /// Dual objective `F = −½‖x₀ − v_A‖² + ½‖x₀‖² − Σ f_i*(z_i)` with
    /// `v_A = v_H + Σ z_i`. Edge terms vanish on `H⊥`.
    pub fn dual_value(&self, z: &BlockVector<S>, edge_w: &[Vec<S>]) -> Result<S> {
        let mut x = self.x0.sub(&self.v_h(edge_w));
        for i in 0..self.n_vertices() {
            x.add_to_block(i, -S::one(), z.block(i));
        }
        self.dual_value_at(&x, z)
    }

    /// Same as [`Problem::dual_value`] given `x = x₀ − v_A` directly.
    pub fn dual_value_at(&self, x: &BlockVector<S>, z: &BlockVector<S>) -> Result<S> {
        let half = S::lit(0.5);
        let mut f = half * (self.x0.norm_sq() - x.norm_sq());
        for i in 0..self.n_vertices() {
            f -= self.node_conjugate(i, z.block(i))?;
        }
        Ok(f)
    }

    /// `½‖x − x₀‖² + Σ f_i(x_i)` for `x` on the (scaled) diagonal; `+∞` off it.
    pub fn primal_value(&self, x: &BlockVector<S>) -> Result<S> {
        if x.n_blocks() != self.n_vertices() || x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.n_vertices(),
                got: x.n_blocks(),
            });
        }
        let proj = self.consensus_projection(x);
        if x.sub(&proj).norm() > self.tol.absolute * (S::one() + x.norm()) {
            return Ok(S::infinity());
        }
        let mut val = S::lit(0.5) * x.sub(&self.x0).norm_sq();
        for i in 0..self.n_vertices() {
            let s = self.scale(i);
            let xi = crate::linalg::scale(S::one() / s, x.block(i));
            val += self.funcs[i].eval(&xi)?;
        }
        Ok(val)
    }

    /// Orthogonal projection onto the (scaled) diagonal `{v_i = s_i t}`.
    pub fn consensus_projection(&self, x: &BlockVector<S>) -> BlockVector<S> {
        let n = self.n_vertices();
        let num = graph::weighted_block_sum(x, self.scales.as_deref());
        let den: S = (0..n).map(|i| self.scale(i) * self.scale(i)).sum();
        let t = crate::linalg::scale(S::one() / den, &num);
        let mut out = BlockVector::zeros(n, self.dim());
        for i in 0..n {
            out.add_to_block(i, self.scale(i), &t);
        }
        out
    }

    /// Whether every edge in `edges` exists in the graph.
    fn check_edges(&self, edges: &[Edge]) -> Result<()> {
        match edges.iter().find(|e| !self.graph.contains_edge(**e)) {
            Some(e) => Err(Error::InvalidBlock(format!("edge {e} is not in the graph"))),
            None => Ok(()),
        }
    }
}

/// The weighted instance in solver variables: `v₀ = Q^{1/2} x₀`, node
/// functions `f_i(· / s_i)` and the scales `s_i = √λ_i`.
#[derive(Debug, Clone)]
pub struct WeightedTransform<S> {
    pub x0: BlockVector<S>,
    pub funcs: Vec<ConvexFunction<S>>,
    pub scales: Vec<S>,
}

pub fn transform_weighted<S: Scalar>(
    lambdas: &[S],
    x0: &BlockVector<S>,
    funcs: &[ConvexFunction<S>],
) -> Result<WeightedTransform<S>> {
    if lambdas.len() != x0.n_blocks() || funcs.len() != x0.n_blocks() {
        return Err(Error::DimensionMismatch {
            expected: x0.n_blocks(),
            got: lambdas.len().min(funcs.len()),
        });
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > S::zero()) || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("weights must be positive, got {l}")));
    }
    let scales: Vec<S> = lambdas.iter().map(|l| l.sqrt()).collect();
    let mut v0 = x0.clone();
    for (i, &s) in scales.iter().enumerate() {
        for c in v0.block_mut(i) {
            *c *= s;
        }
    }
    let funcs = funcs
        .iter()
        .zip(&scales)
        .map(|(f, &s)| f.rescale(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightedTransform { x0: v0, funcs, scales })
}

/// `S_{n,w}`: at most one vertex plus an acyclic connected set of edges that
/// contains the vertex among its endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    vertex: Option<usize>,
    edges: Vec<Edge>,
    support: Vec<usize>,
}

impl Block {
    pub fn new(vertex: Option<usize>, edges: Vec<Edge>) -> Result<Self> {
        if vertex.is_none() && edges.is_empty() {
            return Err(Error::InvalidBlock("empty block".into()));
        }
        let support = if edges.is_empty() {
            vec![vertex.expect("checked above")]
        } else {
            if !graph::is_tree_on_endpoints(&edges) {
                return Err(Error::InvalidBlock(format!(
                    "block edges {edges:?} are not a tree over their endpoints"
                )));
            }
            graph::endpoints(&edges)
        };
        if let Some(v) = vertex {
            if support.binary_search(&v).is_err() {
                return Err(Error::InvalidBlock(format!("vertex {v} is not an endpoint of the block edges")));
            }
        }
        Ok(Block { vertex, edges, support })
    }

    pub fn edge(e: Edge) -> Self {
        Block::new(None, vec![e]).expect("single edge is a tree")
    }

    pub fn vertex(i: usize) -> Self {
        Block::new(Some(i), Vec::new()).expect("single vertex block")
    }

    pub fn vertex_edge(i: usize, e: Edge) -> Result<Self> {
        Block::new(Some(i), vec![e])
    }

    pub fn block_vertex(&self) -> Option<usize> {
        self.vertex
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `V′` for edge blocks, `{i}` for a lone vertex block; the coordinates a
    /// solve reads and writes.
    pub fn footprint(&self) -> &[usize] {
        &self.support
    }
}

/// The result of a block solve, applied separately so that disjoint blocks
/// can be solved concurrently.
#[derive(Debug, Clone)]
struct BlockUpdate<S> {
    x: Vec<(usize, Vec<S>)>,
    z: Option<(usize, Vec<S>)>,
    edge_w: Vec<(usize, Vec<S>)>,
}

/// Initial `v_H`: none, explicit edge duals, or a D⊥ vector to be decomposed
/// over a spanning tree.
#[derive(Debug, Clone)]
pub enum EdgeInit<S> {
    Zero,
    Duals(Vec<EdgeDual<S>>),
    Decompose { v_h: BlockVector<S>, tree: Vec<Edge> },
}

#[derive(Debug, Clone)]
pub struct DykstraState<S> {
    problem: Problem<S>,
    x: BlockVector<S>,
    z: BlockVector<S>,
    edge_w: Vec<Vec<S>>,
    active: Vec<bool>,
    cycle: usize,
    block: usize,
}

impl<S: Scalar> DykstraState<S> {
    /// Zero duals, `x = x₀`, every edge active.
    pub fn new(problem: Problem<S>) -> Self {
        let (n, d, m) = (problem.n_vertices(), problem.dim(), problem.graph.n_edges());
        DykstraState {
            x: problem.x0.clone(),
            z: BlockVector::zeros(n, d),
            edge_w: vec![vec![S::zero(); d]; m],
            active: vec![true; m],
            cycle: 0,
            block: 0,
            problem,
        }
    }

    /// Builds a state from full per-node duals `z_init[i] ∈ X^|V|` (which must
    /// vanish off block `i`) and an initial `v_H`.
    pub fn init(problem: Problem<S>, z_init: Option<&[BlockVector<S>]>, edges: EdgeInit<S>) -> Result<Self> {
        let n = problem.n_vertices();
        let mut node = BlockVector::zeros(n, problem.dim());
        if let Some(zs) = z_init {
            if zs.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: zs.len() });
            }
            for (i, zi) in zs.iter().enumerate() {
                if zi.n_blocks() != n || zi.dim() != problem.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: zi.n_blocks(),
                    });
                }
                if (0..n).any(|j| j != i && zi.block(j).iter().any(|c| *c != S::zero())) {
                    return Err(Error::SparsityViolation { vertex: i });
                }
                node.block_mut(i).copy_from_slice(zi.block(i));
            }
        }
        let mut edge_w = vec![vec![S::zero(); problem.dim()]; problem.graph.n_edges()];
        match edges {
            EdgeInit::Zero => {}
            EdgeInit::Duals(duals) => {
                for d in duals {
                    let k = problem
                        .graph
                        .edge_index(d.edge)
                        .ok_or_else(|| Error::InvalidArgument(format!("edge {} is not in the graph", d.edge)))?;
                    if d.w.len() != problem.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: problem.dim(),
                            got: d.w.len(),
                        });
                    }
                    edge_w[k] = d.w;
                }
            }
            EdgeInit::Decompose { v_h, tree } => {
                let duals = problem
                    .graph
                    .decompose_scaled(&v_h, &tree, problem.scales(), problem.tol.diag_orth)?;
                for d in duals {
                    edge_w[problem.graph.edge_index(d.edge).expect("tree edge in graph")] = d.w;
                }
            }
        }
        Self::from_duals(problem, node, edge_w)
    }

    /// State with the given node duals (block `i` holds `[z_i]_i`) and edge
    /// duals indexed like `graph.edges()`; `x` is recomputed from them.
    pub fn from_duals(problem: Problem<S>, z: BlockVector<S>, edge_w: Vec<Vec<S>>) -> Result<Self> {
        if z.n_blocks() != problem.n_vertices() || z.dim() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.n_vertices(),
                got: z.n_blocks(),
            });
        }
        if edge_w.len() != problem.graph.n_edges() || edge_w.iter().any(|w| w.len() != problem.dim()) {
            return Err(Error::DimensionMismatch {
                expected: problem.graph.n_edges(),
                got: edge_w.len(),
            });
        }
        let x = problem.x0.sub(&problem.v_h(&edge_w)).sub(&z);
        let m = problem.graph.n_edges();
        Ok(DykstraState {
            problem,
            x,
            z,
            edge_w,
            active: vec![true; m],
            cycle: 0,
            block: 0,
        })
    }

    pub fn problem(&self) -> &Problem<S> {
        &self.problem
    }

    /// Primal estimate in solver variables.
    pub fn x(&self) -> &BlockVector<S> {
        &self.x
    }

    /// Primal estimate in the original variables.
    pub fn x_original(&self) -> BlockVector<S> {
        self.problem.map_back(&self.x)
    }

    /// Node duals; block `i` is `[z_i]_i`.
    pub fn node_duals(&self) -> &BlockVector<S> {
        &self.z
    }

    /// Raw edge-dual vectors indexed like `graph.edges()`.
    pub fn edge_w(&self) -> &[Vec<S>] {
        &self.edge_w
    }

    /// Nonzero edge duals.
    pub fn edge_duals(&self) -> Vec<EdgeDual<S>> {
        self.problem
            .graph
            .edges()
            .iter()
            .zip(&self.edge_w)
            .filter(|(_, w)| w.iter().any(|c| *c != S::zero()))
            .map(|(&edge, w)| EdgeDual { edge, w: w.clone() })
            .collect()
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn block_index(&self) -> usize {
        self.block
    }

    pub fn v_h(&self) -> BlockVector<S> {
        self.problem.v_h(&self.edge_w)
    }

    pub fn v_a(&self) -> BlockVector<S> {
        self.v_h().add(&self.z)
    }

    pub fn dual_objective(&self) -> Result<S> {
        self.problem.dual_value_at(&self.x, &self.z)
    }

    /// Largest deviation from `x = x₀ − v_H − Σ z_i`, relative to `1 + ‖x₀‖∞`.
    pub fn identity_residual(&self) -> S {
        let rebuilt = self.problem.x0.sub(&self.v_a());
        rebuilt.sub(&self.x).max_abs() / (S::one() + self.problem.x0.max_abs())
    }

    /// `½‖x − P x‖²`, a lower bound on the duality gap at the consensus
    /// projection `P x`.
    pub fn gap_lower_bound(&self) -> S {
        let p = self.problem.consensus_projection(&self.x);
        S::lit(0.5) * self.x.sub(&p).norm_sq()
    }

    /// Primal value at `x_feasible` minus `F`, and `½‖x₀ − x_feasible − v_A‖²`.
    /// The first must dominate the second.
    pub fn gap_certificate(&self, x_feasible: &BlockVector<S>) -> Result<GapCertificate<S>> {
        let primal = self.problem.primal_value(x_feasible)?;
        if !primal.is_finite() {
            return Err(Error::Infeasible("point is off the diagonal or outside a domain".into()));
        }
        let dual = self.dual_objective()?;
        let gap = primal - dual;
        let lower_bound = S::lit(0.5) * x_feasible.sub(&self.x).norm_sq();
        let slack = S::lit(1e-10) * (S::one() + primal.abs() + dual.abs());
        if gap < lower_bound - slack || lower_bound < S::zero() {
            return Err(Error::GapInequality {
                gap: gap.as_f64(),
                lower_bound: lower_bound.as_f64(),
            });
        }
        Ok(GapCertificate { gap, lower_bound })
    }

    /// Σ_α ‖z_α‖ (edge duals measured by their expansion).
    pub fn dual_norm_sum(&self) -> S {
        let mut acc = S::zero();
        for i in 0..self.problem.n_vertices() {
            acc += norm(self.z.block(i));
        }
        for (e, w) in self.problem.graph.edges().iter().zip(&self.edge_w) {
            let (a, b) = (self.problem.scale(e.lo()), self.problem.scale(e.hi()));
            acc += norm(w) * (S::one() / (a * a) + S::one() / (b * b)).sqrt();
        }
        acc
    }

    /// Starts a cycle with edge set `e_n` and spanning tree `tree ⊆ e_n`.
    /// `v_H` is preserved; afterwards the edge duals live on `tree` only.
    pub fn begin_cycle(&mut self, e_n: &[Edge], tree: &[Edge]) -> Result<()> {
        let g = &self.problem.graph;
        self.problem.check_edges(e_n)?;
        if !g.is_connected(e_n)? {
            return Err(Error::NotConnected);
        }
        if !g.is_spanning_tree(tree) {
            return Err(Error::InvalidArgument("tree is not a spanning tree".into()));
        }
        let mut in_tree = vec![false; g.n_edges()];
        for e in tree {
            in_tree[g.edge_index(*e).expect("checked")] = true;
        }
        let mut active = vec![false; g.n_edges()];
        for e in e_n {
            active[g.edge_index(*e).expect("checked")] = true;
        }
        if let Some(k) = (0..g.n_edges()).find(|&k| in_tree[k] && !active[k]) {
            return Err(Error::InvalidArgument(format!("tree edge {} is not in E_n", g.edges()[k])));
        }
        let supported = self
            .edge_w
            .iter()
            .enumerate()
            .all(|(k, w)| in_tree[k] || w.iter().all(|c| *c == S::zero()));
        if !supported {
            // The decomposition over a tree is unique, so duals already on the
            // tree are kept untouched and only foreign support forces a redo.
            let v_h = self.v_h();
            let ws = graph::decompose_on_tree(&v_h, tree, self.problem.scales());
            for w in self.edge_w.iter_mut() {
                w.iter_mut().for_each(|c| *c = S::zero());
            }
            for (e, w) in tree.iter().zip(ws) {
                self.edge_w[g.edge_index(*e).expect("checked")] = w;
            }
        }
        self.active = active;
        self.cycle += 1;
        self.block = 0;
        Ok(())
    }

    fn check_block(&self, block: &Block) -> Result<()> {
        let g = &self.problem.graph;
        self.problem.check_edges(block.edges())?;
        for e in block.edges() {
            if !self.active[g.edge_index(*e).expect("checked")] {
                return Err(Error::InvalidBlock(format!("edge {e} is not in the current E_n")));
            }
        }
        if let Some(v) = block.block_vertex() {
            if v >= g.n_vertices() {
                return Err(Error::InvalidBlock(format!("vertex {v} out of range")));
            }
        }
        Ok(())
    }

    fn compute(&self, block: &Block) -> Result<BlockUpdate<S>> {
        let p = &self.problem;
        let d = p.dim();
        if block.edges().is_empty() {
            let k = block.block_vertex().expect("vertex block");
            let y: Vec<S> = self.x.block(k).iter().zip(self.z.block(k)).map(|(&a, &b)| a + b).collect();
            let x_new = p.node_prox(k, S::one(), &y)?;
            let z_new = y.iter().zip(&x_new).map(|(&a, &b)| a - b).collect();
            return Ok(BlockUpdate {
                x: vec![(k, x_new)],
                z: Some((k, z_new)),
                edge_w: Vec::new(),
            });
        }
        let support = block.footprint();
        // Σ s_i ỹ_i where ỹ_k = x_k + z_k for the block vertex
        let mut num = vec![S::zero(); d];
        let mut den = S::zero();
        for &i in support {
            let s = p.scale(i);
            axpy(s, self.x.block(i), &mut num);
            den += s * s;
        }
        let t = match block.block_vertex() {
            Some(k) => {
                axpy(p.scale(k), self.z.block(k), &mut num);
                let centre = crate::linalg::scale(S::one() / den, &num);
                p.funcs[k].prox(S::one() / den, &centre)?
            }
            None => crate::linalg::scale(S::one() / den, &num),
        };
        let x_new: Vec<(usize, Vec<S>)> = support
            .iter()
            .map(|&i| (i, crate::linalg::scale(p.scale(i), &t)))
            .collect();
        let z_update = block.block_vertex().map(|k| {
            // g = Σ s_i ỹ_i − Σ s_i² t certifies t; z_k = g / s_k
            let sk = p.scale(k);
            let z: Vec<S> = num.iter().zip(&t).map(|(&a, &b)| (a - den * b) / sk).collect();
            (k, z)
        });
        // Δv_H = −Δx − Δz_k on V′, spread over the block's tree.
        let mut delta = BlockVector::zeros(p.n_vertices(), d);
        for (i, xi) in &x_new {
            let blk = delta.block_mut(*i);
            for ((c, &old), &new) in blk.iter_mut().zip(self.x.block(*i)).zip(xi) {
                *c = old - new;
            }
        }
        if let Some((k, zk)) = &z_update {
            let blk = delta.block_mut(*k);
            for ((c, &old), &new) in blk.iter_mut().zip(self.z.block(*k)).zip(zk) {
                *c -= new - old;
            }
        }
        let ws = graph::decompose_on_tree(&delta, block.edges(), p.scales());
        let edge_w = block
            .edges()
            .iter()
            .zip(ws)
            .map(|(e, dw)| {
                let k = p.graph.edge_index(*e).expect("checked");
                let w = self.edge_w[k].iter().zip(&dw).map(|(&a, &b)| a + b).collect();
                (k, w)
            })
            .collect();
        Ok(BlockUpdate {
            x: x_new,
            z: z_update,
            edge_w,
        })
    }

    fn apply(&mut self, u: BlockUpdate<S>) {
        for (i, xi) in u.x {
            self.x.block_mut(i).copy_from_slice(&xi);
        }
        if let Some((k, zk)) = u.z {
            self.z.block_mut(k).copy_from_slice(&zk);
        }
        for (k, w) in u.edge_w {
            self.edge_w[k] = w;
        }
        self.block += 1;
    }

    /// Maximizes `F` over the duals of `block`, all others fixed.
    pub fn solve_block(&mut self, block: &Block) -> Result<()> {
        self.check_block(block)?;
        let u = self.compute(block)?;
        self.apply(u);
        Ok(())
    }

    /// Solves pairwise-disjoint blocks concurrently. The result equals any
    /// sequential order of the same blocks.
    pub fn solve_batch(&mut self, blocks: &[Block]) -> Result<()> {
        let mut seen = vec![false; self.problem.n_vertices()];
        for b in blocks {
            self.check_block(b)?;
            for &v in b.footprint() {
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::InvalidBlock(format!("blocks in a batch overlap at vertex {v}")));
                }
            }
        }
        let updates: Vec<BlockUpdate<S>> = blocks.par_iter().map(|b| self.compute(b)).collect::<Result<_>>()?;
        for u in updates {
            self.apply(u);
        }
        Ok(())
    }

    /// Runs cycles from `source` until `stop` holds or the budget runs out.
    pub fn run(
        &mut self,
        source: &mut dyn ScheduleSource,
        stop: &StopRule<S>,
        reference: Option<&BlockVector<S>>,
    ) -> Result<RunReport<S>> {
        let mut records = Vec::new();
        let mut converged = false;
        let mut worst_slack = S::infinity();
        let mut worst_strong = S::infinity();
        for _ in 0..stop.max_cycles {
            let schedule = source.next_cycle(self.cycle + 1)?;
            let violations = schedule.validate(&self.problem.graph);
            if !violations.is_empty() {
                return Err(Error::InvalidSchedule(violations));
            }
            self.begin_cycle(&schedule.e_n, &schedule.tree)?;
            let f_start = self.dual_objective()?;
            if stop.parallel {
                for batch in schedule.batches() {
                    self.solve_batch(&batch)?;
                }
            } else if stop.check_monotone {
                let mut f_prev = f_start;
                for b in &schedule.blocks {
                    let x_prev = self.x.clone();
                    self.solve_block(b)?;
                    let f = self.dual_objective()?;
                    let tol = S::lit(1e-12) * (S::one() + f_prev.abs());
                    worst_slack = worst_slack.min(f - f_prev + tol);
                    let moved = S::lit(0.5) * self.x.sub(&x_prev).norm_sq();
                    worst_strong = worst_strong.min(f - f_prev - moved);
                    f_prev = f;
                }
            } else {
                for b in &schedule.blocks {
                    self.solve_block(b)?;
                }
            }
            let f = self.dual_objective()?;
            let gap_lb = self.gap_lower_bound();
            let record = CycleRecord {
                cycle: self.cycle,
                blocks: schedule.blocks.len(),
                dual_objective: f,
                gap_lb,
                dist_ref: reference.map(|r| self.x_original().sub(r).max_abs()),
                sum_z_over_sqrt_n: self.dual_norm_sum() / S::lit(self.cycle as f64).sqrt(),
            };
            records.push(record);
            let increase = f - f_start;
            if gap_lb <= stop.gap_tol && increase <= stop.ascent_tol * (S::one() + f.abs()) {
                converged = true;
                break;
            }
        }
        Ok(RunReport {
            records,
            converged,
            worst_monotone_slack: stop.check_monotone.then_some(worst_slack),
            worst_strengthened_slack: stop.check_monotone.then_some(worst_strong),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCertificate<S> {
    pub gap: S,
    pub lower_bound: S,
}

/// Stopping rule: `gap_lb ≤ gap_tol` and the cycle raised `F` by at most
/// `ascent_tol · (1 + |F|)`.
#[derive(Debug, Clone, Copy)]
pub struct StopRule<S> {
    pub max_cycles: usize,
    pub gap_tol: S,
    pub ascent_tol: S,
    /// Execute `batch_disjoint` batches concurrently.
    pub parallel: bool,
    /// Evaluate `F` after every block and track the ascent slack.
    pub check_monotone: bool,
}

impl<S: Scalar> StopRule<S> {
    pub fn new(max_cycles: usize, gap_tol: S) -> Self {
        StopRule {
            max_cycles,
            gap_tol,
            ascent_tol: S::lit(1e-14),
            parallel: false,
            check_monotone: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord<S> {
    pub cycle: usize,
    pub blocks: usize,
    pub dual_objective: S,
    pub gap_lb: S,
    pub dist_ref: Option<S>,
    pub sum_z_over_sqrt_n: S,
}

#[derive(Debug, Clone)]
pub struct RunReport<S> {
    pub records: Vec<CycleRecord<S>>,
    pub converged: bool,
    /// min over blocks of `F_after − F_before + 1e-12 (1 + |F_before|)`.
    pub worst_monotone_slack: Option<S>,
    /// min over blocks of `F_after − F_before − ½‖Δv_A‖²`.
    pub worst_strengthened_slack: Option<S>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{Fixed, Generator, ScheduleKind};
    use proptest::prelude::*;

    fn e(i: usize, j: usize) -> Edge {
        Edge::new(i, j).unwrap()
    }

    fn scalar_problem(g: Graph, funcs: Vec<ConvexFunction<f64>>, x0: &[f64]) -> Problem<f64> {
        Problem::new(g, funcs, BlockVector::from_scalars(x0)).unwrap()
    }

    fn zeros(n: usize) -> Vec<ConvexFunction<f64>> {
        vec![ConvexFunction::zero(1); n]
    }

    #[test]
    fn init_examples() {
        let p = scalar_problem(Graph::path(3), zeros(3), &[1.0, 2.0, 3.0]);
        let s = DykstraState::new(p.clone());
        assert_eq!(s.x(), p.x0());

        let v_h = BlockVector::from_scalars(&[1.0, 0.0, -1.0]);
        let s = DykstraState::init(
            p.clone(),
            None,
            EdgeInit::Decompose {
                v_h: v_h.clone(),
                tree: vec![e(0, 1), e(1, 2)],
            },
        )
        .unwrap();
        assert_eq!(s.edge_w(), &[vec![1.0], vec![1.0]]);
        assert_eq!(s.x(), &p.x0().sub(&v_h));

        let mut bad = BlockVector::zeros(3, 1);
        bad.block_mut(2)[0] = 1.0;
        let zs = vec![bad, BlockVector::zeros(3, 1), BlockVector::zeros(3, 1)];
        assert_eq!(
            DykstraState::init(p, Some(&zs), EdgeInit::Zero).unwrap_err(),
            Error::SparsityViolation { vertex: 0 }
        );
    }

    #[test]
    fn solve_block_examples() {
        let p = scalar_problem(Graph::path(3), zeros(3), &[0.0, 4.0, 6.0]);
        let mut s = DykstraState::new(p);
        s.solve_block(&Block::edge(e(0, 1))).unwrap();
        assert_eq!(s.x().as_slice(), &[2.0, 2.0, 6.0]);

        let p = scalar_problem(Graph::path(2), vec![ConvexFunction::quadratic(1.0, vec![0.0]).unwrap(), ConvexFunction::zero(1)], &[2.0, 0.0]);
        let mut s = DykstraState::new(p);
        s.solve_block(&Block::vertex(0)).unwrap();
        assert_eq!(s.x().block(0), &[1.0]);
        assert_eq!(s.node_duals().block(0), &[1.0]);

        let funcs = vec![ConvexFunction::zero(1), ConvexFunction::point(vec![0.0]).unwrap(), ConvexFunction::zero(1)];
        let p = scalar_problem(Graph::path(3), funcs, &[0.0, 4.0, 6.0]);
        let mut s = DykstraState::new(p);
        s.solve_block(&Block::vertex_edge(1, e(0, 1)).unwrap()).unwrap();
        assert_eq!(s.x().as_slice(), &[0.0, 0.0, 6.0]);
        assert_eq!(s.node_duals().block(1), &[4.0]);
        assert!(s.identity_residual() <= 1e-15);
    }

    #[test]
    fn block_rejects_absent_edges() {
        let p = scalar_problem(Graph::path(3), zeros(3), &[0.0, 4.0, 6.0]);
        let mut s = DykstraState::new(p);
        assert!(matches!(s.solve_block(&Block::edge(e(0, 2))), Err(Error::InvalidBlock(_))));
        s.begin_cycle(&[e(0, 1), e(1, 2)], &[e(0, 1), e(1, 2)]).unwrap();
        assert!(Block::new(Some(2), vec![e(0, 1)]).is_err());
        assert!(Block::new(None, vec![]).is_err());
    }

    #[test]
    fn begin_cycle_examples() {
        let p = scalar_problem(Graph::path(3), zeros(3), &[0.0, 0.0, 0.0]);
        let duals = vec![
            EdgeDual { edge: e(0, 1), w: vec![1.0] },
            EdgeDual { edge: e(1, 2), w: vec![-2.0] },
        ];
        let mut s = DykstraState::init(p, None, EdgeInit::Duals(duals)).unwrap();
        assert_eq!(s.v_h().as_slice(), &[1.0, -3.0, 2.0]);
        let path = [e(0, 1), e(1, 2)];
        s.begin_cycle(&path, &path).unwrap();
        assert_eq!(s.edge_w(), &[vec![1.0], vec![-2.0]]);

        let p = scalar_problem(Graph::complete(3), zeros(3), &[0.0, 0.0, 0.0]);
        let duals = vec![
            EdgeDual { edge: e(0, 1), w: vec![1.5] },
            EdgeDual { edge: e(1, 2), w: vec![-0.5] },
        ];
        let mut s = DykstraState::init(p, None, EdgeInit::Duals(duals)).unwrap();
        let before = s.v_h();
        let x_before = s.x().clone();
        s.begin_cycle(&[e(0, 2), e(1, 2)], &[e(0, 2), e(1, 2)]).unwrap();
        assert!(s.v_h().sub(&before).max_abs() <= 1e-12);
        assert_eq!(s.x(), &x_before);
        assert_eq!(s.edge_w()[s.problem().graph().edge_index(e(0, 1)).unwrap()], vec![0.0]);

        let mut s = DykstraState::new(scalar_problem(Graph::path(3), zeros(3), &[0.0; 3]));
        assert_eq!(s.begin_cycle(&[e(0, 1)], &[e(0, 1)]), Err(Error::NotConnected));
    }

    #[test]
    fn dual_objective_and_gap() {
        let funcs = vec![
            ConvexFunction::quadratic(1.0, vec![2.0]).unwrap(),
            ConvexFunction::quadratic(2.0, vec![-1.0]).unwrap(),
        ];
        let s = DykstraState::new(scalar_problem(Graph::path(2), funcs, &[1.0, 3.0]));
        assert_eq!(s.dual_objective().unwrap(), 0.0);

        let p = scalar_problem(Graph::path(3), zeros(3), &[1.0, 2.0, 6.0]);
        let s = DykstraState::new(p.clone());
        let mean = p.consensus_projection(p.x0());
        let cert = s.gap_certificate(&mean).unwrap();
        let expected = 0.5 * p.x0().sub(&mean).norm_sq();
        assert!((cert.gap - expected).abs() < 1e-12);
        assert!((cert.lower_bound - expected).abs() < 1e-12);
        assert!((s.gap_lower_bound() - expected).abs() < 1e-12);
        let off = BlockVector::from_scalars(&[1.0, 2.0, 3.0]);
        assert!(matches!(s.gap_certificate(&off), Err(Error::Infeasible(_))));
    }

    #[test]
    fn converged_quadratic_closes_gap() {
        let funcs = vec![
            ConvexFunction::quadratic(1.0, vec![2.0]).unwrap(),
            ConvexFunction::quadratic(2.0, vec![-1.0]).unwrap(),
            ConvexFunction::quadratic(0.5, vec![4.0]).unwrap(),
        ];
        let p = scalar_problem(Graph::path(3), funcs, &[1.0, 3.0, -2.0]);
        let mut s = DykstraState::new(p.clone());
        let mut src = Generator::new(p.graph().clone(), ScheduleKind::Full, 0);
        let report = s.run(&mut src, &StopRule::new(5000, 1e-24), None).unwrap();
        assert!(report.converged);
        // centralized closed form: Σ(x − x0_i) + Σ a_i(x − c_i) = 0
        let x = (1.0 + 3.0 - 2.0 + 2.0 - 2.0 + 2.0) / (3.0 + 3.5);
        assert!((s.x().block(0)[0] - x).abs() < 1e-9);
        let cert = s.gap_certificate(&p.consensus_projection(s.x())).unwrap();
        assert!(cert.gap.abs() < 1e-9);
    }

    #[test]
    fn weighted_transform() {
        let g = Graph::path(2);
        let x0 = BlockVector::from_scalars(&[0.0, 4.0]);
        let t = transform_weighted(&[1.0, 1.0], &x0, &zeros(2)).unwrap();
        assert_eq!(t.x0, x0);
        assert_eq!(t.funcs, zeros(2));
        assert!(transform_weighted(&[1.0, 0.0], &x0, &zeros(2)).is_err());

        for (lambdas, expected) in [([1.0, 3.0], 3.0), ([2.0, 2.0], 2.0)] {
            let p = Problem::weighted(g.clone(), zeros(2), x0.clone(), &lambdas).unwrap();
            let mut s = DykstraState::new(p);
            let mut src = Generator::new(g.clone(), ScheduleKind::Tree, 1);
            s.run(&mut src, &StopRule::new(100, 1e-26), None).unwrap();
            let x = s.x_original();
            assert!((x.block(0)[0] - expected).abs() < 1e-12, "{x:?}");
            assert!((x.block(1)[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn consensus_on_path() {
        let p = scalar_problem(Graph::path(5), zeros(5), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut s = DykstraState::new(p);
        let mut src = Generator::new(Graph::path(5), ScheduleKind::Tree, 0);
        s.run(&mut src, &StopRule::new(500, 1e-24), None).unwrap();
        assert!(s.x().as_slice().iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn invalid_schedule_is_reported() {
        let g = Graph::path(3);
        let p = scalar_problem(g.clone(), zeros(3), &[0.0; 3]);
        let mut sched = crate::schedules::full_cycle(&g, 1).unwrap();
        sched.blocks.pop();
        let mut s = DykstraState::new(p);
        let err = s.run(&mut Fixed(sched), &StopRule::new(3, 1e-12), None).unwrap_err();
        assert_eq!(err, Error::InvalidSchedule(vec!["vertex 2 uncovered".into()]));
    }

    fn instance() -> impl Strategy<Value = (Problem<f64>, u64)> {
        (2usize..7, any::<u64>(), 1usize..3).prop_flat_map(|(n, seed, d)| {
            let f = prop_oneof![
                Just(ConvexFunction::zero(d)),
                (0.2..3.0f64, -2.0..2.0f64).prop_map(move |(a, c)| ConvexFunction::quadratic(a, vec![c; d]).unwrap()),
                (0.0..1.0f64).prop_map(move |l| ConvexFunction::l1(l, d).unwrap()),
                (-1.0..0.0f64, 0.0..1.0f64).prop_map(move |(lo, hi)| ConvexFunction::indicator_box(vec![lo; d], vec![hi; d]).unwrap()),
            ];
            (
                proptest::collection::vec(f, n),
                proptest::collection::vec(-3.0..3.0f64, n * d),
                proptest::option::of(proptest::collection::vec(0.3..3.0f64, n)),
            )
                .prop_map(move |(funcs, x0, lambdas)| {
                    let g = Graph::random_connected(n, 0.4, seed);
                    let x0 = BlockVector::from_blocks(x0.chunks(d).map(|c| c.to_vec()).collect()).unwrap();
                    let p = match lambdas {
                        Some(l) => Problem::weighted(g, funcs, x0, &l).unwrap(),
                        None => Problem::new(g, funcs, x0).unwrap(),
                    };
                    (p, seed)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn invariants_hold_along_runs((p, seed) in instance()) {
            let mut s = DykstraState::new(p.clone());
            let mut f_prev = s.dual_objective().unwrap();
            for n in 1..6 {
                let sched = crate::schedules::tree_cycle(p.graph(), seed, n).unwrap();
                let v_h = s.v_h();
                s.begin_cycle(&sched.e_n, &sched.tree).unwrap();
                prop_assert!(s.v_h().sub(&v_h).max_abs() <= 1e-12 * (1.0 + v_h.max_abs()));
                for b in &sched.blocks {
                    let x_prev = s.x().clone();
                    s.solve_block(b).unwrap();
                    prop_assert!(s.identity_residual() <= 1e-12);
                    let f = s.dual_objective().unwrap();
                    let moved = 0.5 * s.x().sub(&x_prev).norm_sq();
                    prop_assert!(f >= f_prev - 1e-12 * (1.0 + f_prev.abs()));
                    prop_assert!(f - f_prev >= moved - 1e-10, "{} < {}", f - f_prev, moved);
                    // Fenchel-Young at the block vertex
                    if let Some(k) = b.block_vertex() {
                        let s_k = p.scales().map_or(1.0, |s| s[k]);
                        let xk: Vec<f64> = s.x().block(k).iter().map(|v| v / s_k).collect();
                        let zk: Vec<f64> = s.node_duals().block(k).iter().map(|v| v * s_k).collect();
                        let f_k = &p.funcs()[k];
                        let lhs = f_k.eval(&xk).unwrap() + f_k.conjugate_eval(&zk).unwrap();
                        let rhs = crate::linalg::dot(&xk, &zk);
                        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
                    }
                    f_prev = f;
                }
            }
        }

        #[test]
        fn batches_match_sequential((p, seed) in instance()) {
            let mut seq = DykstraState::new(p.clone());
            let mut par = DykstraState::new(p.clone());
            for n in 1..4 {
                let sched = crate::schedules::tree_cycle(p.graph(), seed, n).unwrap();
                seq.begin_cycle(&sched.e_n, &sched.tree).unwrap();
                par.begin_cycle(&sched.e_n, &sched.tree).unwrap();
                for batch in sched.batches() {
                    for b in &batch {
                        seq.solve_block(b).unwrap();
                    }
                    par.solve_batch(&batch).unwrap();
                }
            }
            prop_assert_eq!(seq.x(), par.x());
            prop_assert_eq!(seq.node_duals(), par.node_duals());
            prop_assert_eq!(seq.edge_w(), par.edge_w());
        }
    }
}
