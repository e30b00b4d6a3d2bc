//! Accelerated proximal gradient on the Dykstra dual, minimizing `−F`.
//!
//! Variables follow the sparsity pattern of the block method: one vector per
//! node (`u_i`, living in block `i`) and one antisymmetric pair per edge
//! (`±w` on its endpoints). The smooth part is `½‖x₀ − Σ u_α‖² − ½‖x₀‖²`,
//! whose gradient `Σ u_α − x₀` is Lipschitz with constant `d̄ + 1` under that
//! pattern.

use rayon::prelude::*;

use crate::engine::{Block, DykstraState, Problem};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{norm_sq, BlockVector};
use crate::scalar::Scalar;

/// Sparse dual variables: node duals by their own block, edge duals by `w`
/// (indexed like `graph.edges()`).
#[derive(Debug, Clone, PartialEq)]
pub struct DualVars<S> {
    pub nodes: BlockVector<S>,
    pub edges: Vec<Vec<S>>,
}

impl<S: Scalar> DualVars<S> {
    pub fn zeros(graph: &Graph, dim: usize) -> Self {
        DualVars {
            nodes: BlockVector::zeros(graph.n_vertices(), dim),
            edges: vec![vec![S::zero(); dim]; graph.n_edges()],
        }
    }

    /// `(1 − t) a + t b`.
    pub fn lerp(a: &Self, b: &Self, t: S) -> Self {
        let s = S::one() - t;
        DualVars {
            nodes: a.nodes.scaled(s).add(&b.nodes.scaled(t)),
            edges: a
                .edges
                .iter()
                .zip(&b.edges)
                .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| s * p + t * q).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        DualVars {
            nodes: self.nodes.sub(&other.nodes),
            edges: self
                .edges
                .iter()
                .zip(&other.edges)
                .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| p - q).collect())
                .collect(),
        }
    }

    /// `Σ_α ‖u_α‖²` with each edge dual measured in `X^|V|` (`2‖w‖²`).
    pub fn norm_sq(&self) -> S {
        self.nodes.norm_sq() + S::lit(2.0) * self.edges.iter().map(|w| norm_sq(w)).sum::<S>()
    }

    /// `Σ_α u_α ∈ X^|V|`.
    pub fn total(&self, graph: &Graph) -> BlockVector<S> {
        let mut out = self.nodes.clone();
        for (e, w) in graph.edges().iter().zip(&self.edges) {
            out.add_to_block(e.lo(), S::one(), w);
            out.add_to_block(e.hi(), -S::one(), w);
        }
        out
    }
}

/// `L = d̄ + 1`.
pub fn lipschitz_bound<S: Scalar>(graph: &Graph) -> S {
    S::lit((graph.max_degree() + 1) as f64)
}

/// `(½‖Σ u_α‖², ½ Σ‖u_α‖²)`; the bound holds when `first ≤ L · second`.
pub fn lipschitz_terms<S: Scalar>(graph: &Graph, u: &DualVars<S>) -> (S, S) {
    let half = S::lit(0.5);
    (half * u.total(graph).norm_sq(), half * u.norm_sq())
}

/// `θ_{k+1}`: the largest root of `(1 − θ)/θ² = 1/θ_k²`.
pub fn next_theta<S: Scalar>(theta: S) -> S {
    let t2 = theta * theta;
    (-t2 + (t2 * t2 + S::lit(4.0) * t2).sqrt()) / S::lit(2.0)
}

/// `−F(u) = ½‖x₀ − Σu‖² − ½‖x₀‖² + Σ f_i*(u_i)`.
pub fn neg_dual<S: Scalar>(problem: &Problem<S>, u: &DualVars<S>) -> Result<S> {
    Ok(-problem.dual_value(&u.nodes, &u.edges)?)
}

/// `l(u, v) = ½‖x₀ − Σv‖² − ½‖x₀‖² + ⟨Σv − x₀, Σ(u − v)⟩ + Σ f_i*(u_i)`.
/// The edge conjugates vanish on the antisymmetric pairs.
pub fn linearization<S: Scalar>(problem: &Problem<S>, u: &DualVars<S>, v: &DualVars<S>) -> Result<S> {
    let g = problem.graph();
    let x0 = problem.x0();
    let grad = v.total(g).sub(x0);
    let half = S::lit(0.5);
    let mut val = half * grad.norm_sq() - half * x0.norm_sq() + grad.dot(&u.sub(v).total(g));
    for i in 0..problem.n_vertices() {
        val += problem.node_conjugate(i, u.nodes.block(i))?;
    }
    Ok(val)
}

#[derive(Debug, Clone)]
pub struct ApgState<S> {
    problem: Problem<S>,
    u: DualVars<S>,
    w: DualVars<S>,
    theta: S,
    k: usize,
    lipschitz: S,
}

/// What one iteration did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApgStep<S> {
    pub neg_f: S,
    /// Whether a greedy candidate replaced `û`.
    pub greedy_accepted: bool,
    /// `l(û; v) + L/2 ‖û − v‖² − (−F(u^{k+1}))`; nonnegative when the
    /// acceptance test holds.
    pub acceptance_slack: S,
}

impl<S: Scalar> ApgState<S> {
    /// `u⁰ = w⁰ = 0`, `θ₀ = 1`, `L = d̄ + 1`.
    pub fn new(problem: Problem<S>) -> Result<Self> {
        let start = DualVars::zeros(problem.graph(), problem.dim());
        Self::with_start(problem, start)
    }

    pub fn with_start(problem: Problem<S>, start: DualVars<S>) -> Result<Self> {
        if problem.scales().is_some() {
            return Err(Error::Unsupported("accelerated solver runs on unweighted instances".into()));
        }
        let lipschitz = lipschitz_bound(problem.graph());
        Ok(ApgState {
            problem,
            w: start.clone(),
            u: start,
            theta: S::one(),
            k: 0,
            lipschitz,
        })
    }

    pub fn with_lipschitz(mut self, l: S) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn u(&self) -> &DualVars<S> {
        &self.u
    }

    pub fn w(&self) -> &DualVars<S> {
        &self.w
    }

    pub fn theta(&self) -> S {
        self.theta
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn lipschitz(&self) -> S {
        self.lipschitz
    }

    pub fn problem(&self) -> &Problem<S> {
        &self.problem
    }

    /// Primal estimate `x₀ − Σ u_α`.
    pub fn primal(&self) -> BlockVector<S> {
        self.problem.x0().sub(&self.u.total(self.problem.graph()))
    }

    /// `v = (1 − θ) u + θ w`.
    pub fn extrapolated(&self) -> DualVars<S> {
        DualVars::lerp(&self.u, &self.w, self.theta)
    }

    pub fn iterate(&mut self, greedy: bool) -> Result<ApgStep<S>> {
        let p = &self.problem;
        let g = p.graph();
        let v = self.extrapolated();
        let grad = v.total(g).sub(p.x0());
        let step = S::one() / (self.theta * self.lipschitz);
        let nodes: Vec<Vec<S>> = (0..p.n_vertices())
            .into_par_iter()
            .map(|i| {
                let q: Vec<S> = self
                    .w
                    .nodes
                    .block(i)
                    .iter()
                    .zip(grad.block(i))
                    .map(|(&w, &gi)| w - step * gi)
                    .collect();
                p.funcs()[i].conjugate_prox(step, &q)
            })
            .collect::<Result<_>>()?;
        let edges: Vec<Vec<S>> = g
            .edges()
            .par_iter()
            .zip(&self.w.edges)
            .map(|(e, w)| edge_prox(w, grad.block(e.lo()), grad.block(e.hi()), step))
            .collect();
        let w_next = DualVars {
            nodes: BlockVector::from_blocks(nodes)?,
            edges,
        };
        let u_hat = DualVars::lerp(&self.u, &w_next, self.theta);
        let bound = linearization(p, &u_hat, &v)? + self.lipschitz / S::lit(2.0) * u_hat.sub(&v).norm_sq();
        let mut u_next = u_hat;
        let mut neg_f = neg_dual(p, &u_next)?;
        let mut accepted = false;
        if greedy {
            let candidate = greedy_pass(p, &u_next)?;
            let cand_f = neg_dual(p, &candidate)?;
            if cand_f <= bound {
                u_next = candidate;
                neg_f = cand_f;
                accepted = true;
            }
        }
        self.u = u_next;
        self.w = w_next;
        self.theta = next_theta(self.theta);
        self.k += 1;
        Ok(ApgStep {
            neg_f,
            greedy_accepted: accepted,
            acceptance_slack: bound - neg_f,
        })
    }

    /// Iterates until the running minimum of `−F` reaches `stop.target` (if
    /// given) or the budget runs out.
    pub fn run(&mut self, stop: &ApgStop<S>) -> Result<ApgTrace<S>> {
        let first = neg_dual(&self.problem, &self.u)?;
        let mut trace = ApgTrace {
            neg_f: vec![first],
            running_min: vec![first],
            hit: None,
            greedy_accepted: 0,
            worst_acceptance_slack: None,
        };
        let reached = |v: S| stop.target.is_some_and(|t| v <= t);
        if reached(first) {
            trace.hit = Some(0);
            return Ok(trace);
        }
        for _ in 0..stop.max_iters {
            let step = self.iterate(stop.greedy)?;
            let best = trace.running_min.last().copied().expect("nonempty").min(step.neg_f);
            trace.neg_f.push(step.neg_f);
            trace.running_min.push(best);
            if step.greedy_accepted {
                trace.greedy_accepted += 1;
                let w = trace.worst_acceptance_slack.map_or(step.acceptance_slack, |s: S| s.min(step.acceptance_slack));
                trace.worst_acceptance_slack = Some(w);
            }
            if reached(best) {
                trace.hit = Some(self.k);
                break;
            }
        }
        Ok(trace)
    }
}

/// Edge step: project `(w − τ g_lo, −w − τ g_hi)` onto the antisymmetric
/// pairs `{(ω, −ω)}` and return `ω`.
pub fn edge_prox<S: Scalar>(w: &[S], g_lo: &[S], g_hi: &[S], step: S) -> Vec<S> {
    let half = S::lit(0.5);
    w.iter()
        .zip(g_lo.iter().zip(g_hi))
        .map(|(&wk, (&a, &b))| half * ((wk - step * a) - (-wk - step * b)))
        .collect()
}

/// One pass of single-edge Dykstra blocks started from the duals `u`.
fn greedy_pass<S: Scalar>(problem: &Problem<S>, u: &DualVars<S>) -> Result<DualVars<S>> {
    let mut state = DykstraState::from_duals(problem.clone(), u.nodes.clone(), u.edges.clone())?;
    for &e in problem.graph().edges() {
        state.solve_block(&Block::edge(e))?;
    }
    Ok(DualVars {
        nodes: state.node_duals().clone(),
        edges: state.edge_w().to_vec(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ApgStop<S> {
    pub max_iters: usize,
    /// Stop once `min_i −F(u^i) ≤ target`.
    pub target: Option<S>,
    pub greedy: bool,
}

#[derive(Debug, Clone)]
pub struct ApgTrace<S> {
    /// `−F(u^i)` for `i = 0, 1, …`.
    pub neg_f: Vec<S>,
    pub running_min: Vec<S>,
    /// First index `i` whose running minimum reached the target.
    pub hit: Option<usize>,
    pub greedy_accepted: usize,
    pub worst_acceptance_slack: Option<S>,
}
