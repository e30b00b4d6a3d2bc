//! Undirected communication graphs, connectivity and spanning trees, and the
//! decomposition of vectors in D⊥ over the edges of a tree.

use std::collections::BTreeMap;
use std::fmt;

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm, BlockVector};
use crate::scalar::Scalar;

/// Undirected edge stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    lo: usize,
    hi: usize,
}

impl Edge {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidArgument(format!("self-loop at vertex {i}")));
        }
        Ok(Edge {
            lo: i.min(j),
            hi: i.max(j),
        })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn touches(&self, v: usize) -> bool {
        self.lo == v || self.hi == v
    }

    pub fn other(&self, v: usize) -> usize {
        if v == self.lo {
            self.hi
        } else {
            self.lo
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// An element of H_(i,j)⊥ stored by its free d-vector `w`:
/// `+w` at the smaller endpoint, `-w` at the larger one, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDual<S> {
    pub edge: Edge,
    pub w: Vec<S>,
}

impl<S: Scalar> EdgeDual<S> {
    pub fn zero(edge: Edge, dim: usize) -> Self {
        EdgeDual {
            edge,
            w: vec![S::zero(); dim],
        }
    }

    /// Adds the expanded dual into `target`.
    pub fn expand_into(&self, target: &mut BlockVector<S>) {
        target.add_to_block(self.edge.lo, S::one(), &self.w);
        target.add_to_block(self.edge.hi, -S::one(), &self.w);
    }

    pub fn expand(&self, n_vertices: usize) -> BlockVector<S> {
        let mut out = BlockVector::zeros(n_vertices, self.w.len());
        self.expand_into(&mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_vertices: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    index: BTreeMap<Edge, usize>,
}

impl Graph {
    pub fn new(n_vertices: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
        }
        let mut edges = Vec::with_capacity(pairs.len());
        let mut index = BTreeMap::new();
        let mut adjacency = vec![Vec::new(); n_vertices];
        for &(i, j) in pairs {
            if i >= n_vertices || j >= n_vertices {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {n_vertices} vertices"
                )));
            }
            let e = Edge::new(i, j)?;
            if index.insert(e, edges.len()).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate edge {e}")));
            }
            edges.push(e);
            adjacency[e.lo].push(e.hi);
            adjacency[e.hi].push(e.lo);
        }
        Ok(Graph {
            n_vertices,
            edges,
            adjacency,
            index,
        })
    }

    pub fn path(n: usize) -> Self {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &pairs).expect("path graph is well formed")
    }

    pub fn complete(n: usize) -> Self {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }
        Graph::new(n, &pairs).expect("complete graph is well formed")
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let pairs: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Graph::new(leaves + 1, &pairs).expect("star graph is well formed")
    }

    /// A random connected graph: a random spanning tree plus each remaining
    /// pair independently with probability `extra_edge_prob`.
    pub fn random_connected(n: usize, extra_edge_prob: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut pairs = Vec::new();
        for k in 1..n {
            let parent = order[rng.gen_range(0..k)];
            pairs.push((parent, order[k]));
        }
        let mut present: std::collections::BTreeSet<Edge> = pairs
            .iter()
            .map(|&(i, j)| Edge::new(i, j).unwrap())
            .collect();
        for i in 0..n {
            for j in i + 1..n {
                let e = Edge::new(i, j).unwrap();
                if !present.contains(&e) && rng.gen_bool(extra_edge_prob) {
                    present.insert(e);
                    pairs.push((i, j));
                }
            }
        }
        Graph::new(n, &pairs).expect("random graph is well formed")
    }

    /// Parses the text format: a header line `n m d` followed by `m` lines `i j`
    /// (0-based). Returns the graph and the block dimension `d`.
    pub fn from_text(text: &str) -> Result<(Self, usize)> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (lineno, header) = lines
            .next()
            .ok_or_else(|| Error::Config("empty graph file".into()))?;
        let nums = parse_usizes(header, lineno, 3)?;
        let (n, m, d) = (nums[0], nums[1], nums[2]);
        let mut pairs = Vec::with_capacity(m);
        for _ in 0..m {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| Error::Config(format!("expected {m} edge lines")))?;
            let ij = parse_usizes(line, lineno, 2)?;
            pairs.push((ij[0], ij[1]));
        }
        if let Some((lineno, _)) = lines.next() {
            return Err(Error::Config(format!("line {lineno}: unexpected trailing content")));
        }
        if d == 0 {
            return Err(Error::Config("line 1: dimension must be positive".into()));
        }
        Ok((Graph::new(n, &pairs)?, d))
    }

    pub fn to_text(&self, dim: usize) -> String {
        let mut s = format!("{} {} {}\n", self.n_vertices, self.edges.len(), dim);
        for e in &self.edges {
            s.push_str(&format!("{} {}\n", e.lo, e.hi));
        }
        s
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_index(&self, e: Edge) -> Option<usize> {
        self.index.get(&e).copied()
    }

    pub fn contains_edge(&self, e: Edge) -> bool {
        self.index.contains_key(&e)
    }

    fn check_subset(&self, subset: &[Edge]) -> Result<()> {
        match subset.iter().find(|e| !self.contains_edge(**e)) {
            Some(e) => Err(Error::InvalidArgument(format!("edge {e} is not in the graph"))),
            None => Ok(()),
        }
    }

    /// Whether `(V, subset)` is connected, i.e. whether `subset` connects V.
    pub fn is_connected(&self, subset: &[Edge]) -> Result<bool> {
        self.check_subset(subset)?;
        let mut uf = UnionFind::new(self.n_vertices);
        let mut components = self.n_vertices;
        for e in subset {
            if uf.union(e.lo, e.hi) {
                components -= 1;
            }
        }
        Ok(components == 1)
    }

    pub fn is_connected_graph(&self) -> bool {
        self.is_connected(&self.edges).unwrap_or(false)
    }

    /// Random spanning tree of `(V, subset)`: Kruskal over a seeded random
    /// edge order. Deterministic for a fixed `(seed, stream)`.
    pub fn spanning_tree_stream(&self, subset: &[Edge], seed: u64, stream: u64) -> Result<Vec<Edge>> {
        self.check_subset(subset)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut order = subset.to_vec();
        order.sort();
        order.dedup();
        order.shuffle(&mut rng);
        let mut uf = UnionFind::new(self.n_vertices);
        let mut tree = Vec::with_capacity(self.n_vertices.saturating_sub(1));
        for e in order {
            if uf.union(e.lo, e.hi) {
                tree.push(e);
            }
        }
        if tree.len() + 1 != self.n_vertices {
            return Err(Error::NotConnected);
        }
        tree.sort();
        Ok(tree)
    }

    pub fn spanning_tree(&self, subset: &[Edge], seed: u64) -> Result<Vec<Edge>> {
        self.spanning_tree_stream(subset, seed, 0)
    }

    /// Breadth-first spanning tree of the whole graph rooted at vertex 0.
    pub fn bfs_tree(&self) -> Result<Vec<Edge>> {
        let mut seen = vec![false; self.n_vertices];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut tree = Vec::new();
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    tree.push(Edge::new(u, v)?);
                    queue.push_back(v);
                }
            }
        }
        if tree.len() + 1 != self.n_vertices {
            return Err(Error::NotConnected);
        }
        tree.sort();
        Ok(tree)
    }

    pub fn is_spanning_tree(&self, edges: &[Edge]) -> bool {
        edges.len() + 1 == self.n_vertices
            && self.check_subset(edges).is_ok()
            && is_acyclic(edges, self.n_vertices)
    }

    /// Decomposes `v ∈ D⊥` into edge duals supported on the spanning tree
    /// `tree`. On a tree the decomposition is unique.
    pub fn decompose_diag_orth<S: Scalar>(
        &self,
        v: &BlockVector<S>,
        tree: &[Edge],
    ) -> Result<Vec<EdgeDual<S>>> {
        self.decompose_scaled(v, tree, None, S::lit(1e-9))
    }

    /// Same as [`Graph::decompose_diag_orth`] for the scaled consensus
    /// hyperplanes `{x : x_i / s_i = x_j / s_j}`; an edge dual then expands to
    /// `w / s_lo` at `lo` and `-w / s_hi` at `hi`, and D⊥ becomes
    /// `{z : Σ s_i z_i = 0}`.
    pub fn decompose_scaled<S: Scalar>(
        &self,
        v: &BlockVector<S>,
        tree: &[Edge],
        scales: Option<&[S]>,
        tol: S,
    ) -> Result<Vec<EdgeDual<S>>> {
        if v.n_blocks() != self.n_vertices {
            return Err(Error::DimensionMismatch {
                expected: self.n_vertices,
                got: v.n_blocks(),
            });
        }
        if !self.is_spanning_tree(tree) {
            return Err(Error::InvalidArgument("edges do not form a spanning tree".into()));
        }
        let weighted_sum = weighted_block_sum(v, scales);
        let residual = norm(&weighted_sum);
        if residual > tol * (S::one() + v.norm()) {
            return Err(Error::NotInDiagonalComplement {
                norm: residual.as_f64(),
            });
        }
        let ws = decompose_on_tree(v, tree, scales);
        Ok(tree
            .iter()
            .zip(ws)
            .map(|(&edge, w)| EdgeDual { edge, w })
            .collect())
    }

    /// The lifted graph on `V × {0, 1}`: vertex `(i, s)` has index `i + s·n`.
    /// Edges `((i,0),(j,0))` for each original edge, plus `((i,0),(i,1))`.
    pub fn lift(&self) -> Graph {
        let n = self.n_vertices;
        let mut pairs: Vec<_> = self.edges.iter().map(|e| (e.lo, e.hi)).collect();
        pairs.extend((0..n).map(|i| (i, i + n)));
        Graph::new(2 * n, &pairs).expect("lifted graph is well formed")
    }
}

fn parse_usizes(line: &str, lineno: usize, count: usize) -> Result<Vec<usize>> {
    let parts: Vec<_> = line.split_whitespace().collect();
    if parts.len() != count {
        return Err(Error::Config(format!(
            "line {lineno}: expected {count} integers, found {}",
            parts.len()
        )));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Config(format!("line {lineno}: '{p}' is not a vertex index")))
        })
        .collect()
}

/// Σ s_i v_i (plain block sum when unscaled).
pub(crate) fn weighted_block_sum<S: Scalar>(v: &BlockVector<S>, scales: Option<&[S]>) -> Vec<S> {
    match scales {
        None => v.block_sum(),
        Some(s) => {
            let mut acc = vec![S::zero(); v.dim()];
            for (i, b) in v.blocks().enumerate() {
                crate::linalg::axpy(s[i], b, &mut acc);
            }
            acc
        }
    }
}

pub fn is_acyclic(edges: &[Edge], n_vertices: usize) -> bool {
    let mut uf = UnionFind::new(n_vertices);
    edges.iter().all(|e| uf.union(e.lo, e.hi))
}

/// Vertices touched by `edges`, sorted.
pub fn endpoints(edges: &[Edge]) -> Vec<usize> {
    let mut vs: Vec<usize> = edges.iter().flat_map(|e| [e.lo, e.hi]).collect();
    vs.sort_unstable();
    vs.dedup();
    vs
}

/// Whether `edges` form a single tree over their own endpoints.
pub fn is_tree_on_endpoints(edges: &[Edge]) -> bool {
    if edges.is_empty() {
        return false;
    }
    let verts = endpoints(edges);
    let local: BTreeMap<usize, usize> = verts.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let mut uf = UnionFind::new(verts.len());
    edges.iter().all(|e| uf.union(local[&e.lo], local[&e.hi])) && edges.len() + 1 == verts.len()
}

/// Leaf elimination on a tree: returns the `w` of each edge (in input order)
/// such that the expanded duals sum to `v` on the tree's vertices. Assumes
/// `edges` is a tree over its endpoints and that the (scaled) sum of `v` over
/// those endpoints vanishes; the root absorbs any residual.
pub(crate) fn decompose_on_tree<S: Scalar>(
    v: &BlockVector<S>,
    edges: &[Edge],
    scales: Option<&[S]>,
) -> Vec<Vec<S>> {
    let dim = v.dim();
    let mut ws = vec![vec![S::zero(); dim]; edges.len()];
    if edges.is_empty() {
        return ws;
    }
    let mut adj: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (k, e) in edges.iter().enumerate() {
        adj.entry(e.lo).or_default().push((e.hi, k));
        adj.entry(e.hi).or_default().push((e.lo, k));
    }
    let root = edges[0].lo;
    // BFS order with the parent edge of every non-root vertex.
    let mut order = vec![(root, usize::MAX, usize::MAX)];
    let mut visited = std::collections::BTreeSet::from([root]);
    let mut head = 0;
    while head < order.len() {
        let (u, _, _) = order[head];
        head += 1;
        for &(nb, k) in &adj[&u] {
            if visited.insert(nb) {
                order.push((nb, u, k));
            }
        }
    }
    let mut residual: BTreeMap<usize, Vec<S>> = order
        .iter()
        .map(|&(u, _, _)| (u, v.block(u).to_vec()))
        .collect();
    let scale_of = |i: usize| scales.map_or(S::one(), |s| s[i]);
    for &(u, parent, k) in order.iter().skip(1).rev() {
        let r_u = residual.remove(&u).expect("residual present");
        let s_u = scale_of(u);
        let sign = if edges[k].lo == u { S::one() } else { -S::one() };
        for (wk, &r) in ws[k].iter_mut().zip(&r_u) {
            *wk = sign * s_u * r;
        }
        let ratio = s_u / scale_of(parent);
        let r_p = residual.get_mut(&parent).expect("parent residual present");
        if scales.is_none() {
            for (p, &r) in r_p.iter_mut().zip(&r_u) {
                *p += r;
            }
        } else {
            for (p, &r) in r_p.iter_mut().zip(&r_u) {
                *p += ratio * r;
            }
        }
    }
    ws
}
