//! Cycle generators: the edge set `E_n`, a spanning tree of it, and the
//! ordered blocks of one cycle.

use petgraph::unionfind::UnionFind;

use crate::engine::Block;
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSchedule {
    pub n: usize,
    pub e_n: Vec<Edge>,
    pub tree: Vec<Edge>,
    pub blocks: Vec<Block>,
}

impl CycleSchedule {
    pub fn w_bar(&self) -> usize {
        self.blocks.len()
    }

    /// Named violations of the cycle requirements; empty when valid.
    pub fn validate(&self, graph: &Graph) -> Vec<String> {
        let mut out = Vec::new();
        let n = graph.n_vertices();
        let mut covered = vec![false; n];
        let mut used = vec![false; graph.n_edges()];
        for (w, b) in self.blocks.iter().enumerate() {
            if let Some(v) = b.block_vertex() {
                if v < n {
                    covered[v] = true;
                } else {
                    out.push(format!("block {w}: vertex {v} out of range"));
                }
            }
            for e in b.edges() {
                match graph.edge_index(*e) {
                    Some(k) => used[k] = true,
                    None => out.push(format!("block {w}: edge {e} not in graph")),
                }
            }
        }
        for (v, c) in covered.iter().enumerate() {
            if !c {
                out.push(format!("vertex {v} uncovered"));
            }
        }
        let mut in_e_n = vec![false; graph.n_edges()];
        for e in &self.e_n {
            match graph.edge_index(*e) {
                Some(k) => in_e_n[k] = true,
                None => out.push(format!("E_n edge {e} not in graph")),
            }
        }
        for (k, e) in graph.edges().iter().enumerate() {
            if used[k] && !in_e_n[k] {
                out.push(format!("block edge {e} missing from E_n"));
            } else if in_e_n[k] && !used[k] {
                out.push(format!("E_n edge {e} not used by any block"));
            }
        }
        if !matches!(graph.is_connected(&self.e_n), Ok(true)) {
            out.push("E_n does not connect V".to_string());
        } else if !graph.is_spanning_tree(&self.tree) || self.tree.iter().any(|e| !self.e_n.contains(e)) {
            out.push("tree is not a spanning tree of E_n".to_string());
        }
        out
    }

    /// Groups blocks into batches with pairwise-disjoint footprints. A block
    /// lands one batch after the latest earlier block it conflicts with, so
    /// conflicting blocks keep their relative order.
    pub fn batches(&self) -> Vec<Vec<Block>> {
        let mut last_batch: Vec<Option<usize>> = Vec::new();
        let mut batches: Vec<Vec<Block>> = Vec::new();
        for b in &self.blocks {
            let fp = b.footprint();
            let max_v = *fp.iter().max().expect("footprint nonempty");
            if last_batch.len() <= max_v {
                last_batch.resize(max_v + 1, None);
            }
            let slot = fp.iter().filter_map(|&v| last_batch[v]).max().map_or(0, |k| k + 1);
            if batches.len() <= slot {
                batches.resize(slot + 1, Vec::new());
            }
            batches[slot].push(b.clone());
            for &v in fp {
                last_batch[v] = Some(slot);
            }
        }
        batches
    }
}

/// Random spanning tree `E_n` (seeded by `(seed, n)`), every tree edge as a
/// block, then each vertex together with one incident tree edge.
pub fn tree_cycle(graph: &Graph, seed: u64, n: usize) -> Result<CycleSchedule> {
    let tree = graph.spanning_tree_stream(graph.edges(), seed, n as u64)?;
    let mut blocks: Vec<Block> = tree.iter().map(|&e| Block::edge(e)).collect();
    for v in 0..graph.n_vertices() {
        match tree.iter().find(|e| e.touches(v)) {
            Some(&e) => blocks.push(Block::vertex_edge(v, e)?),
            None => blocks.push(Block::vertex(v)),
        }
    }
    Ok(CycleSchedule {
        n,
        e_n: tree.clone(),
        tree,
        blocks,
    })
}

/// `E_n = E`: every edge as a block, then every vertex alone.
pub fn full_cycle(graph: &Graph, n: usize) -> Result<CycleSchedule> {
    let tree = graph.bfs_tree()?;
    let mut blocks: Vec<Block> = graph.edges().iter().map(|&e| Block::edge(e)).collect();
    blocks.extend((0..graph.n_vertices()).map(Block::vertex));
    Ok(CycleSchedule {
        n,
        e_n: graph.edges().to_vec(),
        tree,
        blocks,
    })
}

/// Star blocks: each hub takes its incident edges that join new components,
/// with the hub as block vertex. Hubs are taken from `hub_order` and then in
/// index order until `E_n` connects V. Remaining vertices get vertex blocks.
pub fn star_cycle(graph: &Graph, hub_order: &[usize], n: usize) -> Result<CycleSchedule> {
    let nv = graph.n_vertices();
    if let Some(h) = hub_order.iter().find(|&&h| h >= nv) {
        return Err(Error::InvalidArgument(format!("hub {h} out of range")));
    }
    let mut uf = UnionFind::new(nv);
    let mut components = nv;
    let mut e_n = Vec::new();
    let mut blocks = Vec::new();
    let mut is_hub = vec![false; nv];
    for h in hub_order.iter().copied().chain(0..nv) {
        if components == 1 {
            break;
        }
        if is_hub[h] {
            continue;
        }
        let mut star = Vec::new();
        for &u in graph.neighbors(h) {
            if uf.union(h, u) {
                components -= 1;
                star.push(Edge::new(h, u)?);
            }
        }
        if !star.is_empty() {
            is_hub[h] = true;
            star.sort();
            e_n.extend_from_slice(&star);
            blocks.push(Block::new(Some(h), star)?);
        }
    }
    if components != 1 {
        return Err(Error::NotConnected);
    }
    blocks.extend((0..nv).filter(|&v| !is_hub[v]).map(Block::vertex));
    e_n.sort();
    let tree = e_n.clone();
    Ok(CycleSchedule { n, e_n, tree, blocks })
}

/// Supplies the schedule for cycle `n` (1-based).
pub trait ScheduleSource {
    fn next_cycle(&mut self, n: usize) -> Result<CycleSchedule>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Tree,
    Full,
    Star,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(ScheduleKind::Tree),
            "full" => Ok(ScheduleKind::Full),
            "star" => Ok(ScheduleKind::Star),
            other => Err(Error::Config(format!("unknown schedule '{other}' (tree, full, star)"))),
        }
    }
}

/// One of the built-in generators bound to a graph.
#[derive(Debug, Clone)]
pub struct Generator {
    graph: Graph,
    kind: ScheduleKind,
    seed: u64,
    hubs: Vec<usize>,
}

impl Generator {
    pub fn new(graph: Graph, kind: ScheduleKind, seed: u64) -> Self {
        Generator {
            graph,
            kind,
            seed,
            hubs: Vec::new(),
        }
    }

    pub fn with_hubs(mut self, hubs: Vec<usize>) -> Self {
        self.hubs = hubs;
        self
    }
}

impl ScheduleSource for Generator {
    fn next_cycle(&mut self, n: usize) -> Result<CycleSchedule> {
        match self.kind {
            ScheduleKind::Tree => tree_cycle(&self.graph, self.seed, n),
            ScheduleKind::Full => full_cycle(&self.graph, n),
            ScheduleKind::Star => star_cycle(&self.graph, &self.hubs, n),
        }
    }
}

/// Repeats one schedule every cycle.
#[derive(Debug, Clone)]
pub struct Fixed(pub CycleSchedule);

impl ScheduleSource for Fixed {
    fn next_cycle(&mut self, n: usize) -> Result<CycleSchedule> {
        Ok(CycleSchedule { n, ..self.0.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, j: usize) -> Edge {
        Edge::new(i, j).unwrap()
    }

    #[test]
    fn tree_cycle_shapes() {
        let s = tree_cycle(&Graph::path(3), 7, 1).unwrap();
        assert_eq!(s.w_bar(), 5);
        assert!(s.validate(&Graph::path(3)).is_empty());
        let single = Graph::path(2);
        let s = tree_cycle(&single, 0, 1).unwrap();
        assert_eq!(s.blocks.iter().filter(|b| b.block_vertex().is_none()).count(), 1);
        assert_eq!(s.blocks.iter().filter(|b| b.block_vertex().is_some()).count(), 2);
    }

    #[test]
    fn tree_cycle_varies_with_n() {
        let k4 = Graph::complete(4);
        let trees: std::collections::BTreeSet<_> = (1..20)
            .map(|n| {
                let s = tree_cycle(&k4, 3, n).unwrap();
                assert!(s.validate(&k4).is_empty());
                s.tree
            })
            .collect();
        assert!(trees.len() > 1);
        assert_eq!(tree_cycle(&k4, 3, 5).unwrap(), tree_cycle(&k4, 3, 5).unwrap());
    }

    #[test]
    fn full_cycle_shapes() {
        let s = full_cycle(&Graph::complete(3), 1).unwrap();
        assert_eq!(s.w_bar(), 6);
        assert!(s.validate(&Graph::complete(3)).is_empty());
        assert_eq!(full_cycle(&Graph::path(3), 1).unwrap().w_bar(), 5);
    }

    #[test]
    fn star_cycle_shapes() {
        let star = Graph::star(3);
        let s = star_cycle(&star, &[0], 1).unwrap();
        assert_eq!(s.blocks[0].edges().len(), 3);
        assert_eq!(s.blocks[0].block_vertex(), Some(0));
        assert_eq!(s.w_bar(), 4);
        assert!(s.validate(&star).is_empty());

        let path = Graph::path(3);
        let s = star_cycle(&path, &[1], 1).unwrap();
        assert_eq!(s.blocks[0].edges(), &[e(0, 1), e(1, 2)]);
        assert!(s.validate(&path).is_empty());

        let k3 = Graph::complete(3);
        let s = star_cycle(&k3, &[0], 1).unwrap();
        assert_eq!(s.e_n, vec![e(0, 1), e(0, 2)]);
        assert!(s.validate(&k3).is_empty());
    }

    #[test]
    fn validate_reports_violations() {
        let g = Graph::path(4);
        let mut s = full_cycle(&g, 1).unwrap();
        s.blocks.retain(|b| b.block_vertex() != Some(3));
        assert_eq!(s.validate(&g), vec!["vertex 3 uncovered".to_string()]);

        let mut s = full_cycle(&g, 1).unwrap();
        s.blocks.retain(|b| b.edges() != [e(1, 2)]);
        s.e_n.retain(|x| *x != e(1, 2));
        assert!(s.validate(&g).contains(&"E_n does not connect V".to_string()));
    }

    #[test]
    fn batches_are_disjoint() {
        let g = Graph::path(5);
        let s = CycleSchedule {
            n: 1,
            e_n: vec![e(0, 1), e(2, 3), e(1, 2)],
            tree: vec![],
            blocks: vec![Block::edge(e(0, 1)), Block::edge(e(2, 3)), Block::edge(e(1, 2))],
        };
        let b = s.batches();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].len(), 2);
        let _ = g;

        let star = Graph::star(4);
        let s = full_cycle(&star, 1).unwrap();
        let edge_batches: Vec<_> = s.batches().into_iter().filter(|b| b.iter().any(|x| !x.edges().is_empty())).collect();
        assert!(edge_batches.iter().all(|b| b.iter().filter(|x| !x.edges().is_empty()).count() == 1));

        let m = Graph::new(6, &[(0, 1), (2, 3), (4, 5), (1, 2), (3, 4)]).unwrap();
        let s = CycleSchedule {
            n: 1,
            e_n: vec![],
            tree: vec![],
            blocks: vec![Block::edge(e(0, 1)), Block::edge(e(2, 3)), Block::edge(e(4, 5))],
        };
        assert_eq!(s.batches().len(), 1);
        let _ = m;
    }
}
