#![allow(dead_code)]

use dykstra_net::{BlockVector, ConvexFunction, Graph, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub graph: Graph,
    pub funcs: Vec<ConvexFunction<f64>>,
    pub x0: BlockVector<f64>,
}

impl Instance {
    pub fn problem(&self) -> Problem<f64> {
        Problem::new(self.graph.clone(), self.funcs.clone(), self.x0.clone()).unwrap()
    }
}

/// Random connected graph with n ≤ 10, d ≤ 3 and a mix of quadratic, box,
/// point and l1 nodes. Boxes and points all contain one common point, so the
/// instance is feasible.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=10);
    let d = rng.gen_range(1..=3);
    let graph = Graph::random_connected(n, 0.3, rng.gen());
    let anchor: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut has_point = false;
    let funcs = (0..n)
        .map(|_| match rng.gen_range(0..4) {
            0 => {
                let c = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                ConvexFunction::quadratic(rng.gen_range(0.5..2.0), c).unwrap()
            }
            1 => {
                let lo = anchor.iter().map(|a| a - rng.gen_range(0.1..1.0)).collect();
                let hi = anchor.iter().map(|a| a + rng.gen_range(0.1..1.0)).collect();
                ConvexFunction::indicator_box(lo, hi).unwrap()
            }
            2 if !has_point && rng.gen_bool(0.5) => {
                has_point = true;
                ConvexFunction::point(anchor.clone()).unwrap()
            }
            _ => ConvexFunction::l1(rng.gen_range(0.1..1.0), d).unwrap(),
        })
        .collect();
    let x0 = BlockVector::from_blocks((0..n).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect())
        .unwrap();
    Instance { graph, funcs, x0 }
}

/// Random connected graph carrying only quadratics.
pub fn random_quadratics(seed: u64, n: usize, d: usize) -> Vec<ConvexFunction<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let c = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            ConvexFunction::quadratic(rng.gen_range(0.5..2.0), c).unwrap()
        })
        .collect()
}
