//! Subset dual ascent on the resource-allocation dual
//! `min G(y) = Σ f_i*(y_i)  s.t.  Σ y_i = 0`, with stuck-point detection,
//! the smooth-overlap sufficient conditions and the lifting that identifies
//! this dual with the Dykstra dual.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::funcs::{stationary_solve, ConvexFunction, Kind};
use crate::linalg::{dist, dot, BlockVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct AllocationState<S> {
    funcs: Vec<ConvexFunction<S>>,
    y: BlockVector<S>,
    step: usize,
    multipliers: BTreeMap<Vec<usize>, Vec<S>>,
}

/// Outcome of one subset step.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentStep<S> {
    /// Decrease of `G` (nonnegative).
    pub improvement: S,
    pub changed: bool,
    /// KKT multiplier of the subset problem: the subset's consensus value.
    pub x: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StuckReport<S> {
    pub x_values: Vec<Vec<S>>,
    pub improvements: Vec<S>,
    /// Largest distance between two subset consensus values.
    pub spread: S,
    pub stuck: bool,
}

impl<S: Scalar> AllocationState<S> {
    /// Requires `Σ y_i = 0` and `y_i ∈ dom f_i*`.
    pub fn new(funcs: Vec<ConvexFunction<S>>, y: BlockVector<S>) -> Result<Self> {
        if funcs.len() != y.n_blocks() {
            return Err(Error::DimensionMismatch {
                expected: y.n_blocks(),
                got: funcs.len(),
            });
        }
        let sum = y.block_sum();
        let scale = S::one() + y.max_abs();
        if sum.iter().any(|v| v.abs() > S::lit(1e-12) * scale) {
            return Err(Error::InvalidArgument("allocation duals must sum to zero".into()));
        }
        for (i, f) in funcs.iter().enumerate() {
            if !f.conjugate_eval(y.block(i))?.is_finite() {
                return Err(Error::OutsideDomain(format!("y_{i} is outside dom f_{i}*")));
            }
        }
        Ok(AllocationState {
            funcs,
            y,
            step: 0,
            multipliers: BTreeMap::new(),
        })
    }

    pub fn zero(funcs: Vec<ConvexFunction<S>>) -> Result<Self> {
        let dim = funcs.first().map_or(1, |f| f.dim());
        let y = BlockVector::zeros(funcs.len(), dim);
        Self::new(funcs, y)
    }

    pub fn y(&self) -> &BlockVector<S> {
        &self.y
    }

    pub fn funcs(&self) -> &[ConvexFunction<S>] {
        &self.funcs
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// `G(y) = Σ f_i*(y_i)`.
    pub fn objective(&self) -> Result<S> {
        let mut g = S::zero();
        for (i, f) in self.funcs.iter().enumerate() {
            g += f.conjugate_eval(self.y.block(i))?;
        }
        Ok(g)
    }

    fn subset_objective(&self, subset: &[usize], ys: &[Vec<S>]) -> Result<S> {
        let mut g = S::zero();
        for (&i, y) in subset.iter().zip(ys) {
            g += self.funcs[i].conjugate_eval(y)?;
        }
        Ok(g)
    }

    fn check_subset(&self, subset: &[usize]) -> Result<Vec<usize>> {
        let mut s = subset.to_vec();
        s.sort_unstable();
        s.dedup();
        if s.len() < 2 {
            return Err(Error::InvalidArgument("a subset needs at least two vertices".into()));
        }
        if let Some(&i) = s.iter().find(|&&i| i >= self.funcs.len()) {
            return Err(Error::InvalidArgument(format!("vertex {i} out of range")));
        }
        Ok(s)
    }

    /// Solves the subset problem without touching the state.
    fn probe(&self, subset: &[usize]) -> Result<(Vec<S>, Vec<Vec<S>>, S)> {
        let dim = self.y.dim();
        let mut s = vec![S::zero(); dim];
        for &i in subset {
            crate::linalg::axpy(S::one(), self.y.block(i), &mut s);
        }
        let funcs: Vec<&ConvexFunction<S>> = subset.iter().map(|&i| &self.funcs[i]).collect();
        let (x, ys) = stationary_solve(&funcs, &s)?;
        if !self.subset_objective(subset, &ys)?.is_finite() {
            return Err(Error::Unbounded(format!("subset {subset:?} solution leaves the conjugate domain")));
        }
        // x ∈ ∂f_i*(y_i') for every i and Σ (y_i − y_i') = 0, so the decrease
        // of G_S is a sum of Bregman divergences. Quadratic terms are exact
        // (‖Δy‖² / 2a), which keeps tiny improvements visible.
        let mut improvement = S::zero();
        for (&i, y_new) in subset.iter().zip(&ys) {
            let y_old = self.y.block(i);
            let f = &self.funcs[i];
            let d = match f.kind() {
                Kind::Quadratic { a, .. } => dist(y_old, y_new).powi(2) / (S::lit(2.0) * *a),
                _ => {
                    let step: Vec<S> = y_old.iter().zip(y_new).map(|(&o, &n)| o - n).collect();
                    f.conjugate_eval(y_old)? - f.conjugate_eval(y_new)? - dot(&x, &step)
                }
            };
            improvement += d.max(S::zero());
        }
        Ok((x, ys, improvement))
    }

    /// Replaces `y_S` by a minimizer of `Σ_{i∈S} f_i*(y_i)` with `Σ_{i∈S} y_i`
    /// fixed. The current `y_S` is kept unless the solve strictly improves it.
    pub fn ascend_subset(&mut self, subset: &[usize]) -> Result<AscentStep<S>> {
        let subset = self.check_subset(subset)?;
        let (x, ys, improvement) = self.probe(&subset)?;
        // Ties keep the current point, so non-unique subset optima never move y.
        let changed = improvement > S::zero();
        if changed {
            for (&i, y) in subset.iter().zip(&ys) {
                self.y.block_mut(i).copy_from_slice(y);
            }
        }
        self.multipliers.insert(subset, x.clone());
        self.step += 1;
        Ok(AscentStep {
            improvement: if changed { improvement } else { S::zero() },
            changed,
            x,
        })
    }

    /// Consensus value of the last solve on `subset`.
    pub fn subset_consensus_x(&self, subset: &[usize]) -> Result<Vec<S>> {
        let mut s = subset.to_vec();
        s.sort_unstable();
        s.dedup();
        self.multipliers
            .get(&s)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no solve recorded for subset {subset:?}")))
    }

    /// Flags the state when no subset can improve `G` yet the subsets'
    /// consensus values disagree.
    pub fn detect_stuck(&self, subsets: &[Vec<usize>]) -> Result<StuckReport<S>> {
        let g = self.objective()?;
        let tol = S::lit(1e-12) * (S::one() + g.abs());
        let mut x_values = Vec::new();
        let mut improvements = Vec::new();
        for s in subsets {
            let s = self.check_subset(s)?;
            let (x, _, imp) = self.probe(&s)?;
            x_values.push(x);
            improvements.push(imp.max(S::zero()));
        }
        let mut spread = S::zero();
        for a in &x_values {
            for b in &x_values {
                spread = spread.max(dist(a, b));
            }
        }
        let stuck = improvements.iter().all(|&i| i <= tol) && spread > S::lit(1e-9);
        Ok(StuckReport {
            x_values,
            improvements,
            spread,
            stuck,
        })
    }

    /// Cycles through `schedule` until a full pass improves `G` by at most
    /// `stop.tol` or the step budget runs out.
    pub fn run_allocation(&mut self, schedule: &[Vec<usize>], stop: &AllocationStop<S>) -> Result<AllocationTrace<S>> {
        if schedule.is_empty() {
            return Err(Error::InvalidArgument("empty subset schedule".into()));
        }
        let mut objective = vec![self.objective()?];
        let mut pass_gain = S::zero();
        let mut bound_exceeded = false;
        let mut settled = false;
        for k in 0..stop.max_steps {
            let step = self.ascend_subset(&schedule[k % schedule.len()])?;
            pass_gain += step.improvement;
            objective.push(self.objective()?);
            if self.y.max_abs() > stop.bound {
                bound_exceeded = true;
            }
            if (k + 1) % schedule.len() == 0 {
                if pass_gain <= stop.tol {
                    settled = true;
                    break;
                }
                pass_gain = S::zero();
            }
        }
        let report = self.detect_stuck(schedule)?;
        Ok(AllocationTrace {
            objective,
            settled,
            bound_exceeded,
            report,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AllocationStop<S> {
    pub max_steps: usize,
    /// Stop after a pass whose total decrease of `G` is at most this.
    pub tol: S,
    /// Diagnostic bound on `max |y|`.
    pub bound: S,
}

impl<S: Scalar> AllocationStop<S> {
    pub fn new(max_steps: usize, tol: S) -> Self {
        AllocationStop {
            max_steps,
            tol,
            bound: S::lit(1e12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllocationTrace<S> {
    /// `G(y)` before the first step and after every step.
    pub objective: Vec<S>,
    pub settled: bool,
    pub bound_exceeded: bool,
    pub report: StuckReport<S>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OverlapViolation {
    /// Two subsets meet only outside the smooth vertices.
    NonSmoothIntersection { first: usize, second: usize },
    /// No chain of subsets with smooth overlaps joins the two vertices.
    Unlinked { from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapCertificate {
    pub holds: bool,
    /// For each vertex pair `(i, j)`, `i < j`, a chain of subset indices whose
    /// consecutive members share a smooth vertex, first containing `i` and
    /// last containing `j`.
    pub chains: Vec<((usize, usize), Vec<usize>)>,
    pub violation: Option<OverlapViolation>,
}

/// Checks (a) intersecting subsets share a smooth vertex and (b) every vertex
/// pair is joined by a chain of subsets overlapping in smooth vertices.
pub fn check_smooth_overlap(subsets: &[Vec<usize>], smooth: &[bool]) -> OverlapCertificate {
    let n = smooth.len();
    let fail = |v| OverlapCertificate {
        holds: false,
        chains: Vec::new(),
        violation: Some(v),
    };
    let meets = |a: &[usize], b: &[usize]| a.iter().any(|i| b.contains(i));
    let meets_smooth = |a: &[usize], b: &[usize]| a.iter().any(|i| b.contains(i) && smooth.get(*i) == Some(&true));
    let m = subsets.len();
    let mut link = vec![Vec::new(); m];
    for a in 0..m {
        for b in a + 1..m {
            if meets(&subsets[a], &subsets[b]) {
                if !meets_smooth(&subsets[a], &subsets[b]) {
                    return fail(OverlapViolation::NonSmoothIntersection { first: a, second: b });
                }
                link[a].push(b);
                link[b].push(a);
            }
        }
    }
    let mut chains = Vec::new();
    for i in 0..n {
        // BFS over subsets from every subset that contains i
        let mut prev = vec![None; m];
        let mut seen = vec![false; m];
        let mut queue = VecDeque::new();
        for (k, s) in subsets.iter().enumerate() {
            if s.contains(&i) {
                seen[k] = true;
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            for &nb in &link[k] {
                if !seen[nb] {
                    seen[nb] = true;
                    prev[nb] = Some(k);
                    queue.push_back(nb);
                }
            }
        }
        for j in i + 1..n {
            let Some(end) = (0..m).find(|&k| seen[k] && subsets[k].contains(&j)) else {
                return fail(OverlapViolation::Unlinked { from: i, to: j });
            };
            let mut chain = vec![end];
            while let Some(p) = prev[*chain.last().expect("nonempty")] {
                chain.push(p);
            }
            chain.reverse();
            chains.push(((i, j), chain));
        }
    }
    OverlapCertificate {
        holds: true,
        chains,
        violation: None,
    }
}

/// Duals of the lifted allocation problem on `V × {0, 1}`; vertex `(i, s)` is
/// block `i + s·n`, matching [`crate::graph::Graph::lift`].
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedDual<S> {
    pub y: BlockVector<S>,
}

impl<S: Scalar> LiftedDual<S> {
    pub fn n_base(&self) -> usize {
        self.y.n_blocks() / 2
    }

    pub fn y0(&self, i: usize) -> &[S] {
        self.y.block(i)
    }

    pub fn y1(&self, i: usize) -> &[S] {
        self.y.block(i + self.n_base())
    }
}

/// Lifted node functions: `½‖x − x₀_i‖²` at `(i, 0)` and `f_i` at `(i, 1)`.
pub fn lifted_functions<S: Scalar>(funcs: &[ConvexFunction<S>], x0: &BlockVector<S>) -> Result<Vec<ConvexFunction<S>>> {
    let mut out = (0..x0.n_blocks())
        .map(|i| ConvexFunction::quadratic(S::one(), x0.block(i).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    out.extend(funcs.iter().cloned());
    Ok(out)
}

/// `y_{i,1} = [z_i]_i`, `y_{i,0} = −[z_e]_i − [z_i]_i`. Node duals are given by
/// their own blocks; `z_e` must lie in D⊥.
pub fn lift_from_dykstra<S: Scalar>(z: &BlockVector<S>, z_e: &BlockVector<S>) -> Result<LiftedDual<S>> {
    if z.n_blocks() != z_e.n_blocks() || z.dim() != z_e.dim() {
        return Err(Error::DimensionMismatch {
            expected: z.n_blocks(),
            got: z_e.n_blocks(),
        });
    }
    let residual = crate::linalg::norm(&z_e.block_sum());
    if residual > S::lit(1e-9) * (S::one() + z_e.norm()) {
        return Err(Error::NotInDiagonalComplement {
            norm: residual.as_f64(),
        });
    }
    let n = z.n_blocks();
    let mut blocks = Vec::with_capacity(2 * n);
    for i in 0..n {
        blocks.push(z_e.block(i).iter().zip(z.block(i)).map(|(&e, &v)| -e - v).collect());
    }
    blocks.extend((0..n).map(|i| z.block(i).to_vec()));
    Ok(LiftedDual {
        y: BlockVector::from_blocks(blocks)?,
    })
}

/// Inverse of [`lift_from_dykstra`]: `[z_i]_i = y_{i,1}`,
/// `[z_e]_i = −y_{i,0} − y_{i,1}`.
pub fn lift_to_dykstra<S: Scalar>(lifted: &LiftedDual<S>) -> (BlockVector<S>, BlockVector<S>) {
    let n = lifted.n_base();
    let z = BlockVector::from_blocks((0..n).map(|i| lifted.y1(i).to_vec()).collect()).expect("finite");
    let z_e = BlockVector::from_blocks(
        (0..n)
            .map(|i| lifted.y0(i).iter().zip(lifted.y1(i)).map(|(&a, &b)| -a - b).collect())
            .collect(),
    )
    .expect("finite");
    (z, z_e)
}

/// `−Σ f_i*(y_{i,1}) − Σ [½‖y_{i,0} + x₀_i‖² − ½‖x₀_i‖²]`.
pub fn lifted_objective<S: Scalar>(funcs: &[ConvexFunction<S>], x0: &BlockVector<S>, lifted: &LiftedDual<S>) -> Result<S> {
    let half = S::lit(0.5);
    let mut val = S::zero();
    for (i, f) in funcs.iter().enumerate() {
        val -= f.conjugate_eval(lifted.y1(i))?;
        let shifted: Vec<S> = lifted.y0(i).iter().zip(x0.block(i)).map(|(&a, &b)| a + b).collect();
        val -= half * (crate::linalg::norm_sq(&shifted) - crate::linalg::norm_sq(x0.block(i)));
    }
    Ok(val)
}

/// `−Σ f_i*(z_i) − ½‖Σ z_i + z_e − x₀‖² + ½‖x₀‖²`.
pub fn common_dykstra_objective<S: Scalar>(
    funcs: &[ConvexFunction<S>],
    x0: &BlockVector<S>,
    z: &BlockVector<S>,
    z_e: &BlockVector<S>,
) -> Result<S> {
    let half = S::lit(0.5);
    let mut val = half * x0.norm_sq() - half * z.add(z_e).sub(x0).norm_sq();
    for (i, f) in funcs.iter().enumerate() {
        val -= f.conjugate_eval(z.block(i))?;
    }
    Ok(val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: f64, c: f64) -> ConvexFunction<f64> {
        ConvexFunction::quadratic(a, vec![c]).unwrap()
    }

    /// Example 3.1 with the middle node contributing f₂ ≡ 0 (f₂* = δ_{0}).
    fn example() -> AllocationState<f64> {
        AllocationState::zero(vec![q(1.0, -1.0), ConvexFunction::zero(1), q(1.0, 1.0)]).unwrap()
    }

    #[test]
    fn example_pairs_are_stuck() {
        let mut s = example();
        let step = s.ascend_subset(&[0, 1]).unwrap();
        assert!(!step.changed);
        assert_eq!(s.y().as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(s.subset_consensus_x(&[0, 1]).unwrap(), vec![-1.0]);
        s.ascend_subset(&[1, 2]).unwrap();
        assert_eq!(s.subset_consensus_x(&[1, 2]).unwrap(), vec![1.0]);
        let report = s.detect_stuck(&[vec![0, 1], vec![1, 2]]).unwrap();
        assert!(report.stuck);
        assert_eq!(report.x_values, vec![vec![-1.0], vec![1.0]]);
    }

    #[test]
    fn example_full_subset_reaches_optimum() {
        let mut s = example();
        let step = s.ascend_subset(&[0, 1, 2]).unwrap();
        assert!(step.changed);
        assert_eq!(s.y().as_slice(), &[1.0, 0.0, -1.0]);
        assert_eq!(s.objective().unwrap(), -1.0);
        assert!(!s.detect_stuck(&[vec![0, 1, 2]]).unwrap().stuck);
    }

    #[test]
    fn two_quadratics() {
        let mut s = AllocationState::zero(vec![q(1.0, 0.0), q(1.0, 2.0)]).unwrap();
        s.ascend_subset(&[0, 1]).unwrap();
        assert_eq!(s.y().as_slice(), &[1.0, -1.0]);
        assert_eq!(s.subset_consensus_x(&[1, 0]).unwrap(), vec![1.0]);
        assert!(s.subset_consensus_x(&[0]).is_err());
        assert!(s.ascend_subset(&[0]).is_err());
    }

    #[test]
    fn rejects_unbalanced_duals() {
        let y = BlockVector::from_scalars(&[1.0, 0.0]);
        assert!(AllocationState::new(vec![q(1.0, 0.0), q(1.0, 0.0)], y).is_err());
    }

    #[test]
    fn run_allocation_examples() {
        let mut s = example();
        let trace = s
            .run_allocation(&[vec![0, 1], vec![1, 2]], &AllocationStop::new(100, 1e-14))
            .unwrap();
        assert!(trace.objective.iter().all(|&g| g == 0.0));
        assert!(trace.report.stuck);

        let mut s = AllocationState::zero(vec![q(1.0, 0.0), q(2.0, 3.0), q(0.5, -1.0)]).unwrap();
        let trace = s
            .run_allocation(&[vec![0, 1], vec![1, 2]], &AllocationStop::new(10_000, 1e-20))
            .unwrap();
        assert!(trace.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        // x* = Σ a c / Σ a
        let x = (0.0 + 6.0 - 0.5) / 3.5;
        let expected = [x, 2.0 * (x - 3.0), 0.5 * (x + 1.0)];
        for (got, want) in s.y().as_slice().iter().zip(expected) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!(!trace.report.stuck);
    }

    #[test]
    fn smooth_overlap_examples() {
        let smooth = [true, false, true];
        let cert = check_smooth_overlap(&[vec![0, 1], vec![1, 2]], &smooth);
        assert!(!cert.holds);
        assert_eq!(
            cert.violation,
            Some(OverlapViolation::NonSmoothIntersection { first: 0, second: 1 })
        );

        let cert = check_smooth_overlap(&[vec![0, 1], vec![1, 2]], &[true; 3]);
        assert!(cert.holds);
        assert_eq!(cert.chains.iter().find(|(p, _)| *p == (0, 2)).unwrap().1, vec![0, 1]);

        let cert = check_smooth_overlap(&[vec![0, 1], vec![2, 3]], &[true; 4]);
        assert!(matches!(cert.violation, Some(OverlapViolation::Unlinked { .. })));
        assert!(check_smooth_overlap(&[vec![0, 1, 2, 3]], &[false; 4]).holds);
    }

    #[test]
    fn lifting_zero() {
        let z = BlockVector::<f64>::zeros(3, 1);
        let lifted = lift_from_dykstra(&z, &z).unwrap();
        assert_eq!(lifted.y, BlockVector::zeros(6, 1));
        let bad = BlockVector::from_scalars(&[1.0, 0.0, 0.0]);
        assert!(lift_from_dykstra(&z, &bad).is_err());
    }

    proptest! {
        #[test]
        fn lifting_preserves_objective(
            z in proptest::collection::vec(-2.0..2.0f64, 3),
            e in proptest::collection::vec(-2.0..2.0f64, 2),
            x0 in proptest::collection::vec(-2.0..2.0f64, 3),
        ) {
            let funcs = vec![q(1.0, -1.0), q(2.0, 0.5), ConvexFunction::l1(3.0, 1).unwrap()];
            let z = BlockVector::from_scalars(&z);
            let z_e = BlockVector::from_scalars(&[e[0], e[1] - e[0], -e[1]]);
            let x0 = BlockVector::from_scalars(&x0);
            let lifted = lift_from_dykstra(&z, &z_e).unwrap();
            prop_assert!(lifted.y.block_sum()[0].abs() < 1e-12);
            let a = lifted_objective(&funcs, &x0, &lifted).unwrap();
            let b = common_dykstra_objective(&funcs, &x0, &z, &z_e).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            let (z2, e2) = lift_to_dykstra(&lifted);
            prop_assert!(z2.sub(&z).max_abs() == 0.0);
            prop_assert!(e2.sub(&z_e).max_abs() <= 1e-15);
            // the lifted allocation objective is −G over the lifted functions
            let lf = lifted_functions(&funcs, &x0).unwrap();
            let g: f64 = (0..6).map(|k| lf[k].conjugate_eval(lifted.y.block(k)).unwrap()).sum();
            prop_assert!((a + g).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn ascent_preserves_sum_and_monotone(
            params in proptest::collection::vec((0.2..3.0f64, -3.0..3.0f64), 3..6),
            order in proptest::collection::vec(0usize..100, 20),
        ) {
            let funcs: Vec<_> = params.iter().map(|&(a, c)| q(a, c)).collect();
            let n = funcs.len();
            let mut s = AllocationState::zero(funcs).unwrap();
            let mut g = s.objective().unwrap();
            for k in order {
                let i = k % n;
                let j = (k / n + i + 1) % n;
                if i == j { continue; }
                s.ascend_subset(&[i, j]).unwrap();
                let total: f64 = s.y().block_sum()[0];
                prop_assert!(total.abs() <= 1e-12 * (1.0 + s.y().max_abs()));
                let g2 = s.objective().unwrap();
                prop_assert!(g2 <= g + 1e-12 * (1.0 + g.abs()));
                g = g2;
            }
        }
    }
}
