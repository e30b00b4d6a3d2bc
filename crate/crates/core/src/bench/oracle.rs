//! Centralized reference solvers that do not share code with the
//! distributed methods.
//!
//! Both oracles split the objective into a smooth isotropic quadratic
//! `A/2 ‖x − m‖² + const` and a nonsmooth part made of at most: the
//! intersection of all boxes and points (per coordinate), a total L1 weight,
//! or a single ball. Proximal gradient with step `1/A` is then iterated until
//! the fixed-point residual is below the tolerance.

use crate::error::{Error, Result};
use crate::funcs::{ConvexFunction, Kind};
use crate::linalg::{axpy, dist, BlockVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<S> {
    pub x: Vec<S>,
    /// Proximal-gradient fixed-point residual at `x`.
    pub residual: S,
    pub iterations: usize,
}

const BUDGET: usize = 1_000_000;

enum Nonsmooth<S> {
    Separable { lo: Vec<S>, hi: Vec<S>, l1: S },
    Ball { center: Vec<S>, radius: S },
}

impl<S: Scalar> Nonsmooth<S> {
    fn prox(&self, tau: S, y: &[S]) -> Vec<S> {
        match self {
            Nonsmooth::Separable { lo, hi, l1 } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&v, (&l, &h))| {
                    let t = tau * *l1;
                    let s = if v > t {
                        v - t
                    } else if v < -t {
                        v + t
                    } else {
                        S::zero()
                    };
                    s.max(l).min(h)
                })
                .collect(),
            Nonsmooth::Ball { center, radius } => {
                let d = dist(y, center);
                if d <= *radius {
                    y.to_vec()
                } else {
                    y.iter().zip(center).map(|(&v, &c)| c + *radius / d * (v - c)).collect()
                }
            }
        }
    }
}

/// Smooth curvature `A`, linear coefficient `b` (smooth part
/// `A/2‖x‖² − ⟨b, x⟩ + const`) and the combined nonsmooth term.
fn split<S: Scalar>(funcs: &[&ConvexFunction<S>], dim: usize) -> Result<(S, Vec<S>, Nonsmooth<S>)> {
    let mut curvature = S::zero();
    let mut linear = vec![S::zero(); dim];
    let mut lo = vec![S::neg_infinity(); dim];
    let mut hi = vec![S::infinity(); dim];
    let mut l1 = S::zero();
    let mut ball = None;
    let mut separable = false;
    for f in funcs {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
        match f.kind() {
            Kind::Zero => {}
            Kind::Quadratic { a, c } => {
                curvature += *a;
                axpy(*a, c, &mut linear);
            }
            Kind::Affine { g, .. } => axpy(-S::one(), g, &mut linear),
            Kind::Point { p } => {
                separable = true;
                for k in 0..dim {
                    lo[k] = lo[k].max(p[k]);
                    hi[k] = hi[k].min(p[k]);
                }
            }
            Kind::Box { lo: l, hi: h } => {
                separable = true;
                for k in 0..dim {
                    lo[k] = lo[k].max(l[k]);
                    hi[k] = hi[k].min(h[k]);
                }
            }
            Kind::L1 { lambda } => {
                separable = true;
                l1 += *lambda;
            }
            Kind::Ball { center, radius } => {
                if ball.is_some() {
                    return Err(Error::Unsupported("more than one ball".into()));
                }
                ball = Some((center.clone(), *radius));
            }
        }
    }
    let tol = S::domain_tol();
    if lo.iter().zip(&hi).any(|(&l, &h)| l > h + tol * (S::one() + l.abs())) {
        return Err(Error::Infeasible("box and point constraints do not intersect".into()));
    }
    // snap tolerance-level crossings from coincident points
    for k in 0..dim {
        if lo[k] > hi[k] {
            hi[k] = lo[k];
        }
    }
    let nonsmooth = match ball {
        Some(_) if separable => {
            return Err(Error::Unsupported("a ball combined with boxes, points or l1".into()))
        }
        Some((center, radius)) => Nonsmooth::Ball { center, radius },
        None => Nonsmooth::Separable { lo, hi, l1 },
    };
    Ok((curvature, linear, nonsmooth))
}

fn prox_gradient<S: Scalar>(curvature: S, linear: &[S], h: &Nonsmooth<S>, tol: S) -> Result<OracleSolution<S>> {
    if !(curvature > S::zero()) {
        return Err(Error::Unsupported("no smooth curvature; the minimizer need not be unique".into()));
    }
    let step = S::one() / curvature;
    let mut x = vec![S::zero(); linear.len()];
    for it in 1..=BUDGET {
        // gradient of A/2‖x‖² − ⟨b, x⟩ is A x − b
        let y: Vec<S> = x.iter().zip(linear).map(|(&v, &b)| v - step * (curvature * v - b)).collect();
        let next = h.prox(step, &y);
        let residual = dist(&next, &x);
        x = next;
        if residual <= tol {
            return Ok(OracleSolution {
                x,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::ToleranceNotReached {
        tol: tol.as_f64(),
        iterations: BUDGET,
    })
}

/// Minimizer of `Σ_i [f_i(x) + λ_i/2 ‖x − x₀_i‖²]` (λ ≡ 1 when `lambdas` is
/// `None`), i.e. the consensus value of the Dykstra problem.
pub fn oracle_dykstra<S: Scalar>(
    funcs: &[ConvexFunction<S>],
    x0: &BlockVector<S>,
    lambdas: Option<&[S]>,
    tol: S,
) -> Result<OracleSolution<S>> {
    let n = x0.n_blocks();
    if funcs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: funcs.len(),
        });
    }
    let mut anchors = Vec::with_capacity(n);
    for i in 0..n {
        let l = lambdas.map_or(S::one(), |l| l[i]);
        anchors.push(ConvexFunction::quadratic(l, x0.block(i).to_vec())?);
    }
    let all: Vec<&ConvexFunction<S>> = funcs.iter().chain(anchors.iter()).collect();
    let (a, b, h) = split(&all, x0.dim())?;
    prox_gradient(a, &b, &h, tol)
}

/// Minimizer `x*` of `Σ f_i` and an allocation `y*_i ∈ ∂f_i(x*)` with
/// `Σ y*_i = 0`. Smooth nodes take their gradient; a single nonsmooth node
/// absorbs the remainder.
pub fn oracle_allocation<S: Scalar>(funcs: &[ConvexFunction<S>], tol: S) -> Result<(OracleSolution<S>, BlockVector<S>)> {
    let dim = funcs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no functions".into()))?
        .dim();
    let refs: Vec<&ConvexFunction<S>> = funcs.iter().collect();
    let (a, b, h) = split(&refs, dim)?;
    let sol = if a > S::zero() {
        prox_gradient(a, &b, &h, tol)?
    } else {
        return Err(Error::Unbounded("Σ f_i has no curvature; the oracle needs a quadratic term".into()));
    };
    let mut ys = vec![vec![S::zero(); dim]; funcs.len()];
    let mut rest = vec![S::zero(); dim];
    let mut absorber = None;
    for (i, f) in funcs.iter().enumerate() {
        match f.kind() {
            Kind::Quadratic { .. } | Kind::Affine { .. } | Kind::Zero => {
                ys[i] = f.subgradient(&sol.x)?;
                axpy(-S::one(), &ys[i], &mut rest);
            }
            _ if absorber.is_some() => {
                return Err(Error::Unsupported("more than one nonsmooth node in the allocation oracle".into()))
            }
            _ => absorber = Some(i),
        }
    }
    match absorber {
        Some(i) => ys[i] = rest,
        None if rest.iter().any(|v| v.abs() > tol.sqrt()) => {
            return Err(Error::Infeasible("gradients do not balance".into()))
        }
        None => {
            // distribute rounding onto the last node so the sum is exact
            let last = ys.len() - 1;
            axpy(S::one(), &rest, &mut ys[last]);
        }
    }
    Ok((sol, BlockVector::from_blocks(ys)?))
}
