//! Closed convex functions on R^d with evaluation, proximal, conjugate and
//! subgradient oracles.
//!
//! | kind              | f(x)                  | f*(z)                       | f* smooth |
//! |-------------------|-----------------------|-----------------------------|-----------|
//! | `Zero`            | 0                     | δ_{0}(z)                    | no        |
//! | `Quadratic(a, c)` | a/2 ‖x − c‖²          | ‖z‖²/(2a) + ⟨c, z⟩          | yes       |
//! | `Point(p)`        | δ_{p}(x)              | ⟨p, z⟩                      | no (*)    |
//! | `Box(lo, hi)`     | δ_[lo,hi](x)          | Σ max(z_k hi_k, z_k lo_k)   | no        |
//! | `Ball(c, r)`      | δ_{‖x−c‖≤r}(x)        | ⟨c, z⟩ + r‖z‖               | no        |
//! | `L1(λ)`           | λ‖x‖₁                 | δ_{‖z‖∞≤λ}(z)               | no        |
//! | `Affine(g, b)`    | ⟨g, x⟩ + b            | −b + δ_{g}(z)               | no        |
//!
//! (*) linear, hence differentiable, but reported as non-smooth: the flag is a
//! conservative certificate and only quadratics are ever claimed smooth.
//!
//! Subgradient selections: `Zero`, `Point`, `Box` and `Ball` return 0, `L1`
//! returns λ·sign(x) with 0 at kinks, `Affine` returns g. Solvers that need the
//! subgradient certifying a proximal step use the prox residual instead.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, dist, dot, norm, norm_sq, scale};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum Kind<S> {
    Zero,
    Quadratic { a: S, c: Vec<S> },
    Point { p: Vec<S> },
    Box { lo: Vec<S>, hi: Vec<S> },
    Ball { center: Vec<S>, radius: S },
    L1 { lambda: S },
    Affine { g: Vec<S>, b: S },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexFunction<S> {
    kind: Kind<S>,
    dim: usize,
}

impl<S: Scalar> ConvexFunction<S> {
    pub fn zero(dim: usize) -> Self {
        ConvexFunction {
            kind: Kind::Zero,
            dim,
        }
    }

    /// `a/2 ‖x − c‖²` with `a > 0`.
    pub fn quadratic(a: S, c: Vec<S>) -> Result<Self> {
        if !(a > S::zero()) || !a.is_finite() {
            return Err(Error::InvalidArgument(format!("quadratic curvature must be positive, got {a}")));
        }
        finite(&c, "quadratic center")?;
        Ok(ConvexFunction {
            dim: c.len(),
            kind: Kind::Quadratic { a, c },
        })
    }

    pub fn point(p: Vec<S>) -> Result<Self> {
        finite(&p, "point")?;
        Ok(ConvexFunction {
            dim: p.len(),
            kind: Kind::Point { p },
        })
    }

    /// Indicator of `[lo, hi]`; infinite bounds are allowed.
    pub fn indicator_box(lo: Vec<S>, hi: Vec<S>) -> Result<Self> {
        check_dim(&hi, lo.len())?;
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || l.is_nan() || h.is_nan()) {
            return Err(Error::InvalidArgument("box needs lo <= hi".into()));
        }
        if lo.iter().any(|l| *l == S::infinity()) || hi.iter().any(|h| *h == S::neg_infinity()) {
            return Err(Error::InvalidArgument("box is empty".into()));
        }
        Ok(ConvexFunction {
            dim: lo.len(),
            kind: Kind::Box { lo, hi },
        })
    }

    pub fn ball(center: Vec<S>, radius: S) -> Result<Self> {
        finite(&center, "ball center")?;
        if !(radius >= S::zero()) || !radius.is_finite() {
            return Err(Error::InvalidArgument("ball radius must be finite and >= 0".into()));
        }
        Ok(ConvexFunction {
            dim: center.len(),
            kind: Kind::Ball { center, radius },
        })
    }

    pub fn l1(lambda: S, dim: usize) -> Result<Self> {
        if !(lambda >= S::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidArgument("l1 weight must be finite and >= 0".into()));
        }
        Ok(ConvexFunction {
            kind: Kind::L1 { lambda },
            dim,
        })
    }

    pub fn affine(g: Vec<S>, b: S) -> Result<Self> {
        finite(&g, "affine slope")?;
        Ok(ConvexFunction {
            dim: g.len(),
            kind: Kind::Affine { g, b },
        })
    }

    pub fn kind(&self) -> &Kind<S> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, Kind::Quadratic { .. })
    }

    /// Whether f* is differentiable on its domain (membership in V_sm).
    pub fn conjugate_smooth(&self) -> bool {
        self.is_quadratic()
    }

    pub fn eval(&self, x: &[S]) -> Result<S> {
        check_dim(x, self.dim)?;
        let tol = S::domain_tol();
        let inf = S::infinity();
        Ok(match &self.kind {
            Kind::Zero => S::zero(),
            Kind::Quadratic { a, c } => *a * dist(x, c).powi(2) / S::lit(2.0),
            Kind::Point { p } => {
                if dist(x, p) <= tol * (S::one() + norm(p)) {
                    S::zero()
                } else {
                    inf
                }
            }
            Kind::Box { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(&xk, (&l, &h))| {
                    xk >= l - tol * (S::one() + l.abs()) && xk <= h + tol * (S::one() + h.abs())
                });
                if inside {
                    S::zero()
                } else {
                    inf
                }
            }
            Kind::Ball { center, radius } => {
                if dist(x, center) <= *radius + tol * (S::one() + *radius) {
                    S::zero()
                } else {
                    inf
                }
            }
            Kind::L1 { lambda } => *lambda * x.iter().map(|v| v.abs()).sum::<S>(),
            Kind::Affine { g, b } => dot(g, x) + *b,
        })
    }

    /// `argmin_x f(x) + ‖x − y‖² / (2 tau)`.
    pub fn prox(&self, tau: S, y: &[S]) -> Result<Vec<S>> {
        check_dim(y, self.dim)?;
        if !(tau > S::zero()) {
            return Err(Error::InvalidArgument(format!("prox step must be positive, got {tau}")));
        }
        Ok(match &self.kind {
            Kind::Zero => y.to_vec(),
            Kind::Quadratic { a, c } => {
                let ta = tau * *a;
                let denom = S::one() + ta;
                y.iter().zip(c).map(|(&yk, &ck)| (yk + ta * ck) / denom).collect()
            }
            Kind::Point { p } => p.clone(),
            Kind::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&yk, (&l, &h))| yk.max(l).min(h))
                .collect(),
            Kind::Ball { center, radius } => {
                let d = dist(y, center);
                if d <= *radius {
                    y.to_vec()
                } else {
                    let t = *radius / d;
                    y.iter()
                        .zip(center)
                        .map(|(&yk, &ck)| ck + t * (yk - ck))
                        .collect()
                }
            }
            Kind::L1 { lambda } => {
                let t = tau * *lambda;
                y.iter().map(|&yk| soft_threshold(yk, t)).collect()
            }
            Kind::Affine { g, .. } => y.iter().zip(g).map(|(&yk, &gk)| yk - tau * gk).collect(),
        })
    }

    /// `f*(z) = sup_x ⟨z, x⟩ − f(x)`, +∞ outside the conjugate's domain.
    pub fn conjugate_eval(&self, z: &[S]) -> Result<S> {
        check_dim(z, self.dim)?;
        let tol = S::domain_tol();
        let inf = S::infinity();
        Ok(match &self.kind {
            Kind::Zero => {
                if z.iter().all(|v| v.abs() <= tol) {
                    S::zero()
                } else {
                    inf
                }
            }
            Kind::Quadratic { a, c } => norm_sq(z) / (S::lit(2.0) * *a) + dot(c, z),
            Kind::Point { p } => dot(p, z),
            Kind::Box { lo, hi } => {
                let mut acc = S::zero();
                for (&zk, (&l, &h)) in z.iter().zip(lo.iter().zip(hi)) {
                    // sup over [l, h] of zk * x
                    let bound = if zk > S::zero() { h } else { l };
                    if bound.is_finite() {
                        acc += zk * bound;
                    } else if zk.abs() > tol {
                        return Ok(inf);
                    }
                }
                acc
            }
            Kind::Ball { center, radius } => dot(center, z) + *radius * norm(z),
            Kind::L1 { lambda } => {
                let limit = *lambda + tol * (S::one() + *lambda);
                if z.iter().all(|v| v.abs() <= limit) {
                    S::zero()
                } else {
                    inf
                }
            }
            Kind::Affine { g, b } => {
                if dist(z, g) <= tol * (S::one() + norm(g)) {
                    -*b
                } else {
                    inf
                }
            }
        })
    }

    /// The documented subgradient selection at `x ∈ dom f`.
    pub fn subgradient(&self, x: &[S]) -> Result<Vec<S>> {
        if !self.eval(x)?.is_finite() {
            return Err(Error::OutsideDomain(format!("{self} at {x:?}")));
        }
        Ok(match &self.kind {
            Kind::Zero | Kind::Point { .. } | Kind::Box { .. } | Kind::Ball { .. } => {
                vec![S::zero(); self.dim]
            }
            Kind::Quadratic { a, c } => x.iter().zip(c).map(|(&xk, &ck)| *a * (xk - ck)).collect(),
            Kind::L1 { lambda } => x
                .iter()
                .map(|&xk| {
                    if xk > S::zero() {
                        *lambda
                    } else if xk < S::zero() {
                        -*lambda
                    } else {
                        S::zero()
                    }
                })
                .collect(),
            Kind::Affine { g, .. } => g.clone(),
        })
    }

    /// `prox` of `sigma · f*` at `q`, via the Moreau identity
    /// `q = prox_{σf*}(q) + σ prox_{f/σ}(q/σ)`.
    pub fn conjugate_prox(&self, sigma: S, q: &[S]) -> Result<Vec<S>> {
        if !(sigma > S::zero()) {
            return Err(Error::InvalidArgument(format!("prox step must be positive, got {sigma}")));
        }
        let inner = self.prox(S::one() / sigma, &scale(S::one() / sigma, q))?;
        Ok(q.iter().zip(&inner).map(|(&qk, &pk)| qk - sigma * pk).collect())
    }

    /// `x ↦ f(x / s)` for `s > 0`, which stays inside the catalog.
    pub fn rescale(&self, s: S) -> Result<Self> {
        if !(s > S::zero()) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {s}")));
        }
        let mul = |v: &[S]| scale(s, v);
        Ok(match &self.kind {
            Kind::Zero => self.clone(),
            Kind::Quadratic { a, c } => Self::quadratic(*a / (s * s), mul(c))?,
            Kind::Point { p } => Self::point(mul(p))?,
            Kind::Box { lo, hi } => Self::indicator_box(mul(lo), mul(hi))?,
            Kind::Ball { center, radius } => Self::ball(mul(center), *radius * s)?,
            Kind::L1 { lambda } => Self::l1(*lambda / s, self.dim)?,
            Kind::Affine { g, b } => Self::affine(scale(S::one() / s, g), *b)?,
        })
    }

    /// Parses a spec such as `quadratic a=1 c=-1`, `point p=0`,
    /// `box lo=0 hi=inf`, `ball c=0,0 r=1`, `l1 lambda=0.5`, `affine g=1 b=0`
    /// or `zero`. Vector parameters take a comma list or a single value that is
    /// broadcast to `dim`.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let mut parts = spec.split_whitespace();
        let kind = parts
            .next()
            .ok_or_else(|| Error::Config("empty function spec".into()))?
            .to_ascii_lowercase();
        let mut params = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("'{p}' is not key=value in '{spec}'")))?;
            params.insert(k.to_ascii_lowercase(), v.to_string());
        }
        let vec_param = |key: &str, default: Option<f64>| -> Result<Vec<S>> {
            match params.get(key) {
                Some(v) => parse_vector(v, dim),
                None => default
                    .map(|d| vec![S::lit(d); dim])
                    .ok_or_else(|| Error::Config(format!("'{spec}' is missing {key}="))),
            }
        };
        let scalar_param = |key: &str, default: Option<f64>| -> Result<S> {
            match params.get(key) {
                Some(v) => parse_scalar(v),
                None => default
                    .map(S::lit)
                    .ok_or_else(|| Error::Config(format!("'{spec}' is missing {key}="))),
            }
        };
        let f = match kind.as_str() {
            "zero" => Ok(Self::zero(dim)),
            "quadratic" | "quad" => Self::quadratic(scalar_param("a", Some(1.0))?, vec_param("c", Some(0.0))?),
            "point" => Self::point(vec_param("p", None)?),
            "box" => Self::indicator_box(
                vec_param("lo", Some(f64::NEG_INFINITY))?,
                vec_param("hi", Some(f64::INFINITY))?,
            ),
            "ball" => Self::ball(vec_param("c", Some(0.0))?, scalar_param("r", None)?),
            "l1" => Self::l1(scalar_param("lambda", None)?, dim),
            "affine" => Self::affine(vec_param("g", None)?, scalar_param("b", Some(0.0))?),
            other => return Err(Error::Config(format!("unknown function kind '{other}'"))),
        };
        f.map_err(|e| Error::Config(format!("'{spec}': {e}")))
    }
}

impl<S: Scalar> fmt::Display for ConvexFunction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = |v: &[S]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.kind {
            Kind::Zero => write!(f, "zero"),
            Kind::Quadratic { a, c } => write!(f, "quadratic a={a} c={}", v(c)),
            Kind::Point { p } => write!(f, "point p={}", v(p)),
            Kind::Box { lo, hi } => write!(f, "box lo={} hi={}", v(lo), v(hi)),
            Kind::Ball { center, radius } => write!(f, "ball c={} r={radius}", v(center)),
            Kind::L1 { lambda } => write!(f, "l1 lambda={lambda}"),
            Kind::Affine { g, b } => write!(f, "affine g={} b={b}", v(g)),
        }
    }
}

pub(crate) fn soft_threshold<S: Scalar>(y: S, t: S) -> S {
    if y > t {
        y - t
    } else if y < -t {
        y + t
    } else {
        S::zero()
    }
}

fn finite<S: Scalar>(v: &[S], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be finite")))
    }
}

fn parse_scalar<S: Scalar>(s: &str) -> Result<S> {
    let v = match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => f64::INFINITY,
        "-inf" | "-infinity" => f64::NEG_INFINITY,
        t => t
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("'{s}' is not a number")))?,
    };
    Ok(S::lit(v))
}

fn parse_vector<S: Scalar>(s: &str, dim: usize) -> Result<Vec<S>> {
    let vals = s.split(',').map(parse_scalar).collect::<Result<Vec<S>>>()?;
    match vals.len() {
        1 => Ok(vec![vals[0]; dim]),
        n if n == dim => Ok(vals),
        n => Err(Error::Config(format!("'{s}' has {n} entries, expected {dim}"))),
    }
}

/// Solves `s ∈ Σ_i ∂f_i(x)` and returns `x` with `y_i ∈ ∂f_i(x)`, `Σ y_i = s`:
/// the KKT pair of `max { −Σ f_i*(y_i) : Σ y_i = s }`.
///
/// Supported: all quadratics (closed form) or quadratics plus exactly one other
/// kind, which reduces to a single prox. The non-quadratic function receives
/// the residual `s − Σ y_q` as its subgradient.
pub fn stationary_solve<S: Scalar>(funcs: &[&ConvexFunction<S>], s: &[S]) -> Result<(Vec<S>, Vec<Vec<S>>)> {
    let dim = s.len();
    if funcs.is_empty() {
        return Err(Error::InvalidArgument("no functions".into()));
    }
    for f in funcs {
        check_dim(s, f.dim())?;
    }
    let mut curvature = S::zero();
    let mut weighted_center = vec![S::zero(); dim];
    let mut other = None;
    for (k, f) in funcs.iter().enumerate() {
        match f.kind() {
            Kind::Quadratic { a, c } => {
                curvature += *a;
                crate::linalg::axpy(*a, c, &mut weighted_center);
            }
            _ if other.is_some() => {
                return Err(Error::Unsupported(
                    "more than one non-quadratic function in a stationary solve".into(),
                ))
            }
            _ => other = Some(k),
        }
    }
    let rhs: Vec<S> = s.iter().zip(&weighted_center).map(|(&a, &b)| a + b).collect();
    let x = if curvature > S::zero() {
        let center = scale(S::one() / curvature, &rhs);
        match other {
            Some(k) => funcs[k].prox(S::one() / curvature, &center)?,
            None => center,
        }
    } else {
        // A lone non-quadratic: x must satisfy s ∈ ∂g(x).
        let g = funcs[other.expect("at least one function")];
        return match g.kind() {
            Kind::Zero if s.iter().all(|v| v.abs() <= S::domain_tol()) => Err(Error::Unsupported(
                "stationary point of the zero function is not unique".into(),
            )),
            Kind::Zero => Err(Error::Infeasible("0 = ∂0(x) cannot equal a nonzero sum".into())),
            _ => Err(Error::Unsupported(format!("stationary solve with only '{g}'"))),
        };
    };
    let mut ys: Vec<Vec<S>> = Vec::with_capacity(funcs.len());
    let mut acc = vec![S::zero(); dim];
    for (k, f) in funcs.iter().enumerate() {
        if Some(k) == other {
            ys.push(Vec::new());
            continue;
        }
        let y = f.subgradient(&x)?;
        crate::linalg::axpy(S::one(), &y, &mut acc);
        ys.push(y);
    }
    // The last slot (the non-quadratic, or the final quadratic) absorbs the
    // remainder so that the sum constraint holds to rounding.
    let slot = other.unwrap_or(funcs.len() - 1);
    if other.is_none() {
        crate::linalg::axpy(-S::one(), &ys[slot], &mut acc);
    }
    ys[slot] = s.iter().zip(&acc).map(|(&a, &b)| a - b).collect();
    Ok((x, ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: f64, c: f64) -> ConvexFunction<f64> {
        ConvexFunction::quadratic(a, vec![c]).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(q(1.0, -1.0).eval(&[0.0]).unwrap(), 0.5);
        let pt = ConvexFunction::point(vec![0.0]).unwrap();
        assert_eq!(pt.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(pt.eval(&[1.0]).unwrap(), f64::INFINITY);
        assert_eq!(ConvexFunction::<f64>::zero(1).eval(&[3.0]).unwrap(), 0.0);
        assert!(matches!(
            q(1.0, 0.0).eval(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn prox_examples() {
        assert_eq!(q(1.0, 0.0).prox(1.0, &[2.0]).unwrap(), vec![1.0]);
        let pt = ConvexFunction::point(vec![0.0]).unwrap();
        assert_eq!(pt.prox(0.3, &[5.0]).unwrap(), vec![0.0]);
        let l1 = ConvexFunction::l1(1.0, 1).unwrap();
        assert_eq!(l1.prox(1.0, &[0.5]).unwrap(), vec![0.0]);
        assert!(l1.prox(0.0, &[0.5]).is_err());
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(q(1.0, -1.0).conjugate_eval(&[1.0]).unwrap(), -0.5);
        let pt = ConvexFunction::point(vec![0.0]).unwrap();
        for z in [-3.0, 0.0, 2.5] {
            assert_eq!(pt.conjugate_eval(&[z]).unwrap(), 0.0);
        }
        let zero = ConvexFunction::<f64>::zero(1);
        assert_eq!(zero.conjugate_eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(zero.conjugate_eval(&[0.1]).unwrap(), f64::INFINITY);
        let half_line = ConvexFunction::indicator_box(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert_eq!(half_line.conjugate_eval(&[-2.0]).unwrap(), 0.0);
        assert_eq!(half_line.conjugate_eval(&[2.0]).unwrap(), f64::INFINITY);
        assert_eq!(half_line.conjugate_eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(q(1.0, -1.0).subgradient(&[0.0]).unwrap(), vec![1.0]);
        assert_eq!(ConvexFunction::l1(1.0, 1).unwrap().subgradient(&[0.0]).unwrap(), vec![0.0]);
        let aff = ConvexFunction::affine(vec![2.0, -1.0], 3.0).unwrap();
        assert_eq!(aff.subgradient(&[7.0, 7.0]).unwrap(), vec![2.0, -1.0]);
        let pt = ConvexFunction::point(vec![0.0]).unwrap();
        assert!(matches!(pt.subgradient(&[1.0]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn smoothness_flags() {
        assert!(q(1.0, 0.0).conjugate_smooth());
        assert!(!ConvexFunction::point(vec![0.0]).unwrap().conjugate_smooth());
        assert!(!ConvexFunction::<f64>::zero(1).conjugate_smooth());
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(ConvexFunction::quadratic(0.0, vec![1.0]).is_err());
        assert!(ConvexFunction::indicator_box(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexFunction::ball(vec![0.0], -1.0).is_err());
        assert!(ConvexFunction::l1(-1.0, 2).is_err());
    }

    #[test]
    fn rescale_composes() {
        let fs = [
            q(2.0, 1.5),
            ConvexFunction::point(vec![0.5]).unwrap(),
            ConvexFunction::indicator_box(vec![-1.0], vec![f64::INFINITY]).unwrap(),
            ConvexFunction::ball(vec![1.0], 2.0).unwrap(),
            ConvexFunction::l1(0.7, 1).unwrap(),
            ConvexFunction::affine(vec![3.0], 1.0).unwrap(),
        ];
        for f in &fs {
            let g = f.rescale(2.0).unwrap();
            for x in [-3.0, -1.0, 0.0, 1.0, 3.0] {
                let (a, b) = (g.eval(&[x]).unwrap(), f.eval(&[x / 2.0]).unwrap());
                assert!(a == b || (a - b).abs() < 1e-12, "{f}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn parse_specs() {
        let f = ConvexFunction::<f64>::parse("quadratic a=1 c=-1", 1).unwrap();
        assert_eq!(f, q(1.0, -1.0));
        let b = ConvexFunction::<f64>::parse("box lo=0 hi=inf", 2).unwrap();
        assert_eq!(
            b,
            ConvexFunction::indicator_box(vec![0.0; 2], vec![f64::INFINITY; 2]).unwrap()
        );
        assert_eq!(
            ConvexFunction::<f64>::parse("l1 lambda=0.5", 3).unwrap(),
            ConvexFunction::l1(0.5, 3).unwrap()
        );
        assert_eq!(
            ConvexFunction::<f64>::parse("point p=0", 1).unwrap(),
            ConvexFunction::point(vec![0.0]).unwrap()
        );
        assert_eq!(
            ConvexFunction::<f64>::parse("ball c=1,2 r=0.5", 2).unwrap(),
            ConvexFunction::ball(vec![1.0, 2.0], 0.5).unwrap()
        );
        assert!(ConvexFunction::<f64>::parse("cubic a=1", 1).is_err());
        assert!(ConvexFunction::<f64>::parse("quadratic c=1,2,3", 2).is_err());
        for spec in ["quadratic a=2 c=1,-1", "box lo=-1,0 hi=1,inf", "affine g=1,2 b=3", "zero"] {
            let f = ConvexFunction::<f64>::parse(spec, 2).unwrap();
            assert_eq!(ConvexFunction::parse(&f.to_string(), 2).unwrap(), f);
        }
    }

    #[test]
    fn stationary_examples() {
        // {½(x+1)², δ_{0}, ½(x−1)²}, s = 0
        let f1 = q(1.0, -1.0);
        let f2 = ConvexFunction::point(vec![0.0]).unwrap();
        let f3 = q(1.0, 1.0);
        let (x, y) = stationary_solve(&[&f1, &f2, &f3], &[0.0]).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_eq!(y, vec![vec![1.0], vec![0.0], vec![-1.0]]);

        let (x, y) = stationary_solve(&[&f1, &f2], &[0.0]).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_eq!(y, vec![vec![1.0], vec![-1.0]]);

        let (x, y) = stationary_solve(&[&q(1.0, 0.0), &q(1.0, 2.0)], &[0.0]).unwrap();
        assert_eq!(x, vec![1.0]);
        assert_eq!(y, vec![vec![1.0], vec![-1.0]]);

        // The conjugate-indicator reading: f₂ ≡ 0 pins y₂ = 0.
        let zero = ConvexFunction::zero(1);
        let (x, y) = stationary_solve(&[&f1, &zero], &[0.0]).unwrap();
        assert_eq!(x, vec![-1.0]);
        assert_eq!(y, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn stationary_unsupported_and_infeasible() {
        let a = ConvexFunction::point(vec![0.0]).unwrap();
        let b = ConvexFunction::l1(1.0, 1).unwrap();
        assert!(matches!(stationary_solve(&[&a, &b], &[0.0]), Err(Error::Unsupported(_))));
        let z = ConvexFunction::<f64>::zero(1);
        assert!(matches!(stationary_solve(&[&z], &[1.0]), Err(Error::Infeasible(_))));
    }

    fn arb_function(dim: usize) -> impl Strategy<Value = ConvexFunction<f64>> {
        let v = move || proptest::collection::vec(-3.0..3.0f64, dim);
        prop_oneof![
            Just(ConvexFunction::zero(dim)),
            (0.1..5.0f64, v()).prop_map(|(a, c)| ConvexFunction::quadratic(a, c).unwrap()),
            v().prop_map(|p| ConvexFunction::point(p).unwrap()),
            (v(), proptest::collection::vec(0.0..2.0f64, dim)).prop_map(|(lo, w)| {
                let hi = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
                ConvexFunction::indicator_box(lo, hi).unwrap()
            }),
            Just(ConvexFunction::indicator_box(vec![0.0; dim], vec![f64::INFINITY; dim]).unwrap()),
            (v(), 0.0..2.0f64).prop_map(|(c, r)| ConvexFunction::ball(c, r).unwrap()),
            (0.0..2.0f64).prop_map(move |l| ConvexFunction::l1(l, dim).unwrap()),
            (v(), -1.0..1.0f64).prop_map(|(g, b)| ConvexFunction::affine(g, b).unwrap()),
        ]
    }

    fn case() -> impl Strategy<Value = (ConvexFunction<f64>, f64, Vec<f64>)> {
        (1usize..4).prop_flat_map(|d| {
            (
                arb_function(d),
                0.05..5.0f64,
                proptest::collection::vec(-5.0..5.0f64, d),
            )
        })
    }

    proptest! {
        #[test]
        fn moreau_identity((f, tau, y) in case()) {
            let p = f.prox(tau, &y).unwrap();
            let q = f.conjugate_prox(1.0 / tau, &scale(1.0 / tau, &y)).unwrap();
            for k in 0..y.len() {
                prop_assert!((y[k] - p[k] - tau * q[k]).abs() <= 1e-10 * (1.0 + y[k].abs()));
            }
        }

        #[test]
        fn prox_residual_certifies_optimality((f, tau, y) in case()) {
            let x = f.prox(tau, &y).unwrap();
            let z: Vec<f64> = y.iter().zip(&x).map(|(a, b)| (a - b) / tau).collect();
            let lhs = f.eval(&x).unwrap() + f.conjugate_eval(&z).unwrap();
            let rhs = dot(&x, &z);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs() + norm(&z) * norm(&x)), "{} vs {}", lhs, rhs);
        }

        #[test]
        fn fenchel_young((f, _tau, y) in case(), zs in proptest::collection::vec(-4.0..4.0f64, 3)) {
            // x inside dom f: project an arbitrary point.
            let x = f.prox(1.0, &y).unwrap();
            let z = &zs[..y.len()];
            let fx = f.eval(&x).unwrap();
            let fz = f.conjugate_eval(z).unwrap();
            prop_assert!(fx + fz >= dot(&x, z) - 1e-10);
            let g = f.subgradient(&x).unwrap();
            let eq = f.eval(&x).unwrap() + f.conjugate_eval(&g).unwrap();
            prop_assert!((eq - dot(&x, &g)).abs() <= 1e-10 * (1.0 + eq.abs()));
        }

        #[test]
        fn stationary_sum_and_fenchel_young(
            a in proptest::collection::vec((0.2..3.0f64, -3.0..3.0f64), 1..4),
            other in arb_function(1),
            s in -2.0..2.0f64,
        ) {
            let quads: Vec<_> = a.iter().map(|&(a, c)| q(a, c)).collect();
            let mut funcs: Vec<&ConvexFunction<f64>> = quads.iter().collect();
            funcs.push(&other);
            let (x, ys) = stationary_solve(&funcs, &[s]).unwrap();
            let total: f64 = ys.iter().map(|y| y[0]).sum();
            prop_assert!((total - s).abs() <= 1e-12 * (1.0 + s.abs() + ys.iter().map(|y| y[0].abs()).sum::<f64>()));
            for (f, y) in funcs.iter().zip(&ys) {
                let lhs = f.eval(&x).unwrap() + f.conjugate_eval(y).unwrap();
                prop_assert!((lhs - x[0] * y[0]).abs() <= 1e-10 * (1.0 + lhs.abs()), "{} {:?} {:?}", f, x, y);
            }
        }
    }
}
