//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real field the solvers are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Absolute slack used when testing membership in a function domain.
    fn domain_tol() -> Self;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn domain_tol() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn domain_tol() -> Self {
        1e-4
    }
}

/// Tolerances used across the engine. One record so that tests and the CLI
/// agree on what "equal" means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<S> {
    /// Absolute tolerance for optimality and feasibility checks.
    pub absolute: S,
    /// Relative tolerance for algebraic identities (x = x0 - v_A, sum constraints).
    pub identity: S,
    /// Membership test for the orthogonal complement of the diagonal:
    /// |sum of blocks| <= diag_orth * (1 + |v|).
    pub diag_orth: S,
}

impl<S: Scalar> Default for Tolerances<S> {
    fn default() -> Self {
        if S::epsilon() < S::lit(1e-10) {
            Tolerances {
                absolute: S::lit(1e-9),
                identity: S::lit(1e-12),
                diag_orth: S::lit(1e-9),
            }
        } else {
            Tolerances {
                absolute: S::lit(1e-4),
                identity: S::lit(1e-5),
                diag_orth: S::lit(1e-4),
            }
        }
    }
}
