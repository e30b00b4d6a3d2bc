//! Small dense vector helpers and the block vector type living in X^|V|.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm_sq<S: Scalar>(a: &[S]) -> S {
    dot(a, a)
}

pub fn norm<S: Scalar>(a: &[S]) -> S {
    norm_sq(a).sqrt()
}

pub fn max_abs<S: Scalar>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<S: Scalar>(k: S, a: &[S]) -> Vec<S> {
    a.iter().map(|&x| k * x).collect()
}

/// `y += k * x`
pub fn axpy<S: Scalar>(k: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

pub fn dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<S>()
        .sqrt()
}

pub(crate) fn check_dim<S>(v: &[S], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    Ok(())
}

/// An element of X^|V|: one `dim`-vector per vertex, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> BlockVector<S> {
    pub fn zeros(n_blocks: usize, dim: usize) -> Self {
        BlockVector {
            dim,
            data: vec![S::zero(); n_blocks * dim],
        }
    }

    pub fn from_blocks(blocks: Vec<Vec<S>>) -> Result<Self> {
        let dim = blocks.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "block vectors need at least one block of positive dimension".into(),
            ));
        }
        let mut data = Vec::with_capacity(dim * blocks.len());
        for b in &blocks {
            check_dim(b, dim)?;
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite block entry".into()));
            }
            data.extend_from_slice(b);
        }
        Ok(BlockVector { dim, data })
    }

    /// Scalar blocks (d = 1).
    pub fn from_scalars(values: &[S]) -> Self {
        BlockVector {
            dim: 1,
            data: values.to_vec(),
        }
    }

    /// Every block equal to `block`.
    pub fn replicate(block: &[S], n_blocks: usize) -> Self {
        let mut data = Vec::with_capacity(block.len() * n_blocks);
        for _ in 0..n_blocks {
            data.extend_from_slice(block);
        }
        BlockVector {
            dim: block.len(),
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_blocks(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn block(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks(self.dim)
    }

    pub fn to_blocks(&self) -> Vec<Vec<S>> {
        self.blocks().map(<[S]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn norm_sq(&self) -> S {
        norm_sq(&self.data)
    }

    pub fn norm(&self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> S {
        dot(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> S {
        max_abs(&self.data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        BlockVector {
            dim: self.dim,
            data: sub(&self.data, &other.data),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        BlockVector {
            dim: self.dim,
            data: add(&self.data, &other.data),
        }
    }

    pub fn scaled(&self, k: S) -> Self {
        BlockVector {
            dim: self.dim,
            data: scale(k, &self.data),
        }
    }

    pub fn add_to_block(&mut self, i: usize, k: S, v: &[S]) {
        axpy(k, v, self.block_mut(i));
    }

    /// Sum of all blocks, the quantity that vanishes on D⊥.
    pub fn block_sum(&self) -> Vec<S> {
        let mut s = vec![S::zero(); self.dim];
        for b in self.blocks() {
            axpy(S::one(), b, &mut s);
        }
        s
    }

    /// Mean of the blocks; the orthogonal projection onto D is this value replicated.
    pub fn block_mean(&self) -> Vec<S> {
        let n = S::from_usize(self.n_blocks()).unwrap();
        scale(S::one() / n, &self.block_sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
