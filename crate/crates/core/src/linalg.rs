//! Dense real LU factorization, factor once and solve many right-hand sides.

use nalgebra::{DMatrix, DVector, LU};
use std::cell::Cell;

use crate::error::{Error, Result};

/// Pivot magnitude below `SINGULAR_RATIO * max_pivot` is treated as singular.
const SINGULAR_RATIO: f64 = 1e-15;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveCounts {
    pub factorizations: usize,
    pub solves: usize,
}

pub struct Factorized {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    solves: Cell<usize>,
    pivot_ratio: f64,
}

impl Factorized {
    /// Factor a square row-major matrix.
    pub fn new(dim: usize, data: &[f64]) -> Result<Self> {
        debug_assert_eq!(data.len(), dim * dim);
        let m = DMatrix::from_row_slice(dim, dim, data);
        let lu = m.lu();
        let u = lu.u();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..dim {
            let p = u[(i, i)].abs();
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if dim > 0 && (!lo.is_finite() || lo <= SINGULAR_RATIO * hi || hi == 0.0) {
            return Err(Error::SingularJacobian);
        }
        Ok(Self {
            lu,
            solves: Cell::new(0),
            pivot_ratio: if dim == 0 { 1.0 } else { lo / hi },
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.solves.set(self.solves.get() + 1);
        let b = DVector::from_column_slice(rhs);
        self.lu
            .solve(&b)
            .expect("factorization checked for singularity")
            .as_slice()
            .to_vec()
    }

    pub fn solves(&self) -> usize {
        self.solves.get()
    }

    /// Smallest over largest pivot magnitude; a cheap conditioning hint.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Row-major dense matrix-vector product.
pub fn mat_vec(dim: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    a.chunks(dim)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}
