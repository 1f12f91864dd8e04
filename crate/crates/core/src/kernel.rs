//! Dense matrix-vector kernels and zero-bin reduction shared by the solvers.
//!
//! The parallel variants split work by output entry, and every output entry
//! is accumulated sequentially in a fixed order. Results are therefore
//! identical whether or not `parallel` is set.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{OtError, Result};
use crate::matrix::{CostMatrix, TransportPlan};
use crate::measure::Histogram;

const PAR_MIN_ROWS: usize = 64;

/// `out = M x`.
pub(crate) fn gemv(mat: ArrayView2<'_, f64>, x: &[f64], out: &mut [f64], parallel: bool) {
    debug_assert_eq!(mat.ncols(), x.len());
    debug_assert_eq!(mat.nrows(), out.len());
    let row_dot = |i: usize| -> f64 {
        let row = mat.row(i);
        match row.as_slice() {
            Some(r) => r.iter().zip(x).map(|(a, b)| a * b).sum(),
            None => row.iter().zip(x).map(|(a, b)| a * b).sum(),
        }
    };
    if parallel && out.len() >= PAR_MIN_ROWS {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row_dot(i));
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            *o = row_dot(i);
        }
    }
}

/// `out = Mᵀ x`, accumulated row by row.
pub(crate) fn gemv_t(mat: ArrayView2<'_, f64>, x: &[f64], out: &mut [f64], parallel: bool) {
    debug_assert_eq!(mat.nrows(), x.len());
    debug_assert_eq!(mat.ncols(), out.len());
    let n = out.len();
    if parallel && n >= PAR_MIN_ROWS {
        let chunk = n.div_ceil(rayon::current_num_threads().max(1)).max(16);
        out.par_chunks_mut(chunk).enumerate().for_each(|(c, block)| {
            let start = c * chunk;
            block.fill(0.0);
            for (i, &xi) in x.iter().enumerate() {
                let row = mat.row(i);
                for (k, o) in block.iter_mut().enumerate() {
                    *o += xi * row[start + k];
                }
            }
        });
    } else {
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            let row = mat.row(i);
            match row.as_slice() {
                Some(r) => {
                    for (o, &m) in out.iter_mut().zip(r) {
                        *o += xi * m;
                    }
                }
                None => {
                    for (o, &m) in out.iter_mut().zip(row.iter()) {
                        *o += xi * m;
                    }
                }
            }
        }
    }
}

/// A problem restricted to the positive-mass bins of both marginals.
#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub cost: Array2<f64>,
    full_shape: (usize, usize),
}

impl Reduced {
    pub fn new(mu: &Histogram, nu: &Histogram, cost: &CostMatrix) -> Result<Self> {
        let full_shape = (mu.len(), nu.len());
        if cost.shape() != full_shape {
            return Err(OtError::ShapeMismatch {
                expected: full_shape,
                got: cost.shape(),
            });
        }
        let rows = mu.support();
        let cols = nu.support();
        let c = cost.view();
        let reduced = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
            c[[rows[i], cols[j]]]
        });
        Ok(Self {
            mu: rows.iter().map(|&i| mu.as_slice()[i]).collect(),
            nu: cols.iter().map(|&j| nu.as_slice()[j]).collect(),
            rows,
            cols,
            cost: reduced,
            full_shape,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn is_full(&self) -> bool {
        self.shape() == self.full_shape
    }

    /// Reinserts zero rows and columns.
    pub fn expand(&self, small: Array2<f64>) -> TransportPlan {
        if self.is_full() {
            return TransportPlan::from_array_unchecked(small);
        }
        let mut full = Array2::zeros(self.full_shape);
        for (i, &fi) in self.rows.iter().enumerate() {
            for (j, &fj) in self.cols.iter().enumerate() {
                full[[fi, fj]] = small[[i, j]];
            }
        }
        TransportPlan::from_array_unchecked(full)
    }
}
