//! Dense cost matrices and transport plans.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{OtError, Result};
use crate::measure::PointCloud;

/// `m × n` matrix of nonnegative finite ground costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        for (index, &c) in entries.iter().enumerate() {
            if !c.is_finite() {
                return Err(OtError::NonFinite { index });
            }
            if c < 0.0 {
                return Err(OtError::InvalidParameter {
                    name: "cost",
                    reason: format!("entry {index} is negative ({c})"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every entry by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.entries.mapv(|c| c * factor))
    }
}

/// Nonnegative coupling matrix.
///
/// Marginal feasibility is a property checked by
/// [`marginal_violation`](crate::functional::marginal_violation), not a
/// construction invariant: solver iterates are only approximately feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
}

impl TransportPlan {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        for (index, &g) in entries.iter().enumerate() {
            if !g.is_finite() {
                return Err(OtError::NonFinite { index });
            }
            if g < 0.0 {
                return Err(OtError::NegativeMass { index, value: g });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    /// Outer product `μ νᵀ`, the independent coupling.
    pub fn outer(mu: &[f64], nu: &[f64]) -> Self {
        let mut entries = Array2::zeros((mu.len(), nu.len()));
        for (i, &a) in mu.iter().enumerate() {
            for (j, &b) in nu.iter().enumerate() {
                entries[[i, j]] = a * b;
            }
        }
        Self { entries }
    }

    /// Solvers build plans from values they already know to be valid.
    pub(crate) fn from_array_unchecked(entries: Array2<f64>) -> Self {
        debug_assert!(entries.iter().all(|g| g.is_finite() && *g >= 0.0));
        Self { entries }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.entries.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.entries.sum_axis(Axis(0))
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.sum()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Number of entries strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.entries.iter().filter(|&&g| g > threshold).count()
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(rows.len() * n);
    for row in rows {
        if row.len() != n {
            return Err(OtError::ShapeMismatch {
                expected: (rows.len(), n),
                got: (rows.len(), row.len()),
            });
        }
        flat.extend_from_slice(row);
    }
    Ok(Array2::from_shape_vec((rows.len(), n), flat).expect("row lengths were checked"))
}

/// Pairwise ground cost `‖x_i − y_j‖₂^p`.
pub fn cost_matrix(x: &PointCloud, y: &PointCloud, p: f64) -> Result<CostMatrix> {
    if x.dim() != y.dim() {
        return Err(OtError::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(OtError::InvalidParameter {
            name: "p",
            reason: format!("exponent must be positive and finite (got {p})"),
        });
    }
    let (xs, ys) = (x.points(), y.points());
    let mut entries = Array2::zeros((x.len(), y.len()));
    for (i, xi) in xs.axis_iter(Axis(0)).enumerate() {
        for (j, yj) in ys.axis_iter(Axis(0)).enumerate() {
            let sq: f64 = xi.iter().zip(yj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            entries[[i, j]] = if p == 2.0 { sq } else { sq.sqrt().powf(p) };
        }
    }
    CostMatrix::new(entries)
}
