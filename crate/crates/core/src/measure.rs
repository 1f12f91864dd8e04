//! Discrete measures: histograms on a finite support and weighted point clouds.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{OtError, Result};

/// Absolute tolerance on the unit-sum invariant at construction.
pub const MASS_TOL: f64 = 1e-12;

/// Nonnegative probability vector on a finite support.
///
/// Zero bins are allowed. Solvers drop them internally and reinsert zero
/// rows or columns in the plans they return.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    weights: Array1<f64>,
}

impl Histogram {
    /// Normalizes `raw` to unit mass.
    ///
    /// Input that already sums to one within [`MASS_TOL`] is kept bit-for-bit,
    /// which makes normalization idempotent.
    pub fn from_weights(raw: &[f64]) -> Result<Self> {
        let mut total = 0.0;
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(OtError::NonFinite { index });
            }
            if value < 0.0 {
                return Err(OtError::NegativeMass { index, value });
            }
            total += value;
        }
        if total <= 0.0 {
            return Err(OtError::ZeroTotalMass { total });
        }
        let weights = if (total - 1.0).abs() <= MASS_TOL {
            Array1::from(raw.to_vec())
        } else {
            raw.iter().map(|w| w / total).collect()
        };
        Ok(Self { weights })
    }

    /// Uniform histogram `1/n` on `n` bins.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OtError::ZeroTotalMass { total: 0.0 });
        }
        Ok(Self {
            weights: Array1::from_elem(n, 1.0 / n as f64),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice().expect("histogram storage is contiguous")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.weights.to_vec()
    }

    /// True when some bin carries no mass.
    pub fn has_zero_bins(&self) -> bool {
        self.weights.iter().any(|&w| w == 0.0)
    }

    /// Indices of bins with positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Shannon entropy `-Σ w ln w` with `0 ln 0 = 0`.
    pub fn shannon_entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| w * w.ln())
            .sum::<f64>()
    }
}

/// `n` points in `R^d` with a probability weight per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>,
    weights: Histogram,
}

impl PointCloud {
    /// Point cloud with uniform weights. Rows of `points` are the points.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        let weights = Histogram::uniform(n)?;
        Self::with_weights(points, weights)
    }

    pub fn with_weights(points: Array2<f64>, weights: Histogram) -> Result<Self> {
        if weights.len() != points.nrows() {
            return Err(OtError::DimensionMismatch {
                expected: points.nrows(),
                got: weights.len(),
            });
        }
        if let Some(index) = points.iter().position(|v| !v.is_finite()) {
            return Err(OtError::NonFinite { index });
        }
        Ok(Self { points, weights })
    }

    /// Builds a cloud from a list of equal-length coordinate vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(OtError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let points = Array2::from_shape_vec((rows.len(), d), flat)
            .expect("row lengths were checked");
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn weights(&self) -> &Histogram {
        &self.weights
    }

    /// Same weights, new positions.
    pub fn with_points(&self, points: Array2<f64>) -> Result<Self> {
        if points.ncols() != self.dim() {
            return Err(OtError::DimensionMismatch {
                expected: self.dim(),
                got: points.ncols(),
            });
        }
        Self::with_weights(points, self.weights.clone())
    }

    /// Weighted mean of the points.
    pub fn mean(&self) -> Array1<f64> {
        let w = self.weights.weights();
        self.points
            .axis_iter(Axis(0))
            .zip(w.iter())
            .fold(Array1::zeros(self.dim()), |acc, (p, &wi)| acc + &(&p * wi))
    }

    /// Weighted total variance `Σ w_i ‖x_i − x̄‖²`.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let w = self.weights.weights();
        self.points
            .axis_iter(Axis(0))
            .zip(w.iter())
            .map(|(p, &wi)| wi * (&p - &mean).mapv(|v| v * v).sum())
            .sum()
    }
}
