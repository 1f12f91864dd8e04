//! Seeded problem instances used by the benchmarks, the CLI and the
//! acceptance suite.

use ndarray::Array2;
use ot_core::{cost_matrix, BarycenterProblem, CostMatrix, Histogram, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unnormalized normal density; `var` is the variance.
fn bump(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / var.sqrt()
}

pub const GRID_POINTS: usize = 100;

/// The two Gaussian-mixture margins on the grid `1..=100` with cost `|x − y|`.
///
/// Densities are evaluated at the grid points and normalized.
pub fn gauss1d() -> (Histogram, Histogram, CostMatrix) {
    let xs: Vec<f64> = (1..=GRID_POINTS).map(|i| i as f64).collect();
    let mu: Vec<f64> = xs.iter().map(|&x| 0.4 * bump(x, 60.0, 8.0) + 0.6 * bump(x, 40.0, 6.0)).collect();
    let nu: Vec<f64> = xs.iter().map(|&x| 0.5 * bump(x, 35.0, 9.0) + 0.5 * bump(x, 70.0, 9.0)).collect();
    let c = Array2::from_shape_fn((GRID_POINTS, GRID_POINTS), |(i, j)| (xs[i] - xs[j]).abs());
    (
        Histogram::from_weights(&mu).expect("positive density"),
        Histogram::from_weights(&nu).expect("positive density"),
        CostMatrix::new(c).expect("finite costs"),
    )
}

/// `n` points uniform in the unit cube of dimension `d`, uniform weights.
pub fn uniform_cloud(rng: &mut impl Rng, n: usize, d: usize) -> PointCloud {
    PointCloud::new(Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0))).expect("finite points")
}

/// Two independent uniform clouds and their squared Euclidean cost.
pub fn uniform_pair(seed: u64, n: usize, d: usize) -> (Histogram, Histogram, CostMatrix) {
    let mut r = rng(seed);
    let x = uniform_cloud(&mut r, n, d);
    let y = uniform_cloud(&mut r, n, d);
    let c = cost_matrix(&x, &y, 2.0).expect("same dimension");
    (x.weights().clone(), y.weights().clone(), c)
}

/// Equal-weight two-mode mixture in the plane, modes at `(±2, ±2)` with
/// standard deviation 0.5.
pub fn two_mode_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    let noise = Normal::new(0.0, 0.5).expect("valid deviation");
    PointCloud::new(Array2::from_shape_fn((n, 2), |(i, _)| {
        let centre = if i % 2 == 0 { -2.0 } else { 2.0 };
        centre + noise.sample(rng)
    }))
    .expect("finite points")
}

/// Squared Euclidean cost between the cells of a `side × side` grid.
pub fn grid_cost(side: usize) -> CostMatrix {
    let n = side * side;
    CostMatrix::new(Array2::from_shape_fn((n, n), |(a, b)| {
        let (ra, ca) = ((a / side) as f64, (a % side) as f64);
        let (rb, cb) = ((b / side) as f64, (b % side) as f64);
        (ra - rb).powi(2) + (ca - cb).powi(2)
    }))
    .expect("finite costs")
}

/// Gaussian blob on a `side × side` grid.
pub fn blob(side: usize, centre: (f64, f64), sigma: f64) -> Histogram {
    let w: Vec<f64> = (0..side * side)
        .map(|k| {
            let (r, c) = ((k / side) as f64, (k % side) as f64);
            (-((r - centre.0).powi(2) + (c - centre.1).powi(2)) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    Histogram::from_weights(&w).expect("positive mass")
}

/// `k` randomly shifted and scaled blobs with uniform barycentric weights.
pub fn shifted_blobs(seed: u64, k: usize, side: usize) -> Result<BarycenterProblem> {
    let mut r = rng(seed);
    let s = side as f64;
    let inputs = (0..k)
        .map(|_| {
            let centre = (r.random_range(0.25 * s..0.75 * s), r.random_range(0.25 * s..0.75 * s));
            blob(side, centre, r.random_range(0.05 * s..0.12 * s))
        })
        .collect();
    Ok(BarycenterProblem::uniform(inputs, grid_cost(side))?)
}

/// Point masses at the two ends of `0..n` on a line with squared cost; the
/// barycenter is the point mass at the middle.
pub fn two_diracs(n: usize) -> Result<BarycenterProblem> {
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    left[0] = 1.0;
    right[n - 1] = 1.0;
    let c = Array2::from_shape_fn((n, n), |(i, j)| (i as f64 - j as f64).powi(2));
    Ok(BarycenterProblem::uniform(
        vec![Histogram::from_weights(&left)?, Histogram::from_weights(&right)?],
        CostMatrix::new(c)?,
    )?)
}

/// A `side × side` test image: smooth gradients plus seeded noise, so every
/// channel populates many bins unevenly.
pub fn test_image(seed: u64, side: usize) -> crate::ppm::PpmImage {
    let mut r = rng(seed);
    let pixels = (0..side * side)
        .map(|k| {
            let (y, x) = ((k / side) as f64 / side as f64, (k % side) as f64 / side as f64);
            let base = [180.0 * x + 30.0, 120.0 * y + 60.0 * x, 200.0 * (1.0 - x * y)];
            base.map(|v: f64| (v + r.random_range(-20.0..20.0)).clamp(0.0, 255.0) as u8)
        })
        .collect();
    crate::ppm::PpmImage::new(side, side, pixels).expect("consistent size")
}
