#![allow(dead_code)]

use ndarray::Array2;
use ot_core::{BasisState, CostMatrix, Histogram, TransportPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn hist(w: &[f64]) -> Histogram {
    Histogram::from_weights(w).unwrap()
}

/// Strictly positive weights.
pub fn random_hist(rng: &mut impl Rng, n: usize) -> Histogram {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    hist(&w)
}

/// Weights with roughly a third of the bins empty (never all of them).
pub fn random_sparse_hist(rng: &mut impl Rng, n: usize) -> Histogram {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.33) { 0.0 } else { rng.random_range(0.05..1.0) })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    hist(&w)
}

pub fn random_cost(rng: &mut impl Rng, m: usize, n: usize) -> CostMatrix {
    CostMatrix::new(Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..1.0))).unwrap()
}

/// Small integer costs: many ties, many degenerate optima.
pub fn random_integer_cost(rng: &mut impl Rng, m: usize, n: usize) -> CostMatrix {
    CostMatrix::new(Array2::from_shape_fn((m, n), |_| rng.random_range(0..4) as f64)).unwrap()
}

pub fn uniform(n: usize) -> Histogram {
    Histogram::uniform(n).unwrap()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn plan_diff(a: &TransportPlan, b: &TransportPlan) -> f64 {
    max_abs_diff(&a.view().to_owned(), &b.view().to_owned())
}

/// Positive plan with the given marginals, by plain matrix scaling of a
/// random positive matrix. Independent of the library's solvers.
pub fn random_positive_feasible(rng: &mut impl Rng, mu: &Histogram, nu: &Histogram) -> TransportPlan {
    let (m, n) = (mu.len(), nu.len());
    let mut p = Array2::from_shape_fn((m, n), |_| rng.random_range(0.1..1.0));
    for _ in 0..5000 {
        for i in 0..m {
            let s: f64 = p.row(i).sum();
            p.row_mut(i).mapv_inplace(|v| v * mu.as_slice()[i] / s);
        }
        for j in 0..n {
            let s: f64 = p.column(j).sum();
            p.column_mut(j).mapv_inplace(|v| v * nu.as_slice()[j] / s);
        }
    }
    TransportPlan::new(p).unwrap()
}

/// A nondegenerate basic solution whose off-basis reduced costs all exceed
/// `margin` is the unique optimum, and stays optimal under small perturbations.
pub fn unique_optimum(basis: &BasisState, c: &CostMatrix, plan: &TransportPlan, margin: f64) -> bool {
    let (m, n) = c.shape();
    if plan.count_above(1e-9) != m + n - 1 {
        return false;
    }
    (0..m).all(|i| (0..n).all(|j| basis.cells.contains(&(i, j)) || basis.reduced_cost(c, i, j) > margin))
}
