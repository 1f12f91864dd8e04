mod common;

use ndarray::Array2;
use ot_core::{
    brute_force_ot, check_optimality, exact_ot, exact_ot_with_basis, ipot, marginal_violation,
    sinkhorn_log, transport_cost, CostMatrix, Histogram, IpotConfig, SinkhornConfig,
};
use proptest::prelude::*;

fn small_shape() -> impl Strategy<Value = (usize, usize)> {
    (1..5usize, 1..5usize)
}

fn permute_rows(a: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(a.dim(), |(i, j)| a[[perm[i], j]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn agrees_with_vertex_enumeration((m, n) in small_shape(), seed in any::<u64>(), integer in any::<bool>(), sparse in any::<bool>()) {
        let mut rng = common::rng(seed);
        let (mu, nu) = if sparse {
            (common::random_sparse_hist(&mut rng, m), common::random_sparse_hist(&mut rng, n))
        } else {
            (common::random_hist(&mut rng, m), common::random_hist(&mut rng, n))
        };
        let c = if integer {
            common::random_integer_cost(&mut rng, m, n)
        } else {
            common::random_cost(&mut rng, m, n)
        };
        let brute = brute_force_ot(&mu, &nu, &c).unwrap();
        let sol = exact_ot_with_basis(&mu, &nu, &c).unwrap();
        prop_assert!((sol.report.distance - brute).abs() <= 1e-12, "{} vs {}", sol.report.distance, brute);
        prop_assert!(marginal_violation(&sol.report.plan, &mu, &nu).unwrap() <= 1e-12);
        prop_assert!(sol.basis.is_spanning_tree(m, n));
        prop_assert!(sol.basis.min_reduced_cost(&c) >= -1e-9);
        for &(i, j) in &sol.basis.cells {
            prop_assert!(sol.basis.reduced_cost(&c, i, j).abs() <= 1e-12);
        }
        prop_assert!(check_optimality(&sol.report.plan, &c, &mu, &nu, 1e-9).unwrap());
    }

    #[test]
    fn vertex_property_and_minimality(seed in any::<u64>(), m in 2..15usize, n in 2..15usize) {
        let mut rng = common::rng(seed);
        let mu = common::random_sparse_hist(&mut rng, m);
        let nu = common::random_hist(&mut rng, n);
        let c = common::random_cost(&mut rng, m, n);
        let r = exact_ot(&mu, &nu, &c).unwrap();
        prop_assert!(r.plan.count_above(1e-12) <= m + n - 1);
        prop_assert!(r.converged);
        let other = sinkhorn_log(&mu, &nu, &c, &SinkhornConfig::with_epsilon(0.05)).unwrap();
        prop_assert!(r.distance <= transport_cost(&other.plan, &c).unwrap() + 1e-12);
    }

    #[test]
    fn row_permutation_equivariance(seed in any::<u64>(), m in 2..9usize, n in 2..9usize) {
        let mut rng = common::rng(seed);
        let mu = common::random_hist(&mut rng, m);
        let nu = common::random_hist(&mut rng, n);
        let c = common::random_cost(&mut rng, m, n);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % m);
        let mu_p = Histogram::from_weights(&perm.iter().map(|&i| mu.as_slice()[i]).collect::<Vec<_>>()).unwrap();
        let c_p = CostMatrix::new(permute_rows(&c.view().to_owned(), &perm)).unwrap();
        let r = exact_ot(&mu, &nu, &c).unwrap();
        let rp = exact_ot(&mu_p, &nu, &c_p).unwrap();
        prop_assert!((r.distance - rp.distance).abs() <= 1e-12);
        // continuous random costs: the optimum is unique almost surely
        let moved = permute_rows(&r.plan.view().to_owned(), &perm);
        prop_assert!(common::max_abs_diff(&moved, &rp.plan.view().to_owned()) <= 1e-12);
    }

    #[test]
    fn positive_scaling_covariance(seed in any::<u64>(), alpha in 0.01..100.0f64) {
        let mut rng = common::rng(seed);
        let (m, n) = (7, 6);
        let mu = common::random_hist(&mut rng, m);
        let nu = common::random_hist(&mut rng, n);
        let c = common::random_cost(&mut rng, m, n);
        let r = exact_ot(&mu, &nu, &c).unwrap();
        let rs = exact_ot(&mu, &nu, &c.scaled(alpha).unwrap()).unwrap();
        prop_assert!((rs.distance - alpha * r.distance).abs() <= 1e-12 * alpha.max(1.0));
        let support = |p: &ot_core::TransportPlan| -> Vec<bool> { p.view().iter().map(|&v| v > 1e-12).collect() };
        prop_assert_eq!(support(&r.plan), support(&rs.plan));
    }
}

#[test]
fn fifty_seeded_small_instances() {
    for seed in 0..50u64 {
        let mut rng = common::rng(seed);
        let m = 1 + (seed as usize % 4);
        let n = 1 + (seed as usize / 4 % 4);
        let mu = common::random_hist(&mut rng, m);
        let nu = common::random_hist(&mut rng, n);
        let c = common::random_cost(&mut rng, m, n);
        let exact = exact_ot(&mu, &nu, &c).unwrap().distance;
        let brute = brute_force_ot(&mu, &nu, &c).unwrap();
        assert!((exact - brute).abs() <= 1e-12, "seed {seed}");
    }
}

#[test]
fn certifies_a_converged_ipot_plan() {
    let mut rng = common::rng(5);
    let u = common::uniform(5);
    let c = common::random_cost(&mut rng, 5, 5);
    let r = ipot(&u, &u, &c, &IpotConfig::default()).unwrap();
    assert!(r.converged);
    assert!(check_optimality(&r.plan, &c, &u, &u, 1e-5).unwrap());
    let uniform_plan = ot_core::TransportPlan::outer(u.as_slice(), u.as_slice());
    assert!(!check_optimality(&uniform_plan, &c, &u, &u, 1e-5).unwrap());
}

#[test]
fn larger_instance_is_certified() {
    let mut rng = common::rng(99);
    let (m, n) = (150, 220);
    let mu = common::random_sparse_hist(&mut rng, m);
    let nu = common::random_hist(&mut rng, n);
    let c = common::random_cost(&mut rng, m, n);
    let sol = exact_ot_with_basis(&mu, &nu, &c).unwrap();
    assert!(sol.basis.is_spanning_tree(m, n));
    assert!(sol.basis.min_reduced_cost(&c) >= -1e-9);
    assert!(sol.report.plan.count_above(1e-12) <= m + n - 1);
    assert!(check_optimality(&sol.report.plan, &c, &mu, &nu, 1e-9).unwrap());
}

#[test]
fn integer_grid_costs_with_ties() {
    // squared distances on a line: massive degeneracy
    let n = 40;
    let c = CostMatrix::new(Array2::from_shape_fn((n, n), |(i, j)| ((i as f64) - (j as f64)).powi(2))).unwrap();
    let mut rng = common::rng(1);
    for _ in 0..10 {
        let mu = common::random_sparse_hist(&mut rng, n);
        let nu = common::random_sparse_hist(&mut rng, n);
        let sol = exact_ot_with_basis(&mu, &nu, &c).unwrap();
        assert!(sol.basis.min_reduced_cost(&c) >= -1e-9);
        assert!(check_optimality(&sol.report.plan, &c, &mu, &nu, 1e-9).unwrap());
        // monotone rearrangement is optimal for a convex cost on a line
        let monotone = monotone_cost(mu.as_slice(), nu.as_slice());
        assert!((sol.report.distance - monotone).abs() <= 1e-9);
    }
}

/// Cost of the north-west-corner (quantile) coupling on an ordered line.
fn monotone_cost(mu: &[f64], nu: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut a, mut b) = (mu[0], nu[0]);
    let mut total = 0.0;
    while i < mu.len() && j < nu.len() {
        let f = a.min(b);
        total += f * ((i as f64) - (j as f64)).powi(2);
        a -= f;
        b -= f;
        if a <= 1e-15 {
            i += 1;
            a = mu.get(i).copied().unwrap_or(0.0);
        }
        if b <= 1e-15 {
            j += 1;
            b = nu.get(j).copied().unwrap_or(0.0);
        }
    }
    total
}
