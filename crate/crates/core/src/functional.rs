//! Functionals on plans: entropy, Bregman divergence, transport cost,
//! marginal violation, and rounding onto the transport polytope.

use ndarray::Zip;

use crate::error::{OtError, Result};
use crate::matrix::{CostMatrix, TransportPlan};
use crate::measure::Histogram;

/// Negative Shannon entropy `h(Γ) = Σ Γ_ij ln Γ_ij`, with `0 ln 0 = 0`.
pub fn entropy(plan: &TransportPlan) -> f64 {
    plan.view()
        .iter()
        .filter(|&&g| g > 0.0)
        .map(|&g| g * g.ln())
        .sum()
}

/// Generalized KL divergence `Σ x ln(x/y) − Σ x + Σ y`, taken entrywise.
pub fn bregman_div(plan: &TransportPlan, reference: &TransportPlan) -> Result<f64> {
    check_shape(reference.shape(), plan.shape())?;
    let (_, n) = plan.shape();
    let mut total = 0.0;
    for (k, (&x, &y)) in plan.view().iter().zip(reference.view().iter()).enumerate() {
        if x > 0.0 {
            if y == 0.0 {
                return Err(OtError::UnsupportedReference {
                    row: k / n,
                    col: k % n,
                });
            }
            total += x * (x.ln() - y.ln()) - x + y;
        } else {
            total += y;
        }
    }
    Ok(total)
}

/// Frobenius product `⟨C, Γ⟩`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    check_shape(cost.shape(), plan.shape())?;
    Ok(Zip::from(plan.view())
        .and(cost.view())
        .fold(0.0, |acc, &g, &c| acc + g * c))
}

/// `‖Γ1 − μ‖₁ + ‖Γᵀ1 − ν‖₁`.
pub fn marginal_violation(plan: &TransportPlan, mu: &Histogram, nu: &Histogram) -> Result<f64> {
    check_shape((mu.len(), nu.len()), plan.shape())?;
    Ok(marginal_violation_unchecked(plan, mu.as_slice(), nu.as_slice()))
}

pub(crate) fn marginal_violation_unchecked(plan: &TransportPlan, mu: &[f64], nu: &[f64]) -> f64 {
    let rows: f64 = plan
        .row_sums()
        .iter()
        .zip(mu)
        .map(|(r, m)| (r - m).abs())
        .sum();
    let cols: f64 = plan
        .col_sums()
        .iter()
        .zip(nu)
        .map(|(c, n)| (c - n).abs())
        .sum();
    rows + cols
}

/// Violation below which a plan is treated as exactly feasible.
pub const FEASIBLE_TOL: f64 = 1e-12;

/// Projects an approximately feasible plan onto `Σ(μ, ν)`.
///
/// Rows exceeding `μ` are scaled down, then columns exceeding `ν`, and the
/// missing mass is restored by the rank-one correction
/// `err_r err_cᵀ / ‖err_r‖₁`. The cost moves by at most
/// `max(C) · marginal_violation(Γ)`. Plans that are already feasible are
/// returned unchanged.
pub fn round_to_feasible(
    plan: &TransportPlan,
    mu: &Histogram,
    nu: &Histogram,
) -> Result<TransportPlan> {
    check_shape((mu.len(), nu.len()), plan.shape())?;
    round_slices(plan, mu.as_slice(), nu.as_slice())
}

pub(crate) fn round_slices(plan: &TransportPlan, mu: &[f64], nu: &[f64]) -> Result<TransportPlan> {
    let total = plan.total_mass();
    if total <= 0.0 {
        return Err(OtError::ZeroTotalMass { total });
    }
    if marginal_violation_unchecked(plan, mu, nu) <= FEASIBLE_TOL {
        return Ok(plan.clone());
    }
    let mut x = plan.view().to_owned();

    let rows = x.sum_axis(ndarray::Axis(1));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        if rows[i] > mu[i] {
            let s = mu[i] / rows[i];
            row.mapv_inplace(|g| g * s);
        }
    }
    let cols = x.sum_axis(ndarray::Axis(0));
    for (j, mut col) in x.columns_mut().into_iter().enumerate() {
        if cols[j] > nu[j] {
            let s = nu[j] / cols[j];
            col.mapv_inplace(|g| g * s);
        }
    }

    let err_r: Vec<f64> = x
        .sum_axis(ndarray::Axis(1))
        .iter()
        .zip(mu)
        .map(|(r, m)| (m - r).max(0.0))
        .collect();
    let err_c: Vec<f64> = x
        .sum_axis(ndarray::Axis(0))
        .iter()
        .zip(nu)
        .map(|(c, n)| (n - c).max(0.0))
        .collect();
    let missing: f64 = err_r.iter().sum();
    if missing > 0.0 {
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let ri = err_r[i] / missing;
            if ri == 0.0 {
                continue;
            }
            for (g, &cj) in row.iter_mut().zip(&err_c) {
                *g += ri * cj;
            }
        }
    }
    Ok(TransportPlan::from_array_unchecked(x))
}

fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(OtError::ShapeMismatch { expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn plan(rows: &[Vec<f64>]) -> TransportPlan {
        TransportPlan::from_rows(rows).unwrap()
    }

    fn hist(w: &[f64]) -> Histogram {
        Histogram::from_weights(w).unwrap()
    }

    #[test]
    fn entropy_closed_forms() {
        assert_eq!(entropy(&plan(&[vec![1.0]])), 0.0);
        let uniform = plan(&[vec![0.25, 0.25], vec![0.25, 0.25]]);
        assert_abs_diff_eq!(entropy(&uniform), -(4.0f64).ln(), epsilon = 1e-15);
        let diag = plan(&[vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_abs_diff_eq!(entropy(&diag), -(2.0f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn bregman_closed_forms() {
        let g = plan(&[vec![0.6, 0.4]]);
        assert_eq!(bregman_div(&g, &g).unwrap(), 0.0);

        let e = std::f64::consts::E;
        let d = bregman_div(&plan(&[vec![1.0]]), &plan(&[vec![e]])).unwrap();
        assert_abs_diff_eq!(d, e - 2.0, epsilon = 1e-15);

        // Scalar evaluation: 0.6 ln(0.6/0.5) + 0.4 ln(0.4/0.5), the linear terms cancel.
        let expected = 0.6 * (1.2f64).ln() + 0.4 * (0.8f64).ln();
        let d = bregman_div(&g, &plan(&[vec![0.5, 0.5]])).unwrap();
        assert_abs_diff_eq!(d, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.020136, epsilon = 1e-6);
    }

    #[test]
    fn bregman_unsupported_reference() {
        let err = bregman_div(&plan(&[vec![0.5, 0.5]]), &plan(&[vec![1.0, 0.0]])).unwrap_err();
        assert_eq!(err, OtError::UnsupportedReference { row: 0, col: 1 });
        // zeros in the plan are fine
        assert!(bregman_div(&plan(&[vec![1.0, 0.0]]), &plan(&[vec![0.5, 0.5]])).is_ok());
    }

    #[test]
    fn transport_cost_examples() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(
            transport_cost(&plan(&[vec![1.0]]), &CostMatrix::from_rows(&[vec![9.0]]).unwrap())
                .unwrap(),
            9.0
        );
        assert_eq!(transport_cost(&plan(&[vec![0.5, 0.0], vec![0.0, 0.5]]), &c).unwrap(), 0.0);
        assert_eq!(transport_cost(&plan(&[vec![0.25, 0.25], vec![0.25, 0.25]]), &c).unwrap(), 0.5);
        assert!(matches!(
            transport_cost(&plan(&[vec![1.0]]), &c),
            Err(OtError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn marginal_violation_examples() {
        let half = hist(&[0.5, 0.5]);
        let diag = plan(&[vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(marginal_violation(&diag, &half, &half).unwrap(), 0.0);
        let v = marginal_violation(&diag, &hist(&[0.6, 0.4]), &half).unwrap();
        assert_abs_diff_eq!(v, 0.2, epsilon = 1e-15);
        let zeros = plan(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(marginal_violation(&zeros, &half, &half).unwrap(), 2.0);
        assert!(marginal_violation(&diag, &hist(&[1.0]), &half).is_err());
    }

    #[test]
    fn rounding_fixed_point_and_scaling() {
        let half = hist(&[0.5, 0.5]);
        let diag = plan(&[vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(round_to_feasible(&diag, &half, &half).unwrap(), diag);

        let heavy = plan(&[vec![0.6, 0.0], vec![0.0, 0.6]]);
        let rounded = round_to_feasible(&heavy, &half, &half).unwrap();
        let diff = &rounded.into_inner() - &array![[0.5, 0.0], [0.0, 0.5]];
        assert!(diff.iter().all(|d| d.abs() <= 1e-15));
    }

    #[test]
    fn rounding_zero_plan() {
        let half = hist(&[0.5, 0.5]);
        let zeros = plan(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            round_to_feasible(&zeros, &half, &half),
            Err(OtError::ZeroTotalMass { .. })
        ));
    }

    #[test]
    fn rounding_light_plan_spreads_missing_mass() {
        let mu = hist(&[0.5, 0.5]);
        let nu = hist(&[0.25, 0.75]);
        let light = plan(&[vec![0.2, 0.2], vec![0.0, 0.4]]);
        let rounded = round_to_feasible(&light, &mu, &nu).unwrap();
        assert!(marginal_violation(&rounded, &mu, &nu).unwrap() <= FEASIBLE_TOL);
        assert!(rounded.view().iter().all(|&g| g >= 0.0));
    }
}
