//! Envelope gradients of the optimal transport loss.
//!
//! At an optimal plan `Γ*`, `∂W/∂C = Γ*`. For a squared Euclidean cost the
//! chain rule gives `∂W/∂y_j = 2 Σ_i Γ*_ij (y_j − x_i)`; no differentiation
//! through solver iterations is needed.

use ndarray::{Array2, Axis};

use crate::error::{OtError, Result};
use crate::exact::exact_ot;
use crate::ipot::{ipot, IpotConfig};
use crate::matrix::{cost_matrix, TransportPlan};
use crate::measure::PointCloud;
use crate::sinkhorn::{at_least_one, positive};

/// `∂W/∂C`, which is the optimal plan itself.
pub fn ot_grad_cost(plan: &TransportPlan) -> Array2<f64> {
    plan.view().to_owned()
}

/// `g_j = 2 Σ_i Γ_ij (y_j − x_i)`, one row per target point.
pub fn ot_grad_support(plan: &TransportPlan, x: &PointCloud, y: &PointCloud) -> Result<Array2<f64>> {
    if plan.shape() != (x.len(), y.len()) {
        return Err(OtError::ShapeMismatch {
            expected: (x.len(), y.len()),
            got: plan.shape(),
        });
    }
    if x.dim() != y.dim() {
        return Err(OtError::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let g = plan.view();
    // Σ_i Γ_ij (y_j − x_i) = (Γᵀ1)_j y_j − (Γᵀ X)_j
    let col_mass = g.sum_axis(Axis(0));
    let pulled = g.t().dot(&x.points());
    let mut grad = y.points().to_owned();
    for ((mut row, &mass), pull) in grad
        .axis_iter_mut(Axis(0))
        .zip(col_mass.iter())
        .zip(pulled.axis_iter(Axis(0)))
    {
        row.zip_mut_with(&pull, |yj, &p| *yj = 2.0 * (mass * *yj - p));
    }
    Ok(grad)
}

/// Which plan feeds the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanSource {
    Ipot(IpotConfig),
    Exact,
}

impl Default for PlanSource {
    fn default() -> Self {
        Self::Ipot(IpotConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: f64,
    pub source: PlanSource,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            lr: 0.1,
            source: PlanSource::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub cloud: PointCloud,
    /// `W(X, Y_t)` before each step, then once more for the returned cloud.
    pub losses: Vec<f64>,
}

/// Gradient descent on the positions of `y0` towards `x` under the squared
/// Euclidean transport loss.
pub fn fit_point_cloud(x: &PointCloud, y0: &PointCloud, cfg: &FitConfig) -> Result<FitResult> {
    positive("lr", cfg.lr)?;
    at_least_one("steps", cfg.steps.max(1))?;
    if x.dim() != y0.dim() {
        return Err(OtError::DimensionMismatch {
            expected: x.dim(),
            got: y0.dim(),
        });
    }
    let mut y = y0.clone();
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let cost = cost_matrix(x, &y, 2.0)?;
        let report = match cfg.source {
            PlanSource::Ipot(ipot_cfg) => ipot(x.weights(), y.weights(), &cost, &ipot_cfg)?,
            PlanSource::Exact => exact_ot(x.weights(), y.weights(), &cost)?,
        };
        losses.push(report.distance);
        if step == cfg.steps {
            break;
        }
        let grad = ot_grad_support(&report.plan, x, &y)?;
        let moved = &y.points() - &(grad * cfg.lr);
        y = y.with_points(moved)?;
    }
    Ok(FitResult { cloud: y, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cloud(rows: &[Vec<f64>]) -> PointCloud {
        PointCloud::from_rows(rows).unwrap()
    }

    #[test]
    fn cost_gradient_is_the_plan() {
        let plan = TransportPlan::new(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let g = ot_grad_cost(&plan);
        assert_eq!(g, array![[0.5, 0.0], [0.0, 0.5]]);
        let one = TransportPlan::new(array![[1.0]]).unwrap();
        assert_eq!(ot_grad_cost(&one), array![[1.0]]);
    }

    #[test]
    fn scalar_support_gradient() {
        let plan = TransportPlan::new(array![[1.0]]).unwrap();
        let g = ot_grad_support(&plan, &cloud(&[vec![0.0]]), &cloud(&[vec![3.0]])).unwrap();
        assert_eq!(g, array![[6.0]]);
    }

    #[test]
    fn matched_clouds_have_zero_gradient() {
        let x = cloud(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![4.0, 0.5]]);
        let plan = TransportPlan::new(Array2::eye(3) / 3.0).unwrap();
        let g = ot_grad_support(&plan, &x, &x).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn support_gradient_checks_shapes() {
        let plan = TransportPlan::new(array![[1.0]]).unwrap();
        let x = cloud(&[vec![0.0]]);
        let y2 = cloud(&[vec![0.0, 1.0]]);
        assert!(matches!(
            ot_grad_support(&plan, &x, &y2),
            Err(OtError::DimensionMismatch { .. })
        ));
        let y = cloud(&[vec![0.0], vec![1.0]]);
        assert!(ot_grad_support(&plan, &x, &y).is_err());
    }

    #[test]
    fn scalar_fit_contracts() {
        let x = cloud(&[vec![0.0]]);
        let y0 = cloud(&[vec![3.0]]);
        let r = fit_point_cloud(
            &x,
            &y0,
            &FitConfig {
                steps: 100,
                lr: 0.1,
                source: PlanSource::default(),
            },
        )
        .unwrap();
        let y = r.cloud.point(0)[0];
        // y ← 0.8 y
        assert!((y - 3.0 * 0.8f64.powi(100)).abs() < 1e-12);
        assert!(y.abs() <= 1e-3);
        assert_eq!(r.losses.len(), 101);
        assert!(r.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fit_from_target_stays_put() {
        let x = cloud(&[vec![0.0], vec![1.0], vec![3.0]]);
        let r = fit_point_cloud(
            &x,
            &x,
            &FitConfig {
                steps: 10,
                lr: 0.1,
                source: PlanSource::Exact,
            },
        )
        .unwrap();
        assert_eq!(r.cloud, x);
    }

    #[test]
    fn fit_rejects_bad_lr() {
        let x = cloud(&[vec![0.0]]);
        let cfg = FitConfig {
            lr: 0.0,
            ..FitConfig::default()
        };
        assert!(fit_point_cloud(&x, &x, &cfg).is_err());
    }
}
