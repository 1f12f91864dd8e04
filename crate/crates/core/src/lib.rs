//! Discrete optimal transport: entropic Sinkhorn, the inexact proximal point
//! method (IPOT), an exact network simplex solver, Wasserstein barycenters
//! and envelope gradients.

pub mod barycenter;
pub mod error;
pub mod exact;
pub mod functional;
pub mod grad;
pub mod ipot;
mod kernel;
pub mod matrix;
pub mod measure;
pub mod rate;
pub mod sinkhorn;
pub mod trace;

pub use barycenter::{
    ibp_barycenter, ipot_wb, BarycenterConfig, BarycenterProblem, BarycenterRecord,
    BarycenterResult,
};
pub use error::{OtError, Result};
pub use exact::{
    brute_force_ot, check_optimality, exact_ot, exact_ot_with_basis, BasisState, ExactSolution,
};
pub use functional::{
    bregman_div, entropy, marginal_violation, round_to_feasible, transport_cost,
};
pub use grad::{fit_point_cloud, ot_grad_cost, ot_grad_support, FitConfig, FitResult, PlanSource};
pub use ipot::{gibbs_kernel, ipot, proximal_step, IpotConfig};
pub use matrix::{cost_matrix, CostMatrix, TransportPlan};
pub use measure::{Histogram, PointCloud};
pub use rate::{estimate_linear_rate, fit_linear_rate, RateFit, RateOptions};
pub use sinkhorn::{sinkhorn, sinkhorn_log, Potentials, ScalingState, SinkhornConfig};
pub use trace::{SolveTrace, SolverReport, Termination, TraceRecord};
