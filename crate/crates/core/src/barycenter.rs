//! Wasserstein barycenters of `K` histograms on a shared support.
//!
//! [`ipot_wb`] is the proximal-point barycenter: each outer step replaces the
//! kernel of measure `k` by `H_k = G ⊙ Γ_k` and runs `L` Bregman projection
//! sweeps. [`ibp_barycenter`] is the entropic baseline with the kernel held
//! at `G` throughout.
//!
//! One sweep is `b_k = p_k/(H_kᵀ a_k)`, `q = Π_k (a_k ⊙ H_k b_k)^{λ_k}`,
//! `a_k = q/(H_k b_k)`, starting from `a_k = 1`. Starting there keeps
//! `Π_k a_k^{λ_k} = 1` for all sweeps, the dual condition of the projection
//! onto a common row marginal. Computing `a_k` from a preset `q` first would
//! break it, and with point-mass inputs `q` would then never move after the
//! first sweep. The scalings are warm-started across outer steps.
//!
//! Row marginals of every `Γ_k` are tied to `q` and column marginals to `p_k`.
//! The geometric-mean update of `q` does not conserve mass exactly, so `q`
//! is renormalized whenever it is reported.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{OtError, Result};
use crate::kernel::{gemv, gemv_t};
use crate::matrix::{CostMatrix, TransportPlan};
use crate::measure::{Histogram, MASS_TOL};
use crate::sinkhorn::{at_least_one, frobenius, positive};
use crate::trace::Stopwatch;

/// `K` histograms on a common `n`-point support with barycentric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterProblem {
    inputs: Vec<Histogram>,
    weights: Vec<f64>,
    cost: CostMatrix,
}

impl BarycenterProblem {
    pub fn new(inputs: Vec<Histogram>, weights: Vec<f64>, cost: CostMatrix) -> Result<Self> {
        if inputs.is_empty() {
            return Err(OtError::InvalidParameter {
                name: "inputs",
                reason: "at least one histogram is required".into(),
            });
        }
        if weights.len() != inputs.len() {
            return Err(OtError::DimensionMismatch {
                expected: inputs.len(),
                got: weights.len(),
            });
        }
        let n = inputs[0].len();
        if cost.shape() != (n, n) {
            return Err(OtError::ShapeMismatch {
                expected: (n, n),
                got: cost.shape(),
            });
        }
        if let Some(p) = inputs.iter().find(|p| p.len() != n) {
            return Err(OtError::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(OtError::NonFinite { index });
            }
            if w < 0.0 {
                return Err(OtError::NegativeMass { index, value: w });
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(OtError::InvalidParameter {
                name: "weights",
                reason: format!("must sum to 1 (got {total})"),
            });
        }
        Ok(Self {
            inputs,
            weights,
            cost,
        })
    }

    /// Uniform weights `1/K`.
    pub fn uniform(inputs: Vec<Histogram>, cost: CostMatrix) -> Result<Self> {
        let k = inputs.len().max(1);
        Self::new(inputs, vec![1.0 / k as f64; k], cost)
    }

    pub fn inputs(&self) -> &[Histogram] {
        &self.inputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn support_size(&self) -> usize {
        self.cost.shape().0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycenterConfig {
    /// `β` for the proximal method, `ε` for IBP; cost units.
    pub reg: f64,
    pub inner_iters: usize,
    pub max_outer_iters: usize,
    /// Bound on the L1 change of the normalized `q` between iterations.
    pub tolerance: f64,
    pub check_every: usize,
    pub parallel: bool,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            reg: 1.0,
            inner_iters: 1,
            max_outer_iters: 1000,
            tolerance: 1e-10,
            check_every: 1,
            parallel: false,
        }
    }
}

impl BarycenterConfig {
    pub fn with_reg(reg: f64) -> Self {
        Self {
            reg,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        positive("reg", self.reg)?;
        positive("tolerance", self.tolerance)?;
        at_least_one("inner_iters", self.inner_iters)?;
        at_least_one("max_outer_iters", self.max_outer_iters)?;
        at_least_one("check_every", self.check_every)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycenterRecord {
    pub iter: usize,
    /// `Σ_k λ_k ⟨C, Γ_k⟩`.
    pub objective: f64,
    /// L1 change of the normalized barycenter over the last iteration.
    pub q_change: f64,
    pub wall_time_s: f64,
    /// `β / t` for the proximal method.
    pub effective_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterResult {
    pub q: Histogram,
    /// One plan per input; empty for IBP.
    pub plans: Vec<TransportPlan>,
    pub trace: Vec<BarycenterRecord>,
    pub converged: bool,
    pub iterations: usize,
}

/// Proximal-point Wasserstein barycenter.
pub fn ipot_wb(problem: &BarycenterProblem, cfg: &BarycenterConfig) -> Result<BarycenterResult> {
    solve(problem, cfg, Variant::Proximal)
}

/// Entropic barycenter by iterative Bregman projections with `G = exp(−C/ε)`.
pub fn ibp_barycenter(
    problem: &BarycenterProblem,
    cfg: &BarycenterConfig,
) -> Result<BarycenterResult> {
    solve(problem, cfg, Variant::Entropic)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Variant {
    Proximal,
    Entropic,
}

struct Measure {
    /// `H_k`; for IBP this stays equal to the shared kernel and is not stored.
    kernel: Option<Array2<f64>>,
    /// `Γ_k` (proximal only).
    plan: Option<Array2<f64>>,
    a: Vec<f64>,
    b: Vec<f64>,
    hb: Vec<f64>,
    hta: Vec<f64>,
}

fn solve(
    problem: &BarycenterProblem,
    cfg: &BarycenterConfig,
    variant: Variant,
) -> Result<BarycenterResult> {
    cfg.validate()?;
    let n = problem.support_size();
    let gibbs = problem.cost.view().mapv(|c| (-c / cfg.reg).exp());
    let mut clock = Stopwatch::start();
    let mut measures: Vec<Measure> = problem
        .inputs
        .iter()
        .map(|_| Measure {
            kernel: (variant == Variant::Proximal).then(|| Array2::zeros((n, n))),
            plan: (variant == Variant::Proximal).then(|| Array2::ones((n, n))),
            a: vec![1.0; n],
            b: vec![1.0 / n as f64; n],
            hb: vec![0.0; n],
            hta: vec![0.0; n],
        })
        .collect();
    let mut q = vec![1.0 / n as f64; n];
    let mut q_prev = q.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let fail = |iteration: usize| match variant {
        Variant::Proximal => OtError::NumericalFailure { iteration },
        Variant::Entropic => OtError::NumericalUnderflow { iteration },
    };

    for t in 1..=cfg.max_outer_iters {
        iters = t;
        if variant == Variant::Proximal {
            for m in &mut measures {
                let h = m.kernel.as_mut().expect("proximal kernel");
                let plan = m.plan.as_ref().expect("proximal plan");
                ndarray::Zip::from(h)
                    .and(&gibbs)
                    .and(plan)
                    .for_each(|h, &g, &p| *h = g * p);
            }
        }
        for _ in 0..cfg.inner_iters {
            let update = |(m, p): (&mut Measure, &Histogram)| -> bool {
                let h = m.kernel.as_ref().unwrap_or(&gibbs);
                gemv_t(h.view(), &m.a, &mut m.hta, false);
                if !ratio(p.as_slice(), &m.hta, &mut m.b) {
                    return false;
                }
                gemv(h.view(), &m.b, &mut m.hb, false);
                true
            };
            let ok = if cfg.parallel {
                measures
                    .par_iter_mut()
                    .zip(problem.inputs.par_iter())
                    .map(update)
                    .collect::<Vec<_>>()
                    .into_iter()
                    .all(|x| x)
            } else {
                measures
                    .iter_mut()
                    .zip(problem.inputs.iter())
                    .map(update)
                    .collect::<Vec<_>>()
                    .into_iter()
                    .all(|x| x)
            };
            if !ok {
                return Err(fail(t));
            }
            geometric_mean(&measures, &problem.weights, &mut q);
            if q.iter().any(|v| !v.is_finite()) || q.iter().all(|&v| v == 0.0) {
                return Err(fail(t));
            }
            for m in &mut measures {
                if !ratio(&q, &m.hb, &mut m.a) {
                    return Err(fail(t));
                }
            }
        }
        if variant == Variant::Proximal {
            for m in &mut measures {
                let h = m.kernel.as_ref().expect("proximal kernel");
                let plan = m.plan.as_mut().expect("proximal plan");
                for (i, (hrow, mut prow)) in h.rows().into_iter().zip(plan.rows_mut()).enumerate() {
                    let ai = m.a[i];
                    for ((p, &hv), &bj) in prow.iter_mut().zip(hrow.iter()).zip(&m.b) {
                        *p = ai * hv * bj;
                    }
                }
            }
        }

        let change = normalized_change(&q, &q_prev);
        q_prev.copy_from_slice(&q);
        if t % cfg.check_every == 0 || t == cfg.max_outer_iters {
            clock.pause();
            let objective = objective(&measures, problem, &gibbs);
            if !objective.is_finite() {
                return Err(fail(t));
            }
            trace.push(BarycenterRecord {
                iter: t,
                objective,
                q_change: change,
                wall_time_s: clock.seconds(),
                effective_eps: (variant == Variant::Proximal).then(|| cfg.reg / t as f64),
            });
            clock.resume();
            if change <= cfg.tolerance {
                converged = true;
                break;
            }
        }
    }

    let q = Histogram::from_weights(&q)?;
    let plans = match variant {
        Variant::Proximal => measures
            .into_iter()
            .map(|m| TransportPlan::new(m.plan.expect("proximal plan")))
            .collect::<Result<Vec<_>>>()?,
        Variant::Entropic => Vec::new(),
    };
    Ok(BarycenterResult {
        q,
        plans,
        trace,
        converged,
        iterations: iters,
    })
}

/// `out = num / den` with `0/x = 0`; false on a positive numerator over a
/// vanishing denominator.
fn ratio(num: &[f64], den: &[f64], out: &mut [f64]) -> bool {
    for ((o, &x), &d) in out.iter_mut().zip(num).zip(den) {
        if x == 0.0 {
            *o = 0.0;
            continue;
        }
        let v = x / d;
        if !(d > 0.0) || !v.is_finite() {
            return false;
        }
        *o = v;
    }
    true
}

/// `q = Π_k (a_k ⊙ H_k b_k)^{λ_k}`, computed in log space.
fn geometric_mean(measures: &[Measure], weights: &[f64], q: &mut [f64]) {
    for (i, qi) in q.iter_mut().enumerate() {
        let mut log = 0.0;
        for (m, &w) in measures.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let r = m.a[i] * m.hb[i];
            if r <= 0.0 {
                log = f64::NEG_INFINITY;
                break;
            }
            log += w * r.ln();
        }
        *qi = log.exp();
    }
}

fn normalized_change(q: &[f64], prev: &[f64]) -> f64 {
    let s: f64 = q.iter().sum();
    let sp: f64 = prev.iter().sum();
    q.iter().zip(prev).map(|(a, b)| (a / s - b / sp).abs()).sum()
}

fn objective(measures: &[Measure], problem: &BarycenterProblem, gibbs: &Array2<f64>) -> f64 {
    let cost = problem.cost.view();
    measures
        .iter()
        .zip(&problem.weights)
        .map(|(m, &w)| {
            let value = match &m.plan {
                Some(plan) => frobenius(plan.view(), cost),
                None => {
                    let mut total = 0.0;
                    for i in 0..gibbs.nrows() {
                        let mut row = 0.0;
                        for j in 0..gibbs.ncols() {
                            row += gibbs[[i, j]] * cost[[i, j]] * m.b[j];
                        }
                        total += m.a[i] * row;
                    }
                    total
                }
            };
            w * value
        })
        .sum()
}
