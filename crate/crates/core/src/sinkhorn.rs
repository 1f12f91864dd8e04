//! Entropic OT baselines: Sinkhorn scaling with the Gibbs kernel
//! `G = exp(−C/ε)` and its log-domain stabilized counterpart.
//!
//! Both solvers alternate `a = μ / (G b)` and `b = ν / (Gᵀ a)` from
//! `b = 1/n`, so after every `b`-update the column marginal of
//! `diag(a) G diag(b)` is exact up to rounding. Convergence is declared when
//! the L1 marginal violation, sampled every `check_every` iterations, drops
//! to `tolerance`. The returned plan is rounded onto the transport polytope.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{OtError, Result};
use crate::functional::{marginal_violation_unchecked, round_slices};
use crate::kernel::{gemv, gemv_t, Reduced};
use crate::matrix::{CostMatrix, TransportPlan};
use crate::measure::Histogram;
use crate::trace::{SolveTrace, SolverReport, Stopwatch, Termination, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Regularization strength, in cost units.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Target L1 marginal violation.
    pub tolerance: f64,
    pub check_every: usize,
    /// Row-parallel kernels; results are identical either way.
    pub parallel: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iters: 10_000,
            tolerance: 1e-9,
            check_every: 10,
            parallel: false,
        }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        positive("epsilon", self.epsilon)?;
        positive("tolerance", self.tolerance)?;
        at_least_one("max_iters", self.max_iters)?;
        at_least_one("check_every", self.check_every)
    }
}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(OtError::InvalidParameter {
            name,
            reason: format!("must be positive and finite (got {v})"),
        })
    }
}

pub(crate) fn at_least_one(name: &'static str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(OtError::InvalidParameter {
            name,
            reason: "must be at least 1".into(),
        })
    }
}

/// Diagonal scalings `a`, `b` of a Gibbs kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScalingState {
    /// `a = 1`, `b = 1/n`.
    pub fn initial(m: usize, n: usize) -> Self {
        Self {
            a: vec![1.0; m],
            b: vec![1.0 / n as f64; n],
        }
    }
}

/// Dual potentials `f = ε ln a`, `g = ε ln b` of the log-domain solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// Plain-domain Sinkhorn.
///
/// Fails with [`OtError::NumericalUnderflow`] as soon as a scaled kernel
/// product underflows to zero or a scaling overflows, which is what happens
/// when `ε` is small relative to the costs.
pub fn sinkhorn(
    mu: &Histogram,
    nu: &Histogram,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SolverReport> {
    cfg.validate()?;
    let red = Reduced::new(mu, nu, cost)?;
    let (m, n) = red.shape();
    let eps = cfg.epsilon;
    let mut clock = Stopwatch::start();

    let kernel = red.cost.mapv(|c| (-c / eps).exp());
    let mut state = ScalingState::initial(m, n);
    let mut kb = vec![0.0; m];
    let mut kta = vec![0.0; n];
    let mut kb_fresh = false;
    let mut trace = SolveTrace::new();
    let mut termination = Termination::MaxIters;
    let mut iters = 0;

    for t in 1..=cfg.max_iters {
        iters = t;
        if !kb_fresh {
            gemv(kernel.view(), &state.b, &mut kb, cfg.parallel);
        }
        scale(&red.mu, &kb, &mut state.a).map_err(|_| OtError::NumericalUnderflow { iteration: t })?;
        gemv_t(kernel.view(), &state.a, &mut kta, cfg.parallel);
        scale(&red.nu, &kta, &mut state.b).map_err(|_| OtError::NumericalUnderflow { iteration: t })?;
        kb_fresh = false;

        if t % cfg.check_every == 0 || t == cfg.max_iters {
            gemv(kernel.view(), &state.b, &mut kb, cfg.parallel);
            kb_fresh = true;
            clock.pause();
            let violation = scaled_violation(&state, &kb, &kta, &red.mu, &red.nu);
            let cost_t = scaled_cost(&kernel, &red.cost, &state);
            trace.push(TraceRecord {
                iter: t,
                cost: cost_t,
                marginal_violation: violation,
                wall_time_s: clock.seconds(),
                effective_eps: None,
            });
            clock.resume();
            if violation <= cfg.tolerance {
                termination = Termination::ToleranceMet;
                break;
            }
        }
    }

    let small = scaled_plan(&kernel, &state);
    finish(&red, small, mu, nu, cost, trace, termination, iters, &mut clock, None)
}

/// Log-domain stabilized Sinkhorn.
///
/// Updates `f_i = ε ln μ_i − ε LSE_j((g_j − C_ij)/ε)` and the symmetric
/// `g`-update with per-row and per-column max subtraction, so neither the
/// kernel nor the scalings are ever formed. Same contract as [`sinkhorn`];
/// non-convergence is reported through `converged = false`.
pub fn sinkhorn_log(
    mu: &Histogram,
    nu: &Histogram,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SolverReport> {
    cfg.validate()?;
    let red = Reduced::new(mu, nu, cost)?;
    let (m, n) = red.shape();
    let eps = cfg.epsilon;
    let mut clock = Stopwatch::start();

    let cost_t = red.cost.t().as_standard_layout().into_owned();
    let log_mu: Vec<f64> = red.mu.iter().map(|v| eps * v.ln()).collect();
    let log_nu: Vec<f64> = red.nu.iter().map(|v| eps * v.ln()).collect();
    let mut pot = Potentials {
        f: vec![0.0; m],
        g: vec![eps * (1.0 / n as f64).ln(); n],
    };
    let mut trace = SolveTrace::new();
    let mut termination = Termination::MaxIters;
    let mut iters = 0;

    for t in 1..=cfg.max_iters {
        iters = t;
        soft_min_update(&red.cost, &pot.g, &log_mu, eps, &mut pot.f, cfg.parallel);
        soft_min_update(&cost_t, &pot.f, &log_nu, eps, &mut pot.g, cfg.parallel);
        if pot.f.iter().chain(&pot.g).any(|v| !v.is_finite()) {
            return Err(OtError::NumericalFailure { iteration: t });
        }

        if t % cfg.check_every == 0 || t == cfg.max_iters {
            clock.pause();
            let plan = log_plan(&red.cost, &pot, eps);
            let tp = TransportPlan::from_array_unchecked(plan);
            let violation = marginal_violation_unchecked(&tp, &red.mu, &red.nu);
            let cost_now = frobenius(tp.view(), red.cost.view());
            trace.push(TraceRecord {
                iter: t,
                cost: cost_now,
                marginal_violation: violation,
                wall_time_s: clock.seconds(),
                effective_eps: None,
            });
            clock.resume();
            if violation <= cfg.tolerance {
                termination = Termination::ToleranceMet;
                break;
            }
        }
    }

    let small = log_plan(&red.cost, &pot, eps);
    finish(&red, small, mu, nu, cost, trace, termination, iters, &mut clock, None)
}

/// `out_i = num_i / den_i`; fails on zero or non-finite results.
pub(crate) fn scale(num: &[f64], den: &[f64], out: &mut [f64]) -> std::result::Result<(), ()> {
    for ((o, &x), &d) in out.iter_mut().zip(num).zip(den) {
        let v = x / d;
        if !(d > 0.0) || !v.is_finite() {
            return Err(());
        }
        *o = v;
    }
    Ok(())
}

/// `out_i = lse_i − ε LSE_j((pot_j − C_ij)/ε)` for every row of `cost`.
fn soft_min_update(
    cost: &Array2<f64>,
    pot: &[f64],
    lse: &[f64],
    eps: f64,
    out: &mut [f64],
    parallel: bool,
) {
    let row_update = |i: usize| -> f64 {
        let row = cost.row(i);
        let row = row.as_slice().expect("standard layout");
        let mut max = f64::NEG_INFINITY;
        for (&c, &p) in row.iter().zip(pot) {
            max = max.max(p - c);
        }
        let mut sum = 0.0;
        for (&c, &p) in row.iter().zip(pot) {
            sum += ((p - c - max) / eps).exp();
        }
        lse[i] - max - eps * sum.ln()
    };
    if parallel && out.len() >= 64 {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row_update(i));
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            *o = row_update(i);
        }
    }
}

fn log_plan(cost: &Array2<f64>, pot: &Potentials, eps: f64) -> Array2<f64> {
    Array2::from_shape_fn(cost.dim(), |(i, j)| {
        ((pot.f[i] + pot.g[j] - cost[[i, j]]) / eps).exp()
    })
}

fn scaled_plan(kernel: &Array2<f64>, s: &ScalingState) -> Array2<f64> {
    Array2::from_shape_fn(kernel.dim(), |(i, j)| s.a[i] * kernel[[i, j]] * s.b[j])
}

fn scaled_violation(s: &ScalingState, kb: &[f64], kta: &[f64], mu: &[f64], nu: &[f64]) -> f64 {
    let rows: f64 = s
        .a
        .iter()
        .zip(kb)
        .zip(mu)
        .map(|((a, k), m)| (a * k - m).abs())
        .sum();
    let cols: f64 = s
        .b
        .iter()
        .zip(kta)
        .zip(nu)
        .map(|((b, k), n)| (b * k - n).abs())
        .sum();
    rows + cols
}

fn scaled_cost(kernel: &Array2<f64>, cost: &Array2<f64>, s: &ScalingState) -> f64 {
    let mut total = 0.0;
    for (i, (krow, crow)) in kernel.rows().into_iter().zip(cost.rows()).enumerate() {
        let row: f64 = krow
            .iter()
            .zip(crow.iter())
            .zip(&s.b)
            .map(|((k, c), b)| k * c * b)
            .sum();
        total += s.a[i] * row;
    }
    total
}

pub(crate) fn frobenius(a: ndarray::ArrayView2<'_, f64>, b: ndarray::ArrayView2<'_, f64>) -> f64 {
    ndarray::Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// Expands the reduced plan, rounds it onto `Σ(μ, ν)` and closes the trace
/// with a record describing the returned plan.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    red: &Reduced,
    small: Array2<f64>,
    mu: &Histogram,
    nu: &Histogram,
    cost: &CostMatrix,
    mut trace: SolveTrace,
    termination: Termination,
    iters: usize,
    clock: &mut Stopwatch,
    effective_eps: Option<f64>,
) -> Result<SolverReport> {
    if small.iter().any(|v| !v.is_finite()) {
        return Err(OtError::NumericalFailure { iteration: iters });
    }
    let plan = red.expand(small);
    let plan = round_slices(&plan, mu.as_slice(), nu.as_slice())?;
    let report_cost = frobenius(plan.view(), cost.view());
    trace.finish(TraceRecord {
        iter: iters,
        cost: report_cost,
        marginal_violation: marginal_violation_unchecked(&plan, mu.as_slice(), nu.as_slice()),
        wall_time_s: clock.seconds(),
        effective_eps,
    });
    SolverReport::new(plan, cost, trace, termination, iters)
}
