//! Inexact proximal point solver for exact optimal transport.
//!
//! Each outer iteration solves the proximal subproblem
//! `argmin_{Γ ∈ Σ(μ,ν)} ⟨C, Γ⟩ + β D_h(Γ, Γ⁽ᵗ⁾)`, which is entropic OT with
//! the kernel `Q = G ⊙ Γ⁽ᵗ⁾`, `G = exp(−C/β)`, approximately: `L` scaling
//! sweeps warm-started from the previous `a`, `b`. The modified cost
//! `C − β ln Γ⁽ᵗ⁾` is never formed, and neither is `G^t`; the plan itself
//! carries the accumulated kernel, so its entries stay representable as the
//! effective regularization `β/t` goes to zero.
//!
//! The scalings themselves do not stay bounded: near the optimum
//! `a_i b_j = exp(C_ij/β)` on the support. The kernel is therefore kept as
//! `exp((f_i + g_j − C_ij)/β)` with potentials `f`, `g`. `f` starts at the
//! row minima of `C`, so no kernel row underflows at the start. Whenever a
//! scaling leaves `[1/ABSORB, ABSORB]` its logarithm is moved into the
//! potentials. The iterates are unchanged in exact arithmetic.

use ndarray::Array2;

use crate::error::{OtError, Result};
use crate::functional::marginal_violation_unchecked;
use crate::kernel::{gemv, gemv_t, Reduced};
use crate::matrix::{CostMatrix, TransportPlan};
use crate::measure::Histogram;
use crate::sinkhorn::{at_least_one, finish, frobenius, positive, scale, ScalingState};
use crate::trace::{SolveTrace, SolverReport, Stopwatch, Termination, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpotConfig {
    /// Proximal step, in cost units.
    pub beta: f64,
    /// Scaling sweeps per proximal step.
    pub inner_iters: usize,
    pub max_outer_iters: usize,
    /// Bound on both the L1 marginal violation and the L1 plan change since
    /// the previous check.
    pub tolerance: f64,
    pub check_every: usize,
    pub parallel: bool,
}

impl Default for IpotConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            inner_iters: 1,
            max_outer_iters: 10_000,
            tolerance: 1e-9,
            check_every: 10,
            parallel: false,
        }
    }
}

impl IpotConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        positive("beta", self.beta)?;
        positive("tolerance", self.tolerance)?;
        at_least_one("inner_iters", self.inner_iters)?;
        at_least_one("max_outer_iters", self.max_outer_iters)?;
        at_least_one("check_every", self.check_every)
    }
}

/// Proximal-point OT solver.
///
/// Starts from `Γ⁽¹⁾ = 11ᵀ`, `b = 1/n`; the outer iteration is
/// `Q = G ⊙ Γ⁽ᵗ⁾`, then `L` sweeps of `a = μ/(Qb)`, `b = ν/(Qᵀa)`, then
/// `Γ⁽ᵗ⁺¹⁾ = diag(a) Q diag(b)`. Converged once both the marginal violation
/// and `‖Γ⁽ᵗ⁺¹⁾ − Γ⁽ᵗ⁾‖₁` are within tolerance at a check.
pub fn ipot(
    mu: &Histogram,
    nu: &Histogram,
    cost: &CostMatrix,
    cfg: &IpotConfig,
) -> Result<SolverReport> {
    cfg.validate()?;
    let red = Reduced::new(mu, nu, cost)?;
    let (m, n) = red.shape();
    // diagnostic buffers; the plan itself is only formed at checks
    let mut plan = Array2::<f64>::ones((m, n));
    let mut prev = Array2::<f64>::ones((m, n));
    let mut clock = Stopwatch::start();

    let mut f = row_minima(&red.cost);
    let mut g = vec![0.0; n];
    let mut kernel = Array2::zeros((m, n));
    stabilized_kernel(&red.cost, &f, &g, cfg.beta, &mut kernel);
    // q = K ⊙ Γ⁽ᵗ⁾ · SCALE with Γ⁽⁰⁾ = 11ᵀ; the marginals carry the same factor
    let mut q = kernel.mapv(|k| k * SCALE);
    let mu_s: Vec<f64> = red.mu.iter().map(|&x| x * SCALE).collect();
    let nu_s: Vec<f64> = red.nu.iter().map(|&x| x * SCALE).collect();
    let mut state = ScalingState::initial(m, n);
    let mut work = Workspace::new(m, n);
    let mut trace = SolveTrace::new();
    let mut termination = Termination::MaxIters;
    let mut iters = 0;
    // the first sweep of this iteration already ran inside `next_kernel_swept`
    let mut swept_ahead = false;

    for t in 1..=cfg.max_outer_iters {
        iters = t;
        let check = t % cfg.check_every == 0 || t == cfg.max_outer_iters;
        let sweeps = cfg.inner_iters - usize::from(swept_ahead);
        sweep(&q, &mu_s, &nu_s, sweeps, &mut state, &mut work, cfg.parallel)
            .map_err(|_| OtError::NumericalFailure { iteration: t })?;

        if check {
            clock.pause();
            std::mem::swap(&mut plan, &mut prev);
            rescale_into(&q, &state, &mut plan);
            let change = l1_distance(&plan, &prev);
            let tp = TransportPlan::from_array_unchecked(plan.clone());
            let violation = marginal_violation_unchecked(&tp, &red.mu, &red.nu);
            trace.push(TraceRecord {
                iter: t,
                cost: frobenius(plan.view(), red.cost.view()),
                marginal_violation: violation,
                wall_time_s: clock.seconds(),
                effective_eps: Some(cfg.beta / t as f64),
            });
            clock.resume();
            if !violation.is_finite() || !change.is_finite() {
                return Err(OtError::NumericalFailure { iteration: t });
            }
            if violation <= cfg.tolerance && change <= cfg.tolerance {
                termination = Termination::ToleranceMet;
                break;
            }
        }
        if t == cfg.max_outer_iters {
            break;
        }

        if needs_absorb(&state) {
            // q becomes the scaled plan, then meets the kernel of the new potentials
            scale_in_place(&mut q, &state);
            absorb(&mut state, &mut f, &mut g, cfg.beta);
            stabilized_kernel(&red.cost, &f, &g, cfg.beta, &mut kernel);
            ndarray::Zip::from(&mut q).and(&kernel).for_each(|q, &k| *q = flush_scaled(k * *q));
            swept_ahead = false;
        } else if cfg.parallel {
            next_kernel(&mut q, &kernel, &state);
        } else {
            next_kernel_swept(&mut q, &kernel, &mu_s, &nu_s, &mut state, &mut work)
                .map_err(|_| OtError::NumericalFailure { iteration: t + 1 })?;
            swept_ahead = true;
        }
    }

    finish(
        &red,
        plan,
        mu,
        nu,
        cost,
        trace,
        termination,
        iters,
        &mut clock,
        Some(cfg.beta / iters as f64),
    )
}

/// One outer proximal step on a full (unreduced) problem.
///
/// `kernel` is `G = exp(−C/β)`. Returns `diag(a) (G ⊙ Γ) diag(b)` and the
/// updated scalings after `inner_iters` sweeps started from `state`.
pub fn proximal_step(
    plan: &TransportPlan,
    state: &ScalingState,
    kernel: &Array2<f64>,
    mu: &Histogram,
    nu: &Histogram,
    inner_iters: usize,
) -> Result<(TransportPlan, ScalingState)> {
    let shape = (mu.len(), nu.len());
    for got in [plan.shape(), kernel.dim(), (state.a.len(), state.b.len())] {
        if got != shape {
            return Err(OtError::ShapeMismatch {
                expected: shape,
                got,
            });
        }
    }
    at_least_one("inner_iters", inner_iters)?;
    let q = (kernel * &plan.view()).mapv(|v| flush_scaled(v * SCALE));
    let mu_s: Vec<f64> = mu.as_slice().iter().map(|&x| x * SCALE).collect();
    let nu_s: Vec<f64> = nu.as_slice().iter().map(|&x| x * SCALE).collect();
    let mut state = state.clone();
    let mut work = Workspace::new(shape.0, shape.1);
    sweep(&q, &mu_s, &nu_s, inner_iters, &mut state, &mut work, false)
        .map_err(|_| OtError::NumericalFailure { iteration: 1 })?;
    let mut next = Array2::zeros(shape);
    rescale_into(&q, &state, &mut next);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(OtError::NumericalFailure { iteration: 1 });
    }
    Ok((TransportPlan::from_array_unchecked(next), state))
}

/// The kernel `exp(−C/β)` used by [`proximal_step`].
pub fn gibbs_kernel(cost: &CostMatrix, beta: f64) -> Result<Array2<f64>> {
    positive("beta", beta)?;
    Ok(cost.view().mapv(|c| (-c / beta).exp()))
}

const ABSORB: f64 = 1e50;

/// Off-support entries decay geometrically and would otherwise spend part of
/// the run as subnormals, which are very slow on common hardware. Values
/// below `f64::MIN_POSITIVE` are set to zero in the kernel, `Q` and the plan.
#[inline]
fn flush(v: f64) -> f64 {
    if v < f64::MIN_POSITIVE {
        0.0
    } else {
        v
    }
}

/// `Q` is stored times `2^300`, and the marginals used by the sweeps carry
/// the same factor, so `a` and `b` come out unchanged. A decaying entry of
/// `Q` is then cut off while the products that form it are still normal;
/// unscaled, they would pass through the subnormal range on the way.
const SCALE: f64 = f64::from_bits((1023 + 300) << 52);
const UNSCALE: f64 = f64::from_bits((1023 - 300) << 52);

/// [`flush`] for values carrying the factor [`SCALE`].
#[inline]
fn flush_scaled(v: f64) -> f64 {
    if v < f64::MIN_POSITIVE * SCALE {
        0.0
    } else {
        v
    }
}

fn needs_absorb(s: &ScalingState) -> bool {
    s.a.iter()
        .chain(&s.b)
        .any(|&v| v > ABSORB || (v > 0.0 && v < 1.0 / ABSORB))
}

fn absorb(s: &mut ScalingState, f: &mut [f64], g: &mut [f64], beta: f64) {
    for (x, pot) in s.a.iter_mut().chain(s.b.iter_mut()).zip(f.iter_mut().chain(g.iter_mut())) {
        if *x > 0.0 {
            *pot += beta * x.ln();
            *x = 1.0;
        }
    }
}

/// Row minima of `C`. Shifting `f` leaves the iterates unchanged, since the
/// first sweep overwrites `a`, and it gives every kernel row an entry equal
/// to one. `g` stays zero: it would change the effective starting `b`.
fn row_minima(cost: &Array2<f64>) -> Vec<f64> {
    cost.rows().into_iter().map(|r| r.fold(f64::INFINITY, |m, &c| m.min(c))).collect()
}

/// `exp((f_i + g_j − C_ij)/β)`; the exponent is capped so that a transient
/// dual infeasibility cannot overflow, even against a scaled plan.
fn stabilized_kernel(cost: &Array2<f64>, f: &[f64], g: &[f64], beta: f64, out: &mut Array2<f64>) {
    let n = g.len();
    let cost = cost.as_slice().expect("standard layout");
    let out = out.as_slice_mut().expect("standard layout");
    for ((krow, crow), &fi) in out.chunks_exact_mut(n).zip(cost.chunks_exact(n)).zip(f) {
        for ((k, &c), &gj) in krow.iter_mut().zip(crow).zip(g) {
            *k = flush(((fi + gj - c) / beta).min(400.0).exp());
        }
    }
}

struct Workspace {
    qb: Vec<f64>,
    qta: Vec<f64>,
}

impl Workspace {
    fn new(m: usize, n: usize) -> Self {
        Self {
            qb: vec![0.0; m],
            qta: vec![0.0; n],
        }
    }
}

/// `L` alternating scalings against `q`. Zero marginal bins keep zero
/// scalings rather than producing `0/0`.
fn sweep(
    q: &Array2<f64>,
    mu: &[f64],
    nu: &[f64],
    inner: usize,
    state: &mut ScalingState,
    work: &mut Workspace,
    parallel: bool,
) -> std::result::Result<(), ()> {
    for _ in 0..inner {
        gemv(q.view(), &state.b, &mut work.qb, parallel);
        scale_allow_zero(mu, &work.qb, &mut state.a)?;
        gemv_t(q.view(), &state.a, &mut work.qta, parallel);
        scale_allow_zero(nu, &work.qta, &mut state.b)?;
    }
    Ok(())
}

fn scale_allow_zero(num: &[f64], den: &[f64], out: &mut [f64]) -> std::result::Result<(), ()> {
    if num.iter().all(|&x| x > 0.0) {
        return scale(num, den, out);
    }
    for ((o, &x), &d) in out.iter_mut().zip(num).zip(den) {
        *o = if x == 0.0 { 0.0 } else { x / d };
        if !o.is_finite() {
            return Err(());
        }
    }
    Ok(())
}

/// `q ← diag(a) q diag(b)`.
fn scale_in_place(q: &mut Array2<f64>, s: &ScalingState) {
    let n = s.b.len();
    let q = q.as_slice_mut().expect("standard layout");
    for (qrow, &ai) in q.chunks_exact_mut(n).zip(&s.a) {
        for (qv, &bj) in qrow.iter_mut().zip(&s.b) {
            *qv = flush_scaled(ai * *qv * bj);
        }
    }
}

/// `q ← K ⊙ diag(a) q diag(b)`: the next proximal kernel in one pass.
fn next_kernel(q: &mut Array2<f64>, kernel: &Array2<f64>, s: &ScalingState) {
    let n = s.b.len();
    let q = q.as_slice_mut().expect("standard layout");
    let kernel = kernel.as_slice().expect("standard layout");
    for ((qrow, krow), &ai) in q.chunks_exact_mut(n).zip(kernel.chunks_exact(n)).zip(&s.a) {
        for ((qv, &k), &bj) in qrow.iter_mut().zip(krow).zip(&s.b) {
            *qv = flush_scaled(k * (ai * *qv * bj));
        }
    }
}

/// [`next_kernel`] followed by one scaling sweep, in a single pass over
/// `q`. Each row's `a_i` is known once the row is done, so `Qᵀa` accumulates
/// while the row is still in cache. Sums run in the same order as in
/// [`sweep`], so the result is bit-identical.
fn next_kernel_swept(
    q: &mut Array2<f64>,
    kernel: &Array2<f64>,
    mu: &[f64],
    nu: &[f64],
    s: &mut ScalingState,
    work: &mut Workspace,
) -> std::result::Result<(), ()> {
    let n = s.b.len();
    let q = q.as_slice_mut().expect("standard layout");
    let kernel = kernel.as_slice().expect("standard layout");
    work.qta.fill(0.0);
    for (((qrow, krow), ai), &mi) in q.chunks_exact_mut(n).zip(kernel.chunks_exact(n)).zip(&mut s.a).zip(mu) {
        let mut qb = 0.0;
        for ((qv, &k), &bj) in qrow.iter_mut().zip(krow).zip(&s.b) {
            *qv = flush_scaled(k * (*ai * *qv * bj));
            qb += *qv * bj;
        }
        *ai = if mi == 0.0 { 0.0 } else { mi / qb };
        if !ai.is_finite() {
            return Err(());
        }
        for (o, &qv) in work.qta.iter_mut().zip(qrow.iter()) {
            *o += *ai * qv;
        }
    }
    scale_allow_zero(nu, &work.qta, &mut s.b)
}

fn l1_distance(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// Writes `diag(a) q diag(b)`, without the [`SCALE`] factor, into `plan`.
fn rescale_into(q: &Array2<f64>, s: &ScalingState, plan: &mut Array2<f64>) {
    let n = s.b.len();
    let q = q.as_slice().expect("standard layout");
    let plan = plan.as_slice_mut().expect("standard layout");
    for ((prow, qrow), &ai) in plan.chunks_exact_mut(n).zip(q.chunks_exact(n)).zip(&s.a) {
        for ((p, &qv), &bj) in prow.iter_mut().zip(qrow).zip(&s.b) {
            *p = flush_scaled(ai * qv * bj) * UNSCALE;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn hist(w: &[f64]) -> Histogram {
        Histogram::from_weights(w).unwrap()
    }

    #[test]
    fn one_point_problem() {
        let one = hist(&[1.0]);
        let c = CostMatrix::new(array![[5.0]]).unwrap();
        let cfg = IpotConfig {
            check_every: 1,
            ..Default::default()
        };
        let r = ipot(&one, &one, &c, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        assert_eq!(r.plan.view()[[0, 0]], 1.0);
        assert_eq!(r.distance, 5.0);
    }

    #[test]
    fn two_by_two_converges_to_diagonal() {
        let half = hist(&[0.5, 0.5]);
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let cfg = IpotConfig {
            max_outer_iters: 500,
            tolerance: 1e-12,
            ..Default::default()
        };
        let r = ipot(&half, &half, &c, &cfg).unwrap();
        assert!(r.iterations <= 500);
        let p = r.plan.view();
        assert!(p[[0, 1]] <= 1e-8 && p[[1, 0]] <= 1e-8);
        assert!(r.distance <= 2e-8);
    }

    #[test]
    fn trace_reports_effective_epsilon() {
        let mu = hist(&[0.3, 0.7]);
        let nu = hist(&[0.6, 0.4]);
        let c = CostMatrix::new(array![[0.0, 1.0], [2.0, 0.5]]).unwrap();
        let cfg = IpotConfig {
            beta: 2.0,
            max_outer_iters: 20,
            check_every: 5,
            tolerance: 1e-15,
            ..Default::default()
        };
        let r = ipot(&mu, &nu, &c, &cfg).unwrap();
        let eps: Vec<f64> = r.trace.iter().map(|rec| rec.effective_eps.unwrap()).collect();
        assert_eq!(eps, vec![0.4, 0.2, 2.0 / 15.0, 0.1]);
    }

    #[test]
    fn proximal_step_one_point() {
        let one = hist(&[1.0]);
        let c = CostMatrix::new(array![[3.0]]).unwrap();
        let g = gibbs_kernel(&c, 1.0).unwrap();
        let start = TransportPlan::from_rows(&[vec![1.0]]).unwrap();
        let (next, _) = proximal_step(&start, &ScalingState::initial(1, 1), &g, &one, &one, 1).unwrap();
        assert!((next.view()[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn proximal_step_fixes_optimal_plan() {
        let half = hist(&[0.5, 0.5]);
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let g = gibbs_kernel(&c, 0.7).unwrap();
        let opt = TransportPlan::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let (next, _) =
            proximal_step(&opt, &ScalingState::initial(2, 2), &g, &half, &half, 200).unwrap();
        for (a, b) in next.view().iter().zip(opt.view().iter()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn fused_and_parallel_paths_agree_bitwise() {
        let n = 80;
        let mu = hist(&(0..n).map(|i| 1.0 + (i % 7) as f64).collect::<Vec<_>>());
        let nu = hist(&(0..n).map(|j| 1.0 + (j % 5) as f64).collect::<Vec<_>>());
        let c = CostMatrix::new(Array2::from_shape_fn((n, n), |(i, j)| ((i * 31 + j * 17) % 23) as f64)).unwrap();
        for inner_iters in [1, 3] {
            // small β forces several absorptions along the way
            let cfg = IpotConfig { beta: 0.05, inner_iters, max_outer_iters: 300, ..Default::default() };
            let seq = ipot(&mu, &nu, &c, &cfg).unwrap();
            let par = ipot(&mu, &nu, &c, &IpotConfig { parallel: true, ..cfg }).unwrap();
            assert_eq!(seq.plan, par.plan);
            assert_eq!(seq.distance, par.distance);
        }
    }

    #[test]
    fn far_apart_supports_do_not_underflow() {
        // exp(−C/β) is zero in every entry
        let mu = hist(&[0.5, 0.5]);
        let nu = hist(&[0.25, 0.75]);
        let c = CostMatrix::new(array![[4000.0, 4001.0], [4002.0, 4000.5]]).unwrap();
        let r = ipot(&mu, &nu, &c, &IpotConfig::with_beta(1.0)).unwrap();
        assert!(r.converged);
        assert!((r.distance - (0.25 * 4000.0 + 0.25 * 4001.0 + 0.5 * 4000.5)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let one = hist(&[1.0]);
        let c = CostMatrix::new(array![[1.0]]).unwrap();
        for cfg in [
            IpotConfig::with_beta(-1.0),
            IpotConfig { inner_iters: 0, ..Default::default() },
            IpotConfig { tolerance: 0.0, ..Default::default() },
        ] {
            assert!(matches!(ipot(&one, &one, &c, &cfg), Err(OtError::InvalidParameter { .. })));
        }
    }
}
