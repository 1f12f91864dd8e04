//! Empirical linear-convergence rate of a solver trace.

use crate::error::{OtError, Result};
use crate::trace::SolveTrace;

const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Slope of `ln|cost − w*|` per iteration; negative means decay.
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Leading fraction of the trace discarded as burn-in.
    pub burn_in: f64,
    /// Residuals at or below `floor · max(1, |w*|)` are treated as round-off.
    pub floor: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            burn_in: 0.1,
            floor: 1e-13,
        }
    }
}

/// Least-squares fit of `ln|cost_t − w*|` against `t`.
pub fn estimate_linear_rate(trace: &SolveTrace, w_star: f64) -> Result<(f64, f64)> {
    let fit = fit_linear_rate(trace, w_star, &RateOptions::default())?;
    Ok((fit.rate, fit.r_squared))
}

pub fn fit_linear_rate(trace: &SolveTrace, w_star: f64, opts: &RateOptions) -> Result<RateFit> {
    if !(0.0..1.0).contains(&opts.burn_in) || !(opts.floor >= 0.0) {
        return Err(OtError::InvalidParameter {
            name: "rate options",
            reason: "burn_in must lie in [0, 1) and floor must be nonnegative".into(),
        });
    }
    let skip = (trace.len() as f64 * opts.burn_in).floor() as usize;
    let floor = opts.floor * w_star.abs().max(1.0);
    let points: Vec<(f64, f64)> = trace
        .iter()
        .skip(skip)
        .filter_map(|r| {
            let residual = (r.cost - w_star).abs();
            (residual.is_finite() && residual > floor).then(|| (r.iter as f64, residual.ln()))
        })
        .collect();
    let usable = points.len();
    if usable < MIN_POINTS {
        return Err(OtError::InsufficientTrace { usable });
    }
    let k = usable as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    // A flat residual carries no rate information.
    if sxx == 0.0 || syy <= 1e-24 * k {
        return Err(OtError::InsufficientTrace { usable });
    }
    let rate = sxy / sxx;
    let r_squared = (sxy * sxy / (sxx * syy)).min(1.0);
    Ok(RateFit {
        rate,
        r_squared,
        points: usable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceRecord;

    fn trace(costs: impl Iterator<Item = (usize, f64)>) -> SolveTrace {
        costs
            .map(|(iter, cost)| TraceRecord {
                iter,
                cost,
                marginal_violation: 0.0,
                wall_time_s: 0.0,
                effective_eps: None,
            })
            .collect()
    }

    #[test]
    fn geometric_sequence() {
        let w = 1.5;
        let t = trace((1..=30).map(|t| (t, w + 2f64.powi(-(t as i32)))));
        let (rate, r2) = estimate_linear_rate(&t, w).unwrap();
        assert!((rate + std::f64::consts::LN_2).abs() <= 1e-6, "{rate}");
        assert!(r2 >= 0.999);
    }

    #[test]
    fn constant_trace_is_rejected() {
        let t = trace((1..=30).map(|t| (t, 2.0)));
        assert!(matches!(
            estimate_linear_rate(&t, 2.0),
            Err(OtError::InsufficientTrace { .. })
        ));
        assert!(matches!(
            estimate_linear_rate(&t, 1.0),
            Err(OtError::InsufficientTrace { .. })
        ));
    }

    #[test]
    fn short_trace_is_rejected() {
        let t = trace((1..=5).map(|t| (t, 1.0 + 0.5f64.powi(t as i32))));
        assert!(matches!(
            estimate_linear_rate(&t, 1.0),
            Err(OtError::InsufficientTrace { usable: 5 })
        ));
    }
}
