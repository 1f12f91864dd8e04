//! Per-iteration solver diagnostics and the common solver result.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::functional::transport_cost;
use crate::matrix::{CostMatrix, TransportPlan};

/// One diagnostic sample taken during a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `⟨C, Γ⟩` of the iterate.
    pub cost: f64,
    /// L1 marginal violation of the iterate.
    pub marginal_violation: f64,
    /// Solver time since the start of the solve, excluding diagnostics.
    pub wall_time_s: f64,
    /// `β / t` for proximal solvers.
    pub effective_eps: Option<f64>,
}

/// Ordered sequence of [`TraceRecord`]s with strictly increasing `iter`.
///
/// The last record always describes the plan returned in the report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    records: Vec<TraceRecord>,
}

impl SolveTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record.
    ///
    /// # Panics
    /// If `record.iter` does not exceed the previous record's index.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.iter > last.iter,
                "trace indices must increase ({} after {})",
                record.iter,
                last.iter
            );
        }
        self.records.push(record);
    }

    /// Records the returned plan, superseding a record at the same iteration.
    pub(crate) fn finish(&mut self, record: TraceRecord) {
        if self.records.last().is_some_and(|r| r.iter == record.iter) {
            self.records.pop();
        }
        self.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }
}

impl FromIterator<TraceRecord> for SolveTrace {
    fn from_iter<I: IntoIterator<Item = TraceRecord>>(iter: I) -> Self {
        let mut trace = SolveTrace::new();
        for r in iter {
            trace.push(r);
        }
        trace
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ToleranceMet,
    MaxIters,
    NumericalFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ToleranceMet => "tolerance_met",
            Termination::MaxIters => "max_iters",
            Termination::NumericalFailure => "numerical_failure",
        }
    }
}

/// Plan, distance, trace and convergence status of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub plan: TransportPlan,
    /// `⟨C, plan⟩`.
    pub distance: f64,
    pub trace: SolveTrace,
    pub converged: bool,
    pub termination: Termination,
    /// Iterations performed (outer iterations for proximal solvers, pivots for the simplex).
    pub iterations: usize,
}

impl SolverReport {
    pub(crate) fn new(
        plan: TransportPlan,
        cost: &CostMatrix,
        trace: SolveTrace,
        termination: Termination,
        iterations: usize,
    ) -> Result<Self> {
        let distance = transport_cost(&plan, cost)?;
        Ok(Self {
            plan,
            distance,
            trace,
            converged: termination == Termination::ToleranceMet,
            termination,
            iterations,
        })
    }
}

/// Wall clock that can be paused while diagnostics are computed.
#[derive(Debug)]
pub(crate) struct Stopwatch {
    started: Instant,
    paused: Duration,
    pause_start: Option<Instant>,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            started: Instant::now(),
            paused: Duration::ZERO,
            pause_start: None,
        }
    }

    pub fn pause(&mut self) {
        if self.pause_start.is_none() {
            self.pause_start = Some(Instant::now());
        }
    }

    pub fn resume(&mut self) {
        if let Some(p) = self.pause_start.take() {
            self.paused += p.elapsed();
        }
    }

    pub fn seconds(&self) -> f64 {
        let now = Instant::now();
        let paused = self.paused + self.pause_start.map_or(Duration::ZERO, |p| now - p);
        (now - self.started).saturating_sub(paused).as_secs_f64()
    }
}
