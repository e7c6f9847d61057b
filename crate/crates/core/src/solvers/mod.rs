//! Solvers for the vortex-type equations.
//!
//! Unitary picture: a quasi-Newton flow on the connection and section.
//! Metric picture: Newton iteration for line bundles, a preconditioned heat
//! flow for higher rank, and a split Newton/Poisson scheme for the coupled
//! system. Non-existence is reported as a verdict when the section or the
//! metric degenerates.

use serde::{Deserialize, Serialize};

use crate::functionals::ResidualReport;

mod coupled;
mod metric;
mod models;
mod scan;
mod ymh;

pub use coupled::solve_coupled;
pub use metric::{metric_to_unitary, solve_framed, solve_metric_line, solve_metric_matrix, solve_metric_twisted};
pub use models::{line_model, split_rank2_model, ModelState};
pub use scan::{tau_scan, thread_count, ScanModel, ScanRow, ScanSpec};
pub use ymh::minimize_ymh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NonExistenceCriteria {
    /// `sup|φ|` below this counts as collapse in the unitary picture.
    pub collapse_threshold: f64,
    /// `sup|φ|²_H` below this counts as collapse in the metric picture.
    pub metric_collapse: f64,
    /// Smallest admissible `λ_min/λ_max` of a matrix metric.
    pub eigen_ratio: f64,
    /// Iterations over which a residual that stopped improving is a plateau.
    pub plateau_window: usize,
}

impl Default for NonExistenceCriteria {
    fn default() -> Self {
        Self { collapse_threshold: 1e-6, metric_collapse: 1e-12, eigen_ratio: 1e-6, plateau_window: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// First step of the line search; `None` means `0.1 / (1 + τ)`.
    pub initial_step: Option<f64>,
    pub backtrack: f64,
    pub armijo: f64,
    pub nonexistence: NonExistenceCriteria,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 20000,
            initial_step: None,
            backtrack: 0.5,
            armijo: 1e-4,
            nonexistence: NonExistenceCriteria::default(),
        }
    }
}

impl SolveOptions {
    pub fn first_step(&self, tau: f64) -> f64 {
        self.initial_step.unwrap_or(0.1 / (1.0 + tau.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Solution,
    NonExistence,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub residual_total: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub verdict: Verdict,
    pub residual: ResidualReport,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub options: SolveOptions,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub(crate) fn finish(
        verdict: Verdict,
        residual: ResidualReport,
        trace: Vec<TraceRow>,
        start: web_time::Instant,
        options: SolveOptions,
        warnings: Vec<String>,
    ) -> Self {
        let verdict = if verdict == Verdict::Solution && !(residual.total < options.tol) {
            Verdict::MaxIters
        } else {
            verdict
        };
        Self {
            converged: verdict == Verdict::Solution,
            verdict,
            residual,
            iterations: trace.last().map_or(0, |r| r.iter),
            trace,
            wall_time_s: start.elapsed().as_secs_f64(),
            options,
            warnings,
        }
    }

    /// Trace as CSV with header `iter,energy,residual_total,step`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,energy,residual_total,step\n");
        for r in &self.trace {
            s.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", r.iter, r.energy, r.residual_total, r.step));
        }
        s
    }
}

