use serde::{Deserialize, Serialize};

use super::models::{line_model, split_rank2_model, ModelState};
use super::{solve_metric_line, solve_metric_matrix, SolveOptions, Verdict};
use crate::error::Result;
use crate::functionals::ParamSet;
use crate::stability::admissible_interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ScanModel {
    Line { degree: i64 },
    SplitRank2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub model: ScanModel,
    pub grid: usize,
    pub length: f64,
    pub taus: Vec<f64>,
    #[serde(default)]
    pub options: SolveOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub tau: f64,
    pub verdict: Verdict,
    pub residual_total: f64,
    pub iterations: usize,
    /// Whether the pair is `τ`-stable.
    pub stable: bool,
    /// Distance from `τ` to the nearest wall of the stability interval.
    pub margin: f64,
    /// `∫|φ|²_H` of the final metric.
    pub phi_norm_sq: f64,
    pub wall_time_s: f64,
}

fn build(spec: &ScanSpec) -> Result<ModelState> {
    match spec.model {
        ScanModel::Line { degree } => line_model(spec.grid, spec.length, degree),
        ScanModel::SplitRank2 => split_rank2_model(spec.grid, spec.length),
    }
}

fn solve_one(model: &ModelState, tau: f64, opts: &SolveOptions) -> Result<ScanRow> {
    let params = ParamSet::tau(tau);
    let (h, report) = if model.gauge.rank() == 1 {
        solve_metric_line(&model.gauge, &model.phi, &params, opts)?
    } else {
        solve_metric_matrix(&model.gauge, &model.phi, &params, opts)?
    };
    let interval = admissible_interval(&model.split, None)?;
    Ok(ScanRow {
        tau,
        verdict: report.verdict,
        residual_total: report.residual.total,
        iterations: report.iterations,
        stable: interval.contains_f64(tau),
        margin: interval.margin(tau),
        phi_norm_sq: model.torus.integrate(&h.norm_sq(&model.phi)),
        wall_time_s: report.wall_time_s,
    })
}

/// Number of worker threads: `VORTEXLAB_THREADS`, else the available cores.
pub fn thread_count() -> usize {
    std::env::var("VORTEXLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Solve the metric equation at every `τ` of the scan. Rows come back in
/// input order and do not depend on the thread count.
pub fn tau_scan(spec: &ScanSpec) -> Result<Vec<ScanRow>> {
    let model = build(spec)?;
    let threads = thread_count().min(spec.taus.len()).max(1);
    if threads == 1 {
        return spec.taus.iter().map(|&tau| solve_one(&model, tau, &spec.options)).collect();
    }
    let mut rows: Vec<Option<Result<ScanRow>>> = (0..spec.taus.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = rows.chunks_mut(spec.taus.len().div_ceil(threads).max(1)).collect();
        let mut start = 0;
        for chunk in chunks {
            let taus = &spec.taus[start..start + chunk.len()];
            start += chunk.len();
            let model = &model;
            scope.spawn(move || {
                for (slot, &tau) in chunk.iter_mut().zip(taus) {
                    *slot = Some(solve_one(model, tau, &spec.options));
                }
            });
        }
    });
    rows.into_iter().map(|r| r.expect("every row is filled")).collect()
}
