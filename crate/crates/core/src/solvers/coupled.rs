use web_time::Instant;

use super::metric::ScalarProblem;
use super::{SolveOptions, SolveReport};
use crate::bundle_fields::{GaugeField, MetricField, Section};
use crate::error::{Result, VortexError};
use crate::functionals::{require_constraint, residuals, ParamSet, SystemKind, SystemState};
use crate::operators;

/// Solve the coupled vortex equations for metrics `H = H0 e^{2u}` on `E`
/// and `K = K0 e^{2v}` on `L`, with `φ` a holomorphic section of `E ⊗ L*`:
///
/// `iΛF_H + |φ|²_{H⊗K*} = t`, `iΛF_K - |φ|²_{H⊗K*} = t'`.
///
/// The difference `w = u - v` solves a scalar vortex equation; the sum is a
/// Poisson problem.
pub fn solve_coupled(
    gauge_e: &GaugeField,
    gauge_l: &GaugeField,
    phi: &Section,
    params: &ParamSet,
    opts: &SolveOptions,
) -> Result<(MetricField, MetricField, SolveReport)> {
    let start = Instant::now();
    let t = &gauge_e.torus;
    if t.complex_dim() != 1 {
        return Err(VortexError::UnsupportedDimension(t.complex_dim()));
    }
    if gauge_e.rank() != 1 || gauge_l.rank() != 1 || phi.rank != 1 {
        return Err(VortexError::Unsupported("the coupled solver handles line bundles".into()));
    }
    let constant = params.t.as_ref().map_or(false, |c| c.is_constant())
        && params.t_prime.as_ref().map_or(false, |c| c.is_constant());
    let kind = if constant { SystemKind::Cve } else { SystemKind::Tmcve };
    require_constraint(kind, t, &[gauge_e.spec.clone(), gauge_l.spec.clone()], params, 1e-8)?;
    let tv = params.t_values(t)?;
    let tpv = params.t_prime_values(t)?;
    let fe = operators::curvature(gauge_e).i_lambda_f_scalar();
    let fl = operators::curvature(gauge_l).i_lambda_f_scalar();
    let n = t.sites();
    let sum_rhs: Vec<f64> = (0..n).map(|s| 0.5 * (tv[s] + tpv[s] - fe[s] - fl[s])).collect();
    let mean = t.mean(&sum_rhs);
    let sum_rhs: Vec<f64> = sum_rhs.iter().map(|v| v - mean).collect();
    let s_field = t.poisson_solve(&sum_rhs)?;
    let prob = ScalarProblem {
        torus: t,
        base: (0..n).map(|s| fe[s] - fl[s]).collect(),
        q: phi.pointwise_norm_sq(),
        kappa: 2.0,
        target: (0..n).map(|s| tv[s] - tpv[s]).collect(),
    };
    let metrics = |w: &[f64]| {
        let u: Vec<f64> = (0..n).map(|s| 0.5 * (s_field[s] + w[s])).collect();
        let v: Vec<f64> = (0..n).map(|s| 0.5 * (s_field[s] - w[s])).collect();
        (MetricField::conformal(t, 1, u), MetricField::conformal(t, 1, v))
    };
    let state_for = |w: &[f64]| {
        let (h, k) = metrics(w);
        SystemState {
            gauge: Some(gauge_e.clone()),
            gauge_second: Some(gauge_l.clone()),
            phi: Some(phi.clone()),
            metric: Some(h),
            metric_second: Some(k),
            ..Default::default()
        }
    };
    let (w, verdict, trace, warnings) = prob.newton(vec![0.0; n], opts, |w| residuals(kind, &state_for(w), params))?;
    let res = residuals(kind, &state_for(&w), params)?;
    let (h, k) = metrics(&w);
    Ok((h, k, SolveReport::finish(verdict, res, trace, start, *opts, warnings)))
}
