use web_time::Instant;

use super::{SolveOptions, SolveReport, TraceRow, Verdict};
use crate::bundle_fields::{chern_number, FormDegree, GaugeField, Section};
use crate::error::{Result, VortexError};
use crate::functionals::{residuals, ParamSet, SystemKind, SystemState};
use crate::geometry::C64;
use crate::linalg::{self, Control, LbfgsExit, LbfgsOptions};
use crate::operators;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `4||∂̄φ||² + ||iΛF + |φ|² - τ||²`, which differs from `YMH_τ` by the
/// topological constant `4πτ deg L`, with its gradient.
struct Bogomolny {
    g: GaugeField,
    tau: f64,
}

impl Bogomolny {
    fn unpack(&self, x: &[f64]) -> (GaugeField, Section) {
        let t = &self.g.torus;
        let n = t.sites();
        let mut g = self.g.clone();
        for ax in 0..2 {
            g.set_potential_real(ax, &x[ax * n..(ax + 1) * n]);
        }
        let values = (0..n).map(|s| C64::new(x[2 * n + s], x[3 * n + s])).collect();
        (g, Section { torus: t.clone(), rank: 1, degree: FormDegree::Zero, values })
    }

    fn pack(g: &GaugeField, phi: &Section) -> Vec<f64> {
        let mut x = g.potential_real(0);
        x.extend(g.potential_real(1));
        x.extend(phi.values.iter().map(|v| v.re));
        x.extend(phi.values.iter().map(|v| v.im));
        x
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (g, phi) = self.unpack(x);
        let t = &g.torus;
        let n = t.sites();
        let c = t.metric_scale();
        let w = t.cell_weight();
        let ax = g.potential_real(0);
        let ay = g.potential_real(1);
        let dxay = t.derivative(&ay, 0);
        let dyax = t.derivative(&ax, 1);
        let b = g.field_strength(0);
        let r: Vec<f64> = (0..n)
            .map(|s| (b + dxay[s] - dyax[s]) / c + phi.values[s].norm_sqr() - self.tau)
            .collect();
        let wv = &operators::dbar_values(&g, &phi.values, 1)[0];
        let k = 8.0 * w / c;
        let energy = w * r.iter().map(|v| v * v).sum::<f64>() + k * wv.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let dxr = t.derivative(&r, 0);
        let dyr = t.derivative(&r, 1);
        let dx = operators::cov_deriv(&g, 0, wv, 1);
        let dy = operators::cov_deriv(&g, 1, wv, 1);
        for s in 0..n {
            let p = phi.values[s];
            let cw = wv[s].conj() * p;
            grad[s] = 2.0 * w / c * dyr[s] + k * cw.im;
            grad[n + s] = -2.0 * w / c * dxr[s] + k * cw.re;
            // ∂ applied to ∂̄φ
            let del = 0.5 * (dx[s] - I * dy[s]);
            let gp = 4.0 * w * r[s] * p - 2.0 * k * del;
            grad[2 * n + s] = gp.re;
            grad[3 * n + s] = gp.im;
        }
        energy
    }
}

/// Minimize the Yang-Mills-Higgs functional of an abelian pair on a 2-torus.
///
/// The flow runs on the equivalent functional `4||∂̄φ||² + ||iΛF + |φ|² - τ||²`,
/// so the energy column of the trace is `YMH_τ - 4πτ deg L`.
pub fn minimize_ymh(
    gauge: &GaugeField,
    phi: &Section,
    tau: f64,
    opts: &SolveOptions,
) -> Result<(GaugeField, Section, SolveReport)> {
    let start = Instant::now();
    let t = &gauge.torus;
    if t.complex_dim() != 1 {
        return Err(VortexError::UnsupportedDimension(t.complex_dim()));
    }
    if gauge.rank() != 1 || phi.rank != 1 {
        return Err(VortexError::Unsupported("the unitary flow is implemented for line bundles".into()));
    }
    let chern_before = chern_number(gauge)?;
    let prob = Bogomolny { g: gauge.clone(), tau };
    let mut x = Bogomolny::pack(gauge, phi);
    let params = ParamSet::tau(tau);
    let lopts = LbfgsOptions {
        memory: 30,
        max_iters: opts.max_iters,
        initial_step: opts.first_step(tau),
        backtrack: opts.backtrack,
        armijo: opts.armijo,
        ..Default::default()
    };
    let mut trace = Vec::new();
    let mut verdict = Verdict::MaxIters;
    let mut error = None;
    let mut best = f64::INFINITY;
    let mut best_iter = 0usize;
    let window = opts.nonexistence.plateau_window;
    let (exit, _) = linalg::lbfgs(
        &mut x,
        |x, g| prob.eval(x, g),
        &lopts,
        |it, x, e, step| {
            let (g, p) = prob.unpack(x);
            if let Err(err) = g.links().chern_number() {
                error = Some(err);
                return Control::Stop;
            }
            let state = SystemState { gauge: Some(g), phi: Some(p.clone()), ..Default::default() };
            let res = residuals(SystemKind::VeAbelian, &state, &params).expect("complete state");
            trace.push(TraceRow { iter: it, energy: e, residual_total: res.total, step });
            if res.total < opts.tol {
                verdict = Verdict::Solution;
                return Control::Stop;
            }
            if p.sup_norm() < opts.nonexistence.collapse_threshold {
                verdict = Verdict::NonExistence;
                return Control::Stop;
            }
            if res.total < 0.999 * best {
                best = res.total;
                best_iter = it;
            } else if it - best_iter > window {
                return Control::Stop;
            }
            Control::Continue
        },
    );
    if let Some(err) = error {
        return Err(err);
    }
    let (g, p) = prob.unpack(&x);
    let mut warnings = Vec::new();
    if exit == LbfgsExit::LineSearchFailed {
        warnings.push("line search failed".into());
    }
    if chern_number(&g)? != chern_before {
        return Err(VortexError::NearBranchCut { angle: std::f64::consts::PI });
    }
    let state = SystemState { gauge: Some(g.clone()), phi: Some(p.clone()), ..Default::default() };
    let res = residuals(SystemKind::VeAbelian, &state, &params)?;
    let report = SolveReport::finish(verdict, res, trace, start, *opts, warnings);
    Ok((g, p, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle_fields::{random_state, BundleSpec};
    use crate::geometry::LatticeTorus;

    #[test]
    fn gradient_matches_finite_differences() {
        let t = LatticeTorus::square(1, 8, 1.3).unwrap();
        let (g, phi) = random_state(&t, &BundleSpec::line(1), 3, 0.7).unwrap();
        let prob = Bogomolny { g: g.clone(), tau: 2.0 };
        let x = Bogomolny::pack(&g, &phi);
        let mut grad = vec![0.0; x.len()];
        prob.eval(&x, &mut grad);
        let mut scratch = vec![0.0; x.len()];
        for &i in &[3usize, 70, 64 + 5, 128 + 17, 192 + 40] {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let ep = prob.eval(&xp, &mut scratch);
            xp[i] -= 2.0 * h;
            let em = prob.eval(&xp, &mut scratch);
            let fd = (ep - em) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn bogomolny_form_differs_from_ymh_by_a_constant() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let tau = 2.5;
        let mut vals = Vec::new();
        for seed in 0..3 {
            let (g, phi) = random_state(&t, &BundleSpec::line(1), seed, 0.5).unwrap();
            let prob = Bogomolny { g: g.clone(), tau };
            let x = Bogomolny::pack(&g, &phi);
            let mut grad = vec![0.0; x.len()];
            vals.push(crate::functionals::ymh(&g, &phi, tau) - prob.eval(&x, &mut grad));
        }
        for v in &vals {
            assert!((v - 4.0 * std::f64::consts::PI * tau).abs() < 1e-8, "{v}");
        }
    }
}
