use web_time::Instant;

use super::{SolveOptions, SolveReport, TraceRow, Verdict};
use crate::bundle_fields::{GaugeField, MatField, MetricField, Section};
use crate::error::{Result, VortexError};
use crate::functionals::{metric_moment_field, residuals, ParamSet, ResidualReport, SystemKind, SystemState};
use crate::geometry::{LatticeTorus, C64};
use crate::linalg;
use crate::operators;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const MAX_UPDATE: f64 = 5.0;

/// Scalar equation `base + 2Δu + κ q e^{2u} - target = 0`.
pub(crate) struct ScalarProblem<'a> {
    pub torus: &'a LatticeTorus,
    pub base: Vec<f64>,
    pub q: Vec<f64>,
    pub kappa: f64,
    pub target: Vec<f64>,
}

impl ScalarProblem<'_> {
    fn eval(&self, u: &[f64]) -> Vec<f64> {
        let lap = self.torus.laplacian(u);
        (0..u.len())
            .map(|s| self.base[s] + 2.0 * lap[s] + self.kappa * self.q[s] * (2.0 * u[s]).exp() - self.target[s])
            .collect()
    }

    /// Convex functional whose gradient is the equation.
    fn action(&self, u: &[f64]) -> f64 {
        let lap = self.torus.laplacian(u);
        let dens: Vec<f64> = (0..u.len())
            .map(|s| {
                u[s] * lap[s] + 0.5 * self.kappa * self.q[s] * (2.0 * u[s]).exp() + (self.base[s] - self.target[s]) * u[s]
            })
            .collect();
        self.torus.integrate(&dens)
    }

    /// Newton iteration with backtracking on the convex action. Without a
    /// solution the action is unbounded below and `q e^{2u}` collapses.
    /// `check` turns an iterate into the residual report that decides
    /// convergence.
    pub fn newton(
        &self,
        mut u: Vec<f64>,
        opts: &SolveOptions,
        mut check: impl FnMut(&[f64]) -> Result<ResidualReport>,
    ) -> Result<(Vec<f64>, Verdict, Vec<TraceRow>, Vec<String>)> {
        let t = self.torus;
        let mut trace = Vec::new();
        let mut warnings = Vec::new();
        let mut g = self.eval(&u);
        let mut gn = t.norm(&g);
        let mut act = self.action(&u);
        let mut step = 0.0;
        for it in 0..=opts.max_iters {
            let res = check(&u)?;
            trace.push(TraceRow { iter: it, energy: act, residual_total: res.total, step });
            if res.total < opts.tol {
                return Ok((u, Verdict::Solution, trace, warnings));
            }
            let m: Vec<f64> = (0..u.len()).map(|s| self.q[s] * (2.0 * u[s]).exp()).collect();
            if m.iter().fold(0.0, |a: f64, &b| a.max(b)) < opts.nonexistence.metric_collapse {
                return Ok((u, Verdict::NonExistence, trace, warnings));
            }
            if it == opts.max_iters {
                break;
            }
            let k = self.kappa;
            let mbar = (k * t.mean(&m)).max(1e-12);
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let (mut delta, _) = linalg::pcg(
                |v| {
                    let lap = t.laplacian(v);
                    (0..v.len()).map(|s| 2.0 * lap[s] + 2.0 * k * m[s] * v[s]).collect()
                },
                |r| t.resolvent(r, mbar).into_iter().map(|v| 0.5 * v).collect(),
                &rhs,
                1e-12,
                500,
            );
            let sup = delta.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
            if sup > MAX_UPDATE {
                delta.iter_mut().for_each(|v| *v *= MAX_UPDATE / sup);
            }
            let slope = t.integrate(&g.iter().zip(&delta).map(|(a, b)| a * b).collect::<Vec<_>>());
            let mut s = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + s * b).collect();
                let gt = self.eval(&trial);
                let gtn = t.norm(&gt);
                let at = self.action(&trial);
                // near convergence the action change drowns in roundoff
                if at <= act + opts.armijo * s * slope || gtn <= 0.5 * gn {
                    u = trial;
                    g = gt;
                    gn = gtn;
                    act = at;
                    step = s;
                    break;
                }
                s *= opts.backtrack;
                if s < 1e-12 {
                    warnings.push("line search failed".into());
                    return Ok((u, Verdict::MaxIters, trace, warnings));
                }
            }
        }
        Ok((u, Verdict::MaxIters, trace, warnings))
    }
}

fn require_line(gauge: &GaugeField, phi: &Section) -> Result<()> {
    if gauge.torus.complex_dim() != 1 {
        return Err(VortexError::UnsupportedDimension(gauge.torus.complex_dim()));
    }
    if gauge.rank() != 1 || phi.rank != 1 {
        return Err(VortexError::Unsupported("the scalar Newton solver needs a line bundle".into()));
    }
    Ok(())
}

fn holo_warning(gauge: &GaugeField, phi: &Section, u_twist: Option<&[f64]>, warnings: &mut Vec<String>) {
    let d = match u_twist {
        Some(u) => crate::transforms::twisted_dbar_norm(gauge, phi, u),
        None => operators::dbar(gauge, phi).norm_sq(&gauge.torus).sqrt(),
    };
    if d > 1e-4 {
        warnings.push(format!("section is not holomorphic: ||dbar phi|| = {d:.3e}"));
    }
}

fn line_solve(
    kind: SystemKind,
    gauge: &GaugeField,
    phi: &Section,
    frame_log: Option<&[f64]>,
    u_twist: Option<&[f64]>,
    params: &ParamSet,
    opts: &SolveOptions,
) -> Result<(MetricField, SolveReport)> {
    let start = Instant::now();
    require_line(gauge, phi)?;
    let t = &gauge.torus;
    let mut q = phi.pointwise_norm_sq();
    if let Some(uf) = frame_log {
        if uf.len() != t.sites() {
            return Err(VortexError::SizeMismatch("frame function".into()));
        }
        q.iter_mut().zip(uf).for_each(|(v, u)| *v *= (-u).exp());
    }
    let prob = ScalarProblem {
        torus: t,
        base: operators::curvature(gauge).i_lambda_f_scalar(),
        q,
        kappa: 1.0,
        target: params.t_values(t)?,
    };
    let state_for = |u: &[f64]| SystemState {
        gauge: Some(gauge.clone()),
        phi: Some(phi.clone()),
        metric: Some(MetricField::conformal(t, 1, u.to_vec())),
        frame_log: frame_log.map(|f| f.to_vec()),
        u_twist: u_twist.map(|f| f.to_vec()),
        ..Default::default()
    };
    let (u, verdict, trace, mut warnings) =
        prob.newton(vec![0.0; t.sites()], opts, |u| residuals(kind, &state_for(u), params))?;
    holo_warning(gauge, phi, u_twist, &mut warnings);
    let res = residuals(kind, &state_for(&u), params)?;
    let report = SolveReport::finish(verdict, res, trace, start, *opts, warnings);
    Ok((MetricField::conformal(t, 1, u), report))
}

/// Solve `iΛF_H + |φ|²_H = t` for `H = H0 e^{2u}` on a line bundle over a
/// 2-torus, `φ` holomorphic.
pub fn solve_metric_line(
    gauge: &GaugeField,
    phi: &Section,
    params: &ParamSet,
    opts: &SolveOptions,
) -> Result<(MetricField, SolveReport)> {
    line_solve(SystemKind::Tmve, gauge, phi, None, None, params, opts)
}

/// [`solve_metric_line`] for a section that is holomorphic for the twisted
/// operator `∂̄_A + ½ ∂̄u`, as produced by the `t -> τ` transform.
pub fn solve_metric_twisted(
    gauge: &GaugeField,
    phi: &Section,
    u_twist: &[f64],
    params: &ParamSet,
    opts: &SolveOptions,
) -> Result<(MetricField, SolveReport)> {
    if u_twist.len() != gauge.torus.sites() {
        return Err(VortexError::SizeMismatch("twist function".into()));
    }
    line_solve(SystemKind::Tmve, gauge, phi, None, Some(u_twist), params, opts)
}

/// Solve `iΛF_H + e^{-u_f} |φ|²_H = t`, the equation seen in a frame
/// rescaled by `e^{u_f}`.
pub fn solve_framed(
    gauge: &GaugeField,
    phi: &Section,
    frame_log: &[f64],
    params: &ParamSet,
    opts: &SolveOptions,
) -> Result<(MetricField, SolveReport)> {
    line_solve(SystemKind::Fve, gauge, phi, Some(frame_log), None, params, opts)
}

fn hermitian_part(r: usize, a: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); r * r];
    for i in 0..r {
        for j in 0..r {
            out[i * r + j] = 0.5 * (a[i * r + j] + a[j * r + i].conj());
        }
    }
    out
}

/// `h^{1/2} R h^{-1/2}`, Hermitian for an `H`-self-adjoint `R`.
fn conjugated(r: usize, fields: &[Vec<C64>], halves: &[(Vec<C64>, Vec<C64>)]) -> Vec<Vec<C64>> {
    let mut tmp = vec![C64::new(0.0, 0.0); r * r];
    let mut out = vec![C64::new(0.0, 0.0); r * r];
    fields
        .iter()
        .zip(halves)
        .map(|(f, (sq, isq))| {
            linalg::mat_mul(r, sq, f, &mut tmp);
            linalg::mat_mul(r, &tmp, isq, &mut out);
            hermitian_part(r, &out)
        })
        .collect()
}

/// Entrywise `(Δ + μ)^{-1}` of a matrix field.
fn precondition(t: &LatticeTorus, r: usize, xs: &[Vec<C64>], mu: f64) -> MatField {
    let mut xi = MatField::zeros(xs.len(), r);
    for i in 0..r {
        for j in 0..r {
            let re: Vec<f64> = xs.iter().map(|x| x[i * r + j].re).collect();
            let im: Vec<f64> = xs.iter().map(|x| x[i * r + j].im).collect();
            let (re, im) = (t.resolvent(&re, mu), t.resolvent(&im, mu));
            let vals: Vec<C64> = re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect();
            xi.set_entry(i, j, &vals);
        }
    }
    xi
}

fn halves(h: &MatField) -> Vec<(Vec<C64>, Vec<C64>)> {
    (0..h.sites())
        .map(|s| {
            let a = h.at(s);
            (linalg::herm_fn(h.rank, a, f64::sqrt), linalg::herm_fn(h.rank, a, |x| 1.0 / x.sqrt()))
        })
        .collect()
}

fn eigen_ratio(h: &MatField) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for s in 0..h.sites() {
        let (vals, _) = linalg::herm_eigen(h.rank, h.at(s));
        lo = lo.min(vals[0]);
        hi = hi.max(vals[vals.len() - 1]);
    }
    lo / hi
}

struct MatrixIterate {
    m: MatField,
    fields: Vec<Vec<C64>>,
    halves: Vec<(Vec<C64>, Vec<C64>)>,
    xi: MatField,
    /// `∫ tr(X (Δ + μ)^{-1} X)`.
    merit: f64,
}

/// Solve `iΛF_H + φφ*^H = t` for a matrix metric `H` by a preconditioned
/// heat flow `H <- H^{1/2} exp(-ε ξ) H^{1/2}`, `ξ = (Δ + μ)^{-1} H^{1/2} R H^{-1/2}`.
pub fn solve_metric_matrix(
    gauge: &GaugeField,
    phi: &Section,
    params: &ParamSet,
    opts: &SolveOptions,
) -> Result<(MetricField, SolveReport)> {
    let start = Instant::now();
    let t = &gauge.torus;
    let r = gauge.rank();
    if phi.rank != r {
        return Err(VortexError::SizeMismatch(format!("section rank {} on a rank {r} bundle", phi.rank)));
    }
    let tv = params.t_values(t)?;
    let ones = vec![1.0; t.sites()];
    let sites = t.sites();
    let metric_of = |m: &MatField| MetricField::identity(t, r).with_matrix(m.clone());
    let iterate = |m: MatField, mu: f64| -> Result<MatrixIterate> {
        let h = metric_of(&m)?;
        let fields = metric_moment_field(gauge, phi, &h, &ones, &tv);
        let hv = halves(&m);
        let xs = conjugated(r, &fields, &hv);
        let xi = precondition(t, r, &xs, mu);
        let dens: Vec<f64> = (0..sites)
            .map(|s| xs[s].iter().zip(xi.at(s)).map(|(a, b)| (a.conj() * b).re).sum::<f64>())
            .collect();
        Ok(MatrixIterate { m, fields, halves: hv, xi, merit: t.integrate(&dens) })
    };
    let mu_of = |m: &MatField| -> Result<f64> {
        let nphi = metric_of(m)?.norm_sq(phi);
        Ok((t.mean(&nphi) / r as f64).max(1e-6))
    };
    let m0 = MatField::identity(sites, r);
    let mut mu = mu_of(&m0)?;
    let mut cur = iterate(m0, mu)?;
    let mut eps: f64 = 1.0;
    let mut donaldson = 0.0;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut verdict = Verdict::MaxIters;
    for it in 0..=opts.max_iters {
        let h = metric_of(&cur.m)?;
        let res = tmve_residual(gauge, phi, &h, params)?;
        trace.push(TraceRow { iter: it, energy: donaldson, residual_total: res.total, step: eps });
        if res.total < opts.tol {
            verdict = Verdict::Solution;
            break;
        }
        let nphi = h.norm_sq(phi);
        if nphi.iter().fold(0.0, |a: f64, &b| a.max(b)) < opts.nonexistence.metric_collapse
            || eigen_ratio(&cur.m) < opts.nonexistence.eigen_ratio
        {
            verdict = Verdict::NonExistence;
            break;
        }
        if it == opts.max_iters {
            break;
        }
        let new_mu = mu_of(&cur.m)?;
        if new_mu != mu {
            mu = new_mu;
            cur = iterate(cur.m, mu)?;
        }
        let sup = (0..sites)
            .map(|s| linalg::herm_eigen(r, cur.xi.at(s)).0.iter().fold(0.0, |a: f64, b| a.max(b.abs())))
            .fold(0.0, f64::max);
        let mut accepted = false;
        while eps > 1e-10 {
            let scale = eps.min(MAX_UPDATE / sup.max(1e-300));
            let mut trial = MatField::zeros(sites, r);
            let mut tmp = vec![C64::new(0.0, 0.0); r * r];
            let mut out = vec![C64::new(0.0, 0.0); r * r];
            for s in 0..sites {
                let ex = linalg::herm_fn(r, cur.xi.at(s), |x| (-scale * x).exp());
                let sq = &cur.halves[s].0;
                linalg::mat_mul(r, sq, &ex, &mut tmp);
                linalg::mat_mul(r, &tmp, sq, &mut out);
                trial.at_mut(s).copy_from_slice(&hermitian_part(r, &out));
            }
            if let Ok(next) = iterate(trial, mu) {
                // change of the Donaldson functional along the step, by the
                // trapezoid rule
                let x1 = conjugated(r, &next.fields, &cur.halves);
                let dens: Vec<f64> = (0..sites)
                    .map(|s| x1[s].iter().zip(cur.xi.at(s)).map(|(a, b)| (a.conj() * b).re).sum::<f64>())
                    .collect();
                let dm = -0.5 * scale * (cur.merit + t.integrate(&dens));
                if dm <= -opts.armijo * scale * cur.merit || next.merit < cur.merit {
                    donaldson += dm;
                    cur = next;
                    accepted = true;
                    break;
                }
            }
            eps *= 0.5;
        }
        if !accepted {
            warnings.push("step size underflow".into());
            break;
        }
        eps = (eps * 1.5).min(1.0);
    }
    holo_warning(gauge, phi, None, &mut warnings);
    let h = metric_of(&cur.m)?;
    let res = tmve_residual(gauge, phi, &h, params)?;
    Ok((h, SolveReport::finish(verdict, res, trace, start, *opts, warnings)))
}

fn tmve_residual(gauge: &GaugeField, phi: &Section, h: &MetricField, params: &ParamSet) -> Result<ResidualReport> {
    let state =
        SystemState { gauge: Some(gauge.clone()), phi: Some(phi.clone()), metric: Some(h.clone()), ..Default::default() };
    residuals(SystemKind::Tmve, &state, params)
}

/// Unitary-gauge pair `(A_H, h^{1/2} φ)` equivalent to the metric solution
/// `(∂̄_A, φ, H)`: the Chern connection of `H` conjugated by `h^{1/2}`.
pub fn metric_to_unitary(gauge: &GaugeField, phi: &Section, h: &MetricField) -> Result<(GaugeField, Section)> {
    let t = &gauge.torus;
    let r = gauge.rank();
    let sites = t.sites();
    let mut g = MatField::zeros(sites, r);
    let mut ginv = MatField::zeros(sites, r);
    for s in 0..sites {
        let fm = h.frame_matrix(s);
        g.at_mut(s).copy_from_slice(&linalg::herm_fn(r, &fm, f64::sqrt));
        ginv.at_mut(s).copy_from_slice(&linalg::herm_fn(r, &fm, |x| 1.0 / x.sqrt()));
    }
    let mut out = gauge.clone();
    let mut x = vec![C64::new(0.0, 0.0); r * r];
    for j in 0..t.complex_dim() {
        let dx = operators::end_derivative(gauge, &g, 2 * j);
        let dy = operators::end_derivative(gauge, &g, 2 * j + 1);
        for s in 0..sites {
            let dbar: Vec<C64> = dx.at(s).iter().zip(dy.at(s)).map(|(a, b)| 0.5 * (a + I * b)).collect();
            linalg::mat_mul(r, &dbar, ginv.at(s), &mut x);
            // potential shift with (0,1) part (∂̄g) g^{-1}
            let y: Vec<C64> = x.iter().map(|v| -2.0 * I * v).collect();
            let px = out.potential[2 * j].at_mut(s);
            for a in 0..r {
                for b in 0..r {
                    px[a * r + b] += 0.5 * (y[a * r + b] + y[b * r + a].conj());
                }
            }
            let py = out.potential[2 * j + 1].at_mut(s);
            for a in 0..r {
                for b in 0..r {
                    py[a * r + b] += (y[a * r + b] - y[b * r + a].conj()) / (2.0 * I);
                }
            }
        }
    }
    let mut values = vec![C64::new(0.0, 0.0); sites * r];
    for s in 0..sites {
        linalg::mat_mul_vec(r, g.at(s), &phi.values[s * r..(s + 1) * r], &mut values[s * r..(s + 1) * r]);
    }
    Ok((out, Section { torus: t.clone(), rank: r, degree: phi.degree, values }))
}
