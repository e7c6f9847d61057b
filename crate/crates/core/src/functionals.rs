//! Energy functionals, residual reports and degree constraints.

use serde::{Deserialize, Serialize};

use crate::bundle_fields::{BundleSpec, GaugeField, MatField, MetricField, Section};
use crate::error::{Result, VortexError};
use crate::geometry::{LatticeTorus, C64, TOTAL_VOLUME};
use crate::linalg;
use crate::operators::{self, Form01};
use crate::swkahler;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Either a constant or a function on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Field(Vec<f64>),
}

impl Coefficient {
    pub fn values(&self, torus: &LatticeTorus) -> Result<Vec<f64>> {
        match self {
            Coefficient::Constant(v) => Ok(vec![*v; torus.sites()]),
            Coefficient::Field(f) if f.len() == torus.sites() => Ok(f.clone()),
            Coefficient::Field(f) => {
                Err(VortexError::SizeMismatch(format!("coefficient has {} values for {} sites", f.len(), torus.sites())))
            }
        }
    }

    pub fn mean(&self, torus: &LatticeTorus) -> Result<f64> {
        Ok(torus.mean(&self.values(torus)?))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

/// Parameters of the equations. `t` covers both the constant `τ` and a
/// function `t`; `f` is the monopole perturbation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub t: Option<Coefficient>,
    pub t_prime: Option<Coefficient>,
    pub f: Option<Coefficient>,
    pub f_prime: Option<Coefficient>,
    /// Synthetic scalar curvature; zero on flat tori.
    pub s: Option<Coefficient>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
}

impl ParamSet {
    pub fn tau(tau: f64) -> Self {
        Self { t: Some(Coefficient::Constant(tau)), ..Default::default() }
    }

    pub fn coupled(tau: f64, tau_prime: f64) -> Self {
        Self {
            t: Some(Coefficient::Constant(tau)),
            t_prime: Some(Coefficient::Constant(tau_prime)),
            ..Default::default()
        }
    }

    pub fn function(t: Vec<f64>) -> Self {
        Self { t: Some(Coefficient::Field(t)), ..Default::default() }
    }

    pub fn monopole(f: f64) -> Self {
        Self { f: Some(Coefficient::Constant(f)), ..Default::default() }
    }

    pub fn t_values(&self, torus: &LatticeTorus) -> Result<Vec<f64>> {
        self.t.as_ref().ok_or(VortexError::MissingField("t"))?.values(torus)
    }

    pub fn t_prime_values(&self, torus: &LatticeTorus) -> Result<Vec<f64>> {
        self.t_prime.as_ref().ok_or(VortexError::MissingField("t_prime"))?.values(torus)
    }

    pub fn f_values(&self, torus: &LatticeTorus) -> Result<Vec<f64>> {
        self.f.as_ref().ok_or(VortexError::MissingField("f"))?.values(torus)
    }

    pub fn f_prime_values(&self, torus: &LatticeTorus) -> Result<Vec<f64>> {
        self.f_prime.as_ref().ok_or(VortexError::MissingField("f_prime"))?.values(torus)
    }

    /// `σ = 4π / (τ - τ')` from constant parameters.
    pub fn sigma_from_taus(tau: f64, tau_prime: f64) -> Result<f64> {
        if tau <= tau_prime {
            return Err(VortexError::NonPositiveSigma);
        }
        Ok(4.0 * std::f64::consts::PI / (tau - tau_prime))
    }
}

/// Which system of equations a state is tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SystemKind {
    /// Abelian vortex equations in the unitary picture.
    VeAbelian,
    /// Vortex equations for rank `r`, unitary picture.
    Nave,
    /// `t`-vortex equation in the metric picture.
    Tmve,
    /// Coupled equations with constants `τ, τ'`, metric picture.
    Cve,
    /// Coupled equations with functions `t, t'`, metric picture.
    Tmcve,
    /// Framed vortex equation.
    Fve,
    SwKahlerFixed,
    SwKahlerCoupled,
}

/// Residual norms. The meaning of each slot depends on the system:
/// `r_holo` is the holomorphicity or Dirac equation, `r_02` the `(0,2)`
/// curvature equation, `r_moment` the main moment-map equation and
/// `r_second` the equation for the second bundle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub r_holo: f64,
    pub r_02: f64,
    pub r_moment: f64,
    pub r_second: f64,
    pub total: f64,
}

impl ResidualReport {
    pub fn new(r_holo: f64, r_02: f64, r_moment: f64, r_second: f64) -> Self {
        let total = (r_holo * r_holo + r_02 * r_02 + r_moment * r_moment + r_second * r_second).sqrt();
        Self { r_holo, r_02, r_moment, r_second, total }
    }
}

/// Fields a system may need. Unused ones stay `None`.
#[derive(Debug, Clone, Default)]
pub struct SystemState {
    /// Connection on `E` (unitary picture) or the holomorphic structure of `E`.
    pub gauge: Option<GaugeField>,
    /// Connection on the second bundle (`L` or the monopole connection `b`).
    pub gauge_second: Option<GaugeField>,
    pub phi: Option<Section>,
    pub beta: Option<Section>,
    pub metric: Option<MetricField>,
    pub metric_second: Option<MetricField>,
    /// `log h(f, f)` of the framing, for the framed system.
    pub frame_log: Option<Vec<f64>>,
    /// When set, `φ` is tested against `∂̄φ + ½ (∂̄u) φ = 0` instead of `∂̄φ = 0`.
    pub u_twist: Option<Vec<f64>>,
}

/// `YMH_τ = ||F||^2 + 2||d_A φ||^2 + ||φφ* - τ||^2`.
pub fn ymh(gauge: &GaugeField, phi: &Section, tau: f64) -> f64 {
    let t = &gauge.torus;
    let curv = operators::curvature(gauge);
    let r = phi.rank as f64;
    let p = phi.pointwise_norm_sq();
    let pot: Vec<f64> = p.iter().map(|v| v * v - 2.0 * tau * v + r * tau * tau).collect();
    curv.norm_sq(t) + 2.0 * operators::d_cov_norm_sq(gauge, phi) + t.integrate(&pot)
}

/// Both sides of the energy identity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapReport {
    pub ymh: f64,
    pub rewritten: f64,
    pub gap: f64,
    /// `4πτ deg E` plus the Chern-Weil term of the background.
    pub predicted: f64,
}

/// `||iΛF + φφ* - τ||^2` for the unitary picture.
fn unitary_moment_sq(gauge: &GaugeField, curv: &operators::CurvatureDecomp, phi: &Section, tau: f64) -> f64 {
    let t = &gauge.torus;
    let r = phi.rank;
    let ilf = curv.i_lambda_f();
    let vals: Vec<f64> = (0..t.sites())
        .map(|s| {
            let v = &phi.values[s * r..(s + 1) * r];
            let m = ilf.at(s);
            let mut acc = 0.0;
            for i in 0..r {
                for j in 0..r {
                    let mut e = m[i * r + j] + v[i] * v[j].conj();
                    if i == j {
                        e -= tau;
                    }
                    acc += e.norm_sqr();
                }
            }
            acc
        })
        .collect();
    t.integrate(&vals)
}

/// `YMH_τ` and `4||F^{0,2}||^2 + 4||∂̄φ||^2 + ||iΛF + φφ* - τ||^2` with their
/// difference, which depends only on topology.
pub fn energy_identity_gap(gauge: &GaugeField, phi: &Section, tau: f64) -> GapReport {
    let t = &gauge.torus;
    let curv = operators::curvature(gauge);
    let y = ymh(gauge, phi, tau);
    let f02 = curv.f02_unit(t).map(|m| t.integrate(&m.pointwise_norm_sq())).unwrap_or(0.0);
    let holo = operators::dbar(gauge, phi).norm_sq(t);
    let rewritten = 4.0 * f02 + 4.0 * holo + unitary_moment_sq(gauge, &curv, phi, tau);
    let c = t.metric_scale();
    let bs: Vec<f64> = (0..t.complex_dim()).map(|j| gauge.field_strength(j)).collect();
    let sum_sq: f64 = bs.iter().map(|b| b * b).sum();
    let sq_sum: f64 = bs.iter().sum::<f64>().powi(2);
    let chern_weil = TOTAL_VOLUME / (c * c) * (sum_sq - sq_sum) * gauge.rank() as f64;
    let predicted = 4.0 * std::f64::consts::PI * tau * gauge.spec.degree(t) + chern_weil;
    GapReport { ymh: y, rewritten, gap: y - rewritten, predicted }
}

fn need<'a, T>(x: &'a Option<T>, name: &'static str) -> Result<&'a T> {
    x.as_ref().ok_or(VortexError::MissingField(name))
}

/// `φφ*` with respect to `H` (matrix `M` in the background frame), divided by `k`.
fn phi_phi_star(r: usize, v: &[C64], m: &[C64], k: f64) -> Vec<C64> {
    let mut mv = vec![C64::new(0.0, 0.0); r];
    linalg::mat_mul_vec(r, m, v, &mut mv);
    // (φ φ^† M)_{ij} = φ_i (Mφ)_j^*  since M is Hermitian
    let mut out = vec![C64::new(0.0, 0.0); r * r];
    for i in 0..r {
        for j in 0..r {
            out[i * r + j] = v[i] * mv[j].conj() / k;
        }
    }
    out
}

/// `∫ tr(R R)` for an `H`-self-adjoint field.
fn selfadjoint_norm_sq(t: &LatticeTorus, r: usize, fields: &[Vec<C64>]) -> f64 {
    let vals: Vec<f64> = fields
        .iter()
        .map(|a| {
            let mut sq = vec![C64::new(0.0, 0.0); r * r];
            linalg::mat_mul(r, a, a, &mut sq);
            linalg::trace(r, &sq).re.max(0.0)
        })
        .collect();
    t.integrate(&vals)
}

/// Metric-picture moment residual `iΛF_H + w φφ*^H - t`, where `w` is a
/// per-site weight on the quadratic term.
pub fn metric_moment_field(
    gauge: &GaugeField,
    phi: &Section,
    h: &MetricField,
    weight: &[f64],
    t_vals: &[f64],
) -> Vec<Vec<C64>> {
    let r = gauge.rank();
    let ilf = operators::chern_i_lambda_f(gauge, h);
    (0..gauge.torus.sites())
        .map(|s| {
            let m = h.frame_matrix(s);
            let q = phi_phi_star(r, &phi.values[s * r..(s + 1) * r], &m, 1.0 / weight[s]);
            let mut out: Vec<C64> = ilf.at(s).iter().zip(&q).map(|(a, b)| a + b).collect();
            for i in 0..r {
                out[i * r + i] -= t_vals[s];
            }
            out
        })
        .collect()
}

fn holo_residual(gauge: &GaugeField, phi: &Section, u_twist: Option<&Vec<f64>>) -> f64 {
    let t = &gauge.torus;
    let mut w = operators::dbar(gauge, phi);
    if let Some(u) = u_twist {
        let du: Vec<Vec<f64>> = (0..t.real_dim()).map(|a| t.derivative(u, a)).collect();
        let r = phi.rank;
        for j in 0..t.complex_dim() {
            for s in 0..t.sites() {
                let dbar_u = 0.5 * (C64::new(du[2 * j][s], 0.0) + I * du[2 * j + 1][s]);
                for k in 0..r {
                    w.comps[j][s * r + k] += 0.5 * dbar_u * phi.values[s * r + k];
                }
            }
        }
    }
    w.norm_sq(t).sqrt()
}

fn f02_residual(gauge: &GaugeField) -> f64 {
    let t = &gauge.torus;
    operators::curvature(gauge).f02_unit(t).map(|m| t.integrate(&m.pointwise_norm_sq()).sqrt()).unwrap_or(0.0)
}

/// Residual norms of `state` for the equations of `kind`.
pub fn residuals(kind: SystemKind, state: &SystemState, params: &ParamSet) -> Result<ResidualReport> {
    match kind {
        SystemKind::VeAbelian | SystemKind::Nave => {
            let g = need(&state.gauge, "gauge")?;
            let phi = need(&state.phi, "phi")?;
            if kind == SystemKind::VeAbelian && g.rank() != 1 {
                return Err(VortexError::Unsupported("abelian system on a higher-rank bundle".into()));
            }
            let t = &g.torus;
            let tau = params.t.as_ref().ok_or(VortexError::MissingField("t"))?;
            let tv = tau.values(t)?;
            let curv = operators::curvature(g);
            let r = g.rank();
            let ilf = curv.i_lambda_f();
            let fields: Vec<Vec<C64>> = (0..t.sites())
                .map(|s| {
                    let v = &phi.values[s * r..(s + 1) * r];
                    let mut out = ilf.at(s).to_vec();
                    for i in 0..r {
                        for j in 0..r {
                            out[i * r + j] += v[i] * v[j].conj();
                        }
                        out[i * r + i] -= tv[s];
                    }
                    out
                })
                .collect();
            let moment = t.integrate(&fields.iter().map(|m| m.iter().map(|v| v.norm_sqr()).sum()).collect::<Vec<_>>());
            Ok(ResidualReport::new(holo_residual(g, phi, None), f02_residual(g), moment.sqrt(), 0.0))
        }
        SystemKind::Tmve | SystemKind::Fve => {
            let g = need(&state.gauge, "gauge")?;
            let phi = need(&state.phi, "phi")?;
            let h = need(&state.metric, "metric")?;
            let t = &g.torus;
            let tv = params.t_values(t)?;
            let weight: Vec<f64> = if kind == SystemKind::Fve {
                need(&state.frame_log, "frame_log")?.iter().map(|u| (-u).exp()).collect()
            } else {
                vec![1.0; t.sites()]
            };
            let fields = metric_moment_field(g, phi, h, &weight, &tv);
            let moment = selfadjoint_norm_sq(t, g.rank(), &fields).sqrt();
            Ok(ResidualReport::new(holo_residual(g, phi, state.u_twist.as_ref()), f02_residual(g), moment, 0.0))
        }
        SystemKind::Cve | SystemKind::Tmcve => {
            let ge = need(&state.gauge, "gauge")?;
            let gl = need(&state.gauge_second, "gauge_second")?;
            let phi = need(&state.phi, "phi")?;
            let h = need(&state.metric, "metric")?;
            let k = need(&state.metric_second, "metric_second")?;
            let t = &ge.torus;
            if kind == SystemKind::Cve
                && !(params.t.as_ref().map_or(false, |c| c.is_constant())
                    && params.t_prime.as_ref().map_or(false, |c| c.is_constant()))
            {
                return Err(VortexError::Unsupported("constant-parameter system given function parameters".into()));
            }
            let tv = params.t_values(t)?;
            let tpv = params.t_prime_values(t)?;
            let gphi = ge.tensor_line(gl, true)?;
            let r = ge.rank();
            let kw: Vec<f64> = k.log_scale.iter().map(|v| (2.0 * v).exp()).collect();
            // φ is a section of E ⊗ L*; its norm uses H ⊗ K^{-1}
            let weight: Vec<f64> = kw.iter().map(|v| 1.0 / v).collect();
            let first = metric_moment_field(ge, phi, h, &weight, &tv);
            let n1 = selfadjoint_norm_sq(t, r, &first).sqrt();
            let ilk = operators::chern_i_lambda_f(gl, k).scalar_re();
            let hn = h.norm_sq(phi);
            let second: Vec<f64> = (0..t.sites()).map(|s| ilk[s] - hn[s] / kw[s] - tpv[s]).collect();
            let n2 = t.norm(&second);
            Ok(ResidualReport::new(holo_residual(&gphi, phi, None), f02_residual(ge), n1, n2))
        }
        SystemKind::SwKahlerFixed | SystemKind::SwKahlerCoupled => swkahler::sw_residuals(kind, state, params),
    }
}

/// Signed violation of the degree constraint that a system imposes, in
/// units of mean values. Systems without a constraint return `None`.
///
/// Coupled vortex: `r t̄ + t̄' - (deg E + deg L)`.
/// Coupled monopole: `r f̄ + f̄' - (deg E - ½ deg L)`.
pub fn constraint_check(
    kind: SystemKind,
    torus: &LatticeTorus,
    bundles: &[BundleSpec],
    params: &ParamSet,
) -> Result<Option<f64>> {
    match kind {
        SystemKind::Cve | SystemKind::Tmcve => {
            let e = bundles.first().ok_or(VortexError::MissingField("bundle E"))?;
            let l = bundles.get(1).ok_or(VortexError::MissingField("bundle L"))?;
            let t = params.t.as_ref().ok_or(VortexError::MissingField("t"))?.mean(torus)?;
            let tp = params.t_prime.as_ref().ok_or(VortexError::MissingField("t_prime"))?.mean(torus)?;
            Ok(Some(e.rank as f64 * t + tp - (e.degree(torus) + l.degree(torus))))
        }
        SystemKind::SwKahlerCoupled => {
            let e = bundles.first().ok_or(VortexError::MissingField("bundle E"))?;
            let l = bundles.get(1).ok_or(VortexError::MissingField("bundle L"))?;
            let f = params.f.as_ref().ok_or(VortexError::MissingField("f"))?.mean(torus)?;
            let fp = params.f_prime.as_ref().ok_or(VortexError::MissingField("f_prime"))?.mean(torus)?;
            Ok(Some(e.rank as f64 * f + fp - (e.degree(torus) - 0.5 * l.degree(torus))))
        }
        _ => Ok(None),
    }
}

/// Fail with [`VortexError::ConstraintViolation`] when the constraint is off
/// by more than `tol`.
pub fn require_constraint(
    kind: SystemKind,
    torus: &LatticeTorus,
    bundles: &[BundleSpec],
    params: &ParamSet,
    tol: f64,
) -> Result<()> {
    if let Some(v) = constraint_check(kind, torus, bundles, params)? {
        if v.abs() > tol {
            return Err(VortexError::ConstraintViolation { violation: v });
        }
    }
    Ok(())
}

/// `μ = ΛF_{H1} - i φφ*^{H2}`: curvature of the Chern connection of
/// `curvature_metric`, adjoint taken with `adjoint_metric`.
pub fn moment_map_mixed(
    gauge: &GaugeField,
    phi: &Section,
    curvature_metric: &MetricField,
    adjoint_metric: &MetricField,
) -> MatField {
    let t = &gauge.torus;
    let r = gauge.rank();
    let ilf = operators::chern_i_lambda_f(gauge, curvature_metric);
    let mut out = MatField::zeros(t.sites(), r);
    for s in 0..t.sites() {
        let m = adjoint_metric.frame_matrix(s);
        let q = phi_phi_star(r, &phi.values[s * r..(s + 1) * r], &m, 1.0);
        let o = out.at_mut(s);
        for k in 0..r * r {
            // ΛF = -i (iΛF)
            o[k] = -I * ilf.at(s)[k] - I * q[k];
        }
    }
    out
}

/// `μ_H = ΛF_H - i φφ*^H`.
pub fn moment_map(gauge: &GaugeField, phi: &Section, h: &MetricField) -> MatField {
    moment_map_mixed(gauge, phi, h, h)
}

/// Canonical `φ` to the half-normalized form used by `ΛF = (i/2)(φφ* - τ)`.
pub fn to_half_form(phi: &Section) -> Section {
    phi.scaled(C64::new(std::f64::consts::SQRT_2, 0.0))
}

pub fn from_half_form(phi: &Section) -> Section {
    phi.scaled(C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0))
}

/// `(0,1)`-form helper for callers that assemble Dirac-type residuals.
pub fn form_norm(t: &LatticeTorus, w: &Form01) -> f64 {
    w.norm_sq(t).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle_fields::{random_state, BundleSpec, Role};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gap_is_eight_pi_for_unit_flux() {
        let t = LatticeTorus::square(1, 64, 1.0).unwrap();
        for seed in 0..3 {
            let (g, phi) = random_state(&t, &BundleSpec::line(1), seed, 0.2).unwrap();
            let r = energy_identity_gap(&g, &phi, 2.0);
            assert!((r.gap - 8.0 * std::f64::consts::PI).abs() < 1e-6 * r.ymh, "{r:?}");
            assert!((r.predicted - 8.0 * std::f64::consts::PI).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_vanishes_on_trivial_bundle() {
        let t = LatticeTorus::square(1, 32, 1.0).unwrap();
        let (g, phi) = random_state(&t, &BundleSpec::line(0), 3, 0.5).unwrap();
        let r = energy_identity_gap(&g, &phi, 1.0);
        assert!(r.gap.abs() < 1e-8 * r.ymh, "{r:?}");
    }

    #[test]
    fn gap_on_four_torus_matches_chern_weil() {
        let t = LatticeTorus::square(2, 8, 1.0).unwrap();
        let spec = BundleSpec::new(1, vec![1, 1], Role::Primary).unwrap();
        let (g, phi) = random_state(&t, &spec, 1, 0.1).unwrap();
        let r = energy_identity_gap(&g, &phi, 1.5);
        assert!((r.gap - r.predicted).abs() < 1e-6 * r.ymh, "{r:?}");
    }

    #[test]
    fn constraint_examples() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let e = BundleSpec::line(1);
        let l = BundleSpec::line(-1);
        let ok = ParamSet::coupled(1.5, -1.5);
        let v = constraint_check(SystemKind::Cve, &t, &[e.clone(), l.clone()], &ok).unwrap().unwrap();
        assert!(v.abs() < 1e-12);
        let bad = ParamSet::coupled(1.5, -1.0);
        assert!(matches!(
            require_constraint(SystemKind::Cve, &t, &[e, l], &bad, 1e-8),
            Err(VortexError::ConstraintViolation { .. })
        ));
        let e2 = BundleSpec::new(2, vec![1], Role::Primary).unwrap();
        let l2 = BundleSpec::line(1);
        let p = ParamSet::coupled(0.5, 2.0);
        assert!(constraint_check(SystemKind::Cve, &t, &[e2, l2], &p).unwrap().unwrap().abs() < 1e-12);
    }

    #[test]
    fn sigma_requires_ordered_taus() {
        assert!(matches!(ParamSet::sigma_from_taus(1.0, 2.0), Err(VortexError::NonPositiveSigma)));
        let s = ParamSet::sigma_from_taus(3.0, 1.0).unwrap();
        assert!((s - 2.0 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn missing_fields_are_reported() {
        let st = SystemState::default();
        assert!(matches!(residuals(SystemKind::Tmve, &st, &ParamSet::tau(1.0)), Err(VortexError::MissingField("gauge"))));
        assert!(matches!(residuals(SystemKind::Cve, &st, &ParamSet::tau(1.0)), Err(VortexError::MissingField("gauge"))));
    }

    #[test]
    fn moment_maps_accept_the_same_states() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let (g, phi) = random_state(&t, &BundleSpec::line(1), 5, 0.4).unwrap();
        let g = GaugeField { potential: GaugeField::background(&t, &g.spec).unwrap().potential, ..g };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tfun: Vec<f64> = t.random_real_field(&mut rng, 1, 0.3).iter().map(|v| v + 2.0).collect();
        let tau = t.mean(&tfun);
        let rhs: Vec<f64> = tfun.iter().map(|v| tau - v).collect();
        let u = t.poisson_solve(&rhs).unwrap();
        let h = MetricField::conformal(&t, 1, t.random_real_field(&mut rng, 2, 0.2));
        let k = h.times_exp(&u);
        let a = moment_map(&g, &phi, &h);
        let b = moment_map_mixed(&g, &phi, &k, &h);
        for s in 0..t.sites() {
            let lhs = a.data[s] + I * tfun[s];
            let rhs = b.data[s] + I * tau;
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }
}
