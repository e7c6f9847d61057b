//! Seiberg-Witten equations on a flat Kähler 4-torus, written for a spinor
//! `Ψ = (φ, β)` with `β` a `(0,2)`-form.
//!
//! Self-dual forms are triples `(s, c20, c02)`: `s` is the coefficient of the
//! Kähler form in the normalization `s = -iΛF`, the other two are unit-frame
//! coefficients. Inner products weigh them as `½ s² + |c20|² + |c02|²`.
//! The Dirac operator couples to `P = A + ½ b`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle_fields::{BundleSpec, FormDegree, GaugeField, Role, Section};
use crate::error::{Result, VortexError};
use crate::functionals::{require_constraint, ParamSet, ResidualReport, SystemKind, SystemState};
use crate::geometry::{LatticeTorus, C64};
use crate::linalg::{self, Control, LbfgsOptions};
use crate::operators::{self, Form01};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct SpinorPair {
    pub phi: Section,
    pub beta: Section,
}

impl SpinorPair {
    pub fn new(phi: Section, beta: Section) -> Result<Self> {
        if phi.torus != beta.torus || phi.rank != beta.rank {
            return Err(VortexError::SizeMismatch("spinor components live on different bundles".into()));
        }
        Ok(Self { phi, beta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfDualForm {
    pub scalar: Vec<f64>,
    pub comp20: Vec<C64>,
    pub comp02: Vec<C64>,
}

impl SelfDualForm {
    pub fn zeros(sites: usize) -> Self {
        Self { scalar: vec![0.0; sites], comp20: vec![ZERO; sites], comp02: vec![ZERO; sites] }
    }

    pub fn scalar_only(s: Vec<f64>) -> Self {
        let n = s.len();
        Self { scalar: s, comp20: vec![ZERO; n], comp02: vec![ZERO; n] }
    }

    pub fn inner(&self, other: &SelfDualForm, t: &LatticeTorus) -> f64 {
        let s: f64 = self.scalar.iter().zip(&other.scalar).map(|(a, b)| 0.5 * a * b).sum();
        let c: f64 = self
            .comp20
            .iter()
            .zip(&other.comp20)
            .chain(self.comp02.iter().zip(&other.comp02))
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        t.cell_weight() * (s + c)
    }

    pub fn norm_sq(&self, t: &LatticeTorus) -> f64 {
        self.inner(self, t)
    }

    /// `self - Σ w_k x_k`.
    pub fn minus(&self, terms: &[(f64, &SelfDualForm)]) -> SelfDualForm {
        let mut out = self.clone();
        for (w, x) in terms {
            for (o, v) in out.scalar.iter_mut().zip(&x.scalar) {
                *o -= w * v;
            }
            for (o, v) in out.comp20.iter_mut().zip(&x.comp20) {
                *o -= *w * v;
            }
            for (o, v) in out.comp02.iter_mut().zip(&x.comp02) {
                *o -= *w * v;
            }
        }
        out
    }
}

fn require_abelian_t4(g: &GaugeField) -> Result<()> {
    if g.torus.complex_dim() != 2 {
        return Err(VortexError::UnsupportedDimension(g.torus.complex_dim()));
    }
    if g.rank() != 1 {
        return Err(VortexError::Unsupported("monopole equations are implemented for line bundles".into()));
    }
    Ok(())
}

/// Self-dual part of the curvature of a line-bundle connection.
pub fn curvature_form(g: &GaugeField) -> Result<SelfDualForm> {
    require_abelian_t4(g)?;
    let t = &g.torus;
    let curv = operators::curvature(g);
    let scalar = curv.i_lambda_f_scalar().iter().map(|v| -v).collect();
    let comp02 = curv.f02_unit(t).expect("complex dimension 2").data;
    let comp20 = comp02.iter().map(|v| -v.conj()).collect();
    Ok(SelfDualForm { scalar, comp20, comp02 })
}

/// `i(Ψ⊗Ψ*)_0` as `(|φ|² - |β|², -φβ̄, βφ̄)`.
pub fn quadratic_form(psi: &SpinorPair) -> SelfDualForm {
    let p = &psi.phi.values;
    let b = &psi.beta.values;
    SelfDualForm {
        scalar: p.iter().zip(b).map(|(x, y)| x.norm_sqr() - y.norm_sqr()).collect(),
        comp20: p.iter().zip(b).map(|(x, y)| -x * y.conj()).collect(),
        comp02: p.iter().zip(b).map(|(x, y)| y * x.conj()).collect(),
    }
}

/// Connection on `E ⊗ L^{1/2}` from `A` and `b`.
pub fn dirac_connection(a: &GaugeField, b: Option<&GaugeField>) -> Result<GaugeField> {
    let Some(b) = b else { return Ok(a.clone()) };
    let mut chern = Vec::with_capacity(a.spec.chern.len());
    for (x, y) in a.spec.chern.iter().zip(&b.spec.chern) {
        if y % 2 != 0 {
            return Err(VortexError::ParityError(*y));
        }
        chern.push(x + y / 2);
    }
    let spec = BundleSpec { rank: a.rank(), chern, role: Role::Tensor };
    let mut p = GaugeField::background(&a.torus, &spec)?;
    for ax in 0..a.torus.real_dim() {
        let pa = a.potential_real(ax);
        let pb = b.potential_real(ax);
        let v: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x + 0.5 * y).collect();
        p.set_potential_real(ax, &v);
    }
    Ok(p)
}

/// `D Ψ = ∂̄φ + ∂̄*β`: `ω_1 = ∂̄_1 φ + ∂_2 β`, `ω_2 = ∂̄_2 φ - ∂_1 β`.
pub fn dirac(p: &GaugeField, psi: &SpinorPair) -> Form01 {
    let mut w = operators::dbar(p, &psi.phi);
    let s = operators::dbar_star_02(p, &psi.beta);
    for (c, d) in w.comps.iter_mut().zip(&s.comps) {
        for (x, y) in c.iter_mut().zip(d) {
            *x += y;
        }
    }
    w
}

fn f_form(params: &ParamSet, t: &LatticeTorus, scale: f64, prime: bool) -> Result<SelfDualForm> {
    let v = if prime { params.f_prime_values(t)? } else { params.f_values(t)? };
    Ok(SelfDualForm::scalar_only(v.iter().map(|x| scale * x).collect()))
}

struct Parts {
    p: GaugeField,
    psi: SpinorPair,
    eta_q: SelfDualForm,
    eta_a: SelfDualForm,
    eta_b: Option<SelfDualForm>,
    alpha: SelfDualForm,
    gamma: Option<SelfDualForm>,
    omega: Form01,
}

fn assemble(kind: SystemKind, state: &SystemState, params: &ParamSet) -> Result<Parts> {
    let a = state.gauge.as_ref().ok_or(VortexError::MissingField("gauge"))?;
    require_abelian_t4(a)?;
    let phi = state.phi.as_ref().ok_or(VortexError::MissingField("phi"))?;
    let beta = state.beta.as_ref().ok_or(VortexError::MissingField("beta"))?;
    let psi = SpinorPair::new(phi.clone(), beta.clone())?;
    let t = &a.torus;
    let coupled = kind == SystemKind::SwKahlerCoupled;
    let b = if coupled {
        Some(state.gauge_second.as_ref().ok_or(VortexError::MissingField("gauge_second"))?)
    } else {
        state.gauge_second.as_ref()
    };
    if coupled {
        let b = b.unwrap();
        require_constraint(kind, t, &[a.spec.clone(), b.spec.clone()], params, 1e-8)?;
    }
    let p = dirac_connection(a, b)?;
    let omega = dirac(&p, &psi);
    let eta_q = quadratic_form(&psi);
    let (eta_a, eta_b, gamma) = if coupled {
        let b = b.unwrap();
        (curvature_form(a)?, Some(curvature_form(b)?), Some(f_form(params, t, 2.0, true)?))
    } else {
        (curvature_form(&p)?, None, None)
    };
    let alpha = f_form(params, t, -1.0, false)?;
    Ok(Parts { p, psi, eta_q, eta_a, eta_b, alpha, gamma, omega })
}

fn scalar_norm(t: &LatticeTorus, v: &[f64]) -> f64 {
    t.integrate(&v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}

fn complex_norm(t: &LatticeTorus, v: &[C64]) -> f64 {
    t.integrate(&v.iter().map(|x| x.norm_sqr()).collect::<Vec<_>>()).sqrt()
}

/// Residuals of the monopole equations. `r_moment` is the `ω`-component of
/// the curvature equation for `E`, `r_02` its `(0,2)` component, and for the
/// coupled system `r_second` collects both components of the equation for `b`.
pub fn sw_residuals(kind: SystemKind, state: &SystemState, params: &ParamSet) -> Result<ResidualReport> {
    let parts = assemble(kind, state, params)?;
    let t = parts.p.torus.clone();
    let first = parts.eta_a.minus(&[(1.0, &parts.eta_q), (1.0, &parts.alpha)]);
    let r_holo = parts.omega.norm_sq(&t).sqrt();
    let r_moment = scalar_norm(&t, &first.scalar);
    let r_02 = complex_norm(&t, &first.comp02);
    let r_second = match (&parts.eta_b, &parts.gamma) {
        (Some(eb), Some(g)) => {
            let sec = eb.minus(&[(2.0, &parts.eta_q), (1.0, g)]);
            (scalar_norm(&t, &sec.scalar).powi(2) + complex_norm(&t, &sec.comp02).powi(2)).sqrt()
        }
        _ => 0.0,
    };
    Ok(ResidualReport::new(r_holo, r_02, r_moment, r_second))
}

/// The monopole functional evaluated directly and in its Weitzenböck form.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SwFunctional {
    pub direct: f64,
    pub expanded: f64,
    pub gap: f64,
    /// `⟨η_A, η_Q⟩ + ½⟨η_b, η_Q⟩ - ⟨η_P, η_Q⟩`; zero for the fixed system.
    pub cross_term_gap: f64,
}

/// `||η_F - η_Q - η_α||² (+ ¼||η_b - 2η_Q - η_γ||²) + 2||DΨ||²`, together with
/// `||η_F||² + ||∇φ||² + ||∇β||² + ||η_Q + η_α||² - 2⟨η_F, η_α⟩` (plus the
/// analogous `b` terms).
pub fn sw_functional(kind: SystemKind, state: &SystemState, params: &ParamSet) -> Result<SwFunctional> {
    let parts = assemble(kind, state, params)?;
    let t = parts.p.torus.clone();
    let first = parts.eta_a.minus(&[(1.0, &parts.eta_q), (1.0, &parts.alpha)]);
    let dirac_sq = 2.0 * parts.omega.norm_sq(&t);
    let grad_sq = operators::d_cov_norm_sq(&parts.p, &parts.psi.phi) + operators::d_cov_norm_sq(&parts.p, &parts.psi.beta);
    let qa = SelfDualForm::zeros(t.sites()).minus(&[(-1.0, &parts.eta_q), (-1.0, &parts.alpha)]);
    let mut direct = first.norm_sq(&t) + dirac_sq;
    let mut expanded = parts.eta_a.norm_sq(&t) + grad_sq + qa.norm_sq(&t) - 2.0 * parts.eta_a.inner(&parts.alpha, &t);
    let mut cross_term_gap = 0.0;
    if let (Some(eb), Some(g)) = (&parts.eta_b, &parts.gamma) {
        let sec = eb.minus(&[(2.0, &parts.eta_q), (1.0, g)]);
        direct += 0.25 * sec.norm_sq(&t);
        let qg = SelfDualForm::zeros(t.sites()).minus(&[(-2.0, &parts.eta_q), (-1.0, g)]);
        expanded += 0.25 * eb.norm_sq(&t) + 0.25 * qg.norm_sq(&t) - 0.5 * eb.inner(g, &t);
        let ep = curvature_form(&parts.p)?;
        cross_term_gap = parts.eta_a.inner(&parts.eta_q, &t) + 0.5 * eb.inner(&parts.eta_q, &t)
            - ep.inner(&parts.eta_q, &t);
    }
    Ok(SwFunctional { direct, expanded, gap: direct - expanded, cross_term_gap })
}

/// Image of a state under `(A, b, φ, β, f, f') -> (-A, -b, β̄, -φ̄, -f, -f')`,
/// which exchanges the two branches.
pub fn hodge_swap(state: &SystemState, params: &ParamSet) -> Result<(SystemState, ParamSet)> {
    let flip = |g: &GaugeField| -> Result<GaugeField> {
        let spec = BundleSpec { rank: g.rank(), chern: g.spec.chern.iter().map(|c| -c).collect(), role: g.spec.role };
        let mut out = GaugeField::background(&g.torus, &spec)?;
        for ax in 0..g.torus.real_dim() {
            let v: Vec<f64> = g.potential_real(ax).iter().map(|x| -x).collect();
            out.set_potential_real(ax, &v);
        }
        Ok(out)
    };
    let phi = state.phi.as_ref().ok_or(VortexError::MissingField("phi"))?;
    let beta = state.beta.as_ref().ok_or(VortexError::MissingField("beta"))?;
    let conj = |s: &Section, sign: f64, degree: FormDegree| Section {
        torus: s.torus.clone(),
        rank: s.rank,
        degree,
        values: s.values.iter().map(|v| v.conj() * sign).collect(),
    };
    let new_state = SystemState {
        gauge: state.gauge.as_ref().map(flip).transpose()?,
        gauge_second: state.gauge_second.as_ref().map(flip).transpose()?,
        phi: Some(conj(beta, 1.0, FormDegree::Zero)),
        beta: Some(conj(phi, -1.0, FormDegree::ZeroTwo)),
        ..Default::default()
    };
    let neg = |c: &Option<crate::functionals::Coefficient>| {
        c.as_ref().map(|c| match c {
            crate::functionals::Coefficient::Constant(v) => crate::functionals::Coefficient::Constant(-v),
            crate::functionals::Coefficient::Field(f) => {
                crate::functionals::Coefficient::Field(f.iter().map(|v| -v).collect())
            }
        })
    };
    let new_params = ParamSet { f: neg(&params.f), f_prime: neg(&params.f_prime), ..params.clone() };
    Ok((new_state, new_params))
}

/// Energy and gradient of the monopole functional for line bundles. The
/// packed variable is `[a_A (4 axes), b (4 axes, coupled only), Re/Im φ, Re/Im β]`.
struct SwProblem {
    kind: SystemKind,
    a: GaugeField,
    b: Option<GaugeField>,
    params: ParamSet,
}

impl SwProblem {
    fn sites(&self) -> usize {
        self.a.torus.sites()
    }

    fn n_conn(&self) -> usize {
        if self.kind == SystemKind::SwKahlerCoupled {
            8
        } else {
            4
        }
    }

    fn pack(&self, state: &SystemState) -> Vec<f64> {
        let n = self.sites();
        let mut x = Vec::with_capacity((self.n_conn() + 4) * n);
        let g = state.gauge.as_ref().unwrap();
        for ax in 0..4 {
            x.extend(g.potential_real(ax));
        }
        if self.kind == SystemKind::SwKahlerCoupled {
            let b = state.gauge_second.as_ref().unwrap();
            for ax in 0..4 {
                x.extend(b.potential_real(ax));
            }
        }
        for s in [state.phi.as_ref().unwrap(), state.beta.as_ref().unwrap()] {
            x.extend(s.values.iter().map(|v| v.re));
            x.extend(s.values.iter().map(|v| v.im));
        }
        x
    }

    fn unpack(&self, x: &[f64]) -> SystemState {
        let n = self.sites();
        let t = &self.a.torus;
        let mut a = self.a.clone();
        for ax in 0..4 {
            a.set_potential_real(ax, &x[ax * n..(ax + 1) * n]);
        }
        let mut off = 4 * n;
        let b = if self.kind == SystemKind::SwKahlerCoupled {
            let mut b = self.b.clone().unwrap();
            for ax in 0..4 {
                b.set_potential_real(ax, &x[off + ax * n..off + (ax + 1) * n]);
            }
            off += 4 * n;
            Some(b)
        } else {
            self.b.clone()
        };
        let sec = |o: usize, degree| {
            let values = (0..n).map(|s| C64::new(x[o + s], x[o + n + s])).collect();
            Section { torus: t.clone(), rank: 1, degree, values }
        };
        SystemState {
            gauge: Some(a),
            gauge_second: b,
            phi: Some(sec(off, FormDegree::Zero)),
            beta: Some(sec(off + 2 * n, FormDegree::ZeroTwo)),
            ..Default::default()
        }
    }

    /// Adds `weight ×` the gradient of a curvature block `½∫R_s² + ∫|R_20|² + ∫|R_02|²`
    /// with respect to the potential stored at `off`.
    fn curvature_grad(&self, r: &SelfDualForm, weight: f64, g: &mut [f64], off: usize) {
        let t = &self.a.torus;
        let n = self.sites();
        let w = weight * t.cell_weight();
        let c = t.metric_scale();
        for j in 0..2 {
            let dx = t.derivative(&r.scalar, 2 * j);
            let dy = t.derivative(&r.scalar, 2 * j + 1);
            for s in 0..n {
                g[off + 2 * j * n + s] -= w * dy[s] / c;
                g[off + (2 * j + 1) * n + s] += w * dx[s] / c;
            }
        }
        // the (2,0) and (0,2) parts contribute equally
        for (a, b, wab) in [(0usize, 2usize, C64::new(1.0, 0.0)), (0, 3, I), (1, 2, I), (1, 3, C64::new(-1.0, 0.0))] {
            let x: Vec<f64> = r.comp02.iter().map(|v| (v.conj() * (-I / (2.0 * c)) * wab).re).collect();
            let da = t.derivative(&x, a);
            let db = t.derivative(&x, b);
            for s in 0..n {
                g[off + b * n + s] -= 4.0 * w * da[s];
                g[off + a * n + s] += 4.0 * w * db[s];
            }
        }
    }

    /// Adds the gradient with respect to `(φ, β)` of `weight × ||η - λ η_Q - ..||²`.
    fn quadratic_grad(&self, r: &SelfDualForm, lambda: f64, weight: f64, psi: &SpinorPair, gp: &mut [C64], gb: &mut [C64]) {
        let w = weight * lambda * self.a.torus.cell_weight();
        for s in 0..self.sites() {
            let (p, b) = (psi.phi.values[s], psi.beta.values[s]);
            gp[s] += -2.0 * w * r.scalar[s] * p - 4.0 * w * r.comp02[s].conj() * b;
            gb[s] += 2.0 * w * r.scalar[s] * b - 4.0 * w * r.comp02[s] * p;
        }
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let state = self.unpack(x);
        let parts = assemble(self.kind, &state, &self.params).expect("validated state");
        let t = self.a.torus.clone();
        let n = self.sites();
        let c = t.metric_scale();
        let wc = t.cell_weight();
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut gp = vec![ZERO; n];
        let mut gb = vec![ZERO; n];
        let first = parts.eta_a.minus(&[(1.0, &parts.eta_q), (1.0, &parts.alpha)]);
        let mut energy = first.norm_sq(&t) + 2.0 * parts.omega.norm_sq(&t);
        self.curvature_grad(&first, 1.0, grad, 0);
        self.quadratic_grad(&first, 1.0, 1.0, &parts.psi, &mut gp, &mut gb);
        let coupled = self.kind == SystemKind::SwKahlerCoupled;
        if let (Some(eb), Some(gm)) = (&parts.eta_b, &parts.gamma) {
            let sec = eb.minus(&[(2.0, &parts.eta_q), (1.0, gm)]);
            energy += 0.25 * sec.norm_sq(&t);
            self.curvature_grad(&sec, 0.25, grad, 4 * n);
            self.quadratic_grad(&sec, 2.0, 0.25, &parts.psi, &mut gp, &mut gb);
        }
        // Dirac term (4/c) Σ_j ∫|ω_j|²
        let (w1, w2) = (&parts.omega.comps[0], &parts.omega.comps[1]);
        let (phi, beta) = (&parts.psi.phi.values, &parts.psi.beta.values);
        let k = 8.0 * wc / c;
        let half = C64::new(0.5, 0.0);
        let coefs: [(C64, bool, C64, bool); 4] = [
            (-half * I, true, half * I, false),
            (half, true, half, false),
            (-half * I, false, -half * I, true),
            (-half, false, half, true),
        ];
        for (ax, (c1, p1, c2, p2)) in coefs.iter().enumerate() {
            for s in 0..n {
                let v1 = if *p1 { phi[s] } else { beta[s] };
                let v2 = if *p2 { phi[s] } else { beta[s] };
                let d = k * (w1[s].conj() * c1 * v1 + w2[s].conj() * c2 * v2).re;
                grad[ax * n + s] += d;
                if coupled {
                    grad[(4 + ax) * n + s] += 0.5 * d;
                }
            }
        }
        let p = &parts.p;
        let d1w1 = operators_del(p, 0, w1);
        let d2w2 = operators_del(p, 1, w2);
        let b2w1 = operators_dbar(p, 1, w1);
        let b1w2 = operators_dbar(p, 0, w2);
        for s in 0..n {
            gp[s] += k * (-d1w1[s] - d2w2[s]);
            gb[s] += k * (-b2w1[s] + b1w2[s]);
        }
        let off = self.n_conn() * n;
        for s in 0..n {
            grad[off + s] = gp[s].re;
            grad[off + n + s] = gp[s].im;
            grad[off + 2 * n + s] = gb[s].re;
            grad[off + 3 * n + s] = gb[s].im;
        }
        energy
    }
}

fn operators_del(p: &GaugeField, j: usize, v: &[C64]) -> Vec<C64> {
    let dx = operators::cov_deriv(p, 2 * j, v, 1);
    let dy = operators::cov_deriv(p, 2 * j + 1, v, 1);
    dx.iter().zip(&dy).map(|(a, b)| 0.5 * (a - I * b)).collect()
}

fn operators_dbar(p: &GaugeField, j: usize, v: &[C64]) -> Vec<C64> {
    let dx = operators::cov_deriv(p, 2 * j, v, 1);
    let dy = operators::cov_deriv(p, 2 * j + 1, v, 1);
    dx.iter().zip(&dy).map(|(a, b)| 0.5 * (a + I * b)).collect()
}

/// Energy and packed gradient of the monopole functional; exposed for tests.
pub fn sw_energy_gradient(kind: SystemKind, state: &SystemState, params: &ParamSet) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    assemble(kind, state, params)?;
    let prob = SwProblem {
        kind,
        a: state.gauge.clone().unwrap(),
        b: state.gauge_second.clone(),
        params: params.clone(),
    };
    let x = prob.pack(state);
    let mut g = vec![0.0; x.len()];
    let e = prob.eval(&x, &mut g);
    Ok((e, x, g))
}

/// Energy at a packed point; pairs with [`sw_energy_gradient`].
pub fn sw_energy_at(kind: SystemKind, state: &SystemState, params: &ParamSet, x: &[f64]) -> f64 {
    let prob = SwProblem { kind, a: state.gauge.clone().unwrap(), b: state.gauge_second.clone(), params: params.clone() };
    let mut g = vec![0.0; x.len()];
    prob.eval(x, &mut g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `β = 0`.
    Phi,
    /// `φ = 0`.
    Beta,
    Reducible,
    Undecided,
}

/// Branch expected from the sign of `μ(E ⊗ L^{1/2}) - f̄` (fixed `b`) or of
/// `μ(E) - f̄` (coupled).
pub fn predicted_branch(kind: SystemKind, torus: &LatticeTorus, e: &BundleSpec, l: Option<&BundleSpec>, f_mean: f64) -> Branch {
    let half_l = l.map_or(0.0, |l| 0.5 * l.degree(torus));
    let mu = e.slope(torus) + if kind == SystemKind::SwKahlerCoupled { 0.0 } else { half_l };
    let d = mu - f_mean;
    if d.abs() < 1e-12 {
        Branch::Reducible
    } else if d < 0.0 {
        Branch::Phi
    } else {
        Branch::Beta
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecouplingConfig {
    pub kind: SystemKind,
    pub grid: usize,
    pub length: f64,
    pub chern_e: Vec<i64>,
    pub chern_l: Vec<i64>,
    pub f: f64,
    pub f_prime: Option<f64>,
    pub seed: u64,
    pub amplitude: f64,
    pub max_iters: usize,
    /// Both spinor norms below this count as a reducible solution.
    pub reducible_threshold: f64,
    /// Both norms below this switch on a search along the ray `Ψ -> sΨ`,
    /// which resolves the quartic well at `Ψ = 0`.
    pub polish_below: f64,
    pub polish_rounds: usize,
    /// Stop once the smaller spinor norm is this fraction of the larger.
    pub ratio_stop: f64,
    /// Energy below which the flow may stop.
    pub tol: f64,
}

impl Default for DecouplingConfig {
    fn default() -> Self {
        Self {
            kind: SystemKind::SwKahlerFixed,
            grid: 12,
            length: 1.0,
            chern_e: vec![0, 0],
            chern_l: vec![0, 0],
            f: 0.5,
            f_prime: None,
            seed: 0,
            amplitude: 1.0,
            max_iters: 3000,
            reducible_threshold: 1e-6,
            polish_below: 1e-3,
            polish_rounds: 40,
            ratio_stop: 1e-5,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub branch: Branch,
    pub predicted: Branch,
    pub ratio: f64,
    pub phi_norm: f64,
    pub beta_norm: f64,
    pub sup_product: f64,
    pub sup_phi: f64,
    pub sup_beta: f64,
    pub energy: f64,
    pub residual: ResidualReport,
    pub seed: u64,
    pub iterations: usize,
    /// `(iteration, energy, ‖φ‖, ‖β‖)` every 25 iterations.
    pub trace: Vec<[f64; 4]>,
}

impl DecouplingReport {
    /// Pointwise annihilation `sup|φ||β| < 1e-4 (sup|φ| sup|β| + 1)`.
    pub fn annihilates(&self) -> bool {
        self.sup_product < 1e-4 * (self.sup_phi * self.sup_beta + 1.0)
    }
}

/// Minimize the monopole functional from a seeded start and classify the limit.
pub fn decoupling_experiment(cfg: &DecouplingConfig) -> Result<(DecouplingReport, SystemState)> {
    let t = LatticeTorus::square(2, cfg.grid, cfg.length)?;
    let e = BundleSpec::new(1, cfg.chern_e.clone(), Role::Primary)?;
    let l = BundleSpec::new(1, cfg.chern_l.clone(), Role::Auxiliary)?;
    let coupled = cfg.kind == SystemKind::SwKahlerCoupled;
    let mut params = ParamSet::monopole(cfg.f);
    if coupled {
        let fp = match cfg.f_prime {
            Some(v) => v,
            None => e.degree(&t) - 0.5 * l.degree(&t) - cfg.f,
        };
        params.f_prime = Some(crate::functionals::Coefficient::Constant(fp));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a = GaugeField::background(&t, &e)?;
    for ax in 0..4 {
        a.set_potential_real(ax, &t.random_real_field(&mut rng, 1, 0.2 * cfg.amplitude));
    }
    let b = GaugeField::background(&t, &l)?;
    let dirac_spec = dirac_connection(&a, Some(&b))?.spec;
    let profile = crate::bundle_fields::background_profile(&t, &dirac_spec.chern)?;
    let mk = |rng: &mut ChaCha8Rng, degree| {
        let f = t.random_complex_field(rng, 1, 0.5);
        let values = profile.iter().zip(&f).map(|(p, e)| p * (C64::new(1.0, 0.0) + e) * cfg.amplitude).collect();
        Section { torus: t.clone(), rank: 1, degree, values }
    };
    let phi = mk(&mut rng, FormDegree::Zero);
    let beta = mk(&mut rng, FormDegree::ZeroTwo);
    let state = SystemState {
        gauge: Some(a.clone()),
        gauge_second: if coupled || l.chern.iter().any(|&c| c != 0) { Some(b.clone()) } else { None },
        phi: Some(phi),
        beta: Some(beta),
        ..Default::default()
    };
    let prob = SwProblem { kind: cfg.kind, a, b: state.gauge_second.clone(), params: params.clone() };
    let mut x = prob.pack(&state);
    let n = t.sites();
    let off = prob.n_conn() * n;
    let norms = |x: &[f64]| {
        let p: f64 = x[off..off + 2 * n].iter().map(|v| v * v).sum::<f64>();
        let b: f64 = x[off + 2 * n..off + 4 * n].iter().map(|v| v * v).sum::<f64>();
        ((p * t.cell_weight()).sqrt(), (b * t.cell_weight()).sqrt())
    };
    let opts = LbfgsOptions { max_iters: cfg.max_iters, ..Default::default() };
    let mut stall = 0usize;
    let mut last_e = f64::INFINITY;
    let mut trace = Vec::new();
    let (_, iterations) = linalg::lbfgs(
        &mut x,
        |x, g| prob.eval(x, g),
        &opts,
        |it, x, e, _| {
            let (p, b) = norms(x);
            if it % 25 == 0 {
                trace.push([it as f64, e, p, b]);
            }
            if p.min(b) < cfg.ratio_stop * p.max(b) && e < cfg.tol {
                return Control::Stop;
            }
            if p.max(b) < cfg.polish_below && e < cfg.tol {
                return Control::Stop;
            }
            if last_e - e <= 1e-15 * last_e.max(1e-300) {
                stall += 1;
            } else {
                stall = 0;
            }
            last_e = e;
            if stall > 20 {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    let (p, b) = norms(&x);
    if p.max(b) < cfg.polish_below {
        // Descent is slow in the quartic well at Ψ = 0. Search the ray
        // Ψ -> sΨ exactly, then resume the full flow from the best point.
        let mut gbuf = vec![0.0; x.len()];
        let full_opts = LbfgsOptions { max_iters: 200, ..Default::default() };
        for _ in 0..cfg.polish_rounds {
            let mut at = |s: f64| {
                let mut y = x.clone();
                y[off..].iter_mut().for_each(|v| *v *= s);
                prob.eval(&y, &mut gbuf)
            };
            let (e0, e1) = (at(0.0), at(1.0));
            let (mut lo, mut hi) = (0.0, 1.0);
            let r = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (hi - r * (hi - lo), lo + r * (hi - lo));
            let (mut ea, mut eb) = (at(a), at(b));
            for _ in 0..40 {
                if ea < eb {
                    hi = b;
                    b = a;
                    eb = ea;
                    a = hi - r * (hi - lo);
                    ea = at(a);
                } else {
                    lo = a;
                    a = b;
                    ea = eb;
                    b = lo + r * (hi - lo);
                    eb = at(b);
                }
            }
            let mid = 0.5 * (lo + hi);
            let em = at(mid);
            let (s_best, e_best) = [(0.0, e0), (mid, em), (1.0, e1)]
                .into_iter()
                .fold((1.0, e1), |acc, c| if c.1 < acc.1 { c } else { acc });
            if s_best == 1.0 || e_best >= e1 {
                break;
            }
            x[off..].iter_mut().for_each(|v| *v *= s_best);
            linalg::lbfgs(&mut x, |x, g| prob.eval(x, g), &full_opts, |_, x, e, _| {
                let (p, b) = norms(x);
                if e < 1e-32 || p.max(b) < 0.1 * cfg.reducible_threshold {
                    Control::Stop
                } else {
                    Control::Continue
                }
            });
            let (p, b) = norms(&x);
            if p.max(b) < 0.1 * cfg.reducible_threshold {
                break;
            }
        }
    }
    let final_state = prob.unpack(&x);
    let mut g = vec![0.0; x.len()];
    let energy = prob.eval(&x, &mut g);
    let residual = sw_residuals(cfg.kind, &final_state, &params)?;
    let fs_phi = final_state.phi.as_ref().unwrap();
    let fs_beta = final_state.beta.as_ref().unwrap();
    let (pn, bn) = (fs_phi.norm(), fs_beta.norm());
    let sup_product = fs_phi
        .values
        .iter()
        .zip(&fs_beta.values)
        .map(|(a, b)| a.norm() * b.norm())
        .fold(0.0, f64::max);
    let ratio = if pn.max(bn) > 0.0 { pn.min(bn) / pn.max(bn) } else { 0.0 };
    let branch = if pn.max(bn) < cfg.reducible_threshold {
        Branch::Reducible
    } else if ratio < 1e-3 {
        if bn < pn {
            Branch::Phi
        } else {
            Branch::Beta
        }
    } else {
        Branch::Undecided
    };
    let predicted = predicted_branch(cfg.kind, &t, &e, Some(&l), cfg.f);
    let report = DecouplingReport {
        branch,
        predicted,
        ratio,
        phi_norm: pn,
        beta_norm: bn,
        sup_product,
        sup_phi: fs_phi.sup_norm(),
        sup_beta: fs_beta.sup_norm(),
        energy,
        residual,
        seed: cfg.seed,
        iterations,
        trace,
    };
    Ok((report, final_state))
}
