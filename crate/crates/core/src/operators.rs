//! Covariant derivatives, `∂̄`-operators, curvature and the Laplacian.
//!
//! Derivatives are spectral. Along `x_j` a section of a plane with flux is
//! untwisted by `exp(-iΘ x/L)`, `Θ = B L y`, differentiated with the shifted
//! wavenumbers folded into the Nyquist window, and twisted back. Component
//! conventions: `∂̄_j = (D_{x_j} + i D_{y_j})/2`, `∂_j = (D_{x_j} - i D_{y_j})/2`,
//! `|dz̄_j|^2 = 2/c`, and `(0,2)`-forms are stored in the unit frame
//! `(c/2) dz̄1∧dz̄2`.

use num_complex::Complex64;

use crate::bundle_fields::{FormDegree, GaugeField, MatField, MetricField, Section};
use crate::error::Result;
use crate::geometry::{LatticeTorus, C64};
use crate::linalg;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Derivative along `axis` of one scalar component with the background
/// connection only.
pub fn background_derivative(g: &GaugeField, axis: usize, f: &[C64]) -> Vec<C64> {
    let t = &g.torus;
    let plane = axis / 2;
    let b = g.field_strength(plane);
    let n = t.grid()[axis];
    let l = t.lengths()[axis];
    if axis % 2 == 0 && b != 0.0 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut buf = t.gather_lines(axis, f);
        let mut co = vec![0usize; t.real_dim()];
        let thetas: Vec<f64> = (0..t.line_count(axis))
            .map(|ln| {
                t.coords(t.line_base(axis, ln), &mut co);
                b * l * t.coordinate(axis + 1, co[axis + 1])
            })
            .collect();
        for (chunk, th) in buf.chunks_mut(n).zip(&thetas) {
            for (m, v) in chunk.iter_mut().enumerate() {
                *v *= Complex64::from_polar(1.0, -th * m as f64 / n as f64);
            }
        }
        t.fft_lines(axis, &mut buf, true);
        let period = two_pi * n as f64 / l;
        for (chunk, th) in buf.chunks_mut(n).zip(&thetas) {
            for (p, v) in chunk.iter_mut().enumerate() {
                let raw = (two_pi * p as f64 + th) / l;
                let mut k = raw.rem_euclid(period);
                if k > 0.5 * period {
                    k -= period;
                }
                *v *= C64::new(0.0, k / n as f64);
            }
        }
        t.fft_lines(axis, &mut buf, false);
        for (chunk, th) in buf.chunks_mut(n).zip(&thetas) {
            for (m, v) in chunk.iter_mut().enumerate() {
                *v *= Complex64::from_polar(1.0, th * m as f64 / n as f64);
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        t.scatter_lines(axis, &buf, &mut out);
        out
    } else {
        let mut out = f.to_vec();
        t.periodic_derivative(&mut out, axis, true);
        if axis % 2 == 1 && b != 0.0 {
            let mut co = vec![0usize; t.real_dim()];
            for (s, v) in out.iter_mut().enumerate() {
                t.coords(s, &mut co);
                let x = t.coordinate(axis - 1, co[axis - 1]);
                *v -= I * b * x * f[s];
            }
        }
        out
    }
}

/// `D_a ψ` for rank-`r` values laid out site-major.
pub fn cov_deriv(g: &GaugeField, axis: usize, psi: &[C64], r: usize) -> Vec<C64> {
    let sites = g.torus.sites();
    let mut out = vec![C64::new(0.0, 0.0); sites * r];
    if r == 1 {
        out = background_derivative(g, axis, psi);
    } else {
        for k in 0..r {
            let comp: Vec<C64> = psi.iter().skip(k).step_by(r).copied().collect();
            let d = background_derivative(g, axis, &comp);
            for s in 0..sites {
                out[s * r + k] = d[s];
            }
        }
    }
    let pot = &g.potential[axis];
    let mut buf = vec![C64::new(0.0, 0.0); r];
    for s in 0..sites {
        linalg::mat_mul_vec(r, pot.at(s), &psi[s * r..(s + 1) * r], &mut buf);
        for k in 0..r {
            out[s * r + k] -= I * buf[k];
        }
    }
    out
}

/// `(0,1)`-form with one rank-`r` component per complex plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Form01 {
    pub rank: usize,
    pub comps: Vec<Vec<C64>>,
}

impl Form01 {
    pub fn zeros(torus: &LatticeTorus, rank: usize) -> Self {
        Self { rank, comps: vec![vec![C64::new(0.0, 0.0); torus.sites() * rank]; torus.complex_dim()] }
    }

    /// `||ω||^2` with `|dz̄_j|^2 = 2/c`.
    pub fn norm_sq(&self, torus: &LatticeTorus) -> f64 {
        let s: f64 = self.comps.iter().flat_map(|c| c.iter()).map(|v| v.norm_sqr()).sum();
        2.0 / torus.metric_scale() * torus.cell_weight() * s
    }

    pub fn inner(&self, other: &Form01, torus: &LatticeTorus) -> C64 {
        let s: C64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * (2.0 / torus.metric_scale() * torus.cell_weight())
    }
}

fn combine(a: &[C64], b: &[C64], sign: f64) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + I * sign * y)).collect()
}

/// `∂̄_j ψ` for every plane `j`.
pub fn dbar_values(g: &GaugeField, psi: &[C64], r: usize) -> Vec<Vec<C64>> {
    (0..g.torus.complex_dim())
        .map(|j| {
            let dx = cov_deriv(g, 2 * j, psi, r);
            let dy = cov_deriv(g, 2 * j + 1, psi, r);
            combine(&dx, &dy, 1.0)
        })
        .collect()
}

/// `∂_j ψ` for every plane `j`.
pub fn del_values(g: &GaugeField, psi: &[C64], r: usize) -> Vec<Vec<C64>> {
    (0..g.torus.complex_dim())
        .map(|j| {
            let dx = cov_deriv(g, 2 * j, psi, r);
            let dy = cov_deriv(g, 2 * j + 1, psi, r);
            combine(&dx, &dy, -1.0)
        })
        .collect()
}

fn del_one(g: &GaugeField, j: usize, psi: &[C64], r: usize) -> Vec<C64> {
    let dx = cov_deriv(g, 2 * j, psi, r);
    let dy = cov_deriv(g, 2 * j + 1, psi, r);
    combine(&dx, &dy, -1.0)
}

fn dbar_one(g: &GaugeField, j: usize, psi: &[C64], r: usize) -> Vec<C64> {
    let dx = cov_deriv(g, 2 * j, psi, r);
    let dy = cov_deriv(g, 2 * j + 1, psi, r);
    combine(&dx, &dy, 1.0)
}

/// `∂̄_A φ`.
pub fn dbar(g: &GaugeField, phi: &Section) -> Form01 {
    Form01 { rank: phi.rank, comps: dbar_values(g, &phi.values, phi.rank) }
}

/// Formal adjoint of [`dbar`]: `∂̄*ω = -(2/c) Σ_j ∂_j ω_j`.
pub fn dbar_adjoint(g: &GaugeField, omega: &Form01) -> Section {
    let t = &g.torus;
    let r = omega.rank;
    let c = t.metric_scale();
    let mut out = vec![C64::new(0.0, 0.0); t.sites() * r];
    for (j, w) in omega.comps.iter().enumerate() {
        let d = del_one(g, j, w, r);
        for (o, v) in out.iter_mut().zip(&d) {
            *o -= v * (2.0 / c);
        }
    }
    Section { torus: t.clone(), rank: r, degree: FormDegree::Zero, values: out }
}

/// `∂̄*` on a unit-frame `(0,2)` coefficient: components `(∂_2 β, -∂_1 β)`.
pub fn dbar_star_02(g: &GaugeField, beta: &Section) -> Form01 {
    let r = beta.rank;
    let d1 = del_one(g, 0, &beta.values, r);
    let d2 = del_one(g, 1, &beta.values, r);
    Form01 { rank: r, comps: vec![d2, d1.iter().map(|v| -v).collect()] }
}

/// `∂̄` from `(0,1)` to `(0,2)`, as a unit-frame coefficient.
pub fn dbar_01(g: &GaugeField, omega: &Form01) -> Section {
    let t = &g.torus;
    let r = omega.rank;
    let c = t.metric_scale();
    let a = dbar_one(g, 0, &omega.comps[1], r);
    let b = dbar_one(g, 1, &omega.comps[0], r);
    let values = a.iter().zip(&b).map(|(x, y)| (x - y) * (2.0 / c)).collect();
    Section { torus: t.clone(), rank: r, degree: FormDegree::ZeroTwo, values }
}

/// `(2/c) Σ_j ∂̄_j^† ∂̄_j v` with the plain lattice inner product.
pub fn dbar_normal_values(g: &GaugeField, v: &[C64], r: usize) -> Vec<C64> {
    let c = g.torus.metric_scale();
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for j in 0..g.torus.complex_dim() {
        let d = dbar_one(g, j, v, r);
        let back = del_one(g, j, &d, r);
        for (o, x) in out.iter_mut().zip(&back) {
            *o -= x * (2.0 / c);
        }
    }
    out
}

/// `D_a φ` along every real axis.
pub fn d_cov(g: &GaugeField, phi: &Section) -> Vec<Vec<C64>> {
    (0..g.torus.real_dim()).map(|a| cov_deriv(g, a, &phi.values, phi.rank)).collect()
}

/// `||d_A φ||^2 = (1/c) Σ_a ||D_a φ||^2`.
pub fn d_cov_norm_sq(g: &GaugeField, phi: &Section) -> f64 {
    let t = &g.torus;
    let s: f64 = d_cov(g, phi).iter().flat_map(|c| c.iter()).map(|v| v.norm_sqr()).sum();
    t.cell_weight() * s / t.metric_scale()
}

/// Entrywise periodic derivative of a matrix field (Nyquist bin dropped).
pub fn matfield_derivative(t: &LatticeTorus, m: &MatField, axis: usize) -> MatField {
    let r = m.rank;
    let mut out = MatField::zeros(t.sites(), r);
    for i in 0..r {
        for j in 0..r {
            let mut e = m.entry(i, j);
            t.periodic_derivative(&mut e, axis, false);
            out.set_entry(i, j, &e);
        }
    }
    out
}

/// `D_a X = ∂_a X - i[a_a, X]` for an endomorphism field.
pub fn end_derivative(g: &GaugeField, x: &MatField, axis: usize) -> MatField {
    let t = &g.torus;
    let r = x.rank;
    let mut out = matfield_derivative(t, x, axis);
    if r > 1 {
        let p = &g.potential[axis];
        let mut ax = vec![C64::new(0.0, 0.0); r * r];
        let mut xa = vec![C64::new(0.0, 0.0); r * r];
        for s in 0..t.sites() {
            linalg::mat_mul(r, p.at(s), x.at(s), &mut ax);
            linalg::mat_mul(r, x.at(s), p.at(s), &mut xa);
            let o = out.at_mut(s);
            for k in 0..r * r {
                o[k] -= I * (ax[k] - xa[k]);
            }
        }
    }
    out
}

/// Curvature split by type. `components` hold `F_{ab}` (skew-Hermitian) for
/// `a < b`; `f02`/`f20` are coefficients of `dz̄1∧dz̄2` and `dz1∧dz2`.
#[derive(Debug, Clone)]
pub struct CurvatureDecomp {
    pub rank: usize,
    pub components: Vec<((usize, usize), MatField)>,
    pub lambda_f: MatField,
    pub f02: Option<MatField>,
    pub f20: Option<MatField>,
    /// Determinant-link flux of every plaquette, per complex plane.
    pub plaquette_flux: Vec<Vec<f64>>,
}

impl CurvatureDecomp {
    /// `iΛF`.
    pub fn i_lambda_f(&self) -> MatField {
        let mut m = self.lambda_f.clone();
        m.scale(I);
        m
    }

    /// `iΛF` of a rank-one connection as a real field.
    pub fn i_lambda_f_scalar(&self) -> Vec<f64> {
        self.lambda_f.entry(0, 0).iter().map(|v| (I * v).re).collect()
    }

    /// `F^{0,2}` in the unit frame, i.e. `(2/c) f02`.
    pub fn f02_unit(&self, torus: &LatticeTorus) -> Option<MatField> {
        self.f02.as_ref().map(|f| {
            let mut m = f.clone();
            m.scale(C64::new(2.0 / torus.metric_scale(), 0.0));
            m
        })
    }

    pub fn component(&self, a: usize, b: usize) -> Option<&MatField> {
        self.components.iter().find(|((x, y), _)| *x == a && *y == b).map(|(_, m)| m)
    }

    /// `||F||^2 = Σ_{a<b} ∫ |F_ab|^2 / c^2`.
    pub fn norm_sq(&self, torus: &LatticeTorus) -> f64 {
        let c = torus.metric_scale();
        let s: f64 = self.components.iter().map(|(_, m)| m.pointwise_norm_sq().iter().sum::<f64>()).sum();
        torus.cell_weight() * s / (c * c)
    }
}

/// Spectral curvature of a connection.
pub fn curvature(g: &GaugeField) -> CurvatureDecomp {
    let t = &g.torus;
    let r = g.rank();
    let d = t.real_dim();
    let c = t.metric_scale();
    let sites = t.sites();
    let mut derivs: Vec<Vec<Option<MatField>>> = vec![vec![None; d]; d];
    for a in 0..d {
        for b in 0..d {
            if a != b {
                derivs[a][b] = Some(matfield_derivative(t, &g.potential[b], a));
            }
        }
    }
    let mut components = Vec::new();
    let mut ab = vec![C64::new(0.0, 0.0); r * r];
    let mut ba = vec![C64::new(0.0, 0.0); r * r];
    for a in 0..d {
        for b in a + 1..d {
            let mut f = MatField::zeros(sites, r);
            let da_b = derivs[a][b].as_ref().unwrap();
            let db_a = derivs[b][a].as_ref().unwrap();
            let bg = if b == a + 1 && a % 2 == 0 { g.field_strength(a / 2) } else { 0.0 };
            for s in 0..sites {
                if r > 1 {
                    linalg::mat_mul(r, g.potential[a].at(s), g.potential[b].at(s), &mut ab);
                    linalg::mat_mul(r, g.potential[b].at(s), g.potential[a].at(s), &mut ba);
                }
                let o = f.at_mut(s);
                let x = da_b.at(s);
                let y = db_a.at(s);
                for k in 0..r * r {
                    o[k] = -I * (x[k] - y[k]);
                    if r > 1 {
                        o[k] -= ab[k] - ba[k];
                    }
                }
                for i in 0..r {
                    o[i * r + i] -= I * bg;
                }
            }
            components.push(((a, b), f));
        }
    }
    let get = |a: usize, b: usize| components.iter().find(|((x, y), _)| *x == a && *y == b).map(|(_, m)| m).unwrap();
    let mut lambda_f = MatField::zeros(sites, r);
    for j in 0..t.complex_dim() {
        let f = get(2 * j, 2 * j + 1);
        for (o, v) in lambda_f.data.iter_mut().zip(&f.data) {
            *o += v / c;
        }
    }
    let (f02, f20) = if t.complex_dim() == 2 {
        let (f02_, f03, f12, f13) = (get(0, 2), get(0, 3), get(1, 2), get(1, 3));
        let mut p = MatField::zeros(sites, r);
        let mut q = MatField::zeros(sites, r);
        for k in 0..sites * r * r {
            p.data[k] = 0.25 * (f02_.data[k] + I * f03.data[k] + I * f12.data[k] - f13.data[k]);
            q.data[k] = 0.25 * (f02_.data[k] - I * f03.data[k] - I * f12.data[k] - f13.data[k]);
        }
        (Some(p), Some(q))
    } else {
        (None, None)
    };
    let links = g.links();
    let plaquette_flux = (0..t.complex_dim()).map(|j| links.plaquette_flux(2 * j, 2 * j + 1)).collect();
    CurvatureDecomp { rank: r, components, lambda_f, f02, f20, plaquette_flux }
}

/// `iΛF_H` of the Chern connection of `(∂̄_A, H)`, with `H = H0 e^{2u} m`:
/// `iΛF_A + 2Δu - (2/c) Σ_j ∂̄_j (m^{-1} ∂_j m)`.
pub fn chern_i_lambda_f(g: &GaugeField, h: &MetricField) -> MatField {
    let t = &g.torus;
    let r = g.rank();
    let sites = t.sites();
    let base = curvature(g);
    let mut out = base.i_lambda_f();
    let lap = t.laplacian(&h.log_scale);
    for s in 0..sites {
        let o = out.at_mut(s);
        for i in 0..r {
            o[i * r + i] += 2.0 * lap[s];
        }
    }
    if let Some(m) = &h.matrix {
        let c = t.metric_scale();
        let mut minv = MatField::zeros(sites, r);
        for s in 0..sites {
            minv.at_mut(s).copy_from_slice(&linalg::mat_inverse(r, m.at(s)).expect("positive metric"));
        }
        // m^{-1}(∂̄∂m - ∂̄m m^{-1} ∂m): the bracket is exactly Hermitian on
        // the grid, so the result stays H-self-adjoint
        let mut tmp = vec![C64::new(0.0, 0.0); r * r];
        let mut prod = vec![C64::new(0.0, 0.0); r * r];
        let mut s_acc = MatField::zeros(sites, r);
        for j in 0..t.complex_dim() {
            let dx = end_derivative(g, m, 2 * j);
            let dy = end_derivative(g, m, 2 * j + 1);
            let dxx = end_derivative(g, &dx, 2 * j);
            let dyy = end_derivative(g, &dy, 2 * j + 1);
            for s in 0..sites {
                let del: Vec<C64> = dx.at(s).iter().zip(dy.at(s)).map(|(a, b)| 0.5 * (a - I * b)).collect();
                let delbar: Vec<C64> = dx.at(s).iter().zip(dy.at(s)).map(|(a, b)| 0.5 * (a + I * b)).collect();
                linalg::mat_mul(r, &delbar, minv.at(s), &mut tmp);
                linalg::mat_mul(r, &tmp, &del, &mut prod);
                let acc = s_acc.at_mut(s);
                for k in 0..r * r {
                    acc[k] += 0.25 * (dxx.at(s)[k] + dyy.at(s)[k]) - prod[k];
                }
            }
        }
        for s in 0..sites {
            linalg::mat_mul(r, minv.at(s), s_acc.at(s), &mut tmp);
            let o = out.at_mut(s);
            for k in 0..r * r {
                o[k] -= (2.0 / c) * tmp[k];
            }
        }
    }
    out
}

/// Curvature of the Chern connection of `(∂̄_A, H)`. Only `lambda_f` and the
/// `(0,2)` part are filled; the latter agrees with that of `A`.
pub fn chern_metric_curvature(g: &GaugeField, h: &MetricField) -> CurvatureDecomp {
    let base = curvature(g);
    let mut lambda_f = chern_i_lambda_f(g, h);
    lambda_f.scale(-I);
    CurvatureDecomp {
        rank: base.rank,
        components: Vec::new(),
        lambda_f,
        f02: base.f02,
        f20: None,
        plaquette_flux: Vec::new(),
    }
}

/// `Δ = iΛ∂̄∂` on functions.
pub fn laplacian(t: &LatticeTorus, u: &[f64]) -> Vec<f64> {
    t.laplacian(u)
}

/// Mean-zero `u` with `Δu = f`.
pub fn poisson_solve(t: &LatticeTorus, f: &[f64]) -> Result<Vec<f64>> {
    t.poisson_solve(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle_fields::{landau_sections, random_state, BundleSpec, Role};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_section(t: &LatticeTorus, r: usize, seed: u64) -> Section {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..t.sites() * r).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        Section { torus: t.clone(), rank: r, degree: FormDegree::Zero, values }
    }

    #[test]
    fn covariant_derivative_is_skew() {
        let t = LatticeTorus::new(1, &[16, 12], &[1.0, 1.3]).unwrap();
        let (g, _) = random_state(&t, &BundleSpec::line(2), 4, 0.3).unwrap();
        let u = random_section(&t, 1, 1);
        let v = random_section(&t, 1, 2);
        for a in 0..2 {
            let du = cov_deriv(&g, a, &u.values, 1);
            let dv = cov_deriv(&g, a, &v.values, 1);
            let lhs: C64 = du.iter().zip(&v.values).map(|(x, y)| x.conj() * y).sum();
            let rhs: C64 = u.values.iter().zip(&dv).map(|(x, y)| x.conj() * y).sum();
            assert!((lhs + rhs).norm() < 1e-9 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn dbar_adjoint_pairing() {
        let t = LatticeTorus::square(2, 8, 1.0).unwrap();
        let spec = BundleSpec::new(1, vec![1, 0], Role::Primary).unwrap();
        let (g, _) = random_state(&t, &spec, 9, 0.2).unwrap();
        let phi = random_section(&t, 1, 3);
        let mut omega = Form01::zeros(&t, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in omega.comps.iter_mut() {
            for v in c.iter_mut() {
                *v = C64::new(rng.gen(), rng.gen());
            }
        }
        let lhs = dbar(&g, &phi).inner(&omega, &t);
        let rhs = phi.inner(&dbar_adjoint(&g, &omega));
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn dbar_02_adjoint_pairing() {
        let t = LatticeTorus::square(2, 8, 1.0).unwrap();
        let spec = BundleSpec::new(1, vec![0, 0], Role::Primary).unwrap();
        let (g, _) = random_state(&t, &spec, 2, 0.3).unwrap();
        let mut omega = Form01::zeros(&t, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for c in omega.comps.iter_mut() {
            for v in c.iter_mut() {
                *v = C64::new(rng.gen(), rng.gen());
            }
        }
        let mut beta = random_section(&t, 1, 8);
        beta.degree = FormDegree::ZeroTwo;
        let lhs = dbar_01(&g, &omega).inner(&beta);
        let rhs = omega.inner(&dbar_star_02(&g, &beta), &t);
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn landau_sections_are_holomorphic() {
        for n in [1, 2, 3] {
            let t = LatticeTorus::new(1, &[32, 32], &[1.0, 1.0]).unwrap();
            let g = GaugeField::background(&t, &BundleSpec::line(n)).unwrap();
            let secs = landau_sections(&t, &[n], &[0.0]).unwrap();
            assert_eq!(secs.len(), n as usize);
            for f in secs {
                let s = Section { torus: t.clone(), rank: 1, degree: FormDegree::Zero, values: f };
                assert!(dbar(&g, &s).norm_sq(&t).sqrt() < 1e-9);
            }
        }
    }

    #[test]
    fn shifted_landau_matches_constant_twist() {
        let t = LatticeTorus::square(1, 32, 1.0).unwrap();
        let g0 = GaugeField::background(&t, &BundleSpec::line(1)).unwrap();
        let b = g0.field_strength(0);
        let shift = 0.37;
        let g = g0.with_constant_twist(1, &[b * shift]);
        let f = landau_sections(&t, &[1], &[shift]).unwrap().remove(0);
        let s = Section { torus: t.clone(), rank: 1, degree: FormDegree::Zero, values: f };
        assert!(dbar(&g, &s).norm_sq(&t).sqrt() < 1e-9);
    }

    #[test]
    fn background_curvature_is_constant() {
        let t = LatticeTorus::new(1, &[16, 16], &[1.0, 2.0]).unwrap();
        let g = GaugeField::background(&t, &BundleSpec::line(3)).unwrap();
        let f = curvature(&g).i_lambda_f_scalar();
        for v in f {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn abelian_commutator_matches_curvature() {
        let t = LatticeTorus::square(1, 32, 1.0).unwrap();
        let (g, phi) = random_state(&t, &BundleSpec::line(1), 21, 0.2).unwrap();
        let dx = cov_deriv(&g, 0, &phi.values, 1);
        let dy = cov_deriv(&g, 1, &phi.values, 1);
        let dxy = cov_deriv(&g, 0, &dy, 1);
        let dyx = cov_deriv(&g, 1, &dx, 1);
        let f = curvature(&g);
        let fxy = f.component(0, 1).unwrap();
        let err: f64 =
            (0..t.sites()).map(|s| (dxy[s] - dyx[s] - fxy.data[s] * phi.values[s]).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "commutator error {err}");
    }

    #[test]
    fn chern_curvature_conformal_shift() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let g = GaugeField::background(&t, &BundleSpec::line(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = t.random_real_field(&mut rng, 3, 0.5);
        let h = MetricField::conformal(&t, 1, u.clone());
        let lhs = chern_i_lambda_f(&g, &h).scalar_re();
        let lap = t.laplacian(&u);
        for s in 0..t.sites() {
            assert!((lhs[s] - 1.0 - 2.0 * lap[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_route_agrees_with_log_route() {
        let t = LatticeTorus::square(1, 32, 1.0).unwrap();
        let g = GaugeField::background(&t, &BundleSpec::new(2, vec![1], Role::Primary).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = t.random_real_field(&mut rng, 1, 0.15);
        let h1 = MetricField::conformal(&t, 2, u.clone());
        let mut m = MatField::zeros(t.sites(), 2);
        for s in 0..t.sites() {
            let e = (2.0 * u[s]).exp();
            m.at_mut(s)[0] = C64::new(e, 0.0);
            m.at_mut(s)[3] = C64::new(e, 0.0);
        }
        let h2 = MetricField::identity(&t, 2).with_matrix(m).unwrap();
        let a = chern_i_lambda_f(&g, &h1);
        let b = chern_i_lambda_f(&g, &h2);
        let err = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err} {:?} {:?}", &a.data[0..4], &b.data[0..4]);
    }
}
