//! Bundles, connections, sections and Hermitian metrics on a lattice torus.
//!
//! A connection is stored as a constant-curvature Landau background plus a
//! periodic Hermitian potential `a`, so `D = d - i(A_bg + a)`. For complex
//! plane `j` with flux `N_j` the background is `A_bg = B_j x_j dy_j` with
//! `B_j = 2π N_j / (L_{x_j} L_{y_j})`; sections are quasi-periodic,
//! `ψ(x_j + L, ·) = exp(i B_j L y_j) ψ`. Lattice link variables are derived
//! from this data on demand.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{LatticeTorus, C64};
use crate::linalg;
use crate::operators;

/// How a bundle enters a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Primary,
    Auxiliary,
    HalfCanonical,
    Tensor,
}

/// Topological data of a Hermitian bundle: rank and one flux per complex plane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub rank: usize,
    pub chern: Vec<i64>,
    pub role: Role,
}

impl BundleSpec {
    pub fn new(rank: usize, chern: Vec<i64>, role: Role) -> Result<Self> {
        if rank == 0 {
            return Err(VortexError::RankZero);
        }
        Ok(Self { rank, chern, role })
    }

    /// Line bundle on `T^2`.
    pub fn line(chern: i64) -> Self {
        Self { rank: 1, chern: vec![chern], role: Role::Primary }
    }

    /// `(1/2π) ∫ iΛF dvol` for the background connection.
    pub fn degree(&self, torus: &LatticeTorus) -> f64 {
        let c = torus.metric_scale();
        (0..torus.complex_dim())
            .map(|j| plane_field_strength(torus, j, self.chern[j]) / c)
            .sum::<f64>()
            * self.rank as f64
    }

    /// Slope `deg / rank`.
    pub fn slope(&self, torus: &LatticeTorus) -> f64 {
        self.degree(torus) / self.rank as f64
    }

    fn check(&self, torus: &LatticeTorus) -> Result<()> {
        if self.chern.len() != torus.complex_dim() {
            return Err(VortexError::SizeMismatch(format!(
                "bundle has {} fluxes for a torus of complex dimension {}",
                self.chern.len(),
                torus.complex_dim()
            )));
        }
        Ok(())
    }
}

/// Field strength of plane `j`.
pub fn plane_field_strength(torus: &LatticeTorus, plane: usize, flux: i64) -> f64 {
    let l = torus.lengths();
    2.0 * std::f64::consts::PI * flux as f64 / (l[2 * plane] * l[2 * plane + 1])
}

/// Per-site `r x r` complex matrices, row-major per site.
#[derive(Debug, Clone, PartialEq)]
pub struct MatField {
    pub rank: usize,
    pub data: Vec<C64>,
}

impl MatField {
    pub fn zeros(sites: usize, rank: usize) -> Self {
        Self { rank, data: vec![C64::new(0.0, 0.0); sites * rank * rank] }
    }

    pub fn identity(sites: usize, rank: usize) -> Self {
        let mut m = Self::zeros(sites, rank);
        for s in 0..sites {
            for i in 0..rank {
                m.data[s * rank * rank + i * rank + i] = C64::new(1.0, 0.0);
            }
        }
        m
    }

    /// Rank-one field from scalar values.
    pub fn from_scalar(values: &[f64]) -> Self {
        Self { rank: 1, data: values.iter().map(|&v| C64::new(v, 0.0)).collect() }
    }

    pub fn sites(&self) -> usize {
        self.data.len() / (self.rank * self.rank)
    }

    pub fn at(&self, site: usize) -> &[C64] {
        let r2 = self.rank * self.rank;
        &self.data[site * r2..(site + 1) * r2]
    }

    pub fn at_mut(&mut self, site: usize) -> &mut [C64] {
        let r2 = self.rank * self.rank;
        &mut self.data[site * r2..(site + 1) * r2]
    }

    /// Entry `(i, j)` at every site.
    pub fn entry(&self, i: usize, j: usize) -> Vec<C64> {
        let r = self.rank;
        (0..self.sites()).map(|s| self.data[s * r * r + i * r + j]).collect()
    }

    pub fn set_entry(&mut self, i: usize, j: usize, values: &[C64]) {
        let r = self.rank;
        for (s, v) in values.iter().enumerate() {
            self.data[s * r * r + i * r + j] = *v;
        }
    }

    /// Real part of the `(0,0)` entry; the natural view of a rank-one field.
    pub fn scalar_re(&self) -> Vec<f64> {
        self.entry(0, 0).iter().map(|v| v.re).collect()
    }

    pub fn scale(&mut self, a: C64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn add_assign(&mut self, other: &MatField) {
        for (v, w) in self.data.iter_mut().zip(&other.data) {
            *v += w;
        }
    }

    /// Hilbert-Schmidt norm squared at every site.
    pub fn pointwise_norm_sq(&self) -> Vec<f64> {
        let r2 = self.rank * self.rank;
        self.data.chunks(r2).map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect()
    }
}

/// Form degree of a section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormDegree {
    Zero,
    /// `(0,2)`-form coefficient in the unit frame `(c/2) dz̄1∧dz̄2`.
    ZeroTwo,
}

/// Section of a rank-`r` bundle (values site-major, component fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub torus: LatticeTorus,
    pub rank: usize,
    pub degree: FormDegree,
    pub values: Vec<C64>,
}

impl Section {
    pub fn zeros(torus: &LatticeTorus, rank: usize, degree: FormDegree) -> Self {
        Self { torus: torus.clone(), rank, degree, values: vec![C64::new(0.0, 0.0); torus.sites() * rank] }
    }

    pub fn from_values(torus: &LatticeTorus, rank: usize, degree: FormDegree, values: Vec<C64>) -> Result<Self> {
        if values.len() != torus.sites() * rank {
            return Err(VortexError::SizeMismatch(format!(
                "section needs {} values, got {}",
                torus.sites() * rank,
                values.len()
            )));
        }
        Ok(Self { torus: torus.clone(), rank, degree, values })
    }

    /// `|ψ|^2` at every site in the background metric.
    pub fn pointwise_norm_sq(&self) -> Vec<f64> {
        self.values.chunks(self.rank).map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect()
    }

    pub fn norm_sq(&self) -> f64 {
        self.torus.integrate(&self.pointwise_norm_sq())
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm_sq().iter().fold(0.0f64, |m, v| m.max(*v)).sqrt()
    }

    /// `∫ <self, other>`, antilinear in `self`.
    pub fn inner(&self, other: &Section) -> C64 {
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s * self.torus.cell_weight()
    }

    pub fn scaled(&self, a: C64) -> Section {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= a;
        }
        out
    }

    pub fn axpy(&mut self, a: C64, x: &Section) {
        for (v, w) in self.values.iter_mut().zip(&x.values) {
            *v += a * w;
        }
    }

    /// Component `k` as a scalar field.
    pub fn component(&self, k: usize) -> Vec<C64> {
        self.values.iter().skip(k).step_by(self.rank).copied().collect()
    }

    pub fn set_component(&mut self, k: usize, values: &[C64]) {
        for (s, v) in values.iter().enumerate() {
            self.values[s * self.rank + k] = *v;
        }
    }

    /// Multiply pointwise by a real function.
    pub fn mul_real(&self, f: &[f64]) -> Section {
        let mut out = self.clone();
        let r = self.rank;
        for (s, w) in f.iter().enumerate() {
            for k in 0..r {
                out.values[s * r + k] *= *w;
            }
        }
        out
    }
}

/// Connection on a bundle: Landau background plus periodic Hermitian potential.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField {
    pub torus: LatticeTorus,
    pub spec: BundleSpec,
    /// One Hermitian field per real axis.
    pub potential: Vec<MatField>,
}

/// Background connection of constant curvature with the given fluxes.
pub fn make_background(torus: &LatticeTorus, spec: &BundleSpec) -> Result<GaugeField> {
    GaugeField::background(torus, spec)
}

impl GaugeField {
    pub fn background(torus: &LatticeTorus, spec: &BundleSpec) -> Result<Self> {
        spec.check(torus)?;
        if spec.rank == 0 {
            return Err(VortexError::RankZero);
        }
        let potential = (0..torus.real_dim()).map(|_| MatField::zeros(torus.sites(), spec.rank)).collect();
        Ok(Self { torus: torus.clone(), spec: spec.clone(), potential })
    }

    pub fn rank(&self) -> usize {
        self.spec.rank
    }

    /// Background field strength of plane `j`.
    pub fn field_strength(&self, plane: usize) -> f64 {
        plane_field_strength(&self.torus, plane, self.spec.chern[plane])
    }

    /// Add a constant diagonal potential on `axis` (a flat twist per summand).
    pub fn with_constant_twist(mut self, axis: usize, diag: &[f64]) -> Self {
        let r = self.rank();
        for s in 0..self.torus.sites() {
            let m = self.potential[axis].at_mut(s);
            for i in 0..r {
                m[i * r + i] += C64::new(diag[i], 0.0);
            }
        }
        self
    }

    /// Potential of a rank-one connection on `axis`.
    pub fn potential_real(&self, axis: usize) -> Vec<f64> {
        self.potential[axis].scalar_re()
    }

    pub fn set_potential_real(&mut self, axis: usize, values: &[f64]) {
        self.potential[axis] = MatField::from_scalar(values);
    }

    /// Connection on `self ⊗ other` (or `self ⊗ other*`) for line bundles.
    pub fn tensor_line(&self, other: &GaugeField, dual_other: bool) -> Result<GaugeField> {
        if other.rank() != 1 {
            return Err(VortexError::Unsupported("tensor product with a non-line bundle".into()));
        }
        let sign = if dual_other { -1.0 } else { 1.0 };
        let chern: Vec<i64> = self
            .spec
            .chern
            .iter()
            .zip(&other.spec.chern)
            .map(|(a, b)| a + (sign as i64) * b)
            .collect();
        let spec = BundleSpec { rank: self.rank(), chern, role: Role::Tensor };
        let mut out = GaugeField::background(&self.torus, &spec)?;
        let r = self.rank();
        for a in 0..self.torus.real_dim() {
            let mut p = self.potential[a].clone();
            let q = other.potential_real(a);
            for s in 0..self.torus.sites() {
                let m = p.at_mut(s);
                for i in 0..r {
                    m[i * r + i] += C64::new(sign * q[s], 0.0);
                }
            }
            out.potential[a] = p;
        }
        Ok(out)
    }

    /// Smooth abelian gauge transformation `ψ -> e^{iχ} ψ`, `a -> a + dχ`.
    pub fn gauge_transform_abelian(&self, chi: &[f64], sections: &[Section]) -> (GaugeField, Vec<Section>) {
        let mut g = self.clone();
        let r = self.rank();
        for a in 0..self.torus.real_dim() {
            let d = self.torus.derivative(chi, a);
            for s in 0..self.torus.sites() {
                let m = g.potential[a].at_mut(s);
                for i in 0..r {
                    m[i * r + i] += C64::new(d[s], 0.0);
                }
            }
        }
        let secs = sections
            .iter()
            .map(|sec| {
                let mut out = sec.clone();
                for (s, c) in chi.iter().enumerate() {
                    let ph = Complex64::from_polar(1.0, *c);
                    for k in 0..sec.rank {
                        out.values[s * sec.rank + k] *= ph;
                    }
                }
                out
            })
            .collect();
        (g, secs)
    }

    /// Gauge transformation by `g = exp(iχ)` for a Hermitian field `χ`:
    /// `a -> g a g^{-1} + i g d(g^{-1})`, `ψ -> g ψ`.
    pub fn gauge_transform(&self, chi: &MatField, sections: &[Section]) -> (GaugeField, Vec<Section>) {
        let r = self.rank();
        let sites = self.torus.sites();
        let mut gm = MatField::zeros(sites, r);
        let mut ginv = MatField::zeros(sites, r);
        for s in 0..sites {
            gm.at_mut(s).copy_from_slice(&linalg::herm_fn_c(r, chi.at(s), |x| Complex64::from_polar(1.0, x)));
            ginv.at_mut(s).copy_from_slice(&linalg::herm_fn_c(r, chi.at(s), |x| Complex64::from_polar(1.0, -x)));
        }
        let mut out = self.clone();
        for a in 0..self.torus.real_dim() {
            let dginv = operators::matfield_derivative(&self.torus, &ginv, a);
            let mut tmp = vec![C64::new(0.0, 0.0); r * r];
            let mut tmp2 = vec![C64::new(0.0, 0.0); r * r];
            for s in 0..sites {
                linalg::mat_mul(r, gm.at(s), self.potential[a].at(s), &mut tmp);
                linalg::mat_mul(r, &tmp, ginv.at(s), &mut tmp2);
                linalg::mat_mul(r, gm.at(s), dginv.at(s), &mut tmp);
                let m = out.potential[a].at_mut(s);
                for k in 0..r * r {
                    m[k] = tmp2[k] + C64::new(0.0, 1.0) * tmp[k];
                }
                // keep the potential exactly Hermitian
                for i in 0..r {
                    for j in i..r {
                        let h = 0.5 * (m[i * r + j] + m[j * r + i].conj());
                        m[i * r + j] = h;
                        m[j * r + i] = h.conj();
                    }
                }
            }
        }
        let secs = sections
            .iter()
            .map(|sec| {
                let mut o = sec.clone();
                let mut buf = vec![C64::new(0.0, 0.0); r];
                for s in 0..sites {
                    linalg::mat_mul_vec(r, gm.at(s), &sec.values[s * r..(s + 1) * r], &mut buf);
                    o.values[s * r..(s + 1) * r].copy_from_slice(&buf);
                }
                o
            })
            .collect();
        (out, secs)
    }

    /// Link variables `U_a(n)` transporting from `n + e_a` back to `n`.
    pub fn links(&self) -> LinkField {
        let t = &self.torus;
        let r = self.rank();
        let d = t.real_dim();
        let mut links = Vec::with_capacity(d);
        let mut co = vec![0usize; d];
        for a in 0..d {
            let h = t.spacing(a);
            let plane = a / 2;
            let b = self.field_strength(plane);
            let mut lf = MatField::zeros(t.sites(), r);
            for s in 0..t.sites() {
                t.coords(s, &mut co);
                let bg = if a % 2 == 0 {
                    if co[a] + 1 == t.grid()[a] {
                        let y = t.coordinate(a + 1, co[a + 1]);
                        Complex64::from_polar(1.0, b * t.lengths()[a] * y)
                    } else {
                        C64::new(1.0, 0.0)
                    }
                } else {
                    let x = t.coordinate(a - 1, co[a - 1]);
                    Complex64::from_polar(1.0, -h * b * x)
                };
                let u = linalg::herm_fn_c(r, self.potential[a].at(s), |v| Complex64::from_polar(1.0, -h * v));
                let m = lf.at_mut(s);
                for k in 0..r * r {
                    m[k] = bg * u[k];
                }
            }
            links.push(lf);
        }
        LinkField { torus: t.clone(), rank: r, links }
    }
}

/// Lattice link variables, one unitary matrix per site and axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkField {
    pub torus: LatticeTorus,
    pub rank: usize,
    pub links: Vec<MatField>,
}

fn det(r: usize, m: &[C64]) -> C64 {
    match r {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => linalg::to_dmatrix(r, m).determinant(),
    }
}

impl LinkField {
    /// Flux `-arg det P` of every plaquette in the `(a, b)` plane.
    pub fn plaquette_flux(&self, a: usize, b: usize) -> Vec<f64> {
        let t = &self.torus;
        (0..t.sites())
            .map(|s| {
                let sa = t.neighbor(s, a);
                let sb = t.neighbor(s, b);
                let p = det(self.rank, self.links[a].at(s))
                    * det(self.rank, self.links[b].at(sa))
                    * det(self.rank, self.links[a].at(sb)).conj()
                    * det(self.rank, self.links[b].at(s)).conj();
                -p.arg()
            })
            .collect()
    }

    /// Integer flux through each complex plane.
    pub fn chern_number(&self) -> Result<Vec<i64>> {
        let t = &self.torus;
        let d = t.real_dim();
        let mut out = Vec::new();
        let mut co = vec![0usize; d];
        for j in 0..t.complex_dim() {
            let (a, b) = (2 * j, 2 * j + 1);
            let flux = self.plaquette_flux(a, b);
            let worst = flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if worst > std::f64::consts::FRAC_PI_2 {
                return Err(VortexError::NearBranchCut { angle: worst });
            }
            // sum over each (a, b) slice; every slice must carry the same integer
            let slices = t.sites() / (t.grid()[a] * t.grid()[b]);
            let mut totals = vec![0.0; slices];
            for (s, f) in flux.iter().enumerate() {
                t.coords(s, &mut co);
                let mut key = 0usize;
                for k in 0..d {
                    if k != a && k != b {
                        key = key * t.grid()[k] + co[k];
                    }
                }
                totals[key] += f;
            }
            let n = (totals[0] / (2.0 * std::f64::consts::PI)).round();
            for tot in &totals {
                let v = tot / (2.0 * std::f64::consts::PI);
                if (v - n).abs() > 1e-6 {
                    return Err(VortexError::NearBranchCut { angle: worst });
                }
            }
            out.push(n as i64);
        }
        Ok(out)
    }

    /// `U_a(n) -> g(n) U_a(n) g(n + e_a)^{-1}` for site unitaries `g`.
    pub fn gauge_transform(&self, g: &MatField) -> LinkField {
        let t = &self.torus;
        let r = self.rank;
        let mut out = self.clone();
        let mut tmp = vec![C64::new(0.0, 0.0); r * r];
        for a in 0..t.real_dim() {
            for s in 0..t.sites() {
                let sa = t.neighbor(s, a);
                linalg::mat_mul(r, g.at(s), self.links[a].at(s), &mut tmp);
                let ginv = linalg::mat_adjoint(r, g.at(sa));
                linalg::mat_mul(r, &tmp, &ginv, out.links[a].at_mut(s));
            }
        }
        out
    }
}

/// Integer flux per complex plane, from the lattice links.
pub fn chern_number(gauge: &GaugeField) -> Result<Vec<i64>> {
    gauge.links().chern_number()
}

/// Hermitian metric `H = H0 · e^{2u} · m` relative to the background metric `H0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub torus: LatticeTorus,
    pub rank: usize,
    pub log_scale: Vec<f64>,
    pub matrix: Option<MatField>,
}

impl MetricField {
    pub fn identity(torus: &LatticeTorus, rank: usize) -> Self {
        Self { torus: torus.clone(), rank, log_scale: vec![0.0; torus.sites()], matrix: None }
    }

    /// `H0 e^{2u}`.
    pub fn conformal(torus: &LatticeTorus, rank: usize, u: Vec<f64>) -> Self {
        Self { torus: torus.clone(), rank, log_scale: u, matrix: None }
    }

    pub fn with_matrix(mut self, m: MatField) -> Result<Self> {
        check_positive(&m)?;
        self.matrix = Some(m);
        Ok(self)
    }

    /// `H e^{w}`.
    pub fn times_exp(&self, w: &[f64]) -> Self {
        let mut out = self.clone();
        for (u, x) in out.log_scale.iter_mut().zip(w) {
            *u += 0.5 * x;
        }
        out
    }

    /// Matrix of `H` in the background unitary frame at `site`.
    pub fn frame_matrix(&self, site: usize) -> Vec<C64> {
        let r = self.rank;
        let e = (2.0 * self.log_scale[site]).exp();
        match &self.matrix {
            Some(m) => m.at(site).iter().map(|v| v * e).collect(),
            None => {
                let mut out = vec![C64::new(0.0, 0.0); r * r];
                for i in 0..r {
                    out[i * r + i] = C64::new(e, 0.0);
                }
                out
            }
        }
    }

    /// `|φ|_H^2` at every site.
    pub fn norm_sq(&self, phi: &Section) -> Vec<f64> {
        let r = self.rank;
        match &self.matrix {
            None => phi
                .pointwise_norm_sq()
                .iter()
                .zip(&self.log_scale)
                .map(|(p, u)| p * (2.0 * u).exp())
                .collect(),
            Some(_) => {
                let mut buf = vec![C64::new(0.0, 0.0); r];
                (0..self.torus.sites())
                    .map(|s| {
                        let m = self.frame_matrix(s);
                        let v = &phi.values[s * r..(s + 1) * r];
                        linalg::mat_mul_vec(r, &m, v, &mut buf);
                        v.iter().zip(&buf).map(|(a, b)| (a.conj() * b).re).sum()
                    })
                    .collect()
            }
        }
    }

    pub fn check_positive(&self) -> Result<()> {
        match &self.matrix {
            Some(m) => check_positive(m),
            None => Ok(()),
        }
    }
}

fn check_positive(m: &MatField) -> Result<()> {
    let r = m.rank;
    for s in 0..m.sites() {
        let a = m.at(s);
        for i in 0..r {
            for j in 0..r {
                if (a[i * r + j] - a[j * r + i].conj()).norm() > 1e-10 * (1.0 + a[i * r + j].norm()) {
                    return Err(VortexError::NonPositiveMetric(s));
                }
            }
        }
        let (vals, _) = linalg::herm_eigen(r, a);
        if !(vals[0] > 0.0) {
            return Err(VortexError::NonPositiveMetric(s));
        }
    }
    Ok(())
}

/// Lowest-Landau-level sections of the background in closed form.
///
/// Plane `j` with flux `N_j >= 0` contributes `max(N_j, 1)` theta-type
/// functions; `shifts[j]` moves their centers by `-s` in `x_j`, which is the
/// holomorphic structure obtained from a constant potential `a_{y_j} = B_j s`.
/// Products over planes span `H^0` of the background. Each is unit-normalized.
pub fn landau_sections(torus: &LatticeTorus, chern: &[i64], shifts: &[f64]) -> Result<Vec<Vec<C64>>> {
    let n = torus.complex_dim();
    let mut per_plane: Vec<Vec<Vec<C64>>> = Vec::new();
    let mut co = vec![0usize; torus.real_dim()];
    for j in 0..n {
        let flux = chern[j];
        if flux < 0 {
            return Err(VortexError::Unsupported("holomorphic sections need non-negative flux".into()));
        }
        let (ax, ay) = (2 * j, 2 * j + 1);
        let (lx, ly) = (torus.lengths()[ax], torus.lengths()[ay]);
        let count = flux.max(1) as usize;
        let mut fs = Vec::new();
        for p in 0..count {
            let f: Vec<C64> = (0..torus.sites())
                .map(|s| {
                    torus.coords(s, &mut co);
                    let x = torus.coordinate(ax, co[ax]) + shifts[j];
                    let y = torus.coordinate(ay, co[ay]);
                    if flux == 0 {
                        return C64::new(1.0, 0.0);
                    }
                    theta_value(flux, lx, ly, p as i64, x, y)
                })
                .collect();
            fs.push(f);
        }
        per_plane.push(fs);
    }
    let mut out: Vec<Vec<C64>> = vec![vec![C64::new(1.0, 0.0); torus.sites()]];
    for fs in per_plane {
        let mut next = Vec::new();
        for a in &out {
            for f in &fs {
                next.push(a.iter().zip(f).map(|(x, y)| x * y).collect::<Vec<C64>>());
            }
        }
        out = next;
    }
    for f in &mut out {
        let nrm = torus.integrate(&f.iter().map(|v| v.norm_sqr()).collect::<Vec<_>>()).sqrt();
        for v in f.iter_mut() {
            *v /= nrm;
        }
    }
    Ok(out)
}

fn theta_value(flux: i64, lx: f64, ly: f64, p: i64, x: f64, y: f64) -> C64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let b = two_pi * flux as f64 / (lx * ly);
    let w = (80.0 / b).sqrt();
    let nf = flux as f64;
    let lo = ((x - w) * nf / lx).floor() as i64 - 1;
    let hi = ((x + w) * nf / lx).ceil() as i64 + 1;
    let mut acc = C64::new(0.0, 0.0);
    for m in lo..=hi {
        if (m - p).rem_euclid(flux) != 0 {
            continue;
        }
        let xm = m as f64 * lx / nf;
        let g = (-0.5 * b * (x - xm).powi(2)).exp();
        acc += Complex64::from_polar(g, two_pi * m as f64 * y / ly);
    }
    acc
}

/// Product over planes of the first lowest-level function, conjugated on
/// planes with negative flux. A valid section of the background bundle.
pub fn background_profile(torus: &LatticeTorus, chern: &[i64]) -> Result<Vec<C64>> {
    let zero = vec![0.0; torus.complex_dim()];
    let mut vals = vec![C64::new(1.0, 0.0); torus.sites()];
    for (j, c) in chern.iter().enumerate() {
        let mut fl = vec![0i64; torus.complex_dim()];
        fl[j] = c.abs();
        let pb = landau_sections(torus, &fl, &zero)?;
        for (v, w) in vals.iter_mut().zip(&pb[0]) {
            *v *= if *c < 0 { w.conj() } else { *w };
        }
    }
    Ok(vals)
}

/// Seeded random connection and section: a band-limited periodic potential
/// and a section built on the lowest Landau level. `amplitude = 0` returns
/// the background and the zero section.
pub fn random_state(torus: &LatticeTorus, spec: &BundleSpec, seed: u64, amplitude: f64) -> Result<(GaugeField, Section)> {
    let mut g = GaugeField::background(torus, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = spec.rank;
    for a in 0..torus.real_dim() {
        let mut m = MatField::zeros(torus.sites(), r);
        for i in 0..r {
            let d = torus.random_real_field(&mut rng, 2, amplitude);
            m.set_entry(i, i, &d.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>());
            for j in i + 1..r {
                let o = torus.random_complex_field(&mut rng, 2, amplitude);
                m.set_entry(i, j, &o);
                m.set_entry(j, i, &o.iter().map(|v| v.conj()).collect::<Vec<_>>());
            }
        }
        g.potential[a] = m;
    }
    let profile = background_profile(torus, &spec.chern)?;
    let mut sec = Section::zeros(torus, r, FormDegree::Zero);
    for k in 0..r {
        let f = torus.random_complex_field(&mut rng, 2, 0.5);
        let vals: Vec<C64> =
            profile.iter().zip(&f).map(|(b, e)| b * (C64::new(1.0, 0.0) + e) * amplitude).collect();
        sec.set_component(k, &vals);
    }
    Ok((g, sec))
}

/// Basis of approximately holomorphic sections with the smallest singular
/// values of `∂̄_A`.
#[derive(Debug, Clone)]
pub struct HolomorphicBasis {
    pub sections: Vec<Section>,
    /// Smallest `count + 1` singular values, ascending.
    pub singular_values: Vec<f64>,
}

/// Lowest `count` right singular vectors of `∂̄_A` on rank-`r` sections by
/// shifted inverse subspace iteration with Rayleigh-Ritz.
pub fn project_holomorphic(gauge: &GaugeField, count: usize, tol: f64) -> Result<HolomorphicBasis> {
    let t = &gauge.torus;
    let r = gauge.rank();
    let n = t.sites() * r;
    let block = (count + 3).min(n);
    let shift = 0.1;
    let apply = |v: &[C64]| operators::dbar_normal_values(gauge, v, r);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut vecs: Vec<Vec<C64>> = Vec::with_capacity(block);
    let nonneg: Vec<i64> = gauge.spec.chern.iter().map(|c| (*c).max(0)).collect();
    if let Ok(lll) = landau_sections(t, &nonneg, &vec![0.0; t.complex_dim()]) {
        for f in lll.iter().take(count) {
            for k in 0..r {
                let mut v = vec![C64::new(0.0, 0.0); n];
                for s in 0..t.sites() {
                    v[s * r + k] = f[s];
                }
                vecs.push(v);
            }
        }
    }
    vecs.truncate(block);
    while vecs.len() < block {
        let mut v = Vec::with_capacity(n);
        for _ in 0..r {
            v.extend(t.random_complex_field(&mut rng, 3, 1.0));
        }
        // interleave components
        let mut w = vec![C64::new(0.0, 0.0); n];
        for k in 0..r {
            for s in 0..t.sites() {
                w[s * r + k] = v[k * t.sites() + s];
            }
        }
        vecs.push(w);
    }
    let mut vals = vec![0.0; block];
    orthonormalize(&mut vecs);
    for _outer in 0..80 {
        let next: Vec<Vec<C64>> = vecs
            .iter()
            .zip(&vals)
            .map(|(v, l)| {
                let x0: Vec<C64> = v.iter().map(|z| z / (l + shift)).collect();
                linalg::cg_complex(|x| add_shift(&apply(x), x, shift), v, &x0, 1e-13, 4000)
            })
            .collect();
        vecs = next;
        orthonormalize(&mut vecs);
        let tv: Vec<Vec<C64>> = vecs.iter().map(|v| apply(v)).collect();
        let mut g = nalgebra::DMatrix::<C64>::zeros(block, block);
        for i in 0..block {
            for j in 0..block {
                g[(i, j)] = vecs[i].iter().zip(&tv[j]).map(|(a, b)| a.conj() * b).sum();
            }
        }
        let flat: Vec<C64> = linalg::from_dmatrix(&g);
        let (ev, q) = linalg::herm_eigen(block, &flat);
        let rot = |src: &Vec<Vec<C64>>| -> Vec<Vec<C64>> {
            (0..block)
                .map(|c| {
                    let mut out = vec![C64::new(0.0, 0.0); n];
                    for i in 0..block {
                        let w = q[(i, c)];
                        for (o, x) in out.iter_mut().zip(&src[i]) {
                            *o += w * x;
                        }
                    }
                    out
                })
                .collect()
        };
        vecs = rot(&vecs);
        let tv = rot(&tv);
        vals = ev.clone();
        let wanted = (count + 1).min(block);
        let done = (0..wanted).all(|i| {
            let res: f64 = tv[i].iter().zip(&vecs[i]).map(|(a, b)| (a - b * vals[i]).norm_sqr()).sum::<f64>().sqrt();
            res < tol * (1.0 + vals[i].abs())
        });
        if done {
            break;
        }
    }
    let svals: Vec<f64> = vals.iter().take(count + 1).map(|v| v.max(0.0).sqrt()).collect();
    if count > 0 && count < svals.len() && (svals[count] - svals[count - 1]).abs() < 1e-12 {
        return Err(VortexError::DegenerateSpectrum { count, a: svals[count - 1], b: svals[count] });
    }
    let w = t.cell_weight().sqrt();
    let sections = vecs
        .into_iter()
        .take(count)
        .map(|v| Section {
            torus: t.clone(),
            rank: r,
            degree: FormDegree::Zero,
            values: v.into_iter().map(|z| z / w).collect(),
        })
        .collect();
    Ok(HolomorphicBasis { sections, singular_values: svals })
}

fn add_shift(a: &[C64], x: &[C64], s: f64) -> Vec<C64> {
    a.iter().zip(x).map(|(p, q)| p + q * s).collect()
}

fn orthonormalize(vecs: &mut [Vec<C64>]) {
    for pass in 0..2 {
        let _ = pass;
        for i in 0..vecs.len() {
            for j in 0..i {
                let (head, tail) = vecs.split_at_mut(i);
                let p: C64 = head[j].iter().zip(tail[0].iter()).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in tail[0].iter_mut().zip(head[j].iter()) {
                    *x -= p * y;
                }
            }
            let nrm: f64 = vecs[i].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            for x in vecs[i].iter_mut() {
                *x /= nrm;
            }
        }
    }
}
