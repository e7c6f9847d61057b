//! Passing between the `t`-equation and the `τ`-equation, spinor bundle
//! arithmetic and parameter builders.

use serde::{Deserialize, Serialize};

use crate::bundle_fields::{BundleSpec, GaugeField, MetricField, Role, Section};
use crate::error::{Result, VortexError};
use crate::geometry::{LatticeTorus, C64};
use crate::operators;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `u` with `Δu = τ - t` and `∫u = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UTransform {
    pub u: Vec<f64>,
    pub tau: f64,
    pub t: Vec<f64>,
    /// `sup |Δu - (τ - t)|`.
    pub residual: f64,
}

pub fn u_from_t(torus: &LatticeTorus, t: &[f64]) -> Result<UTransform> {
    if t.len() != torus.sites() {
        return Err(VortexError::SizeMismatch(format!("{} values for {} sites", t.len(), torus.sites())));
    }
    let tau = torus.mean(t);
    let rhs: Vec<f64> = t.iter().map(|v| tau - v).collect();
    let u = torus.poisson_solve(&rhs)?;
    let lap = torus.laplacian(&u);
    let residual = lap.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(UTransform { u, tau, t: t.to_vec(), residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TToTau,
    TauToT,
}

/// Forward: `(H, φ) -> (H e^u, e^{-u/2} φ)`. Backward is its inverse.
pub fn apply_u_transform(h: &MetricField, phi: &Section, u: &[f64], direction: Direction) -> (MetricField, Section) {
    let sign = match direction {
        Direction::TToTau => 1.0,
        Direction::TauToT => -1.0,
    };
    let w: Vec<f64> = u.iter().map(|v| sign * v).collect();
    let scale: Vec<f64> = w.iter().map(|v| (-0.5 * v).exp()).collect();
    (h.times_exp(&w), phi.mul_real(&scale))
}

/// `||∂̄φ_u + ½ (∂̄u) φ_u||` with `φ_u = e^{-u/2} φ`.
pub fn dbar_defect(g: &GaugeField, phi: &Section, u: &[f64]) -> f64 {
    let scale: Vec<f64> = u.iter().map(|v| (-0.5 * v).exp()).collect();
    twisted_dbar_norm(g, &phi.mul_real(&scale), u)
}

/// `||∂̄φ + ½ (∂̄u) φ||`.
pub fn twisted_dbar_norm(g: &GaugeField, phi_u: &Section, u: &[f64]) -> f64 {
    let t = &g.torus;
    let mut w = operators::dbar(g, phi_u);
    let r = phi_u.rank;
    for j in 0..t.complex_dim() {
        let dx = t.derivative(u, 2 * j);
        let dy = t.derivative(u, 2 * j + 1);
        for s in 0..t.sites() {
            let du = 0.5 * (C64::new(dx[s], 0.0) + I * dy[s]);
            for k in 0..r {
                w.comps[j][s * r + k] += 0.5 * du * phi_u.values[s * r + k];
            }
        }
    }
    w.norm_sq(t).sqrt()
}

/// Topology of `(K ⊗ L)^{1/2}`.
pub fn hat_bundle(l: &BundleSpec, k: &BundleSpec) -> Result<BundleSpec> {
    let mut chern = Vec::with_capacity(l.chern.len());
    for (a, b) in l.chern.iter().zip(&k.chern) {
        if (a + b) % 2 != 0 {
            return Err(VortexError::ParityError(a + b));
        }
        chern.push((a + b) / 2);
    }
    BundleSpec::new(l.rank, chern, Role::HalfCanonical)
}

/// Connection on `(K ⊗ L)^{1/2}` induced by `A` on `L` and `a_K` on `K`;
/// its curvature is `½ (F_A + F_{a_K})`.
pub fn hat_connection(a: &GaugeField, a_k: &GaugeField) -> Result<GaugeField> {
    let spec = hat_bundle(&a.spec, &a_k.spec)?;
    let mut out = GaugeField::background(&a.torus, &spec)?;
    for ax in 0..a.torus.real_dim() {
        let v: Vec<f64> =
            a.potential_real(ax).iter().zip(a_k.potential_real(ax)).map(|(x, y)| 0.5 * (x + y)).collect();
        out.set_potential_real(ax, &v);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum Perturbation<'a> {
    /// `t = f - s/2`.
    ScalarCurvature { f: &'a [f64], s: &'a [f64] },
    /// `t = f + (i/2) ΛF_b`.
    FixedConnection { f: &'a [f64], b: &'a GaugeField },
}

/// The function `t` of the vortex equation obtained from a monopole perturbation.
pub fn parameter_from_perturbation(p: Perturbation<'_>) -> Result<Vec<f64>> {
    match p {
        Perturbation::ScalarCurvature { f, s } => {
            if f.len() != s.len() {
                return Err(VortexError::SizeMismatch("f and s differ in length".into()));
            }
            Ok(f.iter().zip(s).map(|(a, b)| a - 0.5 * b).collect())
        }
        Perturbation::FixedConnection { f, b } => {
            let t = &b.torus;
            let curv = operators::curvature(b);
            if let Some(f02) = curv.f02_unit(t) {
                let n = t.integrate(&f02.pointwise_norm_sq()).sqrt();
                if n > 1e-8 {
                    return Err(VortexError::NonIntegrableFrame(n));
                }
            }
            let ilf = curv.i_lambda_f_scalar();
            Ok(f.iter().zip(&ilf).map(|(a, b)| a + 0.5 * b).collect())
        }
    }
}

/// `σ = 4π / (τ - τ')`.
pub fn sigma_from(tau: f64, tau_prime: f64) -> Result<f64> {
    crate::functionals::ParamSet::sigma_from_taus(tau, tau_prime)
}

/// For the framed equation with frame metric `h(f, f) = e^u`, the function
/// `t = τ - Δu` of the equivalent `t`-equation for `K = H e^{-u}`.
pub fn t_from_frame(torus: &LatticeTorus, u: &[f64], tau: f64) -> Vec<f64> {
    torus.laplacian(u).iter().map(|v| tau - v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle_fields::{random_state, FormDegree};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_t_gives_zero_u() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let tr = u_from_t(&t, &vec![2.0; t.sites()]).unwrap();
        assert!(tr.u.iter().all(|v| v.abs() < 1e-14));
        assert!((tr.tau - 2.0).abs() < 1e-14);
    }

    #[test]
    fn single_mode_matches_symbol() {
        let t = LatticeTorus::square(1, 32, 1.0).unwrap();
        let mut co = [0usize; 2];
        let k = 2.0 * std::f64::consts::PI;
        let a = 0.3;
        let tf: Vec<f64> = (0..t.sites())
            .map(|s| {
                t.coords(s, &mut co);
                2.0 + a * (k * t.coordinate(0, co[0])).cos()
            })
            .collect();
        let tr = u_from_t(&t, &tf).unwrap();
        let lambda = k * k / (2.0 * t.metric_scale());
        for s in 0..t.sites() {
            t.coords(s, &mut co);
            let expect = -a * (k * t.coordinate(0, co[0])).cos() / lambda;
            assert!((tr.u[s] - expect).abs() < 1e-12);
        }
        assert!(tr.residual < 1e-12);
    }

    #[test]
    fn round_trip_is_identity() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, phi) = random_state(&t, &BundleSpec::line(1), 2, 1.0).unwrap();
        let h = MetricField::conformal(&t, 1, t.random_real_field(&mut rng, 3, 0.4));
        let u = t.random_real_field(&mut rng, 3, 0.7);
        let (k, pu) = apply_u_transform(&h, &phi, &u, Direction::TToTau);
        let (h2, p2) = apply_u_transform(&k, &pu, &u, Direction::TauToT);
        for s in 0..t.sites() {
            assert!((h2.log_scale[s] - h.log_scale[s]).abs() < 1e-13);
            assert!((p2.values[s] - phi.values[s]).norm() < 1e-13);
        }
    }

    #[test]
    fn defect_scales_with_constant_u() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let (g, phi) = random_state(&t, &BundleSpec::line(1), 2, 1.0).unwrap();
        let d0 = dbar_defect(&g, &phi, &vec![0.0; t.sites()]);
        let direct = operators::dbar(&g, &phi).norm_sq(&t).sqrt();
        assert!((d0 - direct).abs() < 1e-12);
        let c = 0.8;
        let dc = dbar_defect(&g, &phi, &vec![c; t.sites()]);
        assert!((dc - (-c / 2.0f64).exp() * d0).abs() < 1e-12 * d0);
    }

    #[test]
    fn hat_bundle_parity() {
        let k = BundleSpec::line(0);
        assert_eq!(hat_bundle(&BundleSpec::line(2), &k).unwrap().chern, vec![1]);
        assert!(matches!(hat_bundle(&BundleSpec::line(1), &k), Err(VortexError::ParityError(1))));
    }

    #[test]
    fn hat_curvature_is_half() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let (a, _) = random_state(&t, &BundleSpec::line(2), 3, 0.4).unwrap();
        let ak = GaugeField::background(&t, &BundleSpec::line(0)).unwrap();
        let h = hat_connection(&a, &ak).unwrap();
        let fa = operators::curvature(&a).i_lambda_f_scalar();
        let fh = operators::curvature(&h).i_lambda_f_scalar();
        for s in 0..t.sites() {
            assert!((fh[s] - 0.5 * fa[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_builders() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let f = vec![0.5; t.sites()];
        let zero = vec![0.0; t.sites()];
        let out = parameter_from_perturbation(Perturbation::ScalarCurvature { f: &f, s: &zero }).unwrap();
        assert!(out.iter().all(|v| (*v - 0.5).abs() < 1e-15));
        let b = GaugeField::background(&t, &BundleSpec::line(1)).unwrap();
        let one = vec![1.0; t.sites()];
        let tb = parameter_from_perturbation(Perturbation::FixedConnection { f: &one, b: &b }).unwrap();
        assert!((t.mean(&tb) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn non_integrable_b_is_rejected() {
        let t = LatticeTorus::square(2, 8, 1.0).unwrap();
        let spec = BundleSpec::new(1, vec![0, 0], Role::Auxiliary).unwrap();
        let (b, _) = random_state(&t, &spec, 1, 0.3).unwrap();
        let f = vec![0.0; t.sites()];
        assert!(matches!(
            parameter_from_perturbation(Perturbation::FixedConnection { f: &f, b: &b }),
            Err(VortexError::NonIntegrableFrame(_))
        ));
    }

    #[test]
    fn sigma_values() {
        assert!((sigma_from(3.0, 1.0).unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!(sigma_from(1.0, 1.0).is_err());
    }

    #[test]
    fn kernels_are_preserved() {
        let t = LatticeTorus::square(1, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = t.random_real_field(&mut rng, 2, 0.5);
        let (_, phi) = random_state(&t, &BundleSpec::line(1), 5, 1.0).unwrap();
        // s kills φ exactly where the mask vanishes
        let mask: Vec<f64> = (0..t.sites()).map(|s| if s % 3 == 0 { 0.0 } else { 1.0 }).collect();
        let h = MetricField::identity(&t, 1);
        let (_, pu) = apply_u_transform(&h, &phi, &u, Direction::TToTau);
        let a = phi.mul_real(&mask);
        let b = pu.mul_real(&mask);
        assert_eq!(a.values.iter().filter(|v| v.norm() == 0.0).count(), b.values.iter().filter(|v| v.norm() == 0.0).count());
        let zero = Section::zeros(&t, 1, FormDegree::Zero);
        let (_, z) = apply_u_transform(&h, &zero, &u, Direction::TToTau);
        assert_eq!(z.norm(), 0.0);
    }
}
