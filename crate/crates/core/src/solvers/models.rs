use crate::bundle_fields::{landau_sections, BundleSpec, FormDegree, GaugeField, Role, Section};
use crate::error::Result;
use crate::geometry::{LatticeTorus, C64};
use crate::stability::SplitModel;

/// A bundle over a 2-torus with a holomorphic section, ready for the
/// metric solvers.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub torus: LatticeTorus,
    pub gauge: GaugeField,
    pub phi: Section,
    /// Summand/section data for the algebraic stability test.
    pub split: SplitModel,
}

/// Line bundle of the given degree with a generic holomorphic section.
pub fn line_model(grid: usize, length: f64, degree: i64) -> Result<ModelState> {
    let torus = LatticeTorus::square(1, grid, length)?;
    let spec = BundleSpec::new(1, vec![degree], Role::Primary)?;
    let gauge = GaugeField::background(&torus, &spec)?;
    let basis = landau_sections(&torus, &[degree], &[0.0])?;
    let mut values = vec![C64::new(0.0, 0.0); torus.sites()];
    for (k, b) in basis.iter().enumerate() {
        let c = C64::new(1.0, 0.3 * k as f64);
        values.iter_mut().zip(b).for_each(|(v, x)| *v += c * x);
    }
    let phi = Section { torus: torus.clone(), rank: 1, degree: FormDegree::Zero, values };
    let split = SplitModel::new(vec![degree], vec![0], 0)?;
    Ok(ModelState { torus, gauge, phi, split })
}

/// `L1 ⊕ L2` with two non-isomorphic degree-one summands and a section
/// with nonzero components in both. Its vortex equation is solvable
/// exactly for `1 < τ < 2`.
pub fn split_rank2_model(grid: usize, length: f64) -> Result<ModelState> {
    let torus = LatticeTorus::square(1, grid, length)?;
    let spec = BundleSpec::new(2, vec![1], Role::Primary)?;
    let b = crate::bundle_fields::plane_field_strength(&torus, 0, 1);
    let shift = 0.5 * length;
    let gauge = GaugeField::background(&torus, &spec)?.with_constant_twist(1, &[0.0, b * shift]);
    let s1 = &landau_sections(&torus, &[1], &[0.0])?[0];
    let s2 = &landau_sections(&torus, &[1], &[shift])?[0];
    let mut values = vec![C64::new(0.0, 0.0); 2 * torus.sites()];
    for s in 0..torus.sites() {
        values[2 * s] = s1[s];
        values[2 * s + 1] = s2[s];
    }
    let phi = Section { torus: torus.clone(), rank: 2, degree: FormDegree::Zero, values };
    let split = SplitModel::new(vec![1, 1], vec![0, 1], 0)?;
    Ok(ModelState { torus, gauge, phi, split })
}
