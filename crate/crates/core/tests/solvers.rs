use std::f64::consts::PI;

use vortexlab::bundle_fields::{landau_sections, BundleSpec, FormDegree, GaugeField, Role, Section};
use vortexlab::functionals::{residuals, ParamSet, SystemKind, SystemState};
use vortexlab::geometry::{LatticeTorus, C64};
use vortexlab::solvers::{
    line_model, metric_to_unitary, minimize_ymh, solve_coupled, solve_metric_line, solve_metric_matrix,
    split_rank2_model, tau_scan, ScanModel, ScanSpec, SolveOptions, Verdict,
};
use vortexlab::VortexError;

fn quick() -> SolveOptions {
    SolveOptions { max_iters: 200, ..Default::default() }
}

#[test]
fn metric_line_solution_and_non_existence() {
    let m = line_model(32, 1.0, 1).unwrap();
    let (h, rep) = solve_metric_line(&m.gauge, &m.phi, &ParamSet::tau(2.0), &quick()).unwrap();
    assert_eq!(rep.verdict, Verdict::Solution, "{:?}", rep.residual);
    let mass = m.torus.integrate(&h.norm_sq(&m.phi));
    assert!((mass - 2.0 * PI * (2.0 - 1.0)).abs() < 1e-6 * mass, "{mass}");
    let (_, rep) = solve_metric_line(&m.gauge, &m.phi, &ParamSet::tau(0.7), &quick()).unwrap();
    assert_eq!(rep.verdict, Verdict::NonExistence);
}

#[test]
fn metric_solution_maps_to_unitary_vortex() {
    let m = line_model(32, 1.0, 1).unwrap();
    let params = ParamSet::tau(2.5);
    let (h, rep) = solve_metric_line(&m.gauge, &m.phi, &params, &quick()).unwrap();
    assert!(rep.converged);
    let (g, phi) = metric_to_unitary(&m.gauge, &m.phi, &h).unwrap();
    let state = SystemState { gauge: Some(g), phi: Some(phi), ..Default::default() };
    let res = residuals(SystemKind::VeAbelian, &state, &params).unwrap();
    assert!(res.total < 1e-7, "{res:?}");
}

#[test]
fn unitary_flow_reaches_the_metric_solution() {
    let m = line_model(16, 1.0, 1).unwrap();
    let tau = 2.0;
    let params = ParamSet::tau(tau);
    let (h, _) = solve_metric_line(&m.gauge, &m.phi, &params, &quick()).unwrap();
    let start = m.phi.scaled(C64::new(1.0, 0.0));
    let opts = SolveOptions { max_iters: 5000, ..Default::default() };
    let (g, phi, rep) = minimize_ymh(&m.gauge, &start, tau, &opts).unwrap();
    assert_eq!(rep.verdict, Verdict::Solution, "{:?} after {}", rep.residual, rep.iterations);
    // the flow may settle on a translate of the metric solution, so compare
    // moduli-invariant quantities
    let mass = m.torus.integrate(&phi.pointwise_norm_sq());
    let target = m.torus.integrate(&h.norm_sq(&m.phi));
    assert!((mass - target).abs() < 1e-6 * target, "{mass} vs {target}");
    let e = vortexlab::functionals::ymh(&g, &phi, tau);
    assert!((e - 4.0 * PI * tau).abs() < 1e-6, "{e}");
    assert_eq!(vortexlab::bundle_fields::chern_number(&g).unwrap(), vec![1]);
}

#[test]
fn unitary_flow_collapses_below_threshold() {
    let m = line_model(16, 1.0, 1).unwrap();
    let opts = SolveOptions { max_iters: 5000, ..Default::default() };
    let (_, phi, rep) = minimize_ymh(&m.gauge, &m.phi, 0.5, &opts).unwrap();
    assert_eq!(rep.verdict, Verdict::NonExistence);
    assert!(phi.sup_norm() < 1e-6);
}

#[test]
fn unitary_flow_rejects_higher_dimension() {
    let t = LatticeTorus::square(2, 8, 1.0).unwrap();
    let g = GaugeField::background(&t, &BundleSpec::line(0)).unwrap_or_else(|_| {
        GaugeField::background(&t, &BundleSpec::new(1, vec![0, 0], Role::Primary).unwrap()).unwrap()
    });
    let phi = Section::zeros(&t, 1, FormDegree::Zero);
    assert!(matches!(minimize_ymh(&g, &phi, 1.0, &quick()), Err(VortexError::UnsupportedDimension(2))));
}

#[test]
fn split_model_follows_stability_interval() {
    let m = split_rank2_model(16, 1.0).unwrap();
    let opts = SolveOptions { max_iters: 3000, ..Default::default() };
    for (tau, expect) in [(1.5, Verdict::Solution), (0.8, Verdict::NonExistence), (2.3, Verdict::NonExistence)] {
        let (_, rep) = solve_metric_matrix(&m.gauge, &m.phi, &ParamSet::tau(tau), &opts).unwrap();
        assert_eq!(rep.verdict, expect, "tau {tau}: {:?} after {}", rep.residual, rep.iterations);
    }
}

#[test]
fn matrix_solver_agrees_with_line_solver() {
    let m = line_model(16, 1.0, 1).unwrap();
    let params = ParamSet::tau(2.0);
    let (h1, _) = solve_metric_line(&m.gauge, &m.phi, &params, &quick()).unwrap();
    let opts = SolveOptions { max_iters: 3000, ..Default::default() };
    let (h2, rep) = solve_metric_matrix(&m.gauge, &m.phi, &params, &opts).unwrap();
    assert!(rep.converged, "{:?}", rep.residual);
    let a = h1.norm_sq(&m.phi);
    let b = h2.norm_sq(&m.phi);
    let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-7, "{err}");
}

fn coupled_setup() -> (LatticeTorus, GaugeField, GaugeField, Section) {
    let t = LatticeTorus::square(1, 32, 1.0).unwrap();
    let ge = GaugeField::background(&t, &BundleSpec::new(1, vec![1], Role::Primary).unwrap()).unwrap();
    let gl = GaugeField::background(&t, &BundleSpec::new(1, vec![-1], Role::Auxiliary).unwrap()).unwrap();
    let basis = landau_sections(&t, &[2], &[0.0]).unwrap();
    let values = basis[0].iter().zip(&basis[1]).map(|(a, b)| a + 0.5 * b).collect();
    let phi = Section { torus: t.clone(), rank: 1, degree: FormDegree::Zero, values };
    (t, ge, gl, phi)
}

#[test]
fn coupled_solution_satisfies_both_integral_identities() {
    let (t, ge, gl, phi) = coupled_setup();
    let (h, k, rep) = solve_coupled(&ge, &gl, &phi, &ParamSet::coupled(1.5, -1.5), &quick()).unwrap();
    assert_eq!(rep.verdict, Verdict::Solution, "{:?}", rep.residual);
    let hn = h.norm_sq(&phi);
    let dens: Vec<f64> = (0..t.sites()).map(|s| hn[s] * (-2.0 * k.log_scale[s]).exp()).collect();
    let mass = t.integrate(&dens);
    assert!((mass - PI).abs() < 1e-6, "{mass}");
}

#[test]
fn coupled_rejects_constraint_violation() {
    let (_, ge, gl, phi) = coupled_setup();
    let r = solve_coupled(&ge, &gl, &phi, &ParamSet::coupled(1.5, -1.5 + 1e-6), &quick());
    assert!(matches!(r, Err(VortexError::ConstraintViolation { .. })));
}

#[test]
fn scan_is_independent_of_thread_count() {
    let spec = ScanSpec {
        model: ScanModel::Line { degree: 1 },
        grid: 16,
        length: 1.0,
        taus: vec![0.5, 1.5, 2.0, 3.0],
        options: quick(),
    };
    std::env::set_var("VORTEXLAB_THREADS", "1");
    let a = tau_scan(&spec).unwrap();
    std::env::set_var("VORTEXLAB_THREADS", "3");
    let b = tau_scan(&spec).unwrap();
    let strip = |rows: &[vortexlab::solvers::ScanRow]| {
        rows.iter().map(|r| (r.tau, r.verdict, r.residual_total.to_bits(), r.iterations, r.stable)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.iter().map(|r| r.verdict).collect::<Vec<_>>(), vec![
        Verdict::NonExistence,
        Verdict::Solution,
        Verdict::Solution,
        Verdict::Solution
    ]);
    assert!(a.iter().all(|r| (r.verdict == Verdict::Solution) == r.stable));
}
