use vortexlab::functionals::SystemKind;
use vortexlab::swkahler::{decoupling_experiment, Branch, DecouplingConfig, DecouplingReport};

fn run(kind: SystemKind, f: f64, seed: u64) -> DecouplingReport {
    let cfg = DecouplingConfig { kind, grid: 8, f, seed, ..Default::default() };
    decoupling_experiment(&cfg).unwrap().0
}

#[test]
fn positive_perturbation_kills_beta() {
    let r = run(SystemKind::SwKahlerFixed, 0.5, 0);
    assert_eq!(r.predicted, Branch::Phi);
    assert_eq!(r.branch, Branch::Phi, "{r:?}");
    assert!(r.beta_norm / r.phi_norm < 1e-3);
    assert!(r.annihilates());
}

#[test]
fn negative_perturbation_kills_phi() {
    let r = run(SystemKind::SwKahlerFixed, -0.5, 1);
    assert_eq!(r.predicted, Branch::Beta);
    assert_eq!(r.branch, Branch::Beta, "{r:?}");
    assert!(r.phi_norm / r.beta_norm < 1e-3);
    assert!(r.annihilates());
}

#[test]
fn zero_perturbation_is_reducible() {
    let r = run(SystemKind::SwKahlerFixed, 0.0, 2);
    assert_eq!(r.branch, Branch::Reducible, "{r:?}");
    assert!(r.phi_norm < 1e-6 && r.beta_norm < 1e-6);
}

#[test]
fn coupled_system_decouples() {
    let r = run(SystemKind::SwKahlerCoupled, 0.5, 3);
    assert_eq!(r.branch, Branch::Phi, "{r:?}");
    assert!(r.annihilates());
}
