use std::f64::consts::PI;

use vortexlab_web::{energy_gap, stability, vortex};

#[test]
fn vortex_solution_carries_its_mass() {
    let r = vortex(16, 1, 2.0).unwrap();
    assert_eq!(r["verdict"], "Solution");
    let mass = r["mass"].as_f64().unwrap();
    assert!((mass - 2.0 * PI).abs() < 1e-6, "{mass}");
    assert_eq!(r["density"].as_array().unwrap().len(), 256);
}

#[test]
fn vortex_below_threshold_has_no_density() {
    let r = vortex(16, 1, 0.5).unwrap();
    assert_eq!(r["verdict"], "NonExistence");
    assert!(r["mass"].is_null());
    assert!(r["density"].as_array().unwrap().is_empty());
}

#[test]
fn vortex_rejects_bad_grid() {
    assert!(vortex(4, 1, 2.0).is_err());
    assert!(vortex(512, 1, 2.0).is_err());
}

#[test]
fn stability_of_generic_rank_two_pair() {
    let r = stability("1, 1", "0,1", 0, "3/2").unwrap();
    assert_eq!(r["interval"], "(1, 2)");
    assert_eq!(r["stable"], true);
    let r = stability("1,1", "0,1", 0, "5/2").unwrap();
    assert_eq!(r["stable"], false);
    assert!(stability("1,x", "0", 1, "1").is_err());
    assert!(stability("1,1", "0,1", 1, "one").is_err());
}

#[test]
fn gap_is_topological() {
    let a = energy_gap(16, 1, 2.0, 0, 0.2).unwrap();
    let b = energy_gap(16, 1, 2.0, 7, 0.2).unwrap();
    let (ga, gb) = (a["gap"].as_f64().unwrap(), b["gap"].as_f64().unwrap());
    assert!((ga - 8.0 * PI).abs() < 1e-8 && (ga - gb).abs() < 1e-8, "{ga} {gb}");
}
