//! Browser bindings for the vortex solvers. Every export takes plain numbers
//! or strings and returns a JSON string.

use serde_json::{json, Value};
use vortexlab::bundle_fields::{random_state, BundleSpec};
use vortexlab::functionals::{energy_identity_gap, ParamSet};
use vortexlab::geometry::LatticeTorus;
use vortexlab::solvers::{line_model, solve_metric_line, SolveOptions, Verdict};
use vortexlab::stability::{admissible_interval, pair_stable, SplitModel, Q};
use wasm_bindgen::prelude::*;

const MAX_GRID: usize = 96;

fn check_grid(grid: usize) -> Result<(), String> {
    if !(8..=MAX_GRID).contains(&grid) {
        return Err(format!("grid must lie in 8..={MAX_GRID}"));
    }
    Ok(())
}

/// Solve the abelian vortex equation for a degree-`degree` line bundle on
/// the unit square torus and return the verdict with the `|φ|²` grid.
pub fn vortex(grid: usize, degree: i64, tau: f64) -> Result<Value, String> {
    check_grid(grid)?;
    if !tau.is_finite() {
        return Err("tau must be finite".into());
    }
    let m = line_model(grid, 1.0, degree).map_err(|e| e.to_string())?;
    let opts = SolveOptions { max_iters: 400, ..Default::default() };
    let (h, rep) = solve_metric_line(&m.gauge, &m.phi, &ParamSet::tau(tau), &opts).map_err(|e| e.to_string())?;
    let density = h.norm_sq(&m.phi);
    let solved = rep.verdict == Verdict::Solution;
    Ok(json!({
        "verdict": rep.verdict,
        "residual": rep.residual.total,
        "iterations": rep.iterations,
        "grid": grid,
        "mass": if solved { Some(m.torus.integrate(&density)) } else { None },
        "predicted_mass": 2.0 * std::f64::consts::PI * (tau - degree as f64),
        "density": if solved { density } else { Vec::new() },
    }))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| format!("bad {what} entry {v:?}")))
        .collect()
}

/// τ-stability of a pair on a split bundle with summand degrees `degrees`
/// and a section supported on the summands in `support` (both
/// comma-separated). `tau` is a rational such as `3/2`.
pub fn stability(degrees: &str, support: &str, phi_line_degree: i64, tau: &str) -> Result<Value, String> {
    let degrees: Vec<i64> = parse_list(degrees, "degree")?;
    let support: Vec<usize> = parse_list(support, "support")?;
    let model = SplitModel::new(degrees, support, phi_line_degree).map_err(|e| e.to_string())?;
    let interval = admissible_interval(&model, None).map_err(|e| e.to_string())?;
    let q: Q = tau.trim().parse().map_err(|_| format!("tau {tau:?} is not a rational"))?;
    let verdict = pair_stable(&model, q).map_err(|e| e.to_string())?;
    Ok(json!({
        "interval": interval.to_string(),
        "tau": q.to_string(),
        "stable": verdict.is_stable(),
        "verdict": verdict,
    }))
}

/// Both sides of the energy identity for a seeded random pair.
pub fn energy_gap(grid: usize, degree: i64, tau: f64, seed: u64, amplitude: f64) -> Result<Value, String> {
    check_grid(grid)?;
    let t = LatticeTorus::square(1, grid, 1.0).map_err(|e| e.to_string())?;
    let (g, phi) = random_state(&t, &BundleSpec::line(degree), seed, amplitude).map_err(|e| e.to_string())?;
    let r = energy_identity_gap(&g, &phi, tau);
    Ok(json!({ "ymh": r.ymh, "rewritten": r.rewritten, "gap": r.gap, "predicted": r.predicted }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = solveVortex)]
pub fn solve_vortex_js(grid: usize, degree: i32, tau: f64) -> Result<String, JsValue> {
    to_js(vortex(grid, degree as i64, tau))
}

#[wasm_bindgen(js_name = pairStability)]
pub fn pair_stability_js(degrees: &str, support: &str, phi_line_degree: i32, tau: &str) -> Result<String, JsValue> {
    to_js(stability(degrees, support, phi_line_degree as i64, tau))
}

#[wasm_bindgen(js_name = energyGap)]
pub fn energy_gap_js(grid: usize, degree: i32, tau: f64, seed: u32, amplitude: f64) -> Result<String, JsValue> {
    to_js(energy_gap(grid, degree as i64, tau, seed as u64, amplitude))
}
