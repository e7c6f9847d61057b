use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;

use vortexlab::bundle_fields::{random_state, BundleSpec, MatField, MetricField};
use vortexlab::cli::checkpoint::{self, Checkpoint};
use vortexlab::cli::config::Experiment;
use vortexlab::cli::output::{grid_csv, parse_grid_csv};
use vortexlab::cli::{parse_config, run, Overrides, EXIT_ERROR, EXIT_NONEXISTENCE, EXIT_OK};
use vortexlab::geometry::LatticeTorus;
use vortexlab::VortexError;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vortexlab")
}

fn run_toml(text: &str, exp: Experiment, dir: &Path) -> vortexlab::cli::Outcome {
    let cfg = parse_config(text, Some(exp)).unwrap();
    run(&cfg, &Overrides { seed: None, out: Some(dir.to_path_buf()) })
}

const VORTEX: &str = r#"
[torus]
grid = 32
[bundle]
chern = [1]
[params]
tau = 2.0
[solver]
max_iters = 200
"#;

#[test]
fn solve_vortex_reports_the_integral_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_toml(VORTEX, Experiment::SolveVortex, dir.path());
    assert_eq!(out.exit_code, EXIT_OK);
    let r = &out.report["result"];
    assert_eq!(r["converged"], true);
    assert!((r["phi_norm_sq"].as_f64().unwrap() - 2.0 * PI).abs() < 1e-6);
    for f in ["report.json", "trace.csv", "phi_norm_sq.csv", "u.csv", "state.vtxf"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(written["config"]["solver"]["tol"], 1e-8);
    assert_eq!(written["symbol_hash"].as_str().unwrap().len(), 64);
    assert!(written["version"].is_string());
}

#[test]
fn report_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_toml(VORTEX, Experiment::SolveVortex, dir.path());
    let cfg: vortexlab::cli::ExperimentConfig = serde_json::from_value(out.report["config"].clone()).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let again = run(&cfg, &Overrides { seed: None, out: Some(dir2.path().to_path_buf()) });
    assert_eq!(out.report["result"]["residual"], again.report["result"]["residual"]);
}

#[test]
fn subcritical_tau_exits_with_non_existence() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_toml(&VORTEX.replace("tau = 2.0", "tau = 0.5"), Experiment::SolveVortex, dir.path());
    assert_eq!(out.exit_code, EXIT_NONEXISTENCE);
    assert_eq!(out.report["result"]["verdict"], "NonExistence");
}

#[test]
fn violated_coupled_constraint_is_an_error() {
    let text = r#"
[torus]
grid = 16
[bundle]
chern = [1]
chern_second = [-1]
[params]
tau = 1.5
tau_prime = -1.4
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_toml(text, Experiment::SolveCoupled, dir.path());
    assert_eq!(out.exit_code, EXIT_ERROR);
    assert_eq!(out.report["error"]["kind"], "ConstraintViolation");
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn split_scan_matches_the_stability_column() {
    let text = r#"
[torus]
grid = 16
[scan]
model = "split_rank2"
taus = [0.8, 1.5, 2.3]
[solver]
max_iters = 3000
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_toml(text, Experiment::ScanTau, dir.path());
    assert_eq!(out.exit_code, EXIT_OK, "{}", out.report["result"]);
    assert_eq!(out.report["result"]["disagreements"], 0);
    let table = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn stability_experiment_reports_the_interval() {
    let text = "[stability]\nsummand_degrees = [1, 1]\ntaus = [1.5, 2.5]\n";
    let dir = tempfile::tempdir().unwrap();
    let out = run_toml(text, Experiment::Stability, dir.path());
    assert_eq!(out.exit_code, EXIT_OK);
    assert_eq!(out.report["result"]["interval"], "(1, 2)");
    assert_eq!(out.report["result"]["taus"][0]["stable"], true);
    assert_eq!(out.report["result"]["taus"][1]["stable"], false);
}

#[test]
fn transform_u_emits_the_input_mode() {
    let text = r#"
[torus]
grid = 32
[params]
t = { mean = 2.0, modes = [{ mode = [1, 0], amp = 0.3 }] }
[solver]
max_iters = 200
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_toml(text, Experiment::TransformU, dir.path());
    assert_eq!(out.exit_code, EXIT_OK, "{}", out.report);
    assert!(out.report["result"]["metric_sup"].as_f64().unwrap() < 1e-6);
    // Δu = τ - t for a single cosine mode gives u = -0.3 cos / λ_k
    let u = parse_grid_csv(&std::fs::read_to_string(dir.path().join("u.csv")).unwrap());
    let t = LatticeTorus::square(1, 32, 1.0).unwrap();
    let lambda = (2.0 * PI).powi(2) / (2.0 * t.metric_scale());
    for (s, v) in u.iter().enumerate() {
        let x = t.coordinate(0, s / 32);
        assert!((v + 0.3 * (2.0 * PI * x).cos() / lambda).abs() < 1e-12);
    }
}

#[test]
fn config_errors_name_the_key() {
    let bad_mode = "[torus]\ngrid = 16\n[params]\nt = { mean = 2.0, modes = [{ mode = [5, 0], amp = 0.1 }] }\n";
    match parse_config(bad_mode, Some(Experiment::SolveVortex)) {
        Err(VortexError::Config { key, .. }) => assert_eq!(key, "params.t.modes[0].mode"),
        other => panic!("{other:?}"),
    }
    match parse_config("[torus]\ngrid = 16\nbogus = 1\n", Some(Experiment::Stability)) {
        Err(VortexError::Config { key, .. }) => assert!(key.starts_with("line "), "{key}"),
        other => panic!("{other:?}"),
    }
    let mismatch = "experiment = \"stability\"\n";
    assert!(matches!(parse_config(mismatch, Some(Experiment::ScanTau)), Err(VortexError::Config { .. })));
}

#[test]
fn binary_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("v.toml");
    std::fs::write(&cfg, VORTEX).unwrap();
    let st = Command::new(bin())
        .args(["solve-vortex", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("a").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    std::fs::write(&cfg, VORTEX.replace("tau = 2.0", "tau = 0.9")).unwrap();
    let st = Command::new(bin())
        .args(["solve-vortex", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("b").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = Command::new(bin())
        .args(["solve-vortex", "--config", dir.path().join("missing.toml").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn seed_flag_reaches_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[torus]\ngrid = 16\n[identities]\nseeds = 2\nsamples = 1\n").unwrap();
    let out = dir.path().join("o");
    let st = Command::new(bin())
        .args(["check-identities", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["solver"]["seed"], 7);
}

fn sample_checkpoint() -> Checkpoint {
    let t = LatticeTorus::square(1, 8, 1.0).unwrap();
    let (g, phi) = random_state(&t, &BundleSpec::new(2, vec![1], vortexlab::bundle_fields::Role::Primary).unwrap(), 3, 0.2).unwrap();
    let mut m = MatField::identity(t.sites(), 2);
    m.at_mut(5)[1] = vortexlab::C64::new(0.1, 0.2);
    m.at_mut(5)[2] = vortexlab::C64::new(0.1, -0.2);
    let h = MetricField::conformal(&t, 2, t.random_real_field(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1), 2, 0.3))
        .with_matrix(m)
        .unwrap();
    Checkpoint { gauge: g, sections: vec![phi], metric: Some(h) }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cp = sample_checkpoint();
    let bytes = checkpoint::encode(&cp);
    assert_eq!(&bytes[..4], b"VTXF");
    let back = checkpoint::decode(&bytes).unwrap();
    assert_eq!(checkpoint::encode(&back), bytes);
    assert_eq!(back.gauge.potential, cp.gauge.potential);
    assert_eq!(back.sections, cp.sections);
    let (a, b) = (back.metric.unwrap(), cp.metric.unwrap());
    assert_eq!(a.log_scale.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.log_scale.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.matrix, b.matrix);
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let bytes = checkpoint::encode(&sample_checkpoint());
    let section = |r: vortexlab::Result<Checkpoint>| match r {
        Err(VortexError::CorruptCheckpoint { section, .. }) => section,
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("accepted"),
    };
    assert_eq!(section(checkpoint::decode(&bytes[..bytes.len() - 10])), "METR");
    let link = bytes.windows(4).position(|w| w == b"LINK").unwrap();
    assert_eq!(section(checkpoint::decode(&bytes[..link - 3])), "LENS");
    assert_eq!(section(checkpoint::decode(&bytes[..link + 20])), "LINK");
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert_eq!(section(checkpoint::decode(&bad)), "header");
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert_eq!(section(checkpoint::decode(&bad)), "header");
    // break Hermiticity of the first potential entry's imaginary part
    let link_start = bytes.windows(4).position(|w| w == b"LINK").unwrap() + 4 + 8 + 1;
    let mut bad = bytes.clone();
    bad[link_start + 8..link_start + 16].copy_from_slice(&0.5f64.to_le_bytes());
    assert_eq!(section(checkpoint::decode(&bad)), "LINK");
    let mut extra = bytes.clone();
    extra.push(0);
    assert_eq!(section(checkpoint::decode(&extra)), "trailer");
}

#[test]
fn restored_input_gives_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_toml(VORTEX, Experiment::SolveVortex, &dir.path().join("a"));
    // the state file holds the input section alongside the solved metric
    let text = format!("{VORTEX}\n[input]\ncheckpoint = \"{}\"\n", dir.path().join("a/state.vtxf").display());
    let second = run_toml(&text, Experiment::SolveVortex, &dir.path().join("b"));
    assert_eq!(first.report["result"]["residual"], second.report["result"]["residual"]);
    assert_eq!(first.report["result"]["iterations"], second.report["result"]["iterations"]);
    assert_eq!(first.report["result"]["phi_norm_sq"], second.report["result"]["phi_norm_sq"]);
}

#[test]
fn vortex_grid_has_one_zero_with_unit_winding() {
    let dir = tempfile::tempdir().unwrap();
    let text = VORTEX.replace("max_iters = 200", "max_iters = 400");
    let out = run_toml(&text, Experiment::SolveVortex, dir.path());
    assert_eq!(out.exit_code, EXIT_OK, "{}", out.report);
    let vals = parse_grid_csv(&std::fs::read_to_string(dir.path().join("phi_norm_sq.csv")).unwrap());
    let n = 32;
    let max = vals.iter().cloned().fold(0.0, f64::max);
    // periodic local minima below a tenth of the maximum
    let mut minima = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = vals[i * n + j];
            let nb = [((i + 1) % n, j), ((i + n - 1) % n, j), (i, (j + 1) % n), (i, (j + n - 1) % n)];
            if v < 0.1 * max && nb.iter().all(|&(a, b)| vals[a * n + b] > v) {
                minima.push((i, j));
            }
        }
    }
    assert_eq!(minima.len(), 1, "{minima:?}");
    // gauge-covariant winding of φ around a small loop about the zero
    let cp = checkpoint::restore(&dir.path().join("state.vtxf")).unwrap();
    let (g, phi) = (&cp.gauge, &cp.sections[0]);
    let t = &g.torus;
    let (ci, cj) = (minima[0].0 as i64, minima[0].1 as i64);
    let w = |i: i64, j: i64| ((i.rem_euclid(n as i64)) as usize, (j.rem_euclid(n as i64)) as usize);
    let mut path = Vec::new();
    for k in -2..2 {
        path.push((ci + k, cj - 2, 0));
    }
    for k in -2..2 {
        path.push((ci + 2, cj + k, 1));
    }
    for k in (-1..3).rev() {
        path.push((ci + k, cj + 2, 2));
    }
    for k in (-1..3).rev() {
        path.push((ci - 2, cj + k, 3));
    }
    let ax = g.potential_real(0);
    let ay = g.potential_real(1);
    let mut winding = 0.0;
    for &(i, j, side) in &path {
        let (di, dj) = match side {
            0 => (1, 0),
            1 => (0, 1),
            2 => (-1, 0),
            _ => (0, -1),
        };
        let (a, b) = w(i, j);
        let (c, d) = w(i + di, j + dj);
        let (s0, s1) = (a * n + b, c * n + d);
        // parallel transport with the midpoint potential
        let pot = if di != 0 { 0.5 * (ax[s0] + ax[s1]) * di as f64 * t.spacing(0) } else { 0.5 * (ay[s0] + ay[s1]) * dj as f64 * t.spacing(1) };
        let mut dphi = (phi.values[s1] / phi.values[s0]).arg() - pot;
        dphi = (dphi + PI).rem_euclid(2.0 * PI) - PI;
        winding += dphi;
    }
    assert!((winding / (2.0 * PI) - 1.0).abs() < 0.2, "{}", winding / (2.0 * PI));
}

#[test]
fn zero_field_grid_is_all_zeros() {
    let t = LatticeTorus::square(1, 8, 1.0).unwrap();
    let csv = grid_csv(&t, "zero", &vec![0.0; t.sites()]).unwrap();
    assert!(csv.starts_with("# field=zero\n"));
    let vals = parse_grid_csv(&csv);
    assert_eq!(vals.len(), 64);
    assert!(vals.iter().all(|&v| v == 0.0));
}
