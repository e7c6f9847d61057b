//! Experiment runner behind the `vortexlab` binary: configs, named
//! experiments, reports and persisted fields.

pub mod checkpoint;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::bundle_fields::{landau_sections, random_state, FormDegree, GaugeField, MetricField, Section};
use crate::error::{Result, VortexError};
use crate::functionals::{energy_identity_gap, ParamSet};
use crate::geometry::{LatticeTorus, C64, TOTAL_VOLUME};
use crate::solvers::{
    minimize_ymh, solve_coupled, solve_metric_line, solve_metric_matrix, solve_metric_twisted, split_rank2_model,
    tau_scan, ScanModel, ScanSpec, SolveReport, Verdict,
};
use crate::stability::{self, ExtensionModel, SplitModel, SubExtension, Q};
use crate::swkahler::{decoupling_experiment, Branch, DecouplingConfig};
use crate::transforms::{apply_u_transform, u_from_t, Direction};
use checkpoint::Checkpoint;
pub use config::ExperimentConfig;
use config::{cfg_err, Experiment, Method, ScanModelName};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NONEXISTENCE: i32 = 2;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Value,
    pub dir: PathBuf,
}

/// Parse a config for `experiment`. The file may omit the experiment name;
/// if it names one, it has to agree.
pub fn load_config(path: &Path, experiment: Option<Experiment>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, experiment)
}

pub fn parse_config(text: &str, experiment: Option<Experiment>) -> Result<ExperimentConfig> {
    let Some(exp) = experiment else {
        return ExperimentConfig::from_toml(text);
    };
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|sp| text[..sp.start.min(text.len())].matches('\n').count() + 1);
        cfg_err(&line.map_or("config".into(), |l| format!("line {l}")), e.message().to_string())
    })?;
    let name = serde_json::to_value(exp).expect("experiment name").as_str().expect("string").to_string();
    match table.get("experiment") {
        None => {
            table.insert("experiment".into(), toml::Value::String(name));
        }
        Some(v) if v.as_str() == Some(name.as_str()) => {}
        Some(v) => return Err(cfg_err("experiment", format!("config is for {v}, command line asks for {name}"))),
    }
    ExperimentConfig::from_toml(&toml::to_string(&table).expect("table serializes"))
}

/// What an experiment produces besides its report entry.
#[derive(Default)]
struct Artifacts {
    exit: i32,
    result: Value,
    trace: Option<String>,
    grids: Vec<(String, LatticeTorus, Vec<f64>)>,
    tables: Vec<(String, String)>,
    checkpoint: Option<Checkpoint>,
}

/// Run one experiment and write its artifacts. Errors are reported in
/// `report.json` and through the exit code, never as a panic.
pub fn run(cfg: &ExperimentConfig, overrides: &Overrides) -> Outcome {
    let mut cfg = cfg.clone();
    if let Some(seed) = overrides.seed {
        cfg.solver.seed = seed;
        cfg.sw.seeds = vec![seed];
    }
    if let Some(out) = &overrides.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    let dir = PathBuf::from(&cfg.output.dir);
    let hash = cfg.torus.build().map(|t| t.symbol_hash()).unwrap_or_default();
    let mut report = json!({
        "experiment": cfg.experiment,
        "version": env!("CARGO_PKG_VERSION"),
        "symbol_hash": hash,
        "config": cfg,
    });
    let outcome = cfg.validate().and_then(|_| dispatch(&cfg));
    let exit = match outcome {
        Ok(art) => match write_artifacts(&dir, &cfg, &art) {
            Ok(files) => {
                report["result"] = art.result;
                report["files"] = json!(files);
                art.exit
            }
            Err(e) => {
                report["error"] = error_json(&e);
                EXIT_ERROR
            }
        },
        Err(e) => {
            report["error"] = error_json(&e);
            EXIT_ERROR
        }
    };
    report["exit_code"] = json!(exit);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    let exit = match output::write_atomic(&dir.join("report.json"), text.as_bytes()) {
        Ok(()) => exit,
        Err(_) => EXIT_ERROR,
    };
    Outcome { exit_code: exit, report, dir }
}

fn error_json(e: &VortexError) -> Value {
    let dbg = format!("{e:?}");
    let kind: String = dbg.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    json!({ "kind": kind, "message": e.to_string() })
}

fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, art: &Artifacts) -> Result<Vec<String>> {
    let mut files = Vec::new();
    if let Some(tr) = &art.trace {
        output::write_atomic(&dir.join("trace.csv"), tr.as_bytes())?;
        files.push("trace.csv".to_string());
    }
    for (name, body) in &art.tables {
        output::write_atomic(&dir.join(name), body.as_bytes())?;
        files.push(name.clone());
    }
    if cfg.output.fields {
        for (name, torus, values) in &art.grids {
            let file = format!("{name}.csv");
            output::emit_grid(torus, name, values, &dir.join(&file))?;
            files.push(file);
        }
    }
    if cfg.output.checkpoint {
        if let Some(cp) = &art.checkpoint {
            checkpoint::save(cp, &dir.join("state.vtxf"))?;
            files.push("state.vtxf".to_string());
        }
    }
    Ok(files)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Artifacts> {
    match cfg.experiment {
        Experiment::SolveVortex => solve_vortex(cfg),
        Experiment::SolveCoupled => solve_coupled_exp(cfg),
        Experiment::ScanTau => scan(cfg),
        Experiment::CheckIdentities => check_identities(cfg),
        Experiment::Stability => stability_exp(cfg),
        Experiment::TransformU => transform_u(cfg),
        Experiment::SwDecouple => sw_decouple(cfg),
    }
}

fn verdict_exit(v: Verdict) -> i32 {
    match v {
        Verdict::Solution => EXIT_OK,
        Verdict::NonExistence => EXIT_NONEXISTENCE,
        Verdict::MaxIters => EXIT_ERROR,
    }
}

/// Sum of the Landau sections of a line bundle with fixed complex weights.
pub fn generic_line_section(torus: &LatticeTorus, chern: &[i64]) -> Result<Section> {
    let shifts = vec![0.0; chern.len()];
    let basis = landau_sections(torus, chern, &shifts)?;
    if basis.is_empty() {
        return Err(VortexError::Unsupported(format!("a bundle with fluxes {chern:?} has no holomorphic sections")));
    }
    let mut values = vec![C64::new(0.0, 0.0); torus.sites()];
    for (k, b) in basis.iter().enumerate() {
        let c = C64::new(1.0, 0.3 * k as f64);
        values.iter_mut().zip(b).for_each(|(v, x)| *v += c * x);
    }
    Ok(Section { torus: torus.clone(), rank: 1, degree: FormDegree::Zero, values })
}

/// Gauge field and section for the solve experiments: from the input
/// checkpoint when given, otherwise the catalog model for the bundle.
fn vortex_input(cfg: &ExperimentConfig) -> Result<(GaugeField, Section)> {
    if let Some(path) = cfg.input.as_ref().and_then(|i| i.checkpoint.as_ref()) {
        let cp = checkpoint::restore(Path::new(path))?;
        let phi = cp.sections.into_iter().next().ok_or_else(|| cfg_err("input.checkpoint", "no section stored".into()))?;
        return Ok((cp.gauge, phi));
    }
    let t = cfg.torus.build()?;
    match cfg.bundle.rank {
        1 => {
            let g = GaugeField::background(&t, &cfg.bundle.primary()?)?;
            let phi = generic_line_section(&t, &cfg.bundle.chern)?;
            Ok((g, phi))
        }
        2 if cfg.bundle.chern == [1] && cfg.torus.dim == 1 => {
            let (n, l) = cfg.torus.square()?;
            let m = split_rank2_model(n, l)?;
            Ok((m.gauge, m.phi))
        }
        _ => Err(cfg_err("bundle", "catalog models exist for rank 1 and for rank 2 with chern = [1]".into())),
    }
}

fn report_json(rep: &SolveReport) -> Value {
    json!({
        "verdict": rep.verdict,
        "converged": rep.converged,
        "residual": rep.residual,
        "iterations": rep.iterations,
        "wall_time_s": rep.wall_time_s,
        "warnings": rep.warnings,
    })
}

fn solve_vortex(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let (gauge, phi) = vortex_input(cfg)?;
    let t = gauge.torus.clone();
    let params = cfg.params.to_params(&t);
    let opts = cfg.solver.options();
    let r = gauge.rank() as f64;
    let t_mean = params.t.as_ref().expect("validated").mean(&t)?;
    let predicted = TOTAL_VOLUME * (r * t_mean - gauge.spec.degree(&t));
    let mut art = Artifacts::default();
    let (rep, density, grids, cp) = match cfg.solver.method {
        Method::Metric => {
            let (h, rep) =
                if gauge.rank() == 1 { solve_metric_line(&gauge, &phi, &params, &opts)? } else { solve_metric_matrix(&gauge, &phi, &params, &opts)? };
            let density = h.norm_sq(&phi);
            let mut grids = vec![("phi_norm_sq".to_string(), t.clone(), density.clone())];
            if h.matrix.is_none() {
                grids.push(("u".to_string(), t.clone(), h.log_scale.clone()));
            }
            let cp = Checkpoint { gauge: gauge.clone(), sections: vec![phi.clone()], metric: Some(h) };
            (rep, density, grids, cp)
        }
        Method::Unitary => {
            let tau = match &params.t {
                Some(c) if c.is_constant() => t_mean,
                _ => return Err(cfg_err("params.t", "the unitary flow takes a constant tau".into())),
            };
            let (g, p, rep) = minimize_ymh(&gauge, &phi, tau, &opts)?;
            let density = p.pointwise_norm_sq();
            let grids = vec![("phi_norm_sq".to_string(), t.clone(), density.clone())];
            (rep, density, grids, Checkpoint { gauge: g, sections: vec![p], metric: None })
        }
    };
    let mass = t.integrate(&density);
    let mut result = report_json(&rep);
    result["phi_norm_sq"] = json!(mass);
    result["predicted_phi_norm_sq"] = json!(predicted);
    if rep.verdict == Verdict::Solution {
        result["identity_rel_err"] = json!((mass - predicted).abs() / predicted.abs().max(1e-300));
    }
    art.exit = verdict_exit(rep.verdict);
    art.result = result;
    art.trace = Some(rep.trace_csv());
    art.grids = grids;
    art.checkpoint = Some(cp);
    Ok(art)
}

fn solve_coupled_exp(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let t = cfg.torus.build()?;
    let e = cfg.bundle.primary()?;
    let l = cfg.bundle.second()?;
    let ge = GaugeField::background(&t, &e)?;
    let gl = GaugeField::background(&t, &l)?;
    let phi = match cfg.input.as_ref().and_then(|i| i.checkpoint.as_ref()) {
        Some(p) => checkpoint::restore(Path::new(p))?.sections.into_iter().next().ok_or_else(|| cfg_err("input.checkpoint", "no section stored".into()))?,
        None => {
            let d: Vec<i64> = e.chern.iter().zip(&l.chern).map(|(a, b)| a - b).collect();
            generic_line_section(&t, &d)?
        }
    };
    let params = cfg.params.to_params(&t);
    let (h, k, rep) = solve_coupled(&ge, &gl, &phi, &params, &cfg.solver.options())?;
    let hn = h.norm_sq(&phi);
    let density: Vec<f64> = hn.iter().zip(&k.log_scale).map(|(a, v)| a * (-2.0 * v).exp()).collect();
    let mass = t.integrate(&density);
    let tm = params.t.as_ref().expect("validated").mean(&t)?;
    let tpm = params.t_prime.as_ref().expect("validated").mean(&t)?;
    let mut result = report_json(&rep);
    result["phi_norm_sq"] = json!(mass);
    result["identity_e"] = json!(TOTAL_VOLUME * (tm - e.degree(&t)));
    result["identity_l"] = json!(TOTAL_VOLUME * (l.degree(&t) - tpm));
    Ok(Artifacts {
        exit: verdict_exit(rep.verdict),
        result,
        trace: Some(rep.trace_csv()),
        grids: vec![
            ("phi_norm_sq".into(), t.clone(), density),
            ("u".into(), t.clone(), h.log_scale.clone()),
            ("v".into(), t.clone(), k.log_scale.clone()),
        ],
        tables: Vec::new(),
        checkpoint: Some(Checkpoint { gauge: ge, sections: vec![phi], metric: Some(h) }),
    })
}

fn scan(cfg: &ExperimentConfig) -> Result<Artifacts> {
    if cfg.torus.dim != 1 {
        return Err(cfg_err("torus.dim", "scans run on a 2-torus".into()));
    }
    let (grid, length) = cfg.torus.square()?;
    let model = match cfg.scan.model {
        ScanModelName::Line => ScanModel::Line { degree: cfg.bundle.chern[0] },
        ScanModelName::SplitRank2 => ScanModel::SplitRank2,
    };
    let spec = ScanSpec { model, grid, length, taus: cfg.scan.taus.clone(), options: cfg.solver.options() };
    let rows = tau_scan(&spec)?;
    let agree = |r: &crate::solvers::ScanRow| match r.verdict {
        Verdict::Solution => r.stable,
        Verdict::NonExistence => !r.stable,
        Verdict::MaxIters => false,
    };
    let disagreements = rows.iter().filter(|r| !agree(r)).count();
    let mut table = String::from("tau,verdict,stable,margin,residual_total,iterations,wall_time_s\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{:?},{},{},{:.6e},{},{:.3}\n",
            r.tau, r.verdict, r.stable, r.margin, r.residual_total, r.iterations, r.wall_time_s
        ));
    }
    Ok(Artifacts {
        exit: if disagreements == 0 { EXIT_OK } else { EXIT_ERROR },
        result: json!({ "rows": rows, "disagreements": disagreements, "threads": crate::solvers::thread_count() }),
        tables: vec![("scan.csv".into(), table)],
        ..Default::default()
    })
}

/// Outcome of the identity checks, with the tolerances they were held to.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IdentityChecks {
    pub gaps: Vec<f64>,
    pub gap_mean: f64,
    /// Standard deviation over the mean gap, or over the mean energy when the
    /// predicted gap vanishes.
    pub gap_spread: f64,
    pub gap_predicted: f64,
    pub gap_rel_err: f64,
    pub convention_sup: f64,
    pub poisson_sup: f64,
    pub spread_tol: f64,
    pub passed: bool,
}

/// Energy-identity gap over seeded random states, the `e^u` curvature rule
/// and `poisson_solve ∘ Δ = id` on band-limited fields.
pub fn identity_checks(
    torus: &LatticeTorus,
    spec: &crate::bundle_fields::BundleSpec,
    tau: f64,
    seeds: std::ops::Range<u64>,
    amplitude: f64,
    samples: usize,
) -> Result<IdentityChecks> {
    let mut gaps = Vec::new();
    let mut energy = 0.0;
    let mut predicted = 0.0;
    for seed in seeds.clone() {
        let (g, phi) = random_state(torus, spec, seed, amplitude)?;
        let rep = energy_identity_gap(&g, &phi, tau);
        gaps.push(rep.gap);
        energy += rep.ymh.abs();
        predicted = rep.predicted;
    }
    let n = gaps.len().max(1) as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    // a vanishing gap is measured against the energy itself
    let scale = if predicted == 0.0 { energy / n } else { mean.abs() };
    let spread = var.sqrt() / scale.max(1e-300);
    let rel_err = if predicted.abs() > 0.0 { (mean - predicted).abs() / predicted.abs() } else { mean.abs() };

    let g0 = GaugeField::background(torus, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.start);
    let mut convention: f64 = 0.0;
    let mut poisson: f64 = 0.0;
    let r = spec.rank;
    for _ in 0..samples {
        let u0 = torus.random_real_field(&mut rng, 2, 0.5);
        let u = torus.random_real_field(&mut rng, 3, 0.5);
        let h = MetricField::conformal(torus, r, u0);
        let a = crate::operators::chern_i_lambda_f(&g0, &h);
        let b = crate::operators::chern_i_lambda_f(&g0, &h.times_exp(&u));
        let lap = torus.laplacian(&u);
        for s in 0..torus.sites() {
            for i in 0..r {
                for j in 0..r {
                    let want = if i == j { lap[s] } else { 0.0 };
                    convention = convention.max((b.at(s)[i * r + j] - a.at(s)[i * r + j] - want).norm());
                }
            }
        }
        let f = torus.random_real_field(&mut rng, 3, 1.0);
        let m = torus.mean(&f);
        let f: Vec<f64> = f.iter().map(|v| v - m).collect();
        let back = torus.poisson_solve(&torus.laplacian(&f))?;
        poisson = poisson.max(back.iter().zip(&f).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let spread_tol = if torus.complex_dim() == 1 { 1e-4 } else { 1e-3 };
    let gap_ok = spread < spread_tol && (predicted == 0.0 && mean.abs() < 1e-8 || rel_err < 1e-3);
    let passed = gap_ok && convention < 1e-10 && poisson < 1e-12;
    Ok(IdentityChecks {
        gaps,
        gap_mean: mean,
        gap_spread: spread,
        gap_predicted: predicted,
        gap_rel_err: rel_err,
        convention_sup: convention,
        poisson_sup: poisson,
        spread_tol,
        passed,
    })
}

fn check_identities(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let t = cfg.torus.build()?;
    let spec = cfg.bundle.primary()?;
    let tau = cfg.params.t_spec().map_or(2.0, |s| s.mean());
    let b = &cfg.identities;
    let base = cfg.solver.seed;
    let checks = identity_checks(&t, &spec, tau, base..base + b.seeds as u64, b.amplitude, b.samples)?;
    Ok(Artifacts {
        exit: if checks.passed { EXIT_OK } else { EXIT_ERROR },
        result: serde_json::to_value(&checks).expect("serializes"),
        ..Default::default()
    })
}

fn rational(x: f64) -> Result<Q> {
    Q::approximate_float(x).ok_or_else(|| cfg_err("stability", format!("{x} has no rational approximation")))
}

fn stability_exp(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let b = &cfg.stability;
    let support = b.phi_support.clone().unwrap_or_else(|| (0..b.summand_degrees.len()).collect());
    let model = SplitModel::new(b.summand_degrees.clone(), support, b.phi_line_degree)?;
    let interval = stability::admissible_interval(&model, b.deg_l)?;
    let mut rows = Vec::new();
    for &tau in &b.taus {
        let q = rational(tau)?;
        let v = match b.deg_l {
            Some(d) => stability::triple_stable(&model, d, q)?,
            None => stability::pair_stable(&model, q)?,
        };
        rows.push(json!({ "tau": tau, "stable": v.is_stable(), "verdict": v }));
    }
    let mut result = json!({
        "model": model,
        "interval": interval.to_string(),
        "interval_bounds": interval,
        "taus": rows,
    });
    if let Some(ext) = &b.extension {
        let m = ExtensionModel::new(ext.r1, ext.d1, ext.r2, ext.d2)?;
        let mut table = Vec::new();
        for &alpha in &ext.alphas {
            let a = rational(alpha)?;
            let slopes: Vec<Value> = m
                .candidates
                .iter()
                .map(|c: &SubExtension| {
                    stability::alpha_slope(c, a).map(|s| json!({ "candidate": c, "alpha_slope": s.to_string() }))
                })
                .collect::<Result<_>>()?;
            let v = stability::extension_alpha_stable(&m, a)?;
            table.push(json!({ "alpha": alpha, "slopes": slopes, "verdict": v }));
        }
        result["extension"] = json!(table);
    }
    Ok(Artifacts { exit: EXIT_OK, result, ..Default::default() })
}

/// Direct `t`-solve against the route through the `u`-transform and a
/// `τ`-solve, for a line bundle on a 2-torus.
pub struct TransformCheck {
    pub direct: (MetricField, SolveReport),
    pub via_tau: (MetricField, SolveReport),
    pub u: Vec<f64>,
    pub t: Vec<f64>,
    /// `sup |h_direct - h_via|` with both log scales shifted to mean zero.
    pub metric_sup: f64,
}

pub fn transform_check(gauge: &GaugeField, phi: &Section, t_vals: &[f64], opts: &crate::solvers::SolveOptions) -> Result<TransformCheck> {
    let torus = &gauge.torus;
    let direct = solve_metric_line(gauge, phi, &ParamSet::function(t_vals.to_vec()), opts)?;
    let tr = u_from_t(torus, t_vals)?;
    let phi_u = phi.mul_real(&tr.u.iter().map(|v| (-0.5 * v).exp()).collect::<Vec<_>>());
    let (k, rep) = solve_metric_twisted(gauge, &phi_u, &tr.u, &ParamSet::tau(tr.tau), opts)?;
    let (h_back, _) = apply_u_transform(&k, &phi_u, &tr.u, Direction::TauToT);
    let centred = |h: &MetricField| {
        let m = torus.mean(&h.log_scale);
        h.log_scale.iter().map(|v| (2.0 * (v - m)).exp()).collect::<Vec<f64>>()
    };
    let a = centred(&direct.0);
    let b = centred(&h_back);
    let metric_sup = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(TransformCheck { direct, via_tau: (h_back, rep), u: tr.u, t: tr.t, metric_sup })
}

fn transform_u(cfg: &ExperimentConfig) -> Result<Artifacts> {
    if cfg.bundle.rank != 1 || cfg.torus.dim != 1 {
        return Err(cfg_err("bundle", "transform-u runs on a line bundle over a 2-torus".into()));
    }
    let (gauge, phi) = vortex_input(cfg)?;
    let t = gauge.torus.clone();
    let t_vals = cfg.params.t_spec().expect("validated").sample(&t);
    let chk = transform_check(&gauge, &phi, &t_vals, &cfg.solver.options())?;
    let (dv, iv) = (chk.direct.1.verdict, chk.via_tau.1.verdict);
    let exit = if dv == Verdict::Solution && iv == Verdict::Solution {
        if chk.metric_sup < 1e-6 { EXIT_OK } else { EXIT_ERROR }
    } else if dv == Verdict::NonExistence && iv == Verdict::NonExistence {
        EXIT_NONEXISTENCE
    } else {
        EXIT_ERROR
    };
    let result = json!({
        "direct": report_json(&chk.direct.1),
        "via_tau": report_json(&chk.via_tau.1),
        "tau": t.mean(&t_vals),
        "metric_sup": chk.metric_sup,
    });
    Ok(Artifacts {
        exit,
        result,
        trace: Some(chk.direct.1.trace_csv()),
        grids: vec![("u".into(), t.clone(), chk.u.clone()), ("t".into(), t.clone(), chk.t.clone())],
        tables: vec![("trace_via_tau.csv".into(), chk.via_tau.1.trace_csv())],
        checkpoint: Some(Checkpoint { gauge, sections: vec![phi], metric: Some(chk.direct.0) }),
    })
}

fn sw_decouple(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let (grid, length) = cfg.torus.square()?;
    let t = cfg.torus.build()?;
    let f = cfg.params.f.as_ref().expect("validated");
    if !f.is_constant() {
        return Err(cfg_err("params.f", "the decoupling experiment takes a constant f".into()));
    }
    let f_prime = match &cfg.params.f_prime {
        Some(s) if !s.is_constant() => return Err(cfg_err("params.f_prime", "must be constant".into())),
        Some(s) => Some(s.mean()),
        None => None,
    };
    let kind = cfg.sw.kind.system();
    if kind == crate::functionals::SystemKind::SwKahlerCoupled {
        let e = cfg.bundle.primary()?;
        let l = cfg.bundle.chern_second.clone().map_or(Ok(crate::bundle_fields::BundleSpec::line(0)), |_| cfg.bundle.second());
        let l = l?;
        let mut params = cfg.params.to_params(&t);
        if params.f_prime.is_none() {
            params.f_prime = Some(crate::functionals::Coefficient::Constant(e.degree(&t) - 0.5 * l.degree(&t) - f.mean()));
        }
        crate::functionals::require_constraint(kind, &t, &[e, l], &params, 1e-8)?;
    }
    let mut runs = Vec::new();
    let mut trace = String::from("seed,iter,energy,phi_norm,beta_norm\n");
    let mut last = None;
    let mut all_ok = true;
    for &seed in &cfg.sw.seeds {
        let dc = DecouplingConfig {
            kind,
            grid,
            length,
            chern_e: cfg.bundle.chern.clone(),
            chern_l: cfg.bundle.chern_second.clone().unwrap_or_else(|| vec![0; cfg.torus.dim]),
            f: f.mean(),
            f_prime,
            seed,
            amplitude: cfg.sw.amplitude,
            max_iters: cfg.sw.max_iters,
            ..Default::default()
        };
        let (rep, state) = decoupling_experiment(&dc)?;
        let ok = if rep.predicted == Branch::Reducible {
            rep.branch == Branch::Reducible
        } else {
            rep.branch == rep.predicted && rep.ratio < 1e-3 && rep.annihilates()
        };
        all_ok &= ok;
        for row in &rep.trace {
            trace.push_str(&format!("{seed},{},{:.17e},{:.17e},{:.17e}\n", row[0], row[1], row[2], row[3]));
        }
        runs.push((rep, ok));
        last = Some(state);
    }
    let result = json!({
        "branch": runs.iter().map(|r| r.0.branch).collect::<Vec<_>>(),
        "predicted": runs.iter().map(|r| r.0.predicted).collect::<Vec<_>>(),
        "ratios": runs.iter().map(|r| r.0.ratio).collect::<Vec<_>>(),
        "sup_product": runs.iter().map(|r| r.0.sup_product).collect::<Vec<_>>(),
        "seeds": cfg.sw.seeds,
        "iterations": runs.iter().map(|r| r.0.iterations).collect::<Vec<_>>(),
        "agree": runs.iter().map(|r| r.1).collect::<Vec<_>>(),
        "runs": runs.iter().map(|r| &r.0).collect::<Vec<_>>(),
    });
    let mut art = Artifacts { exit: if all_ok { EXIT_OK } else { EXIT_ERROR }, result, trace: Some(trace), ..Default::default() };
    if let Some(state) = last {
        if let (Some(g), Some(phi), Some(beta)) = (state.gauge, state.phi, state.beta) {
            art.grids = vec![
                ("phi_norm_sq".into(), g.torus.clone(), phi.pointwise_norm_sq()),
                ("beta_norm_sq".into(), g.torus.clone(), beta.pointwise_norm_sq()),
            ];
            art.checkpoint = Some(Checkpoint { gauge: g, sections: vec![phi, beta], metric: None });
        }
    }
    Ok(art)
}
