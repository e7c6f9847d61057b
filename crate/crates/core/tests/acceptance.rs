//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use vortexlab::bundle_fields::{BundleSpec, GaugeField, Role};
use vortexlab::cli::{generic_line_section, identity_checks, transform_check};
use vortexlab::functionals::ParamSet;
use vortexlab::geometry::LatticeTorus;
use vortexlab::solvers::{line_model, solve_coupled, solve_metric_line, tau_scan, ScanModel, ScanSpec, SolveOptions, Verdict};
use vortexlab::stability::{
    admissible_interval, alpha_slope, extension_alpha_stable, pair_stable, triple_stable, ExtensionModel, Interval,
    SplitModel, Q,
};
use vortexlab::swkahler::{decoupling_experiment, Branch, DecouplingConfig};
use vortexlab::VortexError;

struct Ledger {
    failed: usize,
}

impl Ledger {
    fn line(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

/// Relative error of `∫|φ|²_H` against `2π(r t̄ - deg E)` for one solution.
struct Identity {
    label: String,
    rel_err: f64,
}

fn existence_threshold(led: &mut Ledger, ids: &mut Vec<Identity>) {
    let m = line_model(64, 1.0, 1).unwrap();
    let opts = SolveOptions::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for tau in [1.2, 1.5, 2.0, 3.0, 0.5, 0.9] {
        let start = Instant::now();
        let (h, rep) = solve_metric_line(&m.gauge, &m.phi, &ParamSet::tau(tau), &opts).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let expect = if tau > 1.0 { Verdict::Solution } else { Verdict::NonExistence };
        let case_ok = rep.verdict == expect && (expect != Verdict::Solution || rep.residual.total < 1e-8) && secs < 60.0;
        ok &= case_ok;
        notes.push(format!("tau={tau} {:?} res={:.1e} {secs:.1}s", rep.verdict, rep.residual.total));
        if rep.verdict == Verdict::Solution {
            let mass = m.torus.integrate(&h.norm_sq(&m.phi));
            let want = 2.0 * PI * (tau - 1.0);
            ids.push(Identity { label: format!("line tau={tau}"), rel_err: (mass - want).abs() / want });
        }
    }
    led.line("existence threshold deg L < tau on 64^2", ok, notes.join("; "));
}

fn t_tau_equivalence(led: &mut Ledger, ids: &mut Vec<Identity>) {
    let m = line_model(64, 1.0, 1).unwrap();
    let t = &m.torus;
    let t_vals: Vec<f64> = (0..t.sites())
        .map(|s| {
            let mut ix = [0; 2];
            t.coords(s, &mut ix);
            2.0 + 0.3 * (2.0 * PI * t.coordinate(0, ix[0]) / t.lengths()[0]).cos()
        })
        .collect();
    let chk = transform_check(&m.gauge, &m.phi, &t_vals, &SolveOptions::default()).unwrap();
    let (d, v) = (&chk.direct.1, &chk.via_tau.1);
    let ok = d.verdict == Verdict::Solution
        && v.verdict == Verdict::Solution
        && d.residual.total < 1e-8
        && v.residual.total < 1e-8
        && chk.metric_sup < 1e-6;
    if d.verdict == Verdict::Solution {
        let mass = t.integrate(&chk.direct.0.norm_sq(&m.phi));
        ids.push(Identity { label: "line t=2+0.3cos".into(), rel_err: (mass - 2.0 * PI).abs() / (2.0 * PI) });
    }
    led.line(
        "t <-> tau transform",
        ok,
        format!("metric sup {:.2e}, residuals {:.1e} / {:.1e}", chk.metric_sup, d.residual.total, v.residual.total),
    );
}

fn energy_gap(led: &mut Ledger) {
    let t2 = LatticeTorus::square(1, 128, 1.0).unwrap();
    let c2 = identity_checks(&t2, &BundleSpec::line(1), 2.0, 0..20, 0.2, 0).unwrap();
    let ok2 = c2.gap_spread < 1e-4 && (c2.gap_mean - 8.0 * PI).abs() < 1e-3 * 8.0 * PI;
    let t4 = LatticeTorus::square(2, 12, 1.0).unwrap();
    let trivial = BundleSpec::new(1, vec![0, 0], Role::Primary).unwrap();
    let c4 = identity_checks(&t4, &trivial, 2.0, 0..10, 0.2, 0).unwrap();
    let ok4 = c4.gap_spread < 1e-3;
    led.line(
        "energy identity gap (T^2 128^2 x20, T^4 12^4 x10)",
        ok2 && ok4,
        format!(
            "T^2 mean {:.10} vs 8pi, spread {:.1e}; T^4 mean {:.2e}, spread {:.1e}",
            c2.gap_mean, c2.gap_spread, c4.gap_mean, c4.gap_spread
        ),
    );
}

fn split_scan(led: &mut Ledger, ids: &mut Vec<Identity>) {
    let taus = vec![0.6, 0.9, 1.1, 1.5, 1.9, 2.1, 2.4];
    let spec = ScanSpec {
        model: ScanModel::SplitRank2,
        grid: 32,
        length: 1.0,
        taus: taus.clone(),
        options: SolveOptions { max_iters: 6000, ..Default::default() },
    };
    let rows = tau_scan(&spec).unwrap();
    let oracle = admissible_interval(&SplitModel::generic(vec![1, 1]).unwrap(), None).unwrap();
    let mut disagreements = 0;
    let mut notes = Vec::new();
    for r in &rows {
        let solved = r.verdict == Verdict::Solution;
        let agree = r.stable == oracle.contains_f64(r.tau)
            && r.margin >= 0.1 - 1e-12
            && (solved || r.verdict == Verdict::NonExistence)
            && solved == r.stable;
        if !agree {
            disagreements += 1;
        }
        if solved {
            // rank 2, degree 1 + 1
            let want = 2.0 * PI * (2.0 * r.tau - 2.0);
            ids.push(Identity { label: format!("split tau={}", r.tau), rel_err: (r.phi_norm_sq - want).abs() / want });
        }
        notes.push(format!("{}:{:?}", r.tau, r.verdict));
    }
    led.line(
        "split rank-2 scan against stability interval",
        disagreements == 0 && rows.len() == taus.len(),
        format!("{disagreements} disagreements, oracle {oracle}; {}", notes.join(" ")),
    );
}

fn coupled(led: &mut Ledger, ids: &mut Vec<Identity>) {
    let t = LatticeTorus::square(1, 32, 1.0).unwrap();
    let ge = GaugeField::background(&t, &BundleSpec::new(1, vec![1], Role::Primary).unwrap()).unwrap();
    let gl = GaugeField::background(&t, &BundleSpec::new(1, vec![-1], Role::Auxiliary).unwrap()).unwrap();
    let phi = generic_line_section(&t, &[2]).unwrap();
    let opts = SolveOptions::default();
    let (h, k, rep) = solve_coupled(&ge, &gl, &phi, &ParamSet::coupled(1.5, -1.5), &opts).unwrap();
    let hn = h.norm_sq(&phi);
    let dens: Vec<f64> = (0..t.sites()).map(|s| hn[s] * (-2.0 * k.log_scale[s]).exp()).collect();
    let mass = t.integrate(&dens);
    // ∫|φ|² = 2π(t̄ - deg E) = 2π(deg L - t̄')
    let (ie, il) = (2.0 * PI * (1.5 - 1.0), 2.0 * PI * (-1.0 + 1.5));
    let sol_ok = rep.verdict == Verdict::Solution
        && (mass - ie).abs() < 1e-3 * PI
        && (mass - il).abs() < 1e-3 * PI
        && (ie - PI).abs() < 1e-12
        && (il - PI).abs() < 1e-12;
    if rep.verdict == Verdict::Solution {
        ids.push(Identity { label: "coupled".into(), rel_err: (mass - ie).abs() / ie });
    }
    let mut rejected = 0;
    let shifts = [1e-6, -1e-6, 1e-3, 0.5];
    for d in shifts {
        let r = solve_coupled(&ge, &gl, &phi, &ParamSet::coupled(1.5, -1.5 + d), &opts);
        if matches!(r, Err(VortexError::ConstraintViolation { .. })) {
            rejected += 1;
        }
    }
    led.line(
        "coupled system identities and constraint",
        sol_ok && rejected == shifts.len(),
        format!("{:?}, mass {mass:.8} vs pi, {rejected}/{} violations rejected", rep.verdict, shifts.len()),
    );
}

fn integral_identity(led: &mut Ledger, ids: &[Identity]) {
    let worst = ids.iter().map(|i| i.rel_err).fold(0.0, f64::max);
    let bad: Vec<&str> = ids.iter().filter(|i| !(i.rel_err < 1e-3)).map(|i| i.label.as_str()).collect();
    led.line(
        "integral identity on every converged solution",
        !ids.is_empty() && bad.is_empty(),
        format!("{} solutions, worst relative error {worst:.1e}{}", ids.len(), if bad.is_empty() { String::new() } else { format!(", failing {bad:?}") }),
    );
}

fn sw_decoupling(led: &mut Ledger) {
    let mut ok = true;
    let mut agree = 0;
    let mut notes = Vec::new();
    let mut slowest: f64 = 0.0;
    for (f, seeds) in [(0.5, 0..5u64), (-0.5, 5..10u64)] {
        for seed in seeds {
            let start = Instant::now();
            let (r, _) = decoupling_experiment(&DecouplingConfig { f, seed, ..Default::default() }).unwrap();
            let secs = start.elapsed().as_secs_f64();
            slowest = slowest.max(secs);
            let lo = r.phi_norm.min(r.beta_norm);
            let hi = r.phi_norm.max(r.beta_norm);
            let run_ok = r.branch == r.predicted && lo / hi < 1e-3 && r.annihilates() && secs < 300.0;
            if r.branch == r.predicted {
                agree += 1;
            } else {
                notes.push(format!("f={f} seed={seed} gave {:?}", r.branch));
            }
            ok &= run_ok;
        }
    }
    let start = Instant::now();
    let (r0, _) = decoupling_experiment(&DecouplingConfig { f: 0.0, seed: 10, ..Default::default() }).unwrap();
    let secs = start.elapsed().as_secs_f64();
    slowest = slowest.max(secs);
    ok &= r0.branch == Branch::Reducible && secs < 300.0;
    led.line(
        "SW decoupling on 12^4",
        ok,
        format!("{agree}/10 branches match the sign, f=0 gives {:?}, slowest run {slowest:.0}s {}", r0.branch, notes.join("; ")),
    );
}

fn conventions(led: &mut Ledger) {
    let t = LatticeTorus::square(1, 64, 1.0).unwrap();
    let c = identity_checks(&t, &BundleSpec::line(1), 2.0, 0..1, 0.2, 10).unwrap();
    led.line(
        "curvature under e^u and Poisson inverse",
        c.convention_sup < 1e-10 && c.poisson_sup < 1e-12,
        format!("e^u rule sup {:.1e}, poisson sup {:.1e} over 10 samples", c.convention_sup, c.poisson_sup),
    );
}

fn stability_suite(led: &mut Ledger) {
    let q = |n: i64, d: i64| Q::new(n, d);
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let line = SplitModel::new(vec![1], vec![0], 1).unwrap();
    checks.push(("line (1,inf)", admissible_interval(&line, None).unwrap() == Interval { lower: Some(q(1, 1)), upper: None }));
    let gen = SplitModel::generic(vec![1, 1]).unwrap();
    let iv = admissible_interval(&gen, None).unwrap();
    checks.push(("rank-2 (1,2)", iv == Interval { lower: Some(q(1, 1)), upper: Some(q(2, 1)) }));
    let edge = [q(1, 1), q(2, 1)].iter().all(|&t| !pair_stable(&gen, t).unwrap().is_stable());
    checks.push(("rank-2 walls excluded", edge && pair_stable(&gen, q(3, 2)).unwrap().is_stable()));
    let summand = SplitModel::new(vec![1, 1], vec![0], 0).unwrap();
    let empty = admissible_interval(&summand, None).unwrap().is_empty()
        && (-8..16).all(|k| !pair_stable(&summand, q(k, 4)).unwrap().is_stable());
    checks.push(("phi in a summand", empty));
    // twisting the bundle and L by 1 shifts the parameter by 1
    let shifted = (-8..24).all(|k| {
        triple_stable(&gen.twisted(1), 1, q(k, 4) + 1).unwrap().is_stable() == pair_stable(&gen, q(k, 4)).unwrap().is_stable()
    });
    let trivial_l = (-8..24).all(|k| triple_stable(&gen, 0, q(k, 4)).unwrap() == pair_stable(&gen, q(k, 4)).unwrap());
    checks.push(("triple shift by deg L", shifted && trivial_l));
    let ext = ExtensionModel::new(1, 0, 1, 0).unwrap();
    let table = alpha_slope(&ext.total(), q(-1, 1)).unwrap() == q(-1, 2)
        && alpha_slope(&ext.total(), q(0, 1)).unwrap() == q(0, 1)
        && alpha_slope(&ext.candidates[0], q(-7, 3)).unwrap() == q(0, 1)
        && !extension_alpha_stable(&ext, q(-1, 1)).unwrap().verdict.is_stable();
    checks.push(("alpha-slope table", table));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    led.line(
        "stability oracle suite",
        failed.is_empty(),
        format!("{}/{} exact checks{}", checks.len() - failed.len(), checks.len(), if failed.is_empty() { String::new() } else { format!(", failing {failed:?}") }),
    );
}

fn main() {
    let start = Instant::now();
    let mut led = Ledger { failed: 0 };
    let mut ids = Vec::new();
    existence_threshold(&mut led, &mut ids);
    t_tau_equivalence(&mut led, &mut ids);
    energy_gap(&mut led);
    split_scan(&mut led, &mut ids);
    coupled(&mut led, &mut ids);
    integral_identity(&mut led, &ids);
    sw_decoupling(&mut led);
    conventions(&mut led);
    stability_suite(&mut led);
    println!("acceptance: {} failed, {:.0}s total", led.failed, start.elapsed().as_secs_f64());
    if led.failed > 0 {
        std::process::exit(1);
    }
}
