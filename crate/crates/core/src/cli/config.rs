use serde::{Deserialize, Serialize};

use crate::bundle_fields::{BundleSpec, Role};
use crate::error::{Result, VortexError};
use crate::functionals::{Coefficient, ParamSet, SystemKind};
use crate::geometry::LatticeTorus;
use crate::solvers::SolveOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SolveVortex,
    SolveCoupled,
    ScanTau,
    CheckIdentities,
    Stability,
    TransformU,
    SwDecouple,
}

/// One or several values; a single value is repeated over every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> PerAxis<T> {
    fn expand(&self, n: usize, key: &str) -> Result<Vec<T>> {
        match self {
            PerAxis::One(v) => Ok(vec![v.clone(); n]),
            PerAxis::Many(v) if v.len() == n => Ok(v.clone()),
            PerAxis::Many(v) => Err(cfg_err(key, format!("expected {n} entries, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusBlock {
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_grid")]
    pub grid: PerAxis<usize>,
    #[serde(default = "default_length")]
    pub lengths: PerAxis<f64>,
}

impl Default for TorusBlock {
    fn default() -> Self {
        Self { dim: 1, grid: default_grid(), lengths: default_length() }
    }
}

fn one() -> usize {
    1
}
fn default_grid() -> PerAxis<usize> {
    PerAxis::One(32)
}
fn default_length() -> PerAxis<f64> {
    PerAxis::One(1.0)
}

impl TorusBlock {
    pub fn build(&self) -> Result<LatticeTorus> {
        let d = 2 * self.dim;
        LatticeTorus::new(self.dim, &self.grid.expand(d, "torus.grid")?, &self.lengths.expand(d, "torus.lengths")?)
    }

    /// Side length when the torus is square, for the builders that need one.
    pub fn square(&self) -> Result<(usize, f64)> {
        let d = 2 * self.dim;
        let g = self.grid.expand(d, "torus.grid")?;
        let l = self.lengths.expand(d, "torus.lengths")?;
        if g.iter().any(|&n| n != g[0]) || l.iter().any(|&x| x != l[0]) {
            return Err(cfg_err("torus", "this experiment needs a square torus".into()));
        }
        Ok((g[0], l[0]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleBlock {
    #[serde(default = "one")]
    pub rank: usize,
    #[serde(default = "default_chern")]
    pub chern: Vec<i64>,
    /// Second line bundle `L` of the coupled and monopole systems.
    #[serde(default)]
    pub chern_second: Option<Vec<i64>>,
}

fn default_chern() -> Vec<i64> {
    vec![1]
}

impl Default for BundleBlock {
    fn default() -> Self {
        Self { rank: 1, chern: default_chern(), chern_second: None }
    }
}

impl BundleBlock {
    pub fn primary(&self) -> Result<BundleSpec> {
        BundleSpec::new(self.rank, self.chern.clone(), Role::Primary)
    }

    pub fn second(&self) -> Result<BundleSpec> {
        let c = self.chern_second.clone().ok_or_else(|| cfg_err("bundle.chern_second", "required here".into()))?;
        BundleSpec::new(1, c, Role::Auxiliary)
    }
}

/// A single Fourier mode `amp * cos(2π k·x / L)` (or `sin`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub mode: Vec<i64>,
    pub amp: f64,
    #[serde(default)]
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Cos,
    Sin,
}

/// A band-limited real function: a constant, or a mean plus finitely many modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Constant(f64),
    Modes {
        #[serde(default)]
        mean: f64,
        #[serde(default)]
        modes: Vec<Mode>,
    },
}

impl FunctionSpec {
    pub fn mean(&self) -> f64 {
        match self {
            FunctionSpec::Constant(v) => *v,
            FunctionSpec::Modes { mean, .. } => *mean,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            FunctionSpec::Constant(_) => true,
            FunctionSpec::Modes { modes, .. } => modes.iter().all(|m| m.amp == 0.0),
        }
    }

    /// Every mode must sit below a quarter of the grid on its axis.
    pub fn validate(&self, torus: &LatticeTorus, key: &str) -> Result<()> {
        if let FunctionSpec::Modes { modes, .. } = self {
            for (i, m) in modes.iter().enumerate() {
                if m.mode.len() != torus.real_dim() {
                    return Err(cfg_err(
                        &format!("{key}.modes[{i}].mode"),
                        format!("expected {} wavenumbers", torus.real_dim()),
                    ));
                }
                for (a, &k) in m.mode.iter().enumerate() {
                    if 4 * k.unsigned_abs() as usize >= torus.grid()[a] {
                        return Err(cfg_err(
                            &format!("{key}.modes[{i}].mode"),
                            format!("wavenumber {k} is not below a quarter of the grid ({})", torus.grid()[a]),
                        ));
                    }
                }
                if !m.amp.is_finite() {
                    return Err(cfg_err(&format!("{key}.modes[{i}].amp"), "must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, torus: &LatticeTorus) -> Vec<f64> {
        match self {
            FunctionSpec::Constant(v) => vec![*v; torus.sites()],
            FunctionSpec::Modes { mean, modes } => {
                let d = torus.real_dim();
                let mut idx = vec![0usize; d];
                (0..torus.sites())
                    .map(|s| {
                        torus.coords(s, &mut idx);
                        let mut v = *mean;
                        for m in modes {
                            let arg: f64 = (0..d)
                                .map(|a| {
                                    2.0 * std::f64::consts::PI * m.mode[a] as f64 * torus.coordinate(a, idx[a])
                                        / torus.lengths()[a]
                                })
                                .sum();
                            v += m.amp
                                * match m.phase {
                                    Phase::Cos => arg.cos(),
                                    Phase::Sin => arg.sin(),
                                };
                        }
                        v
                    })
                    .collect()
            }
        }
    }

    pub fn coefficient(&self, torus: &LatticeTorus) -> Coefficient {
        if self.is_constant() {
            Coefficient::Constant(self.mean())
        } else {
            Coefficient::Field(self.sample(torus))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    /// Constant `τ`; `t` takes precedence when both are given.
    pub tau: Option<f64>,
    pub tau_prime: Option<f64>,
    pub t: Option<FunctionSpec>,
    pub t_prime: Option<FunctionSpec>,
    pub f: Option<FunctionSpec>,
    pub f_prime: Option<FunctionSpec>,
}

impl ParamsBlock {
    pub fn validate(&self, torus: &LatticeTorus) -> Result<()> {
        for (key, spec) in [("params.t", &self.t), ("params.t_prime", &self.t_prime), ("params.f", &self.f), ("params.f_prime", &self.f_prime)] {
            if let Some(s) = spec {
                s.validate(torus, key)?;
            }
        }
        Ok(())
    }

    pub fn t_spec(&self) -> Option<FunctionSpec> {
        self.t.clone().or(self.tau.map(FunctionSpec::Constant))
    }

    pub fn t_prime_spec(&self) -> Option<FunctionSpec> {
        self.t_prime.clone().or(self.tau_prime.map(FunctionSpec::Constant))
    }

    pub fn to_params(&self, torus: &LatticeTorus) -> ParamSet {
        ParamSet {
            t: self.t_spec().map(|s| s.coefficient(torus)),
            t_prime: self.t_prime_spec().map(|s| s.coefficient(torus)),
            f: self.f.as_ref().map(|s| s.coefficient(torus)),
            f_prime: self.f_prime.as_ref().map(|s| s.coefficient(torus)),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Metric picture: Newton for line bundles, heat flow for matrices.
    #[default]
    Metric,
    /// Unitary picture: direct minimization of the vortex energy.
    Unitary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_iters() -> usize {
    20_000
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self { method: Method::Metric, tol: default_tol(), max_iters: default_iters(), seed: 0 }
    }
}

impl SolverBlock {
    pub fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iters: self.max_iters, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanModelName {
    /// Line bundle of degree `bundle.chern[0]`.
    #[default]
    Line,
    SplitRank2,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    #[serde(default)]
    pub model: ScanModelName,
    #[serde(default)]
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionBlock {
    pub r1: i64,
    pub d1: i64,
    pub r2: i64,
    pub d2: i64,
    #[serde(default)]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityBlock {
    #[serde(default = "default_summands")]
    pub summand_degrees: Vec<i64>,
    /// Summands where `φ` has a component; all of them when omitted.
    pub phi_support: Option<Vec<usize>>,
    #[serde(default)]
    pub phi_line_degree: i64,
    /// Degree of `L` for the triple test.
    pub deg_l: Option<i64>,
    #[serde(default)]
    pub taus: Vec<f64>,
    pub extension: Option<ExtensionBlock>,
}

fn default_summands() -> Vec<i64> {
    vec![1, 1]
}

impl Default for StabilityBlock {
    fn default() -> Self {
        Self {
            summand_degrees: default_summands(),
            phi_support: None,
            phi_line_degree: 0,
            deg_l: None,
            taus: Vec::new(),
            extension: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesBlock {
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Number of band-limited samples for the convention and Poisson checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_seeds() -> usize {
    5
}
fn default_amplitude() -> f64 {
    0.2
}
fn default_samples() -> usize {
    10
}

impl Default for IdentitiesBlock {
    fn default() -> Self {
        Self { seeds: default_seeds(), amplitude: default_amplitude(), samples: default_samples() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwKind {
    #[default]
    Fixed,
    Coupled,
}

impl SwKind {
    pub fn system(self) -> SystemKind {
        match self {
            SwKind::Fixed => SystemKind::SwKahlerFixed,
            SwKind::Coupled => SystemKind::SwKahlerCoupled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwBlock {
    #[serde(default)]
    pub kind: SwKind,
    /// Seeds to run; `--seed` replaces the list with a single seed.
    #[serde(default = "default_sw_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "one_f")]
    pub amplitude: f64,
    #[serde(default = "default_sw_iters")]
    pub max_iters: usize,
}

fn default_sw_seeds() -> Vec<u64> {
    vec![0]
}
fn one_f() -> f64 {
    1.0
}
fn default_sw_iters() -> usize {
    3000
}

impl Default for SwBlock {
    fn default() -> Self {
        Self { kind: SwKind::Fixed, seeds: default_sw_seeds(), amplitude: 1.0, max_iters: default_sw_iters() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBlock {
    /// Start from the gauge field and section stored in this checkpoint.
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Write grid CSV dumps of the scalar fields.
    #[serde(default = "yes")]
    pub fields: bool,
    /// Write the final state as a checkpoint.
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn default_dir() -> String {
    "out".into()
}
fn yes() -> bool {
    true
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_dir(), fields: true, checkpoint: true }
    }
}

/// Full description of one run. Every default is filled in on load, so the
/// serialized form reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub torus: TorusBlock,
    #[serde(default)]
    pub bundle: BundleBlock,
    #[serde(default)]
    pub params: ParamsBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub scan: ScanBlock,
    #[serde(default)]
    pub stability: StabilityBlock,
    #[serde(default)]
    pub identities: IdentitiesBlock,
    #[serde(default)]
    pub sw: SwBlock,
    #[serde(default)]
    pub input: Option<InputBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

pub(crate) fn cfg_err(key: &str, message: String) -> VortexError {
    VortexError::Config { key: key.into(), message }
}

impl ExperimentConfig {
    /// Parse TOML. Syntax and type errors carry line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|sp| {
                    let line = text[..sp.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            cfg_err(&key, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Shape checks that need no solve.
    pub fn validate(&self) -> Result<()> {
        let t = self.torus.build().map_err(|e| cfg_err("torus", e.to_string()))?;
        self.params.validate(&t)?;
        if self.bundle.chern.len() != self.torus.dim {
            return Err(cfg_err("bundle.chern", format!("expected {} fluxes", self.torus.dim)));
        }
        if let Some(c) = &self.bundle.chern_second {
            if c.len() != self.torus.dim {
                return Err(cfg_err("bundle.chern_second", format!("expected {} fluxes", self.torus.dim)));
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(cfg_err("solver.tol", "must be positive".into()));
        }
        let need_t = matches!(
            self.experiment,
            Experiment::SolveVortex | Experiment::SolveCoupled | Experiment::TransformU
        );
        if need_t && self.params.t_spec().is_none() {
            return Err(cfg_err("params.tau", "this experiment needs tau or t".into()));
        }
        match self.experiment {
            Experiment::SolveCoupled if self.params.t_prime_spec().is_none() => {
                Err(cfg_err("params.tau_prime", "the coupled system needs tau_prime or t_prime".into()))
            }
            Experiment::SolveCoupled if self.bundle.chern_second.is_none() => {
                Err(cfg_err("bundle.chern_second", "the coupled system needs the degree of L".into()))
            }
            Experiment::ScanTau if self.scan.taus.is_empty() => Err(cfg_err("scan.taus", "empty scan".into())),
            Experiment::SwDecouple if self.torus.dim != 2 => {
                Err(cfg_err("torus.dim", "the monopole experiment runs on a 4-torus".into()))
            }
            Experiment::SwDecouple if self.params.f.is_none() => {
                Err(cfg_err("params.f", "the monopole experiment needs f".into()))
            }
            _ => Ok(()),
        }
    }
}
