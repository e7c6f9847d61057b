//! Exact stability checks for split models over an elliptic curve.
//!
//! A split model is `E = L_1 ⊕ ... ⊕ L_r` with a section `φ` whose non-zero
//! components are listed in `phi_support`. Subsheaves are searched over a
//! finite catalog: every sub-sum of summands and the line generated by `φ`.

use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};

pub type Q = Rational64;

pub fn slope(deg: i64, rank: i64) -> Result<Q> {
    if rank <= 0 {
        return Err(VortexError::RankZero);
    }
    Ok(Q::new(deg, rank))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitModel {
    pub summand_degrees: Vec<i64>,
    /// Zero-based indices of the summands where `φ` is non-zero.
    pub phi_support: Vec<usize>,
    /// Degree of the saturated line subsheaf generated by `φ`.
    pub phi_line_degree: i64,
    #[serde(default)]
    pub genus_tag: String,
}

impl SplitModel {
    pub fn new(summand_degrees: Vec<i64>, phi_support: Vec<usize>, phi_line_degree: i64) -> Result<Self> {
        let m = Self { summand_degrees, phi_support, phi_line_degree, genus_tag: "elliptic".into() };
        m.validate()?;
        Ok(m)
    }

    /// Nowhere-vanishing `φ` with a component in every summand.
    pub fn generic(summand_degrees: Vec<i64>) -> Result<Self> {
        let support = (0..summand_degrees.len()).collect();
        Self::new(summand_degrees, support, 0)
    }

    pub fn rank(&self) -> usize {
        self.summand_degrees.len()
    }

    pub fn degree(&self) -> i64 {
        self.summand_degrees.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.summand_degrees.is_empty() {
            return Err(VortexError::RankZero);
        }
        if self.phi_support.is_empty() {
            return Err(VortexError::InvalidModel("phi_support is empty".into()));
        }
        let mut seen = vec![false; self.rank()];
        for &i in &self.phi_support {
            if i >= self.rank() || seen[i] {
                return Err(VortexError::InvalidModel(format!("bad support index {i}")));
            }
            seen[i] = true;
        }
        let bound = self.phi_support.iter().map(|&i| self.summand_degrees[i]).min().unwrap();
        if self.phi_line_degree > bound {
            return Err(VortexError::InvalidModel(format!(
                "phi line degree {} exceeds the degree {} of a summand it maps to",
                self.phi_line_degree, bound
            )));
        }
        Ok(())
    }

    /// `E ⊗ M` for a line bundle `M` of degree `d`.
    pub fn twisted(&self, d: i64) -> Self {
        Self {
            summand_degrees: self.summand_degrees.iter().map(|x| x + d).collect(),
            phi_support: self.phi_support.clone(),
            phi_line_degree: self.phi_line_degree + d,
            genus_tag: self.genus_tag.clone(),
        }
    }

    fn contains_support(&self, mask: usize) -> bool {
        self.phi_support.iter().all(|&i| mask & (1 << i) != 0)
    }

    fn mask_data(&self, mask: usize) -> (i64, i64) {
        let mut deg = 0;
        let mut rank = 0;
        for (i, d) in self.summand_degrees.iter().enumerate() {
            if mask & (1 << i) != 0 {
                deg += d;
                rank += 1;
            }
        }
        (deg, rank)
    }

    fn describe(&self, mask: usize) -> String {
        let idx: Vec<String> = (0..self.rank()).filter(|i| mask & (1 << i) != 0).map(|i| (i + 1).to_string()).collect();
        if idx.len() == self.rank() {
            "E".into()
        } else {
            format!("L_{{{}}}", idx.join(","))
        }
    }

    /// Slopes that `τ` must exceed, with a description of each subsheaf.
    fn lower_constraints(&self) -> Vec<(String, Q)> {
        let r = self.rank();
        let mut out = Vec::new();
        for mask in 1..(1usize << r) {
            let (d, k) = self.mask_data(mask);
            out.push((self.describe(mask), Q::new(d, k)));
        }
        out.push(("phi-line".into(), Q::from_integer(self.phi_line_degree)));
        out
    }

    /// Quotient slopes that `τ` must stay below.
    fn upper_constraints(&self) -> Vec<(String, Q)> {
        let r = self.rank();
        let full = (1usize << r) - 1;
        let mut out = Vec::new();
        if r > 1 {
            out.push(("E/phi-line".into(), Q::new(self.degree() - self.phi_line_degree, r as i64 - 1)));
        }
        for mask in 1..full {
            if self.contains_support(mask) {
                let (d, k) = self.mask_data(mask);
                out.push((format!("E/{}", self.describe(mask)), Q::new(self.degree() - d, r as i64 - k)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub candidate: String,
    /// 1: `μ(E') < τ` fails; 2: `μ(E/E'') > τ` fails.
    pub condition: u8,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable { witness: Witness },
}

impl Verdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, Verdict::Stable)
    }
}

pub fn pair_stable(model: &SplitModel, tau: Q) -> Result<Verdict> {
    model.validate()?;
    for (name, mu) in model.lower_constraints() {
        if mu >= tau {
            return Ok(Verdict::Unstable {
                witness: Witness { candidate: name, condition: 1, lhs: mu.to_string(), rhs: tau.to_string() },
            });
        }
    }
    for (name, mu) in model.upper_constraints() {
        if mu <= tau {
            return Ok(Verdict::Unstable {
                witness: Witness { candidate: name, condition: 2, lhs: mu.to_string(), rhs: tau.to_string() },
            });
        }
    }
    Ok(Verdict::Stable)
}

/// Stability of the triple `(E, L, φ)`: the pair `(E ⊗ L*, φ)` at `τ - deg L`.
pub fn triple_stable(model: &SplitModel, deg_l: i64, tau: Q) -> Result<Verdict> {
    model.validate()?;
    pair_stable(&model.twisted(-deg_l), tau - deg_l)
}

/// Open interval `(lower, upper)`; `None` is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: Option<Q>,
    pub upper: Option<Q>,
}

impl Interval {
    pub fn is_empty(&self) -> bool {
        matches!((self.lower, self.upper), (Some(a), Some(b)) if a >= b)
    }

    pub fn contains(&self, x: Q) -> bool {
        !self.is_empty() && self.lower.map_or(true, |a| a < x) && self.upper.map_or(true, |b| x < b)
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        let f = |q: Q| *q.numer() as f64 / *q.denom() as f64;
        !self.is_empty() && self.lower.map_or(true, |a| f(a) < x) && self.upper.map_or(true, |b| x < f(b))
    }

    /// Distance from `x` to the nearest finite endpoint.
    pub fn margin(&self, x: f64) -> f64 {
        let f = |q: Q| *q.numer() as f64 / *q.denom() as f64;
        let a = self.lower.map_or(f64::INFINITY, |a| (x - f(a)).abs());
        let b = self.upper.map_or(f64::INFINITY, |b| (x - f(b)).abs());
        a.min(b)
    }

    pub fn shifted(&self, d: i64) -> Self {
        Self { lower: self.lower.map(|a| a + d), upper: self.upper.map(|b| b + d) }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return write!(f, "empty");
        }
        let lo = self.lower.map_or("-inf".to_string(), |a| a.to_string());
        let hi = self.upper.map_or("+inf".to_string(), |b| b.to_string());
        write!(f, "({lo}, {hi})")
    }
}

/// Set of `τ` for which the pair (or, with `deg_l`, the triple) is stable.
pub fn admissible_interval(model: &SplitModel, deg_l: Option<i64>) -> Result<Interval> {
    model.validate()?;
    let d = deg_l.unwrap_or(0);
    let m = model.twisted(-d);
    let lower = m.lower_constraints().into_iter().map(|(_, q)| q).max();
    let upper = m.upper_constraints().into_iter().map(|(_, q)| q).min();
    Ok(Interval { lower, upper }.shifted(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubExtension {
    pub r1: i64,
    pub d1: i64,
    pub r2: i64,
    pub d2: i64,
}

impl SubExtension {
    pub fn rank(&self) -> i64 {
        self.r1 + self.r2
    }
}

/// `0 -> E_1 -> E -> E_2 -> 0` with a catalog of subextensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionModel {
    pub sub: (i64, i64),
    pub quotient: (i64, i64),
    pub candidates: Vec<SubExtension>,
}

impl ExtensionModel {
    /// Catalog `{E_1, E}`.
    pub fn new(r1: i64, d1: i64, r2: i64, d2: i64) -> Result<Self> {
        let m = Self {
            sub: (r1, d1),
            quotient: (r2, d2),
            candidates: vec![SubExtension { r1, d1, r2: 0, d2: 0 }, SubExtension { r1, d1, r2, d2 }],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn total(&self) -> SubExtension {
        SubExtension { r1: self.sub.0, d1: self.sub.1, r2: self.quotient.0, d2: self.quotient.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(VortexError::InvalidModel("empty candidate list".into()));
        }
        for c in &self.candidates {
            if c.r1 < 0 || c.r1 > self.sub.0 || c.r2 < 0 || c.r2 > self.quotient.0 {
                return Err(VortexError::InvalidModel(format!("candidate {c:?} has ranks outside the extension")));
            }
        }
        Ok(())
    }
}

/// `μ_α(E') = μ(E') + α r_2'/r'`.
pub fn alpha_slope(c: &SubExtension, alpha: Q) -> Result<Q> {
    let mu = slope(c.d1 + c.d2, c.rank())?;
    Ok(mu + alpha * Q::new(c.r2, c.rank()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionVerdict {
    pub verdict: Verdict,
    /// `α ≤ 0`, the range where the correspondence with the equations is known.
    pub alpha_admissible: bool,
}

pub fn extension_alpha_stable(model: &ExtensionModel, alpha: Q) -> Result<ExtensionVerdict> {
    model.validate()?;
    let total = model.total();
    let mu = alpha_slope(&total, alpha)?;
    let mut verdict = Verdict::Stable;
    for c in &model.candidates {
        if *c == total || c.rank() == 0 {
            continue;
        }
        let m = alpha_slope(c, alpha)?;
        if m >= mu {
            verdict = Verdict::Unstable {
                witness: Witness {
                    candidate: format!("({},{},{},{})", c.r1, c.d1, c.r2, c.d2),
                    condition: 1,
                    lhs: m.to_string(),
                    rhs: mu.to_string(),
                },
            };
            break;
        }
    }
    Ok(ExtensionVerdict { verdict, alpha_admissible: alpha <= Q::zero() })
}
