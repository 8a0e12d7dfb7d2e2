//! Poincaré inequalities at a scale and their cumulated variant.
//!
//! A [`MeasurePair`] consists of a probability measure on far pairs
//! (`d >= r`) and one on near pairs. A space satisfies the inequality with
//! constant `J` if, for every `φ: X → R`,
//!
//! ```text
//! Σ_far w (|φx - φy| / J)^p  <=  Σ_near w (|φx - φy| / d(x,y))^p
//! ```
//!
//! At `p = 2` the optimal `J` is a generalized eigenvalue and is computed
//! exactly; for other `p` only lower bounds are produced. Any certificate
//! converts into a compression ceiling and a distortion lower bound, see
//! [`compression_constraint`] and [`cumulative_constraint`].

mod constraints;
mod recipes;
mod solve;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::generators::GenError;
use crate::space::FiniteSpace;
use crate::util::fmt_g17;

pub use constraints::{compression_constraint, cumulative_constraint, CompressionConstraint, CumulativeConstraint};
pub use recipes::{
    diametral_certificate, expander_certificate, laakso_cp_check, skew_cube_certificate, tree_cp_certificate,
    LaaksoReport, LAAKSO_SPREAD_LIMIT,
};
pub use solve::{cumulative_certificate, optimal_constant_general, optimal_constant_p2, SearchBudget, CUT_LIMIT};

/// Tolerance on probability totals and on the `d >= r` support condition.
pub const MEASURE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PoincareError {
    #[error("no finite constant: some φ vanishes on the near measure but not on the far one")]
    Infeasible,

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("not a cube: {0}")]
    NotACube(String),

    #[error("cube map is not injective: corners {a} and {b} share a point")]
    NotInjective { a: usize, b: usize },

    #[error("not a rooted tree: {0}")]
    NotATree(String),

    #[error("conversion needs p > 1 (got p = {p})")]
    UnsupportedExponent { p: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Gen(#[from] GenError),
}

pub type Result<T> = std::result::Result<T, PoincareError>;

/// An unordered pair `{x, y}` with a weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedPair {
    pub x: usize,
    pub y: usize,
    pub w: f64,
}

impl WeightedPair {
    pub fn new(x: usize, y: usize, w: f64) -> Self {
        Self { x, y, w }
    }
}

/// Uniform probability on the given pairs.
pub fn uniform(pairs: &[(usize, usize)]) -> Vec<WeightedPair> {
    let w = 1.0 / pairs.len() as f64;
    pairs.iter().map(|&(x, y)| WeightedPair::new(x, y, w)).collect()
}

fn check_probability(space: &FiniteSpace, pairs: &[WeightedPair], min_d: f64, what: &str) -> Result<()> {
    if pairs.is_empty() {
        return Err(PoincareError::InvalidMeasure(format!("{what} measure is empty")));
    }
    let mut total = 0.0;
    for p in pairs {
        if p.x >= space.len() || p.y >= space.len() {
            return Err(PoincareError::InvalidMeasure(format!("{what} pair ({}, {}) out of range", p.x, p.y)));
        }
        if p.x == p.y {
            return Err(PoincareError::InvalidMeasure(format!("{what} pair ({}, {}) is diagonal", p.x, p.y)));
        }
        if !(p.w >= 0.0 && p.w.is_finite()) {
            return Err(PoincareError::InvalidMeasure(format!("{what} weight {} is not a probability", p.w)));
        }
        let d = space.d(p.x, p.y);
        if d < min_d * (1.0 - MEASURE_TOL) {
            return Err(PoincareError::InvalidMeasure(format!(
                "{what} pair ({}, {}) at distance {d} is below {min_d}",
                p.x, p.y
            )));
        }
        total += p.w;
    }
    if (total - 1.0).abs() > MEASURE_TOL * pairs.len().max(1) as f64 {
        return Err(PoincareError::InvalidMeasure(format!("{what} weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Far measure on pairs at distance `>= r` and near measure on distinct
/// pairs, both probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurePair {
    r: f64,
    far: Vec<WeightedPair>,
    near: Vec<WeightedPair>,
}

impl MeasurePair {
    pub fn new(space: &FiniteSpace, r: f64, far: Vec<WeightedPair>, near: Vec<WeightedPair>) -> Result<Self> {
        if !(r > 0.0) {
            return Err(PoincareError::InvalidMeasure(format!("scale r = {r} must be positive")));
        }
        check_probability(space, &far, r, "far")?;
        check_probability(space, &near, 0.0, "near")?;
        Ok(Self { r, far, near })
    }

    /// Uniform far and near measures on the given pairs.
    pub fn uniform(space: &FiniteSpace, r: f64, far: &[(usize, usize)], near: &[(usize, usize)]) -> Result<Self> {
        Self::new(space, r, uniform(far), uniform(near))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn far(&self) -> &[WeightedPair] {
        &self.far
    }

    pub fn near(&self) -> &[WeightedPair] {
        &self.near
    }
}

/// How the constant of a certificate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Generalized eigenvalue at `p = 2`: the optimal constant.
    EigenExact,
    /// Best value found by ascent; a lower bound on the optimal constant.
    HeuristicLower,
    /// Exhaustive search over two-valued `φ` agreeing with the ascent.
    CutExhaustive,
    /// Closed-form skew-cube constant, valid at `p = 2`.
    SkewCube,
}

impl Method {
    /// Whether the inequality is proven to hold with the stated constant.
    pub fn is_certified(self) -> bool {
        !matches!(self, Method::HeuristicLower)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::EigenExact => "eigen_exact",
            Method::HeuristicLower => "heuristic_lower",
            Method::CutExhaustive => "cut_exhaustive",
            Method::SkewCube => "skew_cube",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PoincareError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "eigen_exact" => Method::EigenExact,
            "heuristic_lower" => Method::HeuristicLower,
            "cut_exhaustive" => Method::CutExhaustive,
            "skew_cube" => Method::SkewCube,
            _ => return Err(PoincareError::Parse { line: 1, msg: format!("unknown method {s:?}") }),
        })
    }
}

/// `Σ w |φx - φy|^p` over `pairs`, each term divided by `d^p` if `space`
/// is given.
fn energy(pairs: &[WeightedPair], phi: &[f64], p: f64, space: Option<&FiniteSpace>) -> f64 {
    pairs
        .iter()
        .map(|q| {
            let t = (phi[q.x] - phi[q.y]).abs().powf(p) * q.w;
            match space {
                Some(s) => t / s.d(q.x, q.y).powf(p),
                None => t,
            }
        })
        .sum()
}

/// Poincaré inequality at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincareCertificate {
    pub p: f64,
    pub j: f64,
    pub measures: MeasurePair,
    pub method: Method,
}

impl PoincareCertificate {
    pub fn r(&self) -> f64 {
        self.measures.r
    }

    /// Near side minus far side of the inequality for one test function;
    /// nonnegative whenever the inequality holds for `φ`.
    pub fn slack(&self, space: &FiniteSpace, phi: &[f64]) -> f64 {
        energy(&self.measures.near, phi, self.p, Some(space))
            - energy(&self.measures.far, phi, self.p, None) / self.j.powf(self.p)
    }

    /// Text form: header line, then `P` and `Q` sections of `x y w` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "poincare p={} r={} J={} method={}\n",
            fmt_g17(self.p),
            fmt_g17(self.r()),
            fmt_g17(self.j),
            self.method
        );
        write_pairs(&mut out, "P", &self.measures.far);
        write_pairs(&mut out, "Q", &self.measures.near);
        out
    }
}

fn write_pairs(out: &mut String, header: &str, pairs: &[WeightedPair]) {
    out.push_str(header);
    out.push('\n');
    for q in pairs {
        let _ = writeln!(out, "{} {} {}", q.x, q.y, fmt_g17(q.w));
    }
}

/// One scale `2^k` of a cumulated inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleTerm {
    pub k: u32,
    /// Probability on pairs at distance `>= 2^k`.
    pub far: Vec<WeightedPair>,
    /// Certified `J(2^k)`.
    pub j: f64,
    /// Optimal constant of this scale's inequality on its own; diagnostic
    /// only, since the single-scale inequalities do not add up.
    pub isolated_j: f64,
}

/// Cumulated inequality: `Σ_k Σ_far_k w (|Δφ| / J(2^k))^p <= Σ_near w (|Δφ|/d)^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeCertificate {
    pub p: f64,
    pub r: f64,
    pub scales: Vec<ScaleTerm>,
    pub near: Vec<WeightedPair>,
    /// `J(2^k) = c·2^k` across scales.
    pub c: f64,
    pub method: Method,
}

impl CumulativeCertificate {
    pub fn slack(&self, space: &FiniteSpace, phi: &[f64]) -> f64 {
        let far: f64 = self
            .scales
            .iter()
            .map(|s| energy(&s.far, phi, self.p, None) / s.j.powf(self.p))
            .sum();
        energy(&self.near, phi, self.p, Some(space)) - far
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "cumulative p={} r={} c={} method={}\n",
            fmt_g17(self.p),
            fmt_g17(self.r),
            fmt_g17(self.c),
            self.method
        );
        for s in &self.scales {
            write_pairs(&mut out, &format!("P k={} J={}", s.k, fmt_g17(s.j)), &s.far);
        }
        write_pairs(&mut out, "Q", &self.near);
        out
    }
}

/// Measures read from a certificate or measures file.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedMeasures {
    pub r: Option<f64>,
    /// One entry per `P` section, with its `k=` tag if present.
    pub far: Vec<(Option<u32>, Vec<WeightedPair>)>,
    pub near: Vec<WeightedPair>,
}

/// Parses the text format written by [`PoincareCertificate::to_text`] and
/// [`CumulativeCertificate::to_text`]. The header line is optional; only its
/// `r=` field is used, constants are always recomputed.
pub fn parse_measures(text: &str) -> Result<ParsedMeasures> {
    let mut out = ParsedMeasures { r: None, far: Vec::new(), near: Vec::new() };
    enum Section {
        None,
        Far,
        Near,
    }
    let mut section = Section::None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let err = |msg: String| PoincareError::Parse { line: i + 1, msg };
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let head = words.next().unwrap_or_default();
        let field = |key: &str, words: &[&str]| -> Option<String> {
            words.iter().find_map(|w| w.strip_prefix(key).map(str::to_string))
        };
        let rest: Vec<&str> = words.collect();
        match head {
            "poincare" | "cumulative" | "measures" => {
                if let Some(r) = field("r=", &rest) {
                    out.r = Some(r.parse().map_err(|_| err(format!("bad scale {r:?}")))?);
                }
            }
            "P" => {
                let k = match field("k=", &rest) {
                    Some(k) => Some(k.parse().map_err(|_| err(format!("bad scale exponent {k:?}")))?),
                    None => None,
                };
                out.far.push((k, Vec::new()));
                section = Section::Far;
            }
            "Q" => section = Section::Near,
            _ => {
                let nums: Vec<&str> = line.split_whitespace().collect();
                if nums.len() != 3 {
                    return Err(err(format!("expected `x y w`, got {line:?}")));
                }
                let x = nums[0].parse().map_err(|_| err(format!("bad point {:?}", nums[0])))?;
                let y = nums[1].parse().map_err(|_| err(format!("bad point {:?}", nums[1])))?;
                let w = nums[2].parse().map_err(|_| err(format!("bad weight {:?}", nums[2])))?;
                let pair = WeightedPair::new(x, y, w);
                match section {
                    Section::Far => out.far.last_mut().expect("inside a P section").1.push(pair),
                    Section::Near => out.near.push(pair),
                    Section::None => return Err(err("pair outside a P or Q section".into())),
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
