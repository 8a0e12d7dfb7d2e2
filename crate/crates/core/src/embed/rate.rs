use std::fmt;
use std::str::FromStr;

use super::{EmbedError, Result};
use crate::property_a::AProfile;

/// `f(t) = t^a · log(e + t)^{-b}` with `a ∈ [0, 1]`, `b >= 0`. `b = ∞` is
/// the zero function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFunction {
    a: f64,
    b: f64,
}

impl RateFunction {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !((0.0..=1.0).contains(&a)) {
            return Err(EmbedError::InvalidRate(format!("exponent a = {a} outside [0, 1]")));
        }
        if !(b >= 0.0) {
            return Err(EmbedError::InvalidRate(format!("log exponent b = {b} must be nonnegative")));
        }
        Ok(Self { a, b })
    }

    /// `f(t) = t`.
    pub fn linear() -> Self {
        Self { a: 1.0, b: 0.0 }
    }

    pub fn zero() -> Self {
        Self { a: 0.0, b: f64::INFINITY }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_zero(&self) -> bool {
        self.b.is_infinite()
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            t.powf(self.a) * (std::f64::consts::E + t).ln().powf(-self.b)
        }
    }

    /// `f` is nondecreasing on `[1, ∞)` at every point of `grid`.
    pub fn is_monotone_on(&self, grid: &[f64]) -> bool {
        grid.windows(2).all(|w| self.eval(w[1]) >= self.eval(w[0]) * (1.0 - 1e-12))
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "{},inf", self.a)
        } else {
            write!(f, "{},{}", self.a, self.b)
        }
    }
}

impl FromStr for RateFunction {
    type Err = EmbedError;

    /// Parses `a,b`; `b` may be `inf`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || EmbedError::InvalidRate(format!("expected `a,b`, got {s:?}"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let b: f64 = match b.trim() {
            "inf" | "∞" => f64::INFINITY,
            other => other.parse().map_err(|_| bad())?,
        };
        Self::new(a, b)
    }
}

/// The comparison profile `J` in a convergence test.
#[derive(Clone, Debug, PartialEq)]
pub enum ProfileSpec {
    /// `J(t) = t^a log(e+t)^{-b}`.
    Parametric(RateFunction),
    /// Measured `(t, J(t))` pairs, typically at dyadic `t`.
    Sampled(Vec<(f64, f64)>),
}

impl ProfileSpec {
    /// Dyadic samples `(n, J(n))` of a measured A-profile.
    pub fn from_profile(profile: &AProfile) -> Self {
        ProfileSpec::Sampled(
            profile
                .samples
                .iter()
                .filter(|s| s.n.is_power_of_two())
                .map(|s| (s.n as f64, s.j))
                .collect(),
        )
    }
}

/// Outcome of [`condition_check`].
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Converges,
    Diverges,
    /// Finite samples cannot decide an integral to infinity; the partial
    /// sums `Σ_{k<=i} (f(t_k)/J(t_k))^p` are reported instead.
    Inconclusive { partial_sums: Vec<f64> },
}

/// Decides whether `∫_1^∞ (f(t)/J(t))^p dt/t` is finite.
///
/// For parametric `f = t^{a_f} L^{-b_f}` and `J = t^{a_J} L^{-b_J}` the
/// integrand is `t^{p(a_f - a_J)} L^{-p(b_f - b_J)} / t`, which converges iff
/// `a_f < a_J`, or `a_f = a_J` and `p(b_f - b_J) > 1`.
pub fn condition_check(f: &RateFunction, j: &ProfileSpec, p: f64) -> Verdict {
    if f.is_zero() {
        return Verdict::Converges;
    }
    match j {
        ProfileSpec::Parametric(jf) => {
            if jf.is_zero() {
                Verdict::Diverges
            } else if f.a < jf.a || (f.a == jf.a && p * (f.b - jf.b) > 1.0) {
                Verdict::Converges
            } else {
                Verdict::Diverges
            }
        }
        ProfileSpec::Sampled(samples) => {
            let mut acc = 0.0;
            let partial_sums = samples
                .iter()
                .map(|&(t, jt)| {
                    acc += (f.eval(t) / jt).powf(p);
                    acc
                })
                .collect();
            Verdict::Inconclusive { partial_sums }
        }
    }
}

/// Scales picked by [`subsequence_select`].
#[derive(Clone, Debug, PartialEq)]
pub struct Subsequence {
    /// Selected exponents `k` (scale `2^k`), increasing.
    pub ks: Vec<u32>,
    /// `Σ (f(2^k)/J(2^k))^p` over the selection; at most 1.
    pub sum: f64,
    /// Compression guarantee `(2·2^k, 2^{1/p} f(2^k))`: pairs farther apart
    /// than the first coordinate are embedded at least the second apart.
    pub guarantee: Vec<(f64, f64)>,
}

/// Greedy selection of dyadic scales whose terms `(f(2^k)/J(2^k))^p` sum
/// to at most 1, scanning scales in increasing order.
pub fn subsequence_select(profile: &AProfile, f: &RateFunction, p: f64) -> Result<Subsequence> {
    let mut out = Subsequence {
        ks: Vec::new(),
        sum: 0.0,
        guarantee: Vec::new(),
    };
    for s in profile.samples.iter().filter(|s| s.n.is_power_of_two()) {
        let term = (f.eval(s.n as f64) / s.j).powf(p);
        if term.is_finite() && out.sum + term <= 1.0 {
            out.sum += term;
            out.ks.push(s.n.trailing_zeros());
            out.guarantee.push((2.0 * s.n as f64, 2f64.powf(1.0 / p) * f.eval(s.n as f64)));
        }
    }
    if out.ks.is_empty() {
        Err(EmbedError::NoSubsequence)
    } else {
        Ok(out)
    }
}
