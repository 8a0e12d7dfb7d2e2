use std::fmt::Write as _;

use super::{CumulativeCertificate, Method, PoincareCertificate, PoincareError, Result};
use crate::embed::Profile;
use crate::util::fmt_g17;

/// `ρ(t)` read off a compression profile: the value at the first grid
/// point `>= t`, or `None` if no pair is that far apart.
fn rho_at(rho: &Profile, t: f64) -> Option<f64> {
    rho.grid.iter().position(|&g| g >= t).map(|i| rho.values[i])
}

fn advisory(method: Method) -> Option<String> {
    (!method.is_certified()).then(|| {
        format!("constant from {method} is only a lower bound on the optimal one; the implied bounds are advisory")
    })
}

/// What a single-scale inequality says about embeddings into `L^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressionConstraint {
    pub p: f64,
    pub r: f64,
    pub j: f64,
    /// `c_p(X) >= r / J(r)`.
    pub lower_bound: f64,
    pub certified: bool,
    pub advisory: Option<String>,
}

impl CompressionConstraint {
    /// Ceiling on the compression of a 1-Lipschitz map: `J(r)` for `t <= r`.
    pub fn ceiling_at(&self, t: f64) -> Option<f64> {
        (t <= self.r).then_some(self.j)
    }

    /// Largest `ρ(t) - J·lipschitz` over the profile's grid points `t <= r`;
    /// nonpositive when the profile respects the ceiling.
    pub fn worst_excess(&self, rho: &Profile, lipschitz: f64) -> f64 {
        rho.grid
            .iter()
            .zip(&rho.values)
            .filter(|(&t, _)| t <= self.r)
            .map(|(_, &v)| v - self.j * lipschitz)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `t,ceiling` at dyadic `t` up to `r`, and at `r` itself.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ceiling\n");
        let mut t = 1.0;
        while t < self.r {
            let _ = writeln!(out, "{},{}", fmt_g17(t), fmt_g17(self.j));
            t *= 2.0;
        }
        let _ = writeln!(out, "{},{}", fmt_g17(self.r), fmt_g17(self.j));
        out
    }
}

/// Compression ceiling `ρ_F(t) <= J(r)` for `t <= r` and distortion bound
/// `c_p(X) >= r/J(r)` implied by a certificate. Refused at `p <= 1`.
pub fn compression_constraint(c: &PoincareCertificate) -> Result<CompressionConstraint> {
    if c.p <= 1.0 {
        return Err(PoincareError::UnsupportedExponent { p: c.p });
    }
    Ok(CompressionConstraint {
        p: c.p,
        r: c.r(),
        j: c.j,
        lower_bound: c.r() / c.j,
        certified: c.method.is_certified(),
        advisory: advisory(c.method),
    })
}

/// What a cumulated inequality says about embeddings into `L^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeConstraint {
    pub p: f64,
    /// Exponent of the compression constraint, `max(2, p)`.
    pub q: f64,
    /// `(2^k, J(2^k))` per scale.
    pub terms: Vec<(f64, f64)>,
    /// `c_p(X) >= (Σ_k (2^k/J(2^k))^p)^{min(1/p, 1/2)}`.
    pub lower_bound: f64,
    pub certified: bool,
    pub advisory: Option<String>,
}

impl CumulativeConstraint {
    /// Whether the constraint exponent differs from the certificate's `p`.
    pub fn q_differs(&self) -> bool {
        self.q != self.p
    }

    /// `Σ_k (ρ(2^k) / (J(2^k)·lipschitz))^q` for a measured compression
    /// profile; at most 1 for any map with the given Lipschitz constant.
    pub fn constraint_value(&self, rho: &Profile, lipschitz: f64) -> f64 {
        self.terms
            .iter()
            .filter_map(|&(t, j)| rho_at(rho, t).map(|v| (v / (j * lipschitz)).powf(self.q)))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ceiling\n");
        for (t, j) in &self.terms {
            let _ = writeln!(out, "{},{}", fmt_g17(*t), fmt_g17(*j));
        }
        out
    }
}

/// Dyadic form of the cumulated constraint and its distortion lower bound.
/// Refused at `p <= 1`.
pub fn cumulative_constraint(c: &CumulativeCertificate) -> Result<CumulativeConstraint> {
    if c.p <= 1.0 {
        return Err(PoincareError::UnsupportedExponent { p: c.p });
    }
    let terms: Vec<(f64, f64)> = c.scales.iter().map(|s| (2f64.powi(s.k as i32), s.j)).collect();
    let sum: f64 = terms.iter().map(|(t, j)| (t / j).powf(c.p)).sum();
    let q = c.p.max(2.0);
    let cons = CumulativeConstraint {
        p: c.p,
        q,
        terms,
        lower_bound: sum.powf((1.0 / c.p).min(0.5)),
        certified: c.method.is_certified(),
        advisory: advisory(c.method),
    };
    if cons.q_differs() {
        log::info!("cumulated constraint uses exponent q = {q} while the certificate has p = {}", c.p);
    }
    Ok(cons)
}
