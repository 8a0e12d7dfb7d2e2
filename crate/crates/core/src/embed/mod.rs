//! Dyadic `L^p` embeddings built from witness families, and the profiles
//! used to judge them.
//!
//! An embedding stacks one block per dyadic scale `2^k`:
//! `F_k(x) = w_k (ψ_{2^k,x} - ψ_{2^k,o})`. Two weightings are provided:
//! `w_k = f(2^k)/J(2^k)` for a target compression rate `f`
//! ([`build_uniform_embedding`]) and `w_k = 2^k/J(2^k)` for low distortion
//! ([`build_distortion_embedding`]).

mod analysis;
mod rate;

use std::fmt::Write as _;

use thiserror::Error;

use crate::property_a::{self, pow_dist, AProfile, PropertyAError, SparseFn, WitnessFamily};
use crate::space::FiniteSpace;
use crate::util::{fmt_g17, floor_log2};

pub use analysis::{
    analyze, audit, compression, dilation, distortion, distortion_bound, empirical_rate, fit_large_scale_lipschitz,
    pair_table, theta_profile, Analysis, AuditCheck, DistortionBound, EmbeddingAudit, LinearFit, PairRecord, Profile,
    ThetaProfile, AUDIT_TOL,
};
pub use rate::{condition_check, subsequence_select, ProfileSpec, RateFunction, Subsequence, Verdict};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("family has no scale {n}")]
    MissingScale { n: u32 },

    #[error("profile vanishes at scale {n}; weight f(n)/J(n) is undefined")]
    ZeroProfile { n: u32 },

    #[error("family must be normalized to 1-Lipschitz before embedding")]
    NotNormalized,

    #[error("no scale has ratio small enough to start a summable subsequence")]
    NoSubsequence,

    #[error("need at least {need} positive profile points, found {have}")]
    InsufficientData { need: usize, have: usize },

    #[error("points {x} and {y} are embedded at the same location")]
    Degenerate { x: usize, y: usize },

    #[error("invalid rate function: {0}")]
    InvalidRate(String),

    #[error("base point {o} out of range")]
    BadBase { o: usize },

    #[error(transparent)]
    PropertyA(#[from] PropertyAError),
}

pub type Result<T> = std::result::Result<T, EmbedError>;

/// Anything that assigns distances to pairs of points of a finite space.
pub trait MetricEmbedding: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `‖F(x) - F(y)‖`.
    fn dist(&self, x: usize, y: usize) -> f64;
}

/// Explicit point configuration in `ℓ_p^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEmbedding {
    pub p: f64,
    pub coords: Vec<Vec<f64>>,
}

impl MetricEmbedding for PointEmbedding {
    fn len(&self) -> usize {
        self.coords.len()
    }

    fn dist(&self, x: usize, y: usize) -> f64 {
        let s: f64 = self.coords[x]
            .iter()
            .zip(&self.coords[y])
            .map(|(a, b)| property_a::abs_pow(a - b, self.p))
            .sum();
        s.powf(1.0 / self.p)
    }
}

/// `F = ⊕_k w_k (ψ_{2^k,·} - ψ_{2^k,o})` into `⊕^{ℓ^p} L^p(μ)`.
///
/// Blocks are not stored: distances use `‖F_k(x) - F_k(y)‖ = w_k ‖ψ_x - ψ_y‖`
/// directly, so the base point cancels exactly, and [`Embedding::block`]
/// materializes a block on demand.
#[derive(Clone, Debug)]
pub struct Embedding {
    p: f64,
    base: usize,
    family: WitnessFamily,
    measure: Vec<f64>,
    /// Exponents `k`, increasing.
    ks: Vec<u32>,
    /// Index of scale `2^k` in the family, per block.
    levels: Vec<usize>,
    weights: Vec<f64>,
    /// `J(2^k)` used in the weights, per block.
    profile: Vec<f64>,
    rate: Option<RateFunction>,
}

impl Embedding {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn ks(&self) -> &[u32] {
        &self.ks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `J(2^k)` per block.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Target rate for uniform embeddings; `None` for distortion embeddings.
    pub fn rate(&self) -> Option<&RateFunction> {
        self.rate.as_ref()
    }

    pub fn family(&self) -> &WitnessFamily {
        &self.family
    }

    /// `F_k(x) = w_k (ψ_{2^k,x} - ψ_{2^k,o})` for the `i`-th block.
    pub fn block(&self, i: usize, x: usize) -> SparseFn {
        let level = self.family.level(self.levels[i]);
        let w = self.weights[i];
        let mut pairs: Vec<(usize, f64)> = level[x].iter().map(|(y, v)| (y, w * v)).collect();
        pairs.extend(level[self.base].iter().map(|(y, v)| (y, -w * v)));
        SparseFn::from_pairs(pairs)
    }

    /// `‖F_k(x) - F_k(y)‖_p` for the `i`-th block.
    pub fn block_dist(&self, i: usize, x: usize, y: usize) -> f64 {
        let level = self.family.level(self.levels[i]);
        self.weights[i] * pow_dist(&level[x], &level[y], self.p, &self.measure).powf(1.0 / self.p)
    }

    /// `(Σ_k w_k^p)^{1/p}`: the Lipschitz bound of a 1-Lipschitz family.
    pub fn lipschitz_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.powf(self.p)).sum::<f64>().powf(1.0 / self.p)
    }

    /// Same embedding seen from another base point.
    pub fn with_base(&self, o: usize) -> Result<Self> {
        if o >= self.family.points() {
            return Err(EmbedError::BadBase { o });
        }
        Ok(Self { base: o, ..self.clone() })
    }

    /// Per-block sparse dump: one `k x y value` line per entry of `F_k(x)`.
    pub fn dump(&self) -> String {
        let mut out = String::from("# k x y value\n");
        for (i, &k) in self.ks.iter().enumerate() {
            for x in 0..self.family.points() {
                for (y, v) in self.block(i, x).iter() {
                    if v != 0.0 {
                        let _ = writeln!(out, "{k} {x} {y} {}", fmt_g17(v));
                    }
                }
            }
        }
        out
    }
}

impl MetricEmbedding for Embedding {
    fn len(&self) -> usize {
        self.family.points()
    }

    fn dist(&self, x: usize, y: usize) -> f64 {
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w != 0.0 {
                let level = self.family.level(self.levels[i]);
                acc += w.powf(self.p) * pow_dist(&level[x], &level[y], self.p, &self.measure);
            }
        }
        acc.powf(1.0 / self.p)
    }
}

struct Blocks {
    levels: Vec<usize>,
    profile: Vec<f64>,
}

fn locate_blocks(space: &FiniteSpace, fam: &WitnessFamily, ks: &[u32], o: usize) -> Result<(Blocks, AProfile)> {
    if !fam.is_normalized() {
        return Err(EmbedError::NotNormalized);
    }
    if o >= fam.points() {
        return Err(EmbedError::BadBase { o });
    }
    let measured = property_a::measure_profile(space, fam)?;
    let mut blocks = Blocks {
        levels: Vec::with_capacity(ks.len()),
        profile: Vec::with_capacity(ks.len()),
    };
    for &k in ks {
        let n = 1u32 << k;
        let i = fam.scale_index(n).ok_or(EmbedError::MissingScale { n })?;
        blocks.levels.push(i);
        blocks.profile.push(measured.samples[i].j);
    }
    Ok((blocks, measured))
}

/// Uniform embedding with weights `f(2^k)/J(2^k)` for `k = 0..=kmax`.
pub fn build_uniform_embedding(
    space: &FiniteSpace,
    fam: &WitnessFamily,
    f: &RateFunction,
    o: usize,
    kmax: u32,
) -> Result<Embedding> {
    let ks: Vec<u32> = (0..=kmax).collect();
    build_uniform_embedding_on(space, fam, f, o, &ks)
}

/// As [`build_uniform_embedding`] on an explicit increasing set of
/// exponents, e.g. one chosen by [`subsequence_select`].
pub fn build_uniform_embedding_on(
    space: &FiniteSpace,
    fam: &WitnessFamily,
    f: &RateFunction,
    o: usize,
    ks: &[u32],
) -> Result<Embedding> {
    let (blocks, _) = locate_blocks(space, fam, ks, o)?;
    let mut weights = Vec::with_capacity(ks.len());
    for (&k, &j) in ks.iter().zip(&blocks.profile) {
        let n = 1u32 << k;
        let w = if f.is_zero() {
            0.0
        } else if j > 0.0 {
            f.eval(n as f64) / j
        } else {
            return Err(EmbedError::ZeroProfile { n });
        };
        weights.push(w);
    }
    let terms: Vec<f64> = weights.iter().map(|w| w.powf(fam.p())).collect();
    if terms.len() >= 3 && terms.windows(2).rev().take(2).all(|t| t[1] >= t[0]) && terms.last() > Some(&0.0) {
        log::warn!(
            "weights (f/J)^p are not decreasing at the top scales ({:?}); the rate may not be summable, \
             consider a subsequence of scales",
            &terms[terms.len() - 3..]
        );
    }
    Ok(Embedding {
        p: fam.p(),
        base: o,
        family: fam.clone(),
        measure: space.measure().to_vec(),
        ks: ks.to_vec(),
        levels: blocks.levels,
        weights,
        profile: blocks.profile,
        rate: Some(*f),
    })
}

/// Top exponent of the distortion embedding: `max(0, ⌊log₂(Diam/2)⌋)`.
pub fn distortion_kmax(space: &FiniteSpace) -> u32 {
    floor_log2(space.diameter() / 2.0)
}

/// Low-distortion embedding with weights `2^k/J(2^k)` for
/// `k = 0..=⌊log₂(Diam/2)⌋`.
pub fn build_distortion_embedding(space: &FiniteSpace, fam: &WitnessFamily, o: usize) -> Result<Embedding> {
    let ks: Vec<u32> = (0..=distortion_kmax(space)).collect();
    let (blocks, _) = locate_blocks(space, fam, &ks, o)?;
    let mut weights = Vec::with_capacity(ks.len());
    for (&k, &j) in ks.iter().zip(&blocks.profile) {
        let n = 1u32 << k;
        if j <= 0.0 {
            return Err(EmbedError::ZeroProfile { n });
        }
        weights.push(n as f64 / j);
    }
    Ok(Embedding {
        p: fam.p(),
        base: o,
        family: fam.clone(),
        measure: space.measure().to_vec(),
        ks,
        levels: blocks.levels,
        weights,
        profile: blocks.profile,
        rate: None,
    })
}
