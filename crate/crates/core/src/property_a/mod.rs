//! Property A(J,p) witness families.
//!
//! A witness family assigns to every scale `n` and point `x` a nonnegative
//! function `ψ_{n,x}` supported in the ball `B(x, n)`. After normalization
//! the map `x ↦ ψ_{n,x}` is 1-Lipschitz into `L^p(μ)`, and the profile
//! `J(n) = min_x ‖ψ_{n,x}‖_p` measures how well the space spreads mass at
//! scale `n`. Three explicit constructions are provided:
//!
//! - [`subexp_family`]: averaged normalized ball indicators (`p = 1`),
//! - [`uniform_volume_family`]: stacked ball indicators for spaces whose
//!   ball volumes are uniform up to a constant,
//! - [`doubling_family`]: volume-weighted ball indicators over `[n/2, n]`.

mod sparse;

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::space::{BallIndex, FiniteSpace};
use crate::util::fmt_g17;

pub use sparse::{dist, pow_dist, SparseFn};
pub(crate) use sparse::abs_pow;

/// Largest `vmax / vmin` ratio accepted by [`doubling_family`] without a
/// warning.
pub const DOUBLING_UNIFORMITY_THRESHOLD: f64 = 8.0;

/// Relative slack allowed on ball-membership and displacement checks.
const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PropertyAError {
    #[error("invalid scales: {0}")]
    InvalidScales(String),

    #[error("exponent q = {q} must satisfy q >= p = {p} >= 1")]
    BadExponent { p: f64, q: f64 },

    #[error("volume profile is constant over radii 1..={max_radius}; no scale separation")]
    DegenerateProfile { max_radius: u32 },

    #[error("psi at scale {n} for point {x} charges point {y} outside B({x}, {n})")]
    SupportViolation { n: u32, x: usize, y: usize },

    #[error("bad retraction: {0}")]
    BadRetraction(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),
}

pub type Result<T> = std::result::Result<T, PropertyAError>;

/// Which recipe produced a family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Construction {
    Subexp,
    UniformVolume,
    Doubling,
    /// Tent functions along root-directed walks in a tree.
    TreeRay,
    /// Obtained by the power map from a family with a smaller exponent.
    Converted,
    /// Pushed from a net through a retraction.
    Transferred,
    Custom,
}

/// Per-scale, per-point witness functions with a common exponent `p`.
#[derive(Clone, Debug)]
pub struct WitnessFamily {
    p: f64,
    points: usize,
    scales: Vec<u32>,
    /// `psi[i][x]` is `ψ_{scales[i], x}`.
    psi: Vec<Vec<SparseFn>>,
    construction: Construction,
    normalized: bool,
    notes: Vec<String>,
}

impl WitnessFamily {
    /// Assembles a family from explicit functions. Values must be
    /// nonnegative and finite; supports are checked by [`measure_profile`].
    pub fn from_parts(p: f64, points: usize, scales: Vec<u32>, psi: Vec<Vec<SparseFn>>) -> Result<Self> {
        check_exponent(p)?;
        check_scales(&scales)?;
        if psi.len() != scales.len() {
            return Err(PropertyAError::InvalidFamily(format!(
                "{} scales but {} function lists",
                scales.len(),
                psi.len()
            )));
        }
        for row in &psi {
            if row.len() != points {
                return Err(PropertyAError::InvalidFamily(format!("expected {points} functions per scale")));
            }
            for f in row {
                if let Some((y, v)) = f.iter().find(|&(y, v)| y >= points || !(v >= 0.0 && v.is_finite())) {
                    return Err(PropertyAError::InvalidFamily(format!("entry ({y}, {v}) out of range or negative")));
                }
            }
        }
        Ok(Self {
            p,
            points,
            scales,
            psi,
            construction: Construction::Custom,
            normalized: false,
            notes: Vec::new(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn scales(&self) -> &[u32] {
        &self.scales
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// True once [`normalize`] (or a conversion that renormalizes) has made
    /// every scale 1-Lipschitz.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Warnings recorded during construction.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn scale_index(&self, n: u32) -> Option<usize> {
        self.scales.binary_search(&n).ok()
    }

    /// `ψ_{n,x}`; panics if `n` is not one of the family's scales.
    pub fn psi(&self, n: u32, x: usize) -> &SparseFn {
        let i = self.scale_index(n).unwrap_or_else(|| panic!("scale {n} not in family"));
        &self.psi[i][x]
    }

    /// All functions at the `i`-th scale.
    pub fn level(&self, i: usize) -> &[SparseFn] {
        &self.psi[i]
    }

    /// Multiplies every function by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.map_levels(|_, row| row.iter().map(|f| f.scaled(s)).collect());
        out.normalized = false;
        out
    }

    fn map_levels(&self, f: impl Fn(usize, &[SparseFn]) -> Vec<SparseFn>) -> Self {
        Self {
            psi: self.psi.iter().enumerate().map(|(i, row)| f(i, row)).collect(),
            scales: self.scales.clone(),
            notes: self.notes.clone(),
            ..*self
        }
    }
}

/// One row of an [`AProfile`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSample {
    pub n: u32,
    /// `min_x ‖ψ_{n,x}‖_p`.
    pub j: f64,
    /// Lipschitz constant of `x ↦ ψ_{n,x}`: before normalization when the
    /// profile comes from [`normalize`], as measured otherwise.
    pub lipschitz: f64,
    /// `n > Diam / 2`: the ball covers most of the space and the value says
    /// little about asymptotic behaviour.
    pub saturated: bool,
}

/// Sampled A-profile `n ↦ J(n)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AProfile {
    pub samples: Vec<ProfileSample>,
}

impl AProfile {
    pub fn j_at(&self, n: u32) -> Option<f64> {
        self.samples.iter().find(|s| s.n == n).map(|s| s.j)
    }

    /// CSV with columns `n,J,lipschitz,saturated`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,J,lipschitz,saturated\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{}", s.n, fmt_g17(s.j), fmt_g17(s.lipschitz), s.saturated);
        }
        out
    }
}

/// How Lipschitz constants of a family are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LipschitzMode {
    /// Over the graph skeleton when the space has one (exact for
    /// shortest-path metrics), otherwise over all pairs.
    #[default]
    Auto,
    AllPairs,
}

/// Scales `1, 2, 4, ..., 2^kmax`.
pub fn dyadic_scales(kmax: u32) -> Vec<u32> {
    (0..=kmax).map(|k| 1u32 << k).collect()
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(PropertyAError::BadExponent { p, q: p })
    }
}

fn check_scales(scales: &[u32]) -> Result<()> {
    if scales.is_empty() {
        return Err(PropertyAError::InvalidScales("no scales given".into()));
    }
    if scales[0] == 0 {
        return Err(PropertyAError::InvalidScales("scales must be at least 1".into()));
    }
    if scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PropertyAError::InvalidScales("scales must be strictly increasing".into()));
    }
    Ok(())
}

/// `Σ_{k=kmin}^{kmax} coeff[k - kmin] · 1_{B(x,k)}`, evaluated through suffix
/// sums so every point's value depends only on its distance to `x`.
fn radial(space: &FiniteSpace, index: &BallIndex, x: usize, kmin: u32, kmax: u32, coeff: &[f64]) -> SparseFn {
    debug_assert_eq!(coeff.len(), (kmax - kmin + 1) as usize);
    let mut suffix = vec![0.0; coeff.len() + 1];
    for i in (0..coeff.len()).rev() {
        suffix[i] = suffix[i + 1] + coeff[i];
    }
    let pairs = index
        .ball(x, kmax as f64)
        .iter()
        .map(|&y| {
            let d = space.d(x, y as usize);
            let first = (d.ceil() as u32).max(kmin);
            (y as usize, suffix[(first - kmin) as usize])
        })
        .collect();
    SparseFn::from_pairs(pairs)
}

/// `ψ_{n,x} = (1/n) Σ_{k=1}^{n} 1_{B(x,k)} / V(x,k)`: probability densities
/// (`p = 1`) built from normalized ball indicators.
pub fn subexp_family(space: &FiniteSpace, scales: &[u32]) -> Result<WitnessFamily> {
    check_scales(scales)?;
    let index = space.ball_index();
    let psi = scales
        .iter()
        .map(|&n| {
            (0..space.len())
                .into_par_iter()
                .map(|x| {
                    let coeff: Vec<f64> = (1..=n).map(|k| 1.0 / index.volume(x, k as f64)).collect();
                    radial(space, &index, x, 1, n, &coeff).scaled(1.0 / n as f64)
                })
                .collect()
        })
        .collect();
    Ok(WitnessFamily {
        p: 1.0,
        points: space.len(),
        scales: scales.to_vec(),
        psi,
        construction: Construction::Subexp,
        normalized: false,
        notes: Vec::new(),
    })
}

/// `v(r) = min_x V(x, r)` at integer radii `1..=max_radius`, indexed by `r`
/// (entry 0 is unused).
fn lower_volume(space: &FiniteSpace, max_radius: u32) -> (Vec<f64>, f64) {
    let radii: Vec<f64> = (1..=max_radius).map(f64::from).collect();
    let g = space.growth_profile(&radii);
    let mut v = vec![f64::NAN];
    v.extend(g.vmin.iter().copied());
    (v, g.max_uniformity())
}

/// Scale selection of the uniform-volume construction:
/// `k(n) = max{k <= n-1 : v(n-k) >= v(n)/2}`, `j(n) = max_{j<=n} k(j)`, and
/// `q_n` the smallest `j <= n` attaining `j(n)`. Returns `q_n` for
/// `n = 1..=v.len()-1`, indexed by `n`.
fn uniform_volume_q(v: &[f64]) -> Vec<u32> {
    let top = v.len() - 1;
    let mut q = vec![0u32; top + 1];
    let (mut best_k, mut best_j) = (0u32, 1u32);
    for n in 1..=top {
        let k = (0..n).rev().find(|&k| v[n - k] >= v[n] / 2.0).unwrap_or(0) as u32;
        if k > best_k {
            best_k = k;
            best_j = n as u32;
        }
        q[n] = best_j;
    }
    q
}

/// `ψ_{n,x} = v(q_n)^{-1/p} Σ_{k=1}^{q_n-1} 1_{B(x,k)}` with `v` the lower
/// volume function; suited to spaces with `v(r) <= V(x,r) <= C v(r)`.
pub fn uniform_volume_family(space: &FiniteSpace, p: f64, scales: &[u32]) -> Result<WitnessFamily> {
    check_exponent(p)?;
    check_scales(scales)?;
    let max_radius = *scales.last().expect("checked nonempty");
    let (v, _) = lower_volume(space, max_radius);
    if v[1..].iter().all(|&w| w == v[1]) {
        return Err(PropertyAError::DegenerateProfile { max_radius });
    }
    let q = uniform_volume_q(&v);
    let index = space.ball_index();
    let psi = scales
        .iter()
        .map(|&n| {
            let qn = q[n as usize];
            let c = v[qn as usize].powf(-1.0 / p);
            (0..space.len())
                .into_par_iter()
                .map(|x| {
                    if qn <= 1 {
                        SparseFn::zero()
                    } else {
                        radial(space, &index, x, 1, qn - 1, &vec![1.0; (qn - 1) as usize]).scaled(c)
                    }
                })
                .collect()
        })
        .collect();
    Ok(WitnessFamily {
        p,
        points: space.len(),
        scales: scales.to_vec(),
        psi,
        construction: Construction::UniformVolume,
        normalized: false,
        notes: Vec::new(),
    })
}

/// `ψ_{n,x} = Σ_{k=max(1,⌊n/2⌋)}^{n} v(k)^{-1/p} 1_{B(x,k)}` with `v` the
/// lower volume function; intended for uniformly doubling spaces.
pub fn doubling_family(space: &FiniteSpace, p: f64, scales: &[u32]) -> Result<WitnessFamily> {
    check_exponent(p)?;
    check_scales(scales)?;
    let max_radius = *scales.last().expect("checked nonempty");
    let (v, uniformity) = lower_volume(space, max_radius);
    let mut notes = Vec::new();
    if uniformity > DOUBLING_UNIFORMITY_THRESHOLD {
        let msg = format!(
            "ball volumes are not uniform (max vmax/vmin = {uniformity:.3} > {DOUBLING_UNIFORMITY_THRESHOLD}); \
             the doubling construction carries no linear-profile guarantee here"
        );
        log::warn!("{msg}");
        notes.push(msg);
    }
    let index = space.ball_index();
    let psi = scales
        .iter()
        .map(|&n| {
            let lo = (n / 2).max(1);
            let coeff: Vec<f64> = (lo..=n).map(|k| v[k as usize].powf(-1.0 / p)).collect();
            (0..space.len())
                .into_par_iter()
                .map(|x| radial(space, &index, x, lo, n, &coeff))
                .collect()
        })
        .collect();
    Ok(WitnessFamily {
        p,
        points: space.len(),
        scales: scales.to_vec(),
        psi,
        construction: Construction::Doubling,
        normalized: false,
        notes,
    })
}

/// Walk used by [`tree_ray_family`]: up from each vertex to the root `0`,
/// then down a deepest branch (smallest index among ties). `next[x]` is the
/// vertex after `x` on the walk out of `x`; the walk out of any vertex is
/// that vertex followed by the walk out of `next[x]`, except at the root.
struct RootWalk {
    parent: Vec<Option<usize>>,
    descent: Vec<usize>,
}

impl RootWalk {
    fn new(space: &FiniteSpace) -> Result<Self> {
        let n = space.len();
        let not_tree = |msg: String| PropertyAError::InvalidFamily(format!("tree rays need a tree: {msg}"));
        let edges = space.skeleton().ok_or_else(|| not_tree("space has no graph skeleton".into()))?;
        if n == 0 || edges.len() + 1 != n {
            return Err(not_tree(format!("{n} points with {} edges", edges.len())));
        }
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for &(x, y) in edges {
            let (up, down) = if space.d(0, x) < space.d(0, y) { (x, y) } else { (y, x) };
            if parent[down].replace(up).is_some() || space.d(0, down) != space.d(0, up) + space.d(up, down) {
                return Err(not_tree(format!("edge {x}-{y} does not hang off the root")));
            }
            children[up].push(down);
        }
        // height of each subtree, leaves first
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| space.d(0, b).total_cmp(&space.d(0, a)));
        let mut height = vec![0.0f64; n];
        for &x in &order {
            for &c in &children[x] {
                height[x] = height[x].max(height[c] + space.d(x, c));
            }
        }
        let mut descent = Vec::new();
        let mut x = 0;
        loop {
            let next = children[x]
                .iter()
                .copied()
                .min_by(|&a, &b| (height[b] + space.d(x, b)).total_cmp(&(height[a] + space.d(x, a))).then(a.cmp(&b)));
            match next {
                Some(c) => {
                    descent.push(c);
                    x = c;
                }
                None => break,
            }
        }
        Ok(Self { parent, descent })
    }

    /// First `len + 1` vertices of the walk out of `x` (fewer if the walk
    /// ends at the bottom of the descent).
    fn walk(&self, x: usize, len: usize) -> Vec<usize> {
        let mut out = vec![x];
        let mut cur = x;
        while out.len() <= len {
            match self.parent[cur] {
                Some(p) => {
                    out.push(p);
                    cur = p;
                }
                None => break,
            }
        }
        out.extend(self.descent.iter().take(len + 1 - out.len().min(len + 1)));
        out
    }
}

/// `ψ_{n,x} = Σ_{j=0}^{n} min(j+1, n+1-j) · δ_{w_j(x)}` where `w_0(x) = x,
/// w_1(x), ...` walks to the root and then down a deepest branch.
///
/// Since the walk out of `x` is `x` followed by the walk out of its
/// parent, neighbouring functions are shifts of one another and differ by
/// at most 1 per step, while their norms grow like `n^{1+1/p}`: `J(n) ≈ n`
/// after normalization, on trees of depth at least `n`. Unit edge lengths
/// are assumed by the step count; the root is point `0`.
pub fn tree_ray_family(space: &FiniteSpace, p: f64, scales: &[u32]) -> Result<WitnessFamily> {
    check_exponent(p)?;
    check_scales(scales)?;
    let walks = RootWalk::new(space)?;
    let psi = scales
        .iter()
        .map(|&n| {
            (0..space.len())
                .into_par_iter()
                .map(|x| {
                    let pairs = walks
                        .walk(x, n as usize)
                        .into_iter()
                        .enumerate()
                        .map(|(j, y)| (y, (j + 1).min(n as usize + 1 - j) as f64))
                        .collect();
                    SparseFn::from_pairs(pairs)
                })
                .collect()
        })
        .collect();
    Ok(WitnessFamily {
        p,
        points: space.len(),
        scales: scales.to_vec(),
        psi,
        construction: Construction::TreeRay,
        normalized: false,
        notes: Vec::new(),
    })
}

fn lipschitz_pairs(space: &FiniteSpace, mode: LipschitzMode) -> Vec<(usize, usize)> {
    match (mode, space.skeleton()) {
        (LipschitzMode::Auto, Some(edges)) => edges.to_vec(),
        _ => (0..space.len()).flat_map(|x| (x + 1..space.len()).map(move |y| (x, y))).collect(),
    }
}

fn level_lipschitz(space: &FiniteSpace, level: &[SparseFn], p: f64, pairs: &[(usize, usize)]) -> f64 {
    let m = space.measure();
    pairs
        .par_iter()
        .map(|&(x, y)| dist(&level[x], &level[y], p, m) / space.d(x, y))
        .reduce(|| 0.0, f64::max)
}

/// Per-scale Lipschitz constants `L_n = max ‖ψ_{n,x} - ψ_{n,y}‖_p / d(x,y)`.
pub fn lipschitz_constants(space: &FiniteSpace, fam: &WitnessFamily, mode: LipschitzMode) -> Vec<f64> {
    let pairs = lipschitz_pairs(space, mode);
    fam.psi.iter().map(|level| level_lipschitz(space, level, fam.p, &pairs)).collect()
}

/// Divides each scale by its Lipschitz constant so the family becomes exactly
/// 1-Lipschitz. Scales whose functions are all equal (`L_n = 0`) are left
/// untouched. The returned profile is measured after normalization and
/// records the pre-normalization constants.
pub fn normalize(space: &FiniteSpace, fam: &WitnessFamily) -> Result<(WitnessFamily, AProfile)> {
    normalize_with(space, fam, LipschitzMode::Auto)
}

pub fn normalize_with(space: &FiniteSpace, fam: &WitnessFamily, mode: LipschitzMode) -> Result<(WitnessFamily, AProfile)> {
    let lips = lipschitz_constants(space, fam, mode);
    let mut out = fam.map_levels(|i, row| {
        if lips[i] > 0.0 {
            row.iter().map(|f| f.scaled(1.0 / lips[i])).collect()
        } else {
            row.to_vec()
        }
    });
    out.normalized = true;
    let mut profile = profile_values(space, &out)?;
    for (s, &l) in profile.samples.iter_mut().zip(&lips) {
        s.lipschitz = l;
    }
    Ok((out, profile))
}

fn check_supports(space: &FiniteSpace, fam: &WitnessFamily) -> Result<()> {
    for (i, &n) in fam.scales.iter().enumerate() {
        let bad = (0..fam.points).into_par_iter().find_map_first(|x| {
            fam.psi[i][x]
                .support()
                .find(|&y| space.d(x, y) > n as f64 * (1.0 + GEOM_TOL))
                .map(|y| (x, y))
        });
        if let Some((x, y)) = bad {
            return Err(PropertyAError::SupportViolation { n, x, y });
        }
    }
    Ok(())
}

fn profile_values(space: &FiniteSpace, fam: &WitnessFamily) -> Result<AProfile> {
    if space.len() != fam.points {
        return Err(PropertyAError::InvalidFamily(format!(
            "family has {} points, space has {}",
            fam.points,
            space.len()
        )));
    }
    check_supports(space, fam)?;
    let half_diam = space.diameter() / 2.0;
    let m = space.measure();
    let samples = fam
        .scales
        .iter()
        .zip(&fam.psi)
        .map(|(&n, level)| ProfileSample {
            n,
            j: level.par_iter().map(|f| f.norm(fam.p, m)).reduce(|| f64::INFINITY, f64::min),
            lipschitz: 0.0,
            saturated: n as f64 > half_diam,
        })
        .collect();
    Ok(AProfile { samples })
}

/// `J(n) = min_x ‖ψ_{n,x}‖_p` together with the measured Lipschitz
/// constants, after verifying that every `ψ_{n,x}` lives in `B(x, n)`.
pub fn measure_profile(space: &FiniteSpace, fam: &WitnessFamily) -> Result<AProfile> {
    let mut profile = profile_values(space, fam)?;
    let lips = lipschitz_constants(space, fam, LipschitzMode::Auto);
    for (s, l) in profile.samples.iter_mut().zip(lips) {
        s.lipschitz = l;
    }
    Ok(profile)
}

/// Power map `ψ ↦ ψ^{p/q}` from exponent `p` to `q >= p`. Norms transform as
/// `‖ψ'‖_q = ‖ψ‖_p^{p/q}`; scales whose Lipschitz constant in `L^q`
/// exceeds 1 are divided by it.
pub fn p_convert(space: &FiniteSpace, fam: &WitnessFamily, q: f64) -> Result<WitnessFamily> {
    if !(q >= fam.p && q.is_finite()) {
        return Err(PropertyAError::BadExponent { p: fam.p, q });
    }
    if q == fam.p {
        return Ok(fam.clone());
    }
    let s = fam.p / q;
    let mut out = fam.map_levels(|_, row| row.iter().map(|f| f.map_values(|v| v.powf(s))).collect());
    out.p = q;
    out.construction = Construction::Converted;
    let pairs = lipschitz_pairs(space, LipschitzMode::Auto);
    for level in &mut out.psi {
        let l = level_lipschitz(space, level, q, &pairs);
        if l > 1.0 {
            *level = level.iter().map(|f| f.scaled(1.0 / l)).collect();
        }
    }
    out.normalized = true;
    Ok(out)
}

/// Transfers a family on a net `X ⊆ Y` to all of `Y`.
///
/// `net[i]` is the index in `Y` of the `i`-th point of `X`, and
/// `retraction[y]` the index in `X` of a point within distance `c` of `y`.
/// The transferred function at scale `n + ⌈c⌉` is
/// `ψ'_{y} = ψ_{retraction(y)}` carried to `Y` and reweighted by
/// `(μ_X / μ_Y)^{1/p}` so norms are preserved.
pub fn net_transfer(
    fam: &WitnessFamily,
    x_space: &FiniteSpace,
    net: &[usize],
    y_space: &FiniteSpace,
    retraction: &[usize],
    c: f64,
) -> Result<WitnessFamily> {
    let bad = |msg: String| Err(PropertyAError::BadRetraction(msg));
    if !(c >= 0.0 && c.is_finite()) {
        return bad(format!("displacement bound c = {c} must be finite and nonnegative"));
    }
    if fam.points != x_space.len() || net.len() != x_space.len() {
        return bad("net size does not match the family's space".into());
    }
    if retraction.len() != y_space.len() {
        return bad(format!("retraction has {} entries for {} points", retraction.len(), y_space.len()));
    }
    if let Some(&y) = net.iter().find(|&&y| y >= y_space.len()) {
        return bad(format!("net point {y} outside Y"));
    }
    for (y, &rx) in retraction.iter().enumerate() {
        if rx >= net.len() {
            return bad(format!("retraction({y}) = {rx} is not a net point"));
        }
        let disp = y_space.d(y, net[rx]);
        if disp > c * (1.0 + GEOM_TOL) {
            return bad(format!("point {y} is moved by {disp} > c = {c}"));
        }
    }
    let shift = c.ceil() as u32;
    let weights: Vec<f64> = (0..net.len())
        .map(|i| (x_space.measure()[i] / y_space.measure()[net[i]]).powf(1.0 / fam.p))
        .collect();
    let psi = fam
        .psi
        .iter()
        .map(|level| {
            retraction
                .par_iter()
                .map(|&rx| {
                    SparseFn::from_pairs(level[rx].iter().map(|(i, v)| (net[i], v * weights[i])).collect())
                })
                .collect()
        })
        .collect();
    Ok(WitnessFamily {
        p: fam.p,
        points: y_space.len(),
        scales: fam.scales.iter().map(|&n| n + shift).collect(),
        psi,
        construction: Construction::Transferred,
        normalized: false,
        notes: fam.notes.clone(),
    })
}

/// One scale of an [`L1BoundReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct L1ScaleReport {
    pub n: u32,
    /// `(2 h C_h / n) log(V_max(n + h) / V_min(1))`.
    pub bound: f64,
    /// Largest `‖ψ_{n,x} - ψ_{n,y}‖_1` over checked pairs.
    pub max_diff: f64,
    /// `bound - max_diff`.
    pub min_slack: f64,
    pub pairs_checked: usize,
}

/// Check of the `L^1` estimate for the averaged-ball construction.
#[derive(Clone, Debug, PartialEq)]
pub struct L1BoundReport {
    pub h: u32,
    /// `max_{x, r} V(x, r + h) / V(x, r)` over integer `r` in `1..=Diam`.
    pub c_h: f64,
    pub scales: Vec<L1ScaleReport>,
}

impl L1BoundReport {
    pub fn holds(&self) -> bool {
        self.scales.iter().all(|s| s.min_slack >= 0.0)
    }
}

/// Verifies `‖ψ_{n,x} - ψ_{n,y}‖_1 <= (2hC_h/n) log(V_max(n+h)/V_min(1))` for
/// every pair with `0 < d(x,y) <= h`.
pub fn subexp_l1_bound_check(space: &FiniteSpace, fam: &WitnessFamily, h: u32) -> Result<L1BoundReport> {
    if fam.p != 1.0 {
        return Err(PropertyAError::BadExponent { p: fam.p, q: 1.0 });
    }
    if h == 0 {
        return Err(PropertyAError::InvalidScales("h must be at least 1".into()));
    }
    let index = space.ball_index();
    let n_pts = space.len();
    let top = space.diameter().ceil().max(1.0) as u32;
    let c_h = (0..n_pts)
        .into_par_iter()
        .map(|x| {
            (1..=top)
                .map(|r| index.volume(x, (r + h) as f64) / index.volume(x, r as f64))
                .fold(1.0, f64::max)
        })
        .reduce(|| 1.0, f64::max);
    let v_min_1 = space.growth_profile(&[1.0]).vmin[0];
    let pairs: Vec<(usize, usize)> = (0..n_pts)
        .flat_map(|x| (x + 1..n_pts).map(move |y| (x, y)))
        .filter(|&(x, y)| space.d(x, y) <= h as f64)
        .collect();
    let m = space.measure();
    let scales = fam
        .scales
        .iter()
        .zip(&fam.psi)
        .map(|(&n, level)| {
            let v_max = space.growth_profile(&[(n + h) as f64]).vmax[0];
            let bound = 2.0 * h as f64 * c_h / n as f64 * (v_max / v_min_1).ln();
            let max_diff = pairs
                .par_iter()
                .map(|&(x, y)| dist(&level[x], &level[y], 1.0, m))
                .reduce(|| 0.0, f64::max);
            L1ScaleReport {
                n,
                bound,
                max_diff,
                min_slack: bound - max_diff,
                pairs_checked: pairs.len(),
            }
        })
        .collect();
    Ok(L1BoundReport { h, c_h, scales })
}

/// Family dump: one `n x y weight` line per stored entry.
pub fn family_dump(fam: &WitnessFamily) -> String {
    let mut out = String::from("# n x y weight\n");
    for (&n, level) in fam.scales.iter().zip(&fam.psi) {
        for (x, f) in level.iter().enumerate() {
            for (y, v) in f.iter() {
                let _ = writeln!(out, "{n} {x} {y} {}", fmt_g17(v));
            }
        }
    }
    out
}
