use super::solve::{cumulative_certificate, optimal_constant_p2, SearchBudget};
use super::{uniform, CumulativeCertificate, MeasurePair, Method, PoincareCertificate, PoincareError, Result, WeightedPair};
use crate::generators::{gen_space, GenError, GenSpec};
use crate::space::FiniteSpace;
use crate::util::floor_log2;

/// Largest allowed ratio between the biggest and smallest per-scale
/// `J(2^k)/2^k` in [`laakso_cp_check`].
pub const LAAKSO_SPREAD_LIMIT: f64 = 8.0;

/// Highest Laakso level accepted by [`laakso_cp_check`].
const LAAKSO_MAX_LEVEL: u32 = 4;

fn pairs_where(space: &FiniteSpace, keep: impl Fn(f64) -> bool) -> Vec<(usize, usize)> {
    let n = space.len();
    (0..n)
        .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
        .filter(|&(x, y)| keep(space.d(x, y)))
        .collect()
}

/// Graph edges if the space has a skeleton, otherwise pairs at the
/// minimal distance.
fn edge_pairs(space: &FiniteSpace) -> Vec<(usize, usize)> {
    match space.skeleton() {
        Some(edges) => edges.to_vec(),
        None => {
            let m = space.min_distance();
            pairs_where(space, |d| d == m)
        }
    }
}

/// Expander-style inequality at `p = 2`: far measure uniform over pairs at
/// distance `>= r`, with `r` the largest value keeping at least half of all
/// ordered pairs; near measure uniform over edges. A family whose `J` stays
/// bounded while `r` grows admits no uniform embedding into Hilbert space.
pub fn expander_certificate(space: &FiniteSpace) -> Result<PoincareCertificate> {
    let n = space.len();
    if n < 2 {
        return Err(PoincareError::InvalidMeasure("need at least two points".into()));
    }
    let half = (n * n) as f64 / 2.0;
    let mut r = space.min_distance();
    for &t in space.distinct_distances().iter().rev() {
        let ordered = 2 * pairs_where(space, |d| d >= t).len();
        if ordered as f64 >= half {
            r = t;
            break;
        }
    }
    let mp = MeasurePair::uniform(space, r, &pairs_where(space, |d| d >= r), &edge_pairs(space))?;
    optimal_constant_p2(space, &mp)
}

/// Skew-cube inequality at `p = 2` for a map from the corners of
/// `{-1, 1}^m` (indexed by bitmasks `0..2^m`) into the space.
///
/// With `l` the longest edge image and `L` the shortest diagonal image, the
/// sum of squared diagonals of a cube being at most the sum of squared
/// edges gives the inequality at scale `L` with `J = l·sqrt(m)`.
pub fn skew_cube_certificate(space: &FiniteSpace, corners: &[usize]) -> Result<PoincareCertificate> {
    let size = corners.len();
    if size < 2 || !size.is_power_of_two() {
        return Err(PoincareError::NotACube(format!("{size} corners is not 2^m with m >= 1")));
    }
    if let Some(&x) = corners.iter().find(|&&x| x >= space.len()) {
        return Err(PoincareError::NotACube(format!("corner maps to point {x} outside the space")));
    }
    for a in 0..size {
        for b in a + 1..size {
            if corners[a] == corners[b] {
                return Err(PoincareError::NotInjective { a, b });
            }
        }
    }
    let m = size.trailing_zeros() as usize;
    let full = size - 1;
    let edges: Vec<(usize, usize)> = (0..size)
        .flat_map(|b| (0..m).filter(move |i| b & (1 << i) == 0).map(move |i| (b, b | (1 << i))))
        .map(|(a, b)| (corners[a], corners[b]))
        .collect();
    let diagonals: Vec<(usize, usize)> = (0..size)
        .filter(|&b| b < full ^ b)
        .map(|b| (corners[b], corners[full ^ b]))
        .collect();
    let l = edges.iter().map(|&(x, y)| space.d(x, y)).fold(0.0, f64::max);
    let big_l = diagonals.iter().map(|&(x, y)| space.d(x, y)).fold(f64::INFINITY, f64::min);
    let mp = MeasurePair::uniform(space, big_l, &diagonals, &edges)?;
    Ok(PoincareCertificate {
        p: 2.0,
        j: l * (m as f64).sqrt(),
        measures: mp,
        method: Method::SkewCube,
    })
}

/// Inequality between the diametral pairs (far) and the closest pairs
/// (near) at scale `Diam`, solved exactly at `p = 2`. Tight for even cycles.
pub fn diametral_certificate(space: &FiniteSpace) -> Result<PoincareCertificate> {
    if space.len() < 2 {
        return Err(PoincareError::InvalidMeasure("need at least two points".into()));
    }
    let diam = space.diameter();
    let min = space.min_distance();
    let mp = MeasurePair::uniform(space, diam, &pairs_where(space, |d| d == diam), &pairs_where(space, |d| d == min))?;
    optimal_constant_p2(space, &mp)
}

/// Uniform probability on each nonempty group, groups weighted equally.
fn averaged(groups: Vec<Vec<(usize, usize)>>) -> Vec<WeightedPair> {
    let groups: Vec<_> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    let share = 1.0 / groups.len() as f64;
    groups
        .iter()
        .flat_map(|g| uniform(g).into_iter().map(move |q| WeightedPair { w: q.w * share, ..q }))
        .collect()
}

/// Cumulated inequality with linear `J(t) = c·t` on a tree rooted at
/// point 0, at scale `r = Diam`.
///
/// Scale `2^k` (`k = 1..=⌊log₂ Diam⌋`) uses pairs on a common level at
/// distance exactly `2^k`, i.e. cousins whose common ancestor sits `2^{k-1}`
/// levels up, averaged over levels; the near measure averages the edges
/// into each level. At `p = 2` the constant `c` is optimal for these
/// measures.
pub fn tree_cp_certificate(space: &FiniteSpace, p: f64, budget: &SearchBudget) -> Result<CumulativeCertificate> {
    let n = space.len();
    let edges = space
        .skeleton()
        .ok_or_else(|| PoincareError::NotATree("space has no graph skeleton".into()))?;
    if n < 2 || edges.len() != n - 1 {
        return Err(PoincareError::NotATree(format!("{n} points with {} edges", edges.len())));
    }
    let level: Vec<usize> = (0..n).map(|x| space.d(0, x) as usize).collect();
    if (0..n).any(|x| level[x] as f64 != space.d(0, x)) {
        return Err(PoincareError::NotATree("non-integer distances".into()));
    }
    let depth = *level.iter().max().expect("nonempty");
    let r = space.diameter();
    let mut scales = Vec::new();
    for k in 1..=floor_log2(r) {
        let t = 2f64.powi(k as i32);
        let groups = (0..=depth)
            .map(|l| pairs_where_on(space, &level, l, t))
            .collect::<Vec<_>>();
        if groups.iter().any(|g| !g.is_empty()) {
            scales.push((k, averaged(groups)));
        }
    }
    if scales.is_empty() {
        return Err(PoincareError::NotATree("no level holds two points at distance 2".into()));
    }
    let mut by_level = vec![Vec::new(); depth + 1];
    for &(x, y) in edges {
        by_level[level[x].max(level[y])].push((x, y));
    }
    cumulative_certificate(space, p, r, scales, averaged(by_level), budget)
}

fn pairs_where_on(space: &FiniteSpace, level: &[usize], l: usize, t: f64) -> Vec<(usize, usize)> {
    let pts: Vec<usize> = (0..space.len()).filter(|&x| level[x] == l).collect();
    let mut out = Vec::new();
    for (i, &x) in pts.iter().enumerate() {
        for &y in &pts[i + 1..] {
            if space.d(x, y) == t {
                out.push((x, y));
            }
        }
    }
    out
}

/// Cumulated inequality on a Laakso graph with its per-scale diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct LaaksoReport {
    pub certificate: CumulativeCertificate,
    /// `J_k / 2^k` for each scale's own optimal constant.
    pub ratios: Vec<f64>,
    /// Smallest `C` with `J_k <= C·2^k` at every scale.
    pub fitted_c: f64,
    /// `max ratio / min ratio`.
    pub spread: f64,
}

impl LaaksoReport {
    pub fn linear_within_limit(&self) -> bool {
        self.spread <= LAAKSO_SPREAD_LIMIT
    }
}

/// Cumulated inequality on the Laakso graph of the given level: scale `2^k`
/// uses all pairs at distance in `[2^k, 2^{k+1})`, the near measure is
/// uniform over edges, and `r = Diam`.
pub fn laakso_cp_check(level: u32, p: f64, budget: &SearchBudget) -> Result<LaaksoReport> {
    if level > LAAKSO_MAX_LEVEL {
        return Err(PoincareError::Gen(GenError::InvalidSpec(format!(
            "laakso level {level} exceeds {LAAKSO_MAX_LEVEL}"
        ))));
    }
    let space = gen_space(&GenSpec::laakso(level as u64))?;
    let r = space.diameter();
    let scales: Vec<(u32, Vec<WeightedPair>)> = (1..=floor_log2(r))
        .map(|k| {
            let t = 2f64.powi(k as i32);
            (k, uniform(&pairs_where(&space, |d| d >= t && d < 2.0 * t)))
        })
        .filter(|(_, far)| !far.is_empty())
        .collect();
    let certificate = cumulative_certificate(&space, p, r, scales, uniform(&edge_pairs(&space)), budget)?;
    let ratios: Vec<f64> = certificate
        .scales
        .iter()
        .map(|s| s.isolated_j / 2f64.powi(s.k as i32))
        .collect();
    let fitted_c = ratios.iter().cloned().fold(0.0, f64::max);
    let spread = fitted_c / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LaaksoReport {
        certificate,
        ratios,
        fitted_c,
        spread,
    })
}
