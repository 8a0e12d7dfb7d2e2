//! Benchmark graphs: paths, cycles, grids, complete binary trees, Laakso
//! graphs, random regular graphs and balls of the discrete Heisenberg group.
//!
//! Every generator is deterministic; `random_regular` is deterministic given
//! its seed. Specs have a compact string form (`binary_tree:10`,
//! `grid:2,16`, `random_regular:100,3,seed=7`) used by the CLI.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::space::{FiniteSpace, Graph, SpaceError};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("automorphism search refused: {n} points exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error(transparent)]
    Space(#[from] SpaceError),
}

pub type Result<T> = std::result::Result<T, GenError>;

/// Default point cap for [`automorphisms`].
pub const AUTOMORPHISM_LIMIT: usize = 64;

/// Maximum rejection rounds before `random_regular` gives up on a seed.
const MAX_PAIRING_ATTEMPTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GenKind {
    Path,
    Cycle,
    Complete,
    /// `grid:dim,side`: the `side^dim` lattice box with unit edges.
    Grid,
    BinaryTree,
    Laakso,
    RandomRegular,
    HeisenbergBall,
}

impl GenKind {
    fn name(self) -> &'static str {
        match self {
            GenKind::Path => "path",
            GenKind::Cycle => "cycle",
            GenKind::Complete => "complete",
            GenKind::Grid => "grid",
            GenKind::BinaryTree => "binary_tree",
            GenKind::Laakso => "laakso",
            GenKind::RandomRegular => "random_regular",
            GenKind::HeisenbergBall => "heisenberg_ball",
        }
    }
}

/// A generator request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenSpec {
    pub kind: GenKind,
    pub params: Vec<u64>,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(kind: GenKind, params: Vec<u64>) -> Self {
        Self { kind, params, seed: 0 }
    }

    pub fn path(n: u64) -> Self {
        Self::new(GenKind::Path, vec![n])
    }

    pub fn cycle(n: u64) -> Self {
        Self::new(GenKind::Cycle, vec![n])
    }

    pub fn complete(n: u64) -> Self {
        Self::new(GenKind::Complete, vec![n])
    }

    pub fn grid(dim: u64, side: u64) -> Self {
        Self::new(GenKind::Grid, vec![dim, side])
    }

    pub fn binary_tree(depth: u64) -> Self {
        Self::new(GenKind::BinaryTree, vec![depth])
    }

    pub fn laakso(level: u64) -> Self {
        Self::new(GenKind::Laakso, vec![level])
    }

    pub fn random_regular(n: u64, degree: u64, seed: u64) -> Self {
        Self {
            kind: GenKind::RandomRegular,
            params: vec![n, degree],
            seed,
        }
    }

    pub fn heisenberg_ball(radius: u64) -> Self {
        Self::new(GenKind::HeisenbergBall, vec![radius])
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GenError::InvalidSpec(format!("{self}: {msg}")));
        let want = match self.kind {
            GenKind::Grid | GenKind::RandomRegular => 2,
            _ => 1,
        };
        if self.params.len() != want {
            return bad(&format!("expected {want} parameter(s)"));
        }
        match self.kind {
            GenKind::Path | GenKind::Complete if self.params[0] == 0 => bad("need at least one vertex"),
            GenKind::Cycle if self.params[0] < 3 => bad("cycle needs at least 3 vertices"),
            GenKind::Grid if self.params[0] == 0 || self.params[1] == 0 => bad("dimension and side must be positive"),
            GenKind::Grid if self.params[1].checked_pow(self.params[0] as u32).is_none_or(|v| v > 20_000) => {
                bad("grid too large")
            }
            GenKind::BinaryTree if self.params[0] > 13 => bad("depth above 13 exceeds the point cap"),
            GenKind::Laakso if self.params[0] > 5 => bad("level above 5 exceeds the point cap"),
            GenKind::RandomRegular => {
                let (n, d) = (self.params[0], self.params[1]);
                if d < 3 {
                    bad("degree must be at least 3")
                } else if n <= d {
                    bad("need more vertices than the degree")
                } else if (n * d) % 2 != 0 {
                    bad("n * degree must be even")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params.iter().map(u64::to_string).collect();
        write!(f, "{}:{}", self.kind.name(), params.join(","))?;
        if self.kind == GenKind::RandomRegular {
            write!(f, ",seed={}", self.seed)?;
        }
        Ok(())
    }
}

impl FromStr for GenSpec {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = |msg: &str| GenError::InvalidSpec(format!("{s:?}: {msg}"));
        let (name, rest) = s.split_once(':').ok_or_else(|| invalid("expected `kind:params`"))?;
        let kind = match name.trim() {
            "path" => GenKind::Path,
            "cycle" => GenKind::Cycle,
            "complete" => GenKind::Complete,
            "grid" => GenKind::Grid,
            "binary_tree" => GenKind::BinaryTree,
            "laakso" => GenKind::Laakso,
            "random_regular" => GenKind::RandomRegular,
            "heisenberg_ball" => GenKind::HeisenbergBall,
            other => return Err(invalid(&format!("unknown kind {other:?}"))),
        };
        let mut params = Vec::new();
        let mut seed = 0;
        for tok in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse().map_err(|_| invalid("bad seed"))?;
            } else {
                params.push(tok.parse().map_err(|_| invalid(&format!("bad parameter {tok:?}")))?);
            }
        }
        let spec = GenSpec { kind, params, seed };
        spec.validate()?;
        Ok(spec)
    }
}

/// Builds the graph described by `spec`.
pub fn gen(spec: &GenSpec) -> Result<Graph> {
    spec.validate()?;
    let p = &spec.params;
    let g = match spec.kind {
        GenKind::Path => Graph::path(p[0] as usize),
        GenKind::Cycle => Graph::cycle(p[0] as usize),
        GenKind::Complete => Graph::complete(p[0] as usize),
        GenKind::Grid => grid(p[0] as usize, p[1] as usize)?,
        GenKind::BinaryTree => binary_tree(p[0] as u32)?,
        GenKind::Laakso => laakso(p[0] as u32)?,
        GenKind::RandomRegular => random_regular(p[0] as usize, p[1] as usize, spec.seed)?,
        GenKind::HeisenbergBall => heisenberg_ball(p[0] as i64)?,
    };
    Ok(g)
}

/// Convenience: generate and take the shortest-path metric.
pub fn gen_space(spec: &GenSpec) -> Result<FiniteSpace> {
    Ok(FiniteSpace::from_graph(&gen(spec)?)?)
}

fn grid(dim: usize, side: usize) -> Result<Graph> {
    let n = side.pow(dim as u32);
    let mut edges = Vec::new();
    for v in 0..n {
        let mut stride = 1;
        for _ in 0..dim {
            if (v / stride) % side + 1 < side {
                edges.push((v, v + stride));
            }
            stride *= side;
        }
    }
    Ok(Graph::unit(n, edges)?)
}

/// Complete rooted binary tree of the given depth in heap order: vertex `i`
/// has children `2i + 1` and `2i + 2`.
fn binary_tree(depth: u32) -> Result<Graph> {
    let n = (1usize << (depth + 1)) - 1;
    Ok(Graph::unit(n, (1..n).map(|i| ((i - 1) / 2, i)))?)
}

/// Level-`L` Laakso graph with unit edges. Each level replaces every edge
/// `u - v` by the gadget `u - a - {b1 | b2} - c - v` (four arcs, the middle
/// two doubled).
fn laakso(level: u32) -> Result<Graph> {
    let mut n = 2;
    let mut edges = vec![(0usize, 1usize)];
    for _ in 0..level {
        let mut next = Vec::with_capacity(edges.len() * 6);
        for &(u, v) in &edges {
            let (a, b1, b2, c) = (n, n + 1, n + 2, n + 3);
            n += 4;
            next.extend_from_slice(&[(u, a), (a, b1), (b1, c), (a, b2), (b2, c), (c, v)]);
        }
        edges = next;
    }
    Ok(Graph::unit(n, edges)?)
}

/// Random `degree`-regular simple connected graph from the pairing model,
/// rejecting loops, multi-edges and disconnected outcomes.
fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    'attempt: for _ in 0..MAX_PAIRING_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut seen = std::collections::HashSet::with_capacity(stubs.len() / 2);
        let mut edges = Vec::with_capacity(stubs.len() / 2);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u == v || !seen.insert((u, v)) {
                continue 'attempt;
            }
            edges.push((u, v));
        }
        let g = Graph::unit(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(GenError::InvalidSpec(format!(
        "random_regular:{n},{degree},seed={seed}: no simple connected pairing found"
    )))
}

/// Heisenberg group element `(x, y, z)` with product
/// `(x, y, z)(x', y', z') = (x + x', y + y', z + z' + x y')`.
type Heis = (i64, i64, i64);

fn heis_mul(g: Heis, h: Heis) -> Heis {
    (g.0 + h.0, g.1 + h.1, g.2 + h.2 + g.0 * h.1)
}

const HEIS_GENERATORS: [Heis; 4] = [(1, 0, 0), (0, 1, 0), (-1, 0, 0), (0, -1, 0)];

/// Ball of radius `r` around the identity in the Cayley graph of the
/// discrete Heisenberg group with generators `a, b` and their inverses.
/// Vertices are numbered in breadth-first order; edges are those of the
/// Cayley graph between ball elements.
fn heisenberg_ball(r: i64) -> Result<Graph> {
    let mut index: HashMap<Heis, usize> = HashMap::new();
    let mut order = vec![(0, 0, 0)];
    index.insert((0, 0, 0), 0);
    let mut frontier = vec![(0i64, 0i64, 0i64)];
    for _ in 0..r {
        let mut next = Vec::new();
        for &g in &frontier {
            for s in HEIS_GENERATORS {
                let h = heis_mul(g, s);
                if let std::collections::hash_map::Entry::Vacant(e) = index.entry(h) {
                    e.insert(order.len());
                    order.push(h);
                    next.push(h);
                }
            }
        }
        frontier = next;
    }
    let mut edges = Vec::new();
    for (i, &g) in order.iter().enumerate() {
        // a and b only: inverses give the same undirected edges
        for s in &HEIS_GENERATORS[..2] {
            if let Some(&j) = index.get(&heis_mul(g, *s)) {
                edges.push((i, j));
            }
        }
    }
    Ok(Graph::unit(order.len(), edges)?)
}

/// All measure-preserving isometries of a space, by backtracking over
/// distance-preserving partial bijections.
pub fn space_automorphisms(space: &FiniteSpace, limit: usize) -> Result<Vec<Vec<usize>>> {
    let n = space.len();
    if n > limit {
        return Err(GenError::TooLarge { n, limit });
    }
    // sorted distance rows are an isometry invariant and prune most branches
    let signature: Vec<Vec<u64>> = (0..n)
        .map(|x| {
            let mut row: Vec<u64> = space.row(x).iter().map(|d| d.to_bits()).collect();
            row.sort_unstable();
            row.push(space.measure()[x].to_bits());
            row
        })
        .collect();
    let mut out = Vec::new();
    let mut image = vec![usize::MAX; n];
    let mut used = vec![false; n];
    extend(space, &signature, 0, &mut image, &mut used, &mut out);
    Ok(out)
}

fn extend(
    space: &FiniteSpace,
    sig: &[Vec<u64>],
    next: usize,
    image: &mut [usize],
    used: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    let n = space.len();
    if next == n {
        out.push(image.to_vec());
        return;
    }
    for cand in 0..n {
        if used[cand] || sig[cand] != sig[next] {
            continue;
        }
        if (0..next).all(|prev| space.d(prev, next) == space.d(image[prev], cand)) {
            image[next] = cand;
            used[cand] = true;
            extend(space, sig, next + 1, image, used, out);
            used[cand] = false;
        }
    }
}

/// Automorphism group of a connected graph, as vertex permutations
/// (`perm[v]` is the image of `v`).
pub fn automorphisms(g: &Graph, limit: usize) -> Result<Vec<Vec<usize>>> {
    if g.n() > limit {
        return Err(GenError::TooLarge { n: g.n(), limit });
    }
    space_automorphisms(&FiniteSpace::from_graph(g)?, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(spec: &str) -> FiniteSpace {
        gen_space(&spec.parse().unwrap()).unwrap()
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["binary_tree:10", "laakso:3", "random_regular:100,3,seed=7", "grid:2,16", "cycle:6"] {
            let spec: GenSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("random_regular:7,3".parse::<GenSpec>().is_err());
        assert!("random_regular:10,2".parse::<GenSpec>().is_err());
        assert!("cycle:2".parse::<GenSpec>().is_err());
        assert!("torus:3".parse::<GenSpec>().is_err());
        assert!("grid:2".parse::<GenSpec>().is_err());
    }

    #[test]
    fn small_binary_tree() {
        let g = gen(&GenSpec::binary_tree(1)).unwrap();
        assert_eq!((g.n(), g.edges().len()), (3, 2));
        assert_eq!(FiniteSpace::from_graph(&g).unwrap().diameter(), 2.0);
        assert_eq!(gen(&GenSpec::binary_tree(3)).unwrap().n(), 15);
    }

    #[test]
    fn cycle_diameter() {
        assert_eq!(space("cycle:6").diameter(), 3.0);
    }

    #[test]
    fn grid_shape() {
        let g = gen(&GenSpec::grid(2, 9)).unwrap();
        assert_eq!(g.n(), 81);
        assert_eq!(g.edges().len(), 2 * 9 * 8);
        let s = FiniteSpace::from_graph(&g).unwrap();
        // corner to corner in the l1 metric
        assert_eq!(s.d(0, 80), 16.0);
    }

    #[test]
    fn laakso_counts_follow_recursion() {
        for level in 0..=4u32 {
            let g = gen(&GenSpec::laakso(level as u64)).unwrap();
            let edges = 6usize.pow(level);
            assert_eq!(g.edges().len(), edges);
            assert_eq!(g.n(), 2 + 4 * (edges - 1) / 5);
        }
        let s = space("laakso:2");
        assert_eq!(s.d(0, 1), 16.0);
        assert_eq!(s.diameter(), 16.0);
    }

    #[test]
    fn random_regular_is_regular_and_reproducible() {
        let spec = GenSpec::random_regular(50, 3, 11);
        let a = gen(&spec).unwrap();
        let b = gen(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.degrees().iter().all(|&d| d == 3));
        assert!(a.is_connected());
        assert_ne!(a, gen(&GenSpec::random_regular(50, 3, 12)).unwrap());
    }

    #[test]
    fn heisenberg_ball_small_radii() {
        assert_eq!(gen(&GenSpec::heisenberg_ball(0)).unwrap().n(), 1);
        assert_eq!(gen(&GenSpec::heisenberg_ball(1)).unwrap().n(), 5);
        // identity is vertex 0 and sits in the middle of the ball
        let s = space("heisenberg_ball:3");
        assert!(s.row(0).iter().all(|&d| d <= 3.0));
    }

    #[test]
    fn automorphism_counts() {
        let count = |spec: &str| automorphisms(&gen(&spec.parse().unwrap()).unwrap(), AUTOMORPHISM_LIMIT).unwrap().len();
        assert_eq!(count("cycle:5"), 10);
        assert_eq!(count("path:4"), 2);
        assert_eq!(count("binary_tree:2"), 8);
        assert_eq!(count("cycle:12"), 24);
        assert_eq!(count("binary_tree:3"), 128);
    }

    #[test]
    fn automorphisms_preserve_distances() {
        let s = space("binary_tree:2");
        for perm in space_automorphisms(&s, 64).unwrap() {
            for x in 0..s.len() {
                for y in 0..s.len() {
                    assert_eq!(s.d(perm[x], perm[y]), s.d(x, y));
                }
            }
        }
    }

    #[test]
    fn automorphisms_respect_limit() {
        let g = gen(&GenSpec::cycle(70)).unwrap();
        assert!(matches!(automorphisms(&g, 64), Err(GenError::TooLarge { n: 70, limit: 64 })));
    }

    #[test]
    fn automorphisms_respect_measure() {
        let s = space("path:3").with_measure(vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(space_automorphisms(&s, 64).unwrap(), vec![vec![0, 1, 2]]);
    }
}
