//! Finite metric measure spaces `(X, d, μ)`.
//!
//! A [`FiniteSpace`] stores a dense symmetric distance matrix together with a
//! positive vertex measure. Spaces are immutable once built; every query
//! here is a pure function of the stored data. Dense storage caps spaces at
//! [`MAX_POINTS`] points.
//!
//! Radii are compared with closed inequalities (`d(x, y) <= r`), so
//! `ball(x, 0) = {x}` and balls only change at distance values.

mod graph;
mod io;

pub use graph::Graph;
pub use io::{parse_space, read_space, write_space_dist, write_space_edges};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

/// Hard cap on the number of points of a dense space.
pub const MAX_POINTS: usize = 20_000;

/// Relative tolerance used when validating the triangle inequality.
pub const TRIANGLE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("graph is disconnected: vertex {unreachable} cannot be reached from vertex 0")]
    DisconnectedGraph { unreachable: usize },

    #[error("no chain with hops <= {b} joins points {x} and {y}")]
    ChainUnreachable { x: usize, y: usize, b: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("space has {n} points, above the dense-storage cap of {MAX_POINTS}")]
    TooLarge { n: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SpaceError>;

/// A finite metric measure space.
#[derive(Clone, Debug)]
pub struct FiniteSpace {
    n: usize,
    dist: Vec<f64>,
    measure: Vec<f64>,
    labels: Option<Vec<String>>,
    /// Pairs `(u, v)` whose distance is realized by a single edge of the
    /// graph the space came from. Every shortest path is a chain of such
    /// pairs, so Lipschitz constants can be measured on them alone.
    skeleton: Option<Vec<(usize, usize)>>,
}

impl FiniteSpace {
    /// Builds a space from a full distance matrix and a measure, validating
    /// every metric-measure invariant.
    pub fn new(dist: Vec<Vec<f64>>, measure: Vec<f64>) -> Result<Self> {
        let n = dist.len();
        if n == 0 {
            return Err(SpaceError::InvalidSpace("space has no points".into()));
        }
        if n > MAX_POINTS {
            return Err(SpaceError::TooLarge { n });
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(SpaceError::InvalidSpace(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(n, flat, measure)
    }

    /// Same as [`FiniteSpace::new`] but with the counting measure.
    pub fn with_counting_measure(dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = dist.len();
        Self::new(dist, vec![1.0; n])
    }

    /// Builds a space from a row-major `n * n` distance buffer.
    pub fn from_flat(n: usize, dist: Vec<f64>, measure: Vec<f64>) -> Result<Self> {
        if n > MAX_POINTS {
            return Err(SpaceError::TooLarge { n });
        }
        if dist.len() != n * n {
            return Err(SpaceError::InvalidSpace(format!(
                "distance buffer has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        let space = Self {
            n,
            dist,
            measure,
            labels: None,
            skeleton: None,
        };
        space.validate()?;
        Ok(space)
    }

    fn trusted(n: usize, dist: Vec<f64>, measure: Vec<f64>, skeleton: Option<Vec<(usize, usize)>>) -> Self {
        Self {
            n,
            dist,
            measure,
            labels: None,
            skeleton,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.measure.len() != n {
            return Err(SpaceError::InvalidSpace(format!(
                "measure has {} entries, expected {n}",
                self.measure.len()
            )));
        }
        if let Some(i) = self.measure.iter().position(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(SpaceError::InvalidSpace(format!(
                "measure[{i}] = {} is not a positive finite number",
                self.measure[i]
            )));
        }
        for i in 0..n {
            if self.d(i, i) != 0.0 {
                return Err(SpaceError::InvalidSpace(format!("dist[{i}][{i}] is not zero")));
            }
            for j in 0..n {
                let dij = self.d(i, j);
                if !(dij >= 0.0 && dij.is_finite()) {
                    return Err(SpaceError::InvalidSpace(format!(
                        "dist[{i}][{j}] = {dij} is not a nonnegative finite number"
                    )));
                }
                if dij != self.d(j, i) {
                    return Err(SpaceError::InvalidSpace(format!("dist[{i}][{j}] != dist[{j}][{i}]")));
                }
            }
        }
        let violation = (0..n).into_par_iter().find_map_any(|i| {
            for j in 0..n {
                let dij = self.d(i, j);
                for k in 0..n {
                    let via = dij + self.d(j, k);
                    if self.d(i, k) > via * (1.0 + TRIANGLE_REL_TOL) {
                        return Some((i, j, k));
                    }
                }
            }
            None
        });
        if let Some((i, j, k)) = violation {
            return Err(SpaceError::InvalidSpace(format!(
                "triangle inequality fails: d({i},{k}) > d({i},{j}) + d({j},{k})"
            )));
        }
        Ok(())
    }

    /// Shortest-path metric of a connected graph, with the counting measure.
    pub fn from_graph(g: &Graph) -> Result<Self> {
        Self::from_graph_with_measure(g, None)
    }

    /// Shortest-path metric of a connected graph; `measure` overrides the
    /// counting measure when given.
    pub fn from_graph_with_measure(g: &Graph, measure: Option<Vec<f64>>) -> Result<Self> {
        let n = g.n();
        if n > MAX_POINTS {
            return Err(SpaceError::TooLarge { n });
        }
        let adj = g.adjacency();
        let dist = all_pairs_shortest_paths(n, &adj, g.is_unit());
        if let Some(j) = (0..n).find(|&j| dist[j].is_infinite()) {
            return Err(SpaceError::DisconnectedGraph { unreachable: j });
        }
        let mut skeleton: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .filter(|&&(u, v, len)| dist[u * n + v] == len)
            .map(|&(u, v, _)| (u.min(v), u.max(v)))
            .collect();
        skeleton.sort_unstable();
        skeleton.dedup();
        let measure = measure.unwrap_or_else(|| vec![1.0; n]);
        let space = Self::trusted(n, dist, measure, Some(skeleton));
        if space.measure.len() != n || space.measure.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(SpaceError::InvalidSpace("measure must have n positive finite entries".into()));
        }
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.n + y]
    }

    /// Row `x` of the distance matrix.
    pub fn row(&self, x: usize) -> &[f64] {
        &self.dist[x * self.n..(x + 1) * self.n]
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(SpaceError::InvalidSpace("one label per point required".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Replaces the measure, keeping the metric.
    pub fn with_measure(&self, measure: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.measure = measure;
        if out.measure.len() != self.n || out.measure.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(SpaceError::InvalidSpace("measure must have n positive finite entries".into()));
        }
        Ok(out)
    }

    /// Multiplies every distance by `s > 0`.
    pub fn rescaled(&self, s: f64) -> Self {
        assert!(s > 0.0, "scale factor must be positive");
        let mut out = self.clone();
        out.dist.iter_mut().for_each(|d| *d *= s);
        out
    }

    /// Geodesic edge set, present when the space was built from a graph.
    pub fn skeleton(&self) -> Option<&[(usize, usize)]> {
        self.skeleton.as_deref()
    }

    /// Metric subspace on `points` (in the given order) with the induced
    /// metric and restricted measure.
    pub fn subspace(&self, points: &[usize]) -> Self {
        let m = points.len();
        let mut dist = Vec::with_capacity(m * m);
        for &a in points {
            for &b in points {
                dist.push(self.d(a, b));
            }
        }
        let measure = points.iter().map(|&a| self.measure[a]).collect();
        Self::trusted(m, dist, measure, None)
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Distinct positive distance values, increasing.
    pub fn distinct_distances(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.dist.iter().copied().filter(|&d| d > 0.0).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Smallest positive distance, or 0 for a single point.
    pub fn min_distance(&self) -> f64 {
        let m = self.dist.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m
        } else {
            0.0
        }
    }

    /// Closed ball `{ y : d(x, y) <= r }`, in increasing point order.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        self.row(x)
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d <= r)
            .map(|(y, _)| y)
            .collect()
    }

    /// `V(x, r)`: measure of the closed ball.
    pub fn volume(&self, x: usize, r: f64) -> f64 {
        self.row(x)
            .iter()
            .zip(&self.measure)
            .filter(|&(&d, _)| d <= r)
            .map(|(_, &m)| m)
            .sum()
    }

    /// Sorted per-point distance index for repeated ball queries.
    pub fn ball_index(&self) -> BallIndex {
        BallIndex::new(self)
    }

    /// Per-radius min and max of `V(x, r)` over all points.
    pub fn growth_profile(&self, radii: &[f64]) -> GrowthProfile {
        let index = self.ball_index();
        let mut vmin = Vec::with_capacity(radii.len());
        let mut vmax = Vec::with_capacity(radii.len());
        for &r in radii {
            let (lo, hi) = (0..self.n).fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
                let v = index.volume(x, r);
                (lo.min(v), hi.max(v))
            });
            vmin.push(lo);
            vmax.push(hi);
        }
        let uniformity = vmin.iter().zip(&vmax).map(|(lo, hi)| hi / lo).collect();
        GrowthProfile {
            radii: radii.to_vec(),
            vmin,
            vmax,
            uniformity,
        }
    }

    /// `max_{x, r} V(x, 2r) / V(x, r)` over the sampled radii; 1 when no
    /// radius is given.
    pub fn doubling_constant(&self, radii: &[f64]) -> f64 {
        let index = self.ball_index();
        (0..self.n)
            .into_par_iter()
            .map(|x| {
                radii
                    .iter()
                    .map(|&r| index.volume(x, 2.0 * r) / index.volume(x, r))
                    .fold(1.0f64, f64::max)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(1.0, f64::max)
    }

    /// Doubling constant over the grid of distinct distances.
    pub fn doubling_constant_auto(&self) -> f64 {
        self.doubling_constant(&self.distinct_distances())
    }

    /// Empirical bounded-geometry constant: the least `C` with
    /// `1/C <= V(x, r) <= C` for all `x`.
    pub fn bounded_geometry_constant(&self, r: f64) -> f64 {
        let g = self.growth_profile(&[r]);
        g.vmax[0].max(1.0 / g.vmin[0])
    }

    /// The `b`-geodesic metric `d_b`: shortest chains whose hops are all of
    /// length at most `b`.
    pub fn b_geodesic_metric(&self, b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(SpaceError::InvalidSpace(format!("hop bound b = {b} must be positive")));
        }
        let n = self.n;
        let adj = self.hop_adjacency(b);
        let unit = false;
        let dist = all_pairs_shortest_paths(n, &adj, unit);
        if let Some(idx) = dist.iter().position(|d| d.is_infinite()) {
            return Err(SpaceError::ChainUnreachable {
                x: idx / n,
                y: idx % n,
                b,
            });
        }
        let skeleton = adj
            .iter()
            .enumerate()
            .flat_map(|(u, nbrs)| nbrs.iter().map(move |&(v, len)| (u, v, len)))
            .filter(|&(u, v, len)| u < v && dist[u * n + v] == len)
            .map(|(u, v, _)| (u, v))
            .collect();
        Ok(Self {
            n,
            dist,
            measure: self.measure.clone(),
            labels: self.labels.clone(),
            skeleton: Some(skeleton),
        })
    }

    /// Checks that every pair is joined by a chain with hops `<= b` and at
    /// most `gamma * d(x, y)` hops.
    pub fn quasi_geodesic_check(&self, b: f64, gamma: f64) -> QuasiGeodesicReport {
        let n = self.n;
        let adj = self.hop_adjacency(b);
        let rows: Vec<(f64, Option<(usize, usize)>)> = (0..n)
            .into_par_iter()
            .map(|x| {
                let hops = bfs_hops(n, &adj, x);
                let mut worst = (0.0f64, None);
                for y in 0..n {
                    if y == x {
                        continue;
                    }
                    let ratio = match hops[y] {
                        Some(h) => h as f64 / (gamma * self.d(x, y)),
                        None => f64::INFINITY,
                    };
                    if ratio > worst.0 || worst.1.is_none() {
                        worst = (ratio, Some((x, y)));
                    }
                }
                worst
            })
            .collect();
        let (worst_ratio, worst_pair) = rows
            .into_iter()
            .fold((0.0, None), |acc, (r, p)| if p.is_some() && (acc.1.is_none() || r > acc.0) { (r, p) } else { acc });
        QuasiGeodesicReport {
            holds: worst_ratio <= 1.0,
            worst_pair,
            worst_ratio,
        }
    }

    fn hop_adjacency(&self, b: f64) -> Vec<Vec<(usize, f64)>> {
        (0..self.n)
            .map(|u| {
                (0..self.n)
                    .filter(|&v| v != u && self.d(u, v) <= b)
                    .map(|v| (v, self.d(u, v)))
                    .collect()
            })
            .collect()
    }
}

/// Growth statistics of `V(x, r)` over all points.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthProfile {
    pub radii: Vec<f64>,
    pub vmin: Vec<f64>,
    pub vmax: Vec<f64>,
    /// `vmax / vmin` per radius.
    pub uniformity: Vec<f64>,
}

impl GrowthProfile {
    pub fn max_uniformity(&self) -> f64 {
        self.uniformity.iter().copied().fold(1.0, f64::max)
    }
}

/// Outcome of [`FiniteSpace::quasi_geodesic_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiGeodesicReport {
    pub holds: bool,
    /// Pair with the largest `hops / (gamma * d)`; `None` for a one-point space.
    pub worst_pair: Option<(usize, usize)>,
    pub worst_ratio: f64,
}

/// Per-point distance-sorted view of a space, for fast ball volumes.
#[derive(Clone, Debug)]
pub struct BallIndex {
    n: usize,
    order: Vec<u32>,
    sorted: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BallIndex {
    pub fn new(space: &FiniteSpace) -> Self {
        let n = space.n;
        let rows: Vec<(Vec<u32>, Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|x| {
                let row = space.row(x);
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]).then(a.cmp(&b)));
                let sorted: Vec<f64> = idx.iter().map(|&y| row[y as usize]).collect();
                let mut acc = 0.0;
                let cumulative = idx
                    .iter()
                    .map(|&y| {
                        acc += space.measure[y as usize];
                        acc
                    })
                    .collect();
                (idx, sorted, cumulative)
            })
            .collect();
        let mut order = Vec::with_capacity(n * n);
        let mut sorted = Vec::with_capacity(n * n);
        let mut cumulative = Vec::with_capacity(n * n);
        for (o, s, c) in rows {
            order.extend(o);
            sorted.extend(s);
            cumulative.extend(c);
        }
        Self {
            n,
            order,
            sorted,
            cumulative,
        }
    }

    /// Number of points in the closed ball `B(x, r)`.
    pub fn count(&self, x: usize, r: f64) -> usize {
        let s = &self.sorted[x * self.n..(x + 1) * self.n];
        s.partition_point(|&d| d <= r)
    }

    pub fn volume(&self, x: usize, r: f64) -> f64 {
        match self.count(x, r) {
            0 => 0.0,
            c => self.cumulative[x * self.n + c - 1],
        }
    }

    /// Points of the closed ball `B(x, r)` ordered by distance from `x`.
    pub fn ball(&self, x: usize, r: f64) -> &[u32] {
        let c = self.count(x, r);
        &self.order[x * self.n..x * self.n + c]
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(n: usize, adj: &[Vec<(usize, f64)>], src: usize, out: &mut [f64]) {
    out.fill(f64::INFINITY);
    out[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem(0.0, src));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > out[u] {
            continue;
        }
        for &(v, len) in &adj[u] {
            let nd = d + len;
            if nd < out[v] {
                out[v] = nd;
                heap.push(HeapItem(nd, v));
            }
        }
    }
    debug_assert_eq!(out.len(), n);
}

fn bfs_hops(n: usize, adj: &[Vec<(usize, f64)>], src: usize) -> Vec<Option<u32>> {
    let mut hops = vec![None; n];
    hops[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let h = hops[u].expect("visited");
        for &(v, _) in &adj[u] {
            if hops[v].is_none() {
                hops[v] = Some(h + 1);
                queue.push_back(v);
            }
        }
    }
    hops
}

/// Dense all-pairs shortest paths; BFS when every edge has unit length.
/// Unreachable pairs are `f64::INFINITY`.
pub(crate) fn all_pairs_shortest_paths(n: usize, adj: &[Vec<(usize, f64)>], unit: bool) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n * n];
    dist.par_chunks_mut(n.max(1)).enumerate().for_each(|(src, row)| {
        if unit {
            for (y, h) in bfs_hops(n, adj, src).into_iter().enumerate() {
                row[y] = h.map_or(f64::INFINITY, f64::from);
            }
        } else {
            dijkstra(n, adj, src, row);
        }
    });
    dist
}
