use super::{Result, SpaceError};

/// Undirected graph with positive edge lengths, the carrier of
/// shortest-path metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Graph {
    /// Validates vertex indices, rejects self-loops and non-positive lengths.
    /// Connectivity is checked when the metric is built.
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(SpaceError::InvalidGraph("graph has no vertices".into()));
        }
        for &(u, v, len) in &edges {
            if u >= n || v >= n {
                return Err(SpaceError::InvalidGraph(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(SpaceError::InvalidGraph(format!("self-loop at vertex {u}")));
            }
            if !(len > 0.0 && len.is_finite()) {
                return Err(SpaceError::InvalidGraph(format!("edge ({u}, {v}) has length {len}")));
            }
        }
        Ok(Self { n, edges })
    }

    /// Graph with unit-length edges.
    pub fn unit(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(n, pairs.into_iter().map(|(u, v)| (u, v, 1.0)).collect())
    }

    pub fn path(n: usize) -> Self {
        Self::unit(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 vertices");
        Self::unit(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
    }

    pub fn complete(n: usize) -> Self {
        Self::unit(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))).expect("valid complete graph")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_unit(&self) -> bool {
        self.edges.iter().all(|e| e.2 == 1.0)
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v, len) in &self.edges {
            adj[u].push((v, len));
            adj[v].push((u, len));
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v, _) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
