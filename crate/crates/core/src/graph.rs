//! Undirected simple graphs, hop-count geodesics and the disk-proximity model.
//!
//! Node ids are dense integers `0..n`. Edges are stored as ordered pairs
//! `(i, j)` with `i < j`, sorted lexicographically, so every matrix built on
//! top of a [`Graph`] has a reproducible row order.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// Wire form: `{"n": int, "edges": [[i, j], ...]}`.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(repr: GraphRepr) -> Result<Self> {
        Graph::from_edges(repr.n, repr.edges.into_iter().map(|[i, j]| (i, j)))
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from unordered pairs. Duplicates (in either orientation)
    /// collapse to one edge; self-loops and out-of-range ids are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(Error::InvalidEdge(a, b));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        list.dedup();
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &list {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: list,
            adjacency,
        })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
        Graph::from_edges(n, edges).expect("complete graph edges are valid")
    }

    pub fn path(n: usize) -> Self {
        Graph::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("path edges are valid")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a simple cycle needs at least 3 nodes");
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle edges are valid")
    }

    /// Star with hub `0`.
    pub fn star(n: usize) -> Self {
        Graph::from_edges(n, (1..n).map(|i| (0, i))).expect("star edges are valid")
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Index of edge `{i, j}` in [`Graph::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&(i.min(j), i.max(j))).ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialization is infallible")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: i, n: self.n })
        }
    }
}

/// Hop counts from `source`; `None` marks nodes in other components.
pub fn bfs_distances(g: &Graph, source: usize) -> Result<Vec<Option<usize>>> {
    g.check_node(source)?;
    let mut dist = vec![None; g.n];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes are reached");
        for &v in g.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// BFS restricted to `max_hops`; returns the reached nodes with their hop
/// counts, in BFS order (non-decreasing hop count, ties by id via sorted
/// adjacency).
pub fn bfs_ball(g: &Graph, source: usize, max_hops: usize) -> Result<Vec<(usize, usize)>> {
    g.check_node(source)?;
    let mut seen = vec![false; g.n];
    seen[source] = true;
    let mut out = vec![(source, 0)];
    let mut head = 0;
    while head < out.len() {
        let (u, du) = out[head];
        head += 1;
        if du == max_hops {
            continue;
        }
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                out.push((v, du + 1));
            }
        }
    }
    Ok(out)
}

pub fn is_connected(g: &Graph) -> bool {
    if g.n == 0 {
        return true;
    }
    bfs_distances(g, 0)
        .expect("node 0 exists")
        .iter()
        .all(Option::is_some)
}

/// Largest hop count from `i` to any reachable node.
///
/// For disconnected graphs this is the eccentricity within `i`'s component;
/// use [`diameter`] when connectivity matters.
pub fn eccentricity(g: &Graph, i: usize) -> Result<usize> {
    Ok(bfs_distances(g, i)?.into_iter().flatten().max().unwrap_or(0))
}

pub fn diameter(g: &Graph) -> Result<usize> {
    GeodesicTable::new(g).diameter()
}

/// All-pairs hop counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeodesicTable {
    n: usize,
    dist: Vec<Option<usize>>,
}

impl GeodesicTable {
    pub fn new(g: &Graph) -> Self {
        let n = g.node_count();
        let mut dist = Vec::with_capacity(n * n);
        for s in 0..n {
            dist.extend(bfs_distances(g, s).expect("source in range"));
        }
        GeodesicTable { n, dist }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        self.dist[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[Option<usize>] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn is_connected(&self) -> bool {
        self.dist.iter().all(Option::is_some)
    }

    /// Eccentricity within `i`'s component.
    pub fn eccentricity(&self, i: usize) -> usize {
        self.row(i).iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn eccentricities(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.eccentricity(i)).collect()
    }

    pub fn diameter(&self) -> Result<usize> {
        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(self.dist.iter().flatten().copied().max().unwrap_or(0))
    }
}

/// Disk-proximity graph: `{i, j}` is an edge iff `‖x_i − x_j‖ < range`.
///
/// `coords` holds `dim` consecutive coordinates per node.
pub fn disk_proximity_graph(coords: &[f64], dim: usize, range: f64) -> Graph {
    assert!(dim > 0 && coords.len() % dim == 0, "coordinate buffer not a multiple of dim");
    assert!(range > 0.0, "range must be positive");
    let n = coords.len() / dim;
    let r2 = range * range;
    let mut edges = Vec::new();
    for i in 0..n {
        let xi = &coords[i * dim..(i + 1) * dim];
        for j in (i + 1)..n {
            let xj = &coords[j * dim..(j + 1) * dim];
            let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < r2 {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).expect("generated edges are valid")
}
