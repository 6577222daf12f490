//! Metric substrate: point clouds, distance matrices, neighbor graphs,
//! graph geodesics and farthest-point sampling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{param_err, DipoleError, Result};
use crate::union_find::UnionFind;

/// `n` points in `R^dim`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(n: usize, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return param_err(format!("point cloud needs n >= 1 and dim >= 1, got {n}x{dim}"));
        }
        if coords.len() != n * dim {
            return param_err(format!("expected {} coordinates for {n}x{dim} cloud, got {}", n * dim, coords.len()));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(DipoleError::Validation(format!(
                "non-finite coordinate at point {}, axis {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { n, dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return param_err(format!("row {bad} has {} columns, expected {dim}", rows[bad].len()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// Symmetric, nonnegative, zero-diagonal matrix of pairwise distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates a dense row-major matrix. Symmetry is checked to `tol`
    /// and the result is exactly symmetrized from the upper triangle.
    pub fn from_dense(n: usize, mut entries: Vec<f64>, tol: f64) -> Result<Self> {
        if entries.len() != n * n {
            return param_err(format!("expected {} entries for {n}x{n} matrix, got {}", n * n, entries.len()));
        }
        for i in 0..n {
            let d = entries[i * n + i];
            if d != 0.0 {
                return Err(DipoleError::Validation(format!("diagonal entry ({i},{i}) is {d}, expected 0")));
            }
            for j in i + 1..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(DipoleError::Validation(format!("non-finite entry at ({i},{j})")));
                }
                if a < 0.0 || b < 0.0 {
                    return Err(DipoleError::Validation(format!("negative entry at ({i},{j})")));
                }
                if (a - b).abs() > tol {
                    return Err(DipoleError::Validation(format!("matrix is not symmetric at ({i},{j}): {a} vs {b}")));
                }
                entries[j * n + i] = a;
            }
        }
        Ok(Self { n, entries })
    }

    /// Builds a matrix from a function evaluated on the strict upper triangle.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        Self { n, entries }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, entries: self.entries.iter().map(|d| d * c).collect() }
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

/// Undirected edge `{i, j}` with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected weighted graph on `0..n`; edges kept sorted by `(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl NeighborGraph {
    /// Builds a graph from index pairs, weighting each by `dist`.
    /// Self-loops are rejected and duplicate pairs collapse.
    pub fn from_pairs(dist: &DistanceMatrix, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = dist.len();
        let mut keys = Vec::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return param_err(format!("edge ({a},{b}) out of range for {n} points"));
            }
            if a == b {
                return param_err(format!("self-loop at {a}"));
            }
            keys.push((a.min(b), a.max(b)));
        }
        keys.sort_unstable();
        keys.dedup();
        let edges = keys.into_iter().map(|(i, j)| Edge { i, j, weight: dist.get(i, j) }).collect();
        Ok(Self { n, edges })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search_by(|e| (e.i, e.j).cmp(&key)).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        adj
    }

    pub fn component_count(&self) -> usize {
        self.union_find().set_count()
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    fn union_find(&self) -> UnionFind {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        uf
    }
}

pub fn euclidean_distances(cloud: &PointCloud) -> DistanceMatrix {
    DistanceMatrix::from_fn(cloud.len(), |i, j| euclidean(cloud.point(i), cloud.point(j)))
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Indices of the `m` nearest neighbors of `i`, ties broken by lower index.
fn nearest(dist: &DistanceMatrix, i: usize, m: usize) -> Vec<usize> {
    let row = dist.row(i);
    let mut others: Vec<usize> = (0..dist.len()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    others.truncate(m);
    others
}

/// Symmetrized `m`-nearest-neighbor graph: `{i, j}` is an edge when either
/// endpoint is among the other's `m` nearest.
pub fn knn_graph(dist: &DistanceMatrix, m: usize) -> Result<NeighborGraph> {
    let n = dist.len();
    if m < 1 || m + 1 > n {
        return param_err(format!("neighbor count must lie in 1..={}, got {m}", n.saturating_sub(1)));
    }
    let lists: Vec<Vec<usize>> = (0..n).into_par_iter().map(|i| nearest(dist, i, m)).collect();
    let pairs = lists.iter().enumerate().flat_map(|(i, list)| list.iter().map(move |&j| (i, j)));
    NeighborGraph::from_pairs(dist, pairs)
}

/// All pairs within distance `radius` (inclusive).
pub fn radius_graph(dist: &DistanceMatrix, radius: f64) -> Result<NeighborGraph> {
    if !(radius > 0.0) {
        return param_err(format!("radius must be positive, got {radius}"));
    }
    let n = dist.len();
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    NeighborGraph::from_pairs(dist, pairs.filter(|&(i, j)| dist.get(i, j) <= radius))
}

/// Adds the cheapest inter-component edges (a spanning tree over the
/// components, weighted by `dist`) until the graph is connected.
pub fn bridge_components(graph: &NeighborGraph, dist: &DistanceMatrix) -> Result<NeighborGraph> {
    if graph.node_count() != dist.len() {
        return param_err("graph and distance matrix sizes differ");
    }
    let n = graph.node_count();
    let mut uf = graph.union_find();
    let comps = uf.set_count();
    if comps <= 1 {
        return Ok(graph.clone());
    }
    let labels = uf.labels();
    // cheapest pair between each pair of components
    let mut best: Vec<Option<(f64, usize, usize)>> = vec![None; comps * comps];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (labels[i], labels[j]);
            if a == b {
                continue;
            }
            let slot = &mut best[a.min(b) * comps + a.max(b)];
            let d = dist.get(i, j);
            if slot.is_none_or(|(w, _, _)| d < w) {
                *slot = Some((d, i, j));
            }
        }
    }
    let mut candidates: Vec<(f64, usize, usize, usize, usize)> = Vec::new();
    for a in 0..comps {
        for b in a + 1..comps {
            if let Some((w, i, j)) = best[a * comps + b] {
                candidates.push((w, a, b, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.3, x.4).cmp(&(y.3, y.4))));
    let mut forest = UnionFind::new(comps);
    let mut pairs: Vec<(usize, usize)> = graph.edges.iter().map(|e| (e.i, e.j)).collect();
    for (_, a, b, i, j) in candidates {
        if forest.union(a, b) {
            pairs.push((i, j));
        }
    }
    NeighborGraph::from_pairs(dist, pairs)
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier { dist: 0.0, node: source });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let cand = d + w;
            if cand < dist[next] {
                dist[next] = cand;
                heap.push(Frontier { dist: cand, node: next });
            }
        }
    }
    dist
}

/// All-pairs shortest-path distances over a connected graph.
pub fn geodesic_distances(graph: &NeighborGraph) -> Result<DistanceMatrix> {
    let components = graph.component_count();
    if components > 1 {
        return Err(DipoleError::Disconnected { components });
    }
    let n = graph.node_count();
    let adj = graph.adjacency();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adj, s)).collect();
    // Dijkstra from i and from j can disagree in the last bit; keep the
    // upper-triangle value on both sides.
    Ok(DistanceMatrix::from_fn(n, |i, j| rows[i][j]))
}

/// Geodesic metric on the `m`-nearest-neighbor graph of `dist`, optionally
/// bridging disconnected components first.
pub fn knn_geodesic(dist: &DistanceMatrix, m: usize, auto_connect: bool) -> Result<DistanceMatrix> {
    let mut graph = knn_graph(dist, m)?;
    if auto_connect {
        graph = bridge_components(&graph, dist)?;
    }
    geodesic_distances(&graph)
}

/// Greedy maximin sampling with the first index drawn uniformly from `seed`.
pub fn farthest_point_sample(dist: &DistanceMatrix, target_size: usize, seed: u64) -> Result<Vec<usize>> {
    let n = dist.len();
    if target_size == 0 {
        return param_err("farthest point sample size must be at least 1");
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if target_size >= n {
        return Ok((0..n).collect());
    }
    let start = ChaCha8Rng::seed_from_u64(seed).gen_range(0..n);
    farthest_point_sample_from(dist, target_size, start)
}

/// Greedy maximin sampling from a fixed starting index. Ties go to the
/// lower index.
pub fn farthest_point_sample_from(dist: &DistanceMatrix, target_size: usize, start: usize) -> Result<Vec<usize>> {
    let n = dist.len();
    if start >= n {
        return param_err(format!("start index {start} out of range for {n} points"));
    }
    if target_size >= n {
        return Ok((0..n).collect());
    }
    let mut selected = Vec::with_capacity(target_size);
    let mut gap: Vec<f64> = dist.row(start).to_vec();
    let mut taken = vec![false; n];
    selected.push(start);
    taken[start] = true;
    while selected.len() < target_size {
        let mut best = None::<(usize, f64)>;
        for (i, &g) in gap.iter().enumerate() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((i, g));
            }
        }
        let (next, _) = best.expect("fewer selected than points");
        selected.push(next);
        taken[next] = true;
        for (g, &d) in gap.iter_mut().zip(dist.row(next)) {
            if d < *g {
                *g = d;
            }
        }
    }
    Ok(selected)
}

/// Principal submatrix on `subset`, in subset order.
pub fn restrict(dist: &DistanceMatrix, subset: &[usize]) -> Result<DistanceMatrix> {
    let n = dist.len();
    let mut seen = vec![false; n];
    for &s in subset {
        if s >= n {
            return param_err(format!("index {s} out of range for {n} points"));
        }
        if std::mem::replace(&mut seen[s], true) {
            return param_err(format!("duplicate index {s} in subset"));
        }
    }
    Ok(DistanceMatrix::from_fn(subset.len(), |a, b| dist.get(subset[a], subset[b])))
}
