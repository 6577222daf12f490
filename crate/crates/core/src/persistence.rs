//! Vietoris-Rips persistent homology in degrees 0 and 1.
//!
//! Simplices are ordered by `(filtration value, dimension, vertex tuple)`.
//! Every finite point carries the edges whose lengths realize its birth and
//! death so that gradients can flow back to point coordinates. Essential
//! classes and zero-persistence pairs are not stored.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::geometry::DistanceMatrix;
use crate::union_find::UnionFind;

/// Unordered vertex pair `(i, j)` with `i < j`.
pub type EdgeRef = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub birth: f64,
    pub death: f64,
    pub degree: usize,
    /// Edge whose length is `birth`; absent in degree 0.
    pub birth_edge: Option<EdgeRef>,
    /// Edge whose length is `death`.
    pub death_edge: EdgeRef,
}

impl PersistencePoint {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub degree: usize,
    pub points: Vec<PersistencePoint>,
}

impl PersistenceDiagram {
    pub fn empty(degree: usize) -> Self {
        Self { degree, points: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(birth, death)` pairs sorted lexicographically.
    pub fn sorted_pairs(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = self.points.iter().map(|p| (p.birth, p.death)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pairs
    }
}

/// Edges of the complete graph in filtration order, with rank lookup.
struct EdgeOrder {
    n: usize,
    edges: Vec<(f64, u32, u32)>,
    rank: Vec<u32>,
    /// Index of each edge's distinct filtration value.
    class: Vec<u32>,
}

impl EdgeOrder {
    fn new(dist: &DistanceMatrix) -> Self {
        let n = dist.len();
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edges.push((dist.get(i, j), i as u32, j as u32));
            }
        }
        edges.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut rank = vec![u32::MAX; n * n];
        let mut class = Vec::with_capacity(edges.len());
        for (r, &(w, i, j)) in edges.iter().enumerate() {
            rank[i as usize * n + j as usize] = r as u32;
            rank[j as usize * n + i as usize] = r as u32;
            let c = match class.last() {
                Some(&c) if edges[r - 1].0 == w => c,
                Some(&c) => c + 1,
                None => 0,
            };
            class.push(c);
        }
        Self { n, edges, rank, class }
    }

    #[inline]
    fn rank(&self, i: usize, j: usize) -> u32 {
        self.rank[i * self.n + j]
    }

    fn edge(&self, r: u32) -> EdgeRef {
        let (_, i, j) = self.edges[r as usize];
        (i as usize, j as usize)
    }

    fn value(&self, r: u32) -> f64 {
        self.edges[r as usize].0
    }

    /// Triangle key ordered like the filtration: value of the longest edge,
    /// then the sorted vertex triple.
    #[inline]
    fn triangle_key(&self, verts: [usize; 3], longest: u32) -> u128 {
        let n = self.n as u64;
        let code = (verts[0] as u64 * n + verts[1] as u64) * n + verts[2] as u64;
        ((self.class[longest as usize] as u128) << 64) | code as u128
    }

    /// Longest edge of the triangle behind `key`.
    fn longest_edge(&self, key: u128) -> u32 {
        let n = self.n as u64;
        let code = key as u64;
        let (a, b, c) = ((code / (n * n)) as usize, (code / n % n) as usize, (code % n) as usize);
        self.rank(a, b).max(self.rank(a, c)).max(self.rank(b, c))
    }

    /// Keys of the triangles containing edge `r`.
    fn coboundary(&self, r: u32, out: &mut Vec<u128>) {
        out.clear();
        let (i, j) = self.edge(r);
        for l in 0..self.n {
            if l == i || l == j {
                continue;
            }
            let longest = r.max(self.rank(i, l)).max(self.rank(j, l));
            let mut verts = [i, j, l];
            verts.sort_unstable();
            out.push(self.triangle_key(verts, longest));
        }
    }
}

/// Kruskal over the ordered edges. Returns the diagram and, per edge rank,
/// whether the edge merged two components.
fn h0_from(order: &EdgeOrder) -> (PersistenceDiagram, Vec<bool>) {
    let mut uf = UnionFind::new(order.n);
    let mut diagram = PersistenceDiagram::empty(0);
    let mut merging = vec![false; order.edges.len()];
    let mut merges = 0;
    for (r, &(w, i, j)) in order.edges.iter().enumerate() {
        if uf.union(i as usize, j as usize) {
            merges += 1;
            merging[r] = true;
            if w > 0.0 {
                diagram.points.push(PersistencePoint {
                    birth: 0.0,
                    death: w,
                    degree: 0,
                    birth_edge: None,
                    death_edge: (i as usize, j as usize),
                });
            }
            if merges + 1 == order.n {
                break;
            }
        }
    }
    (diagram, merging)
}

/// Earliest entry of a heap-backed column whose duplicate entries cancel
/// in pairs. The pivot stays in the heap.
fn heap_pivot(heap: &mut BinaryHeap<Reverse<u128>>) -> Option<u128> {
    while let Some(Reverse(top)) = heap.pop() {
        if heap.peek() == Some(&Reverse(top)) {
            heap.pop();
        } else {
            heap.push(Reverse(top));
            return Some(top);
        }
    }
    None
}

/// Reduction of the coboundary matrix from edges to triangles. Columns are
/// the edges that did not merge components, taken from the longest down;
/// a column's pivot is its earliest triangle. Each reduced column is kept
/// as the set of edges whose coboundaries sum to it, and the working column
/// is a heap that is only resolved as far as its pivot.
fn h1_from(order: &EdgeOrder, merging: &[bool]) -> PersistenceDiagram {
    let mut diagram = PersistenceDiagram::empty(1);
    let mut pivots: HashMap<u128, usize> = HashMap::new();
    let mut combos: Vec<Vec<u32>> = Vec::new();
    let mut cob = Vec::new();
    let mut heap = BinaryHeap::new();
    for r in (0..order.edges.len() as u32).rev() {
        if merging[r as usize] {
            continue;
        }
        heap.clear();
        order.coboundary(r, &mut cob);
        heap.extend(cob.iter().map(|&t| Reverse(t)));
        let mut combo = vec![r];
        while let Some(pivot) = heap_pivot(&mut heap) {
            let Some(&owner) = pivots.get(&pivot) else {
                let longest = order.longest_edge(pivot);
                let (birth, death) = (order.value(r), order.value(longest));
                if death > birth {
                    diagram.points.push(PersistencePoint {
                        birth,
                        death,
                        degree: 1,
                        birth_edge: Some(order.edge(r)),
                        death_edge: order.edge(longest),
                    });
                }
                pivots.insert(pivot, combos.len());
                combo.sort_unstable();
                let mut kept = Vec::with_capacity(combo.len());
                for e in combo {
                    if kept.last() == Some(&e) {
                        kept.pop();
                    } else {
                        kept.push(e);
                    }
                }
                combos.push(kept);
                break;
            };
            for &e in &combos[owner] {
                order.coboundary(e, &mut cob);
                heap.extend(cob.iter().map(|&t| Reverse(t)));
            }
            combo.extend_from_slice(&combos[owner]);
        }
    }
    diagram
}

pub fn rips_h0(dist: &DistanceMatrix) -> PersistenceDiagram {
    h0_from(&EdgeOrder::new(dist)).0
}

pub fn rips_h1(dist: &DistanceMatrix) -> PersistenceDiagram {
    let order = EdgeOrder::new(dist);
    let (_, merging) = h0_from(&order);
    h1_from(&order, &merging)
}

/// Diagrams for degrees `0..=max_degree` from one shared edge ordering.
pub fn rips_diagrams(dist: &DistanceMatrix, max_degree: usize) -> Result<Vec<PersistenceDiagram>> {
    if max_degree > 1 {
        return param_err(format!("homology above degree 1 is not supported (got {max_degree})"));
    }
    let order = EdgeOrder::new(dist);
    let (h0, merging) = h0_from(&order);
    let mut out = vec![h0];
    if max_degree == 1 {
        out.push(h1_from(&order, &merging));
    }
    Ok(out)
}

/// Largest input accepted by [`reduction_oracle`].
pub const ORACLE_MAX_POINTS: usize = 10;

/// Textbook dense reduction of the full boundary matrix of the Rips
/// 2-skeleton over Z/2. Slow; kept as an independent check of
/// [`rips_diagrams`].
pub fn reduction_oracle(dist: &DistanceMatrix, max_degree: usize) -> Result<Vec<PersistenceDiagram>> {
    let n = dist.len();
    if n > ORACLE_MAX_POINTS {
        return param_err(format!("oracle accepts at most {ORACLE_MAX_POINTS} points, got {n}"));
    }
    if max_degree > 1 {
        return param_err(format!("homology above degree 1 is not supported (got {max_degree})"));
    }

    struct Simplex {
        value: f64,
        verts: Vec<usize>,
    }
    let diam = |verts: &[usize]| {
        let mut v: f64 = 0.0;
        for (a, &x) in verts.iter().enumerate() {
            for &y in &verts[a + 1..] {
                v = v.max(dist.get(x, y));
            }
        }
        v
    };
    let mut simplices = Vec::new();
    for i in 0..n {
        simplices.push(Simplex { value: 0.0, verts: vec![i] });
        for j in i + 1..n {
            simplices.push(Simplex { value: dist.get(i, j), verts: vec![i, j] });
            for l in j + 1..n {
                let verts = vec![i, j, l];
                simplices.push(Simplex { value: diam(&verts), verts });
            }
        }
    }
    simplices.sort_by(|a, b| {
        a.value.total_cmp(&b.value).then(a.verts.len().cmp(&b.verts.len())).then(a.verts.cmp(&b.verts))
    });
    let index: HashMap<Vec<usize>, usize> = simplices.iter().enumerate().map(|(k, s)| (s.verts.clone(), k)).collect();

    let size = simplices.len();
    let mut matrix: Vec<Vec<bool>> = simplices
        .iter()
        .map(|s| {
            let mut col = vec![false; size];
            if s.verts.len() > 1 {
                for skip in 0..s.verts.len() {
                    let face: Vec<usize> =
                        s.verts.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, &v)| v).collect();
                    col[index[&face]] = true;
                }
            }
            col
        })
        .collect();

    let low = |col: &[bool]| col.iter().rposition(|&x| x);
    let mut owner_of_low: Vec<Option<usize>> = vec![None; size];
    let mut diagrams: Vec<PersistenceDiagram> = (0..=max_degree).map(PersistenceDiagram::empty).collect();
    for j in 0..size {
        while let Some(l) = low(&matrix[j]) {
            match owner_of_low[l] {
                Some(k) => {
                    let other = matrix[k].clone();
                    for (x, y) in matrix[j].iter_mut().zip(other) {
                        *x ^= y;
                    }
                }
                None => break,
            }
        }
        let Some(l) = low(&matrix[j]) else { continue };
        owner_of_low[l] = Some(j);
        let degree = simplices[l].verts.len() - 1;
        if degree > max_degree {
            continue;
        }
        let (birth, death) = (simplices[l].value, simplices[j].value);
        if death <= birth {
            continue;
        }
        let as_edge = |v: &[usize]| (v[0], v[1]);
        let killer = &simplices[j].verts;
        let death_edge = if killer.len() == 2 {
            as_edge(killer)
        } else {
            // maximal edge of the triangle in filtration order
            let faces = [[killer[0], killer[1]], [killer[0], killer[2]], [killer[1], killer[2]]];
            let top = faces.iter().max_by_key(|f| index[&f.to_vec()]).unwrap();
            as_edge(top)
        };
        diagrams[degree].points.push(PersistencePoint {
            birth,
            death,
            degree,
            birth_edge: (degree == 1).then(|| as_edge(&simplices[l].verts)),
            death_edge,
        });
    }
    Ok(diagrams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean_distances, PointCloud};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rows: &[[f64; 2]]) -> DistanceMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        euclidean_distances(&PointCloud::from_rows(&rows).unwrap())
    }

    fn random_dist(n: usize, seed: u64) -> DistanceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n * 2).map(|_| rng.gen_range(0.0..1.0)).collect();
        euclidean_distances(&PointCloud::new(n, 2, coords).unwrap())
    }

    #[test]
    fn two_points() {
        let d = cloud(&[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(rips_h0(&d).sorted_pairs(), vec![(0.0, 1.0)]);
        assert_eq!(reduction_oracle(&d, 0).unwrap()[0].sorted_pairs(), vec![(0.0, 1.0)]);
    }

    #[test]
    fn equilateral_triangle() {
        let d = DistanceMatrix::from_fn(3, |_, _| 1.0);
        assert_eq!(rips_h0(&d).sorted_pairs(), vec![(0.0, 1.0), (0.0, 1.0)]);
        assert!(rips_h1(&d).is_empty());
        assert!(reduction_oracle(&d, 1).unwrap()[1].is_empty());
    }

    #[test]
    fn unit_square() {
        let d = cloud(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        let h1 = rips_h1(&d);
        assert_eq!(h1.len(), 1);
        assert_eq!(h1.points[0].birth, 1.0);
        assert!((h1.points[0].death - 2f64.sqrt()).abs() < 1e-15);
        let all = rips_diagrams(&d, 1).unwrap();
        assert_eq!(all[0].sorted_pairs(), vec![(0.0, 1.0); 3]);
        assert_eq!(all[1], h1);
        assert_eq!(reduction_oracle(&d, 1).unwrap()[1].sorted_pairs(), h1.sorted_pairs());
    }

    #[test]
    fn octagon_has_one_cycle() {
        let rows: Vec<[f64; 2]> = (0..8)
            .map(|k| {
                let t = k as f64 * std::f64::consts::PI / 4.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let d = cloud(&rows);
        let h1 = rips_h1(&d);
        assert_eq!(h1.len(), 1);
        let side = 2.0 * (std::f64::consts::PI / 8.0).sin();
        assert!((h1.points[0].birth - side).abs() < 1e-12);
        assert_eq!(reduction_oracle(&d, 1).unwrap()[1].sorted_pairs(), h1.sorted_pairs());
    }

    #[test]
    fn max_degree_zero_skips_h1() {
        let d = random_dist(6, 1);
        assert_eq!(rips_diagrams(&d, 0).unwrap().len(), 1);
        assert!(rips_diagrams(&d, 2).is_err());
    }

    #[test]
    fn wrapper_agrees_with_separate_calls() {
        let d = random_dist(9, 2);
        let all = rips_diagrams(&d, 1).unwrap();
        assert_eq!(all[0], rips_h0(&d));
        assert_eq!(all[1], rips_h1(&d));
    }

    #[test]
    fn oracle_size_cap() {
        assert!(reduction_oracle(&random_dist(11, 3), 1).is_err());
    }

    #[test]
    fn matches_oracle_on_random_clouds() {
        for seed in 0..40 {
            let n = 3 + (seed as usize % 6);
            let d = random_dist(n, 100 + seed);
            let fast = rips_diagrams(&d, 1).unwrap();
            let slow = reduction_oracle(&d, 1).unwrap();
            for k in 0..2 {
                assert_eq!(fast[k].sorted_pairs(), slow[k].sorted_pairs(), "seed {seed} degree {k}");
            }
        }
    }

    #[test]
    fn matches_oracle_with_ties() {
        // integer grid coordinates create many equal lengths
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let rows: Vec<[f64; 2]> =
                (0..8).map(|_| [rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64]).collect();
            let d = cloud(&rows);
            let fast = rips_diagrams(&d, 1).unwrap();
            let slow = reduction_oracle(&d, 1).unwrap();
            assert_eq!(fast[0].sorted_pairs(), slow[0].sorted_pairs());
            assert_eq!(fast[1].sorted_pairs(), slow[1].sorted_pairs());
        }
    }

    fn prim_mst_weights(d: &DistanceMatrix) -> Vec<f64> {
        let n = d.len();
        let mut in_tree = vec![false; n];
        let mut best = vec![f64::INFINITY; n];
        best[0] = 0.0;
        let mut weights = Vec::new();
        for _ in 0..n {
            let u = (0..n).filter(|&v| !in_tree[v]).min_by(|&a, &b| best[a].total_cmp(&best[b])).unwrap();
            in_tree[u] = true;
            if u != 0 {
                weights.push(best[u]);
            }
            for v in 0..n {
                if !in_tree[v] && d.get(u, v) < best[v] {
                    best[v] = d.get(u, v);
                }
            }
        }
        weights.sort_by(f64::total_cmp);
        weights
    }

    proptest! {
        #[test]
        fn h0_deaths_are_mst_weights(seed in 0u64..500, n in 2usize..20) {
            let d = random_dist(n, seed);
            let mut deaths: Vec<f64> = rips_h0(&d).points.iter().map(|p| p.death).collect();
            deaths.sort_by(f64::total_cmp);
            prop_assert_eq!(deaths, prim_mst_weights(&d));
        }

        #[test]
        fn provenance_edges_realize_coordinates(seed in 0u64..500, n in 2usize..14) {
            let d = random_dist(n, seed);
            for diagram in rips_diagrams(&d, 1).unwrap() {
                for p in &diagram.points {
                    prop_assert!(p.death > p.birth);
                    prop_assert_eq!(d.get(p.death_edge.0, p.death_edge.1), p.death);
                    match p.birth_edge {
                        Some((i, j)) => prop_assert_eq!(d.get(i, j), p.birth),
                        None => prop_assert!(p.degree == 0 && p.birth == 0.0),
                    }
                }
            }
        }

        #[test]
        fn scale_equivariance(seed in 0u64..200, c in 0.1f64..10.0) {
            let d = random_dist(9, seed);
            let a = rips_diagrams(&d, 1).unwrap();
            let b = rips_diagrams(&d.scaled(c), 1).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.len(), y.len());
                for (p, q) in x.points.iter().zip(&y.points) {
                    prop_assert_eq!(p.death_edge, q.death_edge);
                    prop_assert_eq!(p.birth_edge, q.birth_edge);
                    prop_assert!((p.death * c - q.death).abs() <= 1e-12 * q.death.max(1.0));
                    prop_assert!((p.birth * c - q.birth).abs() <= 1e-12 * q.death.max(1.0));
                }
            }
        }

        #[test]
        fn permutation_invariance(seed in 0u64..200) {
            let n = 9;
            let d = random_dist(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let permuted = DistanceMatrix::from_fn(n, |i, j| d.get(perm[i], perm[j]));
            let a = rips_diagrams(&d, 1).unwrap();
            let b = rips_diagrams(&permuted, 1).unwrap();
            for k in 0..2 {
                prop_assert_eq!(a[k].sorted_pairs(), b[k].sorted_pairs());
            }
        }
    }
}
