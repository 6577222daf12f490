//! Classical multidimensional scaling on a geodesic distance matrix.
//!
//! The Gram matrix is double-centered and its leading eigenpairs are found
//! with a fully reorthogonalized Krylov basis and a Rayleigh-Ritz
//! projection. The basis grows until every requested pair meets the
//! residual bound `|Bv - lv| <= 1e-8 |B|_F`; at worst it spans the whole
//! space and the projection is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, DipoleError, Result};
use crate::geometry::{euclidean, DistanceMatrix, PointCloud};

/// `n` points in `R^dim`; the optimization variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
}

impl Embedding {
    pub fn new(n: usize, dim: usize, coords: Vec<f64>) -> Result<Self> {
        let cloud = PointCloud::new(n, dim, coords)?;
        Ok(Self::from(cloud))
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

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    /// Pullback metric: Euclidean distances between embedded points.
    pub fn distances(&self) -> DistanceMatrix {
        DistanceMatrix::from_fn(self.n, |i, j| self.distance(i, j))
    }

    pub fn subset_distances(&self, subset: &[usize]) -> DistanceMatrix {
        DistanceMatrix::from_fn(subset.len(), |a, b| self.distance(subset[a], subset[b]))
    }

    pub fn axis_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim];
        for row in self.coords.chunks_exact(self.dim) {
            for (s, x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        sums
    }

    pub fn mean_center(&mut self) {
        let n = self.n as f64;
        let means: Vec<f64> = self.axis_sums().into_iter().map(|s| s / n).collect();
        for row in self.coords.chunks_exact_mut(self.dim) {
            for (x, m) in row.iter_mut().zip(&means) {
                *x -= m;
            }
        }
    }

    pub fn mean_centered(mut self) -> Self {
        self.mean_center();
        self
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for row in out.coords.chunks_exact_mut(self.dim) {
            for (x, s) in row.iter_mut().zip(shift) {
                *x += s;
            }
        }
        out
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud::new(self.n, self.dim, self.coords.clone()).expect("embedding is a valid cloud")
    }
}

impl From<PointCloud> for Embedding {
    fn from(cloud: PointCloud) -> Self {
        Self { n: cloud.len(), dim: cloud.dim(), coords: cloud.coords().to_vec() }
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.n).map(|row| dot(row, v)).collect()
    }
}

/// `B = -1/2 C D2 C` with `C = I - J/n` and `D2` the squared distances.
pub fn double_center(dist: &DistanceMatrix) -> SymmetricMatrix {
    let n = dist.len();
    let sq = |i: usize, j: usize| {
        let d = dist.get(i, j);
        d * d
    };
    let row_means: Vec<f64> = (0..n).map(|i| (0..n).map(|j| sq(i, j)).sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    SymmetricMatrix::from_fn(n, |i, j| -0.5 * (sq(i, j) - row_means[i] - row_means[j] + grand))
}

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// Descending.
    pub values: Vec<f64>,
    /// Unit-norm, mutually orthogonal; `vectors[k]` pairs with `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

const RESIDUAL_TOL: f64 = 1e-8;

/// The `d` algebraically largest eigenpairs of a symmetric matrix.
pub fn top_eigenpairs(b: &SymmetricMatrix, d: usize) -> Result<Eigenpairs> {
    let n = b.len();
    if d == 0 || d > n {
        return param_err(format!("requested {d} eigenpairs of a {n}x{n} matrix"));
    }
    let norm = b.frobenius_norm();
    if norm == 0.0 {
        let vectors = (0..d).map(|k| unit(n, k)).collect();
        return Ok(Eigenpairs { values: vec![0.0; d], vectors });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x15_0A_A9);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut target = n.min((2 * d + 20).max(32));
    let mut next = random_unit(n, &mut rng);

    loop {
        while basis.len() < target {
            let q = match orthonormalize(std::mem::take(&mut next), &basis) {
                Some(q) => q,
                None => {
                    // Krylov space is invariant; restart from a fresh direction.
                    match (0..8).find_map(|_| orthonormalize(random_unit(n, &mut rng), &basis)) {
                        Some(q) => q,
                        None => break,
                    }
                }
            };
            let bq = b.mul_vec(&q);
            next = bq.clone();
            basis.push(q);
            images.push(bq);
        }

        let m = basis.len();
        let projected = SymmetricMatrix::from_fn(m, |i, j| dot(&basis[i], &images[j]));
        let (ritz_values, ritz_coeffs) = jacobi_eigen(&projected);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| ritz_values[y].total_cmp(&ritz_values[x]));

        let mut values = Vec::with_capacity(d);
        let mut vectors = Vec::with_capacity(d);
        let mut worst: f64 = 0.0;
        for &k in order.iter().take(d) {
            let theta = ritz_values[k];
            let coeff: Vec<f64> = (0..m).map(|i| ritz_coeffs[i * m + k]).collect();
            let mut v = combine(&basis, &coeff);
            let bv = combine(&images, &coeff);
            let scale = dot(&v, &v).sqrt();
            let residual = bv.iter().zip(&v).map(|(x, y)| (x - theta * y).powi(2)).sum::<f64>().sqrt() / scale;
            worst = worst.max(residual);
            v.iter_mut().for_each(|x| *x /= scale);
            fix_sign(&mut v);
            values.push(theta);
            vectors.push(v);
        }

        let complete = m >= n || target > m;
        let tol = if complete { RESIDUAL_TOL } else { 0.1 * RESIDUAL_TOL };
        if worst <= tol * norm {
            return Ok(Eigenpairs { values, vectors });
        }
        if complete {
            return Err(DipoleError::Numerical(format!(
                "eigensolver residual {worst:.3e} exceeds {:.3e} with a full basis",
                RESIDUAL_TOL * norm
            )));
        }
        target = n.min(target * 2);
    }
}

/// Isomap coordinates: column `j` is `sqrt(max(l_j, 0)) v_j`, mean-centered.
pub fn isomap_embed(dist: &DistanceMatrix, d: usize) -> Result<Embedding> {
    let n = dist.len();
    if d == 0 || d + 1 > n {
        return param_err(format!("target dimension must lie in 1..={}, got {d}", n.saturating_sub(1)));
    }
    let gram = double_center(dist);
    let pairs = top_eigenpairs(&gram, d)?;
    let mut coords = vec![0.0; n * d];
    for (axis, (value, vector)) in pairs.values.iter().zip(&pairs.vectors).enumerate() {
        let scale = value.max(0.0).sqrt();
        for (i, v) in vector.iter().enumerate() {
            coords[i * d + axis] = scale * v;
        }
    }
    Ok(Embedding::new(n, d, coords)?.mean_centered())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Two passes of Gram-Schmidt against `basis`; `None` if `v` lies in its span.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let original = dot(&v, &v).sqrt();
    if original == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    let norm = dot(&v, &v).sqrt();
    if norm <= 1e-10 * original {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn combine(vectors: &[Vec<f64>], coeff: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, &c) in vectors.iter().zip(coeff) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// Largest-magnitude entry made positive (first index on ties).
fn fix_sign(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Cyclic Jacobi on a small dense symmetric matrix. Returns eigenvalues and
/// the row-major eigenvector matrix (eigenvectors in columns).
fn jacobi_eigen(a: &SymmetricMatrix) -> (Vec<f64>, Vec<f64>) {
    let m = a.len();
    let mut a = a.data.clone();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let (akp, akq) = (a[k * m + p], a[k * m + q]);
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let (apk, aqk) = (a[p * m + k], a[q * m + k]);
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let (vkp, vkq) = (v[k * m + p], v[k * m + q]);
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i * m + i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::euclidean_distances;

    fn residual(b: &SymmetricMatrix, value: f64, v: &[f64]) -> f64 {
        let bv = b.mul_vec(v);
        bv.iter().zip(v).map(|(x, y)| (x - value * y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn two_point_double_center() {
        let d = DistanceMatrix::from_fn(2, |_, _| 2.0);
        let b = double_center(&d);
        assert_eq!(b.data, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn zero_distances_center_to_zero() {
        let d = DistanceMatrix::from_fn(4, |_, _| 0.0);
        assert!(double_center(&d).data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn double_centered_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DistanceMatrix::from_fn(9, |_, _| rng.gen_range(0.1..5.0));
        let b = double_center(&d);
        for i in 0..9 {
            assert!(b.row(i).iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn identity_eigenvalues() {
        let b = SymmetricMatrix::diagonal(&[1.0; 5]);
        let e = top_eigenpairs(&b, 2).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
        assert!(dot(&e.vectors[0], &e.vectors[1]).abs() < 1e-12);
    }

    #[test]
    fn diagonal_eigenvectors_are_axes() {
        let b = SymmetricMatrix::diagonal(&[3.0, 2.0, 1.0]);
        let e = top_eigenpairs(&b, 2).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 2.0).abs() < 1e-12);
        assert!((e.vectors[0][0] - 1.0).abs() < 1e-12);
        assert!((e.vectors[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b = SymmetricMatrix::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
        let e = top_eigenpairs(&b, 4).unwrap();
        let norm = b.frobenius_norm();
        for (value, v) in e.values.iter().zip(&e.vectors) {
            assert!(residual(&b, *value, v) <= 1e-8 * norm);
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        // algebraically largest: compare against the full spectrum
        let (all, _) = jacobi_eigen(&b);
        let mut all = all;
        all.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in e.values.iter().zip(&all) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn large_negative_spectrum_does_not_hide_top_pairs() {
        let mut values: Vec<f64> = (0..60).map(|i| -100.0 + i as f64).collect();
        values.push(5.0);
        values.push(4.0);
        let b = SymmetricMatrix::diagonal(&values);
        let e = top_eigenpairs(&b, 2).unwrap();
        assert!((e.values[0] - 5.0).abs() < 1e-9 && (e.values[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn two_points_embed_symmetric() {
        let d = DistanceMatrix::from_fn(2, |_, _| 2.0);
        let emb = isomap_embed(&d, 1).unwrap();
        let mut xs = vec![emb.point(0)[0], emb.point(1)[0]];
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 1.0).abs() < 1e-12 && (xs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_recovered() {
        let xs = [0.0f64, 1.0, 3.0];
        let d = DistanceMatrix::from_fn(3, |i, j| (xs[i] - xs[j]).abs());
        let emb = isomap_embed(&d, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((emb.distance(i, j) - d.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn realizable_planar_metric_recovered_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let coords: Vec<f64> = (0..60).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cloud = PointCloud::new(30, 2, coords).unwrap();
        let d = euclidean_distances(&cloud);
        let emb = isomap_embed(&d, 2).unwrap();
        for s in emb.axis_sums() {
            assert!(s.abs() < 1e-8);
        }
        for i in 0..30 {
            for j in i + 1..30 {
                let rel = (emb.distance(i, j) - d.get(i, j)).abs() / d.get(i, j);
                assert!(rel < 1e-6, "pair ({i},{j}) rel err {rel}");
            }
        }
    }

    #[test]
    fn rejects_bad_dimension() {
        let d = DistanceMatrix::from_fn(3, |_, _| 1.0);
        assert!(isomap_embed(&d, 0).is_err());
        assert!(isomap_embed(&d, 3).is_err());
    }

    #[test]
    fn deterministic_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = DistanceMatrix::from_fn(25, |_, _| rng.gen_range(1.0..2.0));
        assert_eq!(isomap_embed(&d, 2).unwrap(), isomap_embed(&d, 2).unwrap());
    }
}
