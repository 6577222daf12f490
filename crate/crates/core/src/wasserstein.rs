//! Optimal partial matching between persistence diagrams.
//!
//! `W_p^p(A, B)` is solved exactly as a balanced assignment problem on the
//! `(|A| + |B|)`-square matrix where each diagram is padded with diagonal
//! slots. The plane carries the Euclidean ground metric.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, DipoleError, Result};
use crate::persistence::{PersistenceDiagram, PersistencePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Point(usize),
    Diagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramMatching {
    /// `(slot in A, slot in B)`; never `(Diagonal, Diagonal)`.
    pub pairs: Vec<(Slot, Slot)>,
    /// `sum` of ground costs raised to `p`.
    pub cost: f64,
    pub p: f64,
}

impl DiagramMatching {
    /// `W_p`, the `p`-th root of the cost.
    pub fn distance(&self) -> f64 {
        self.cost.powf(1.0 / self.p)
    }
}

/// Euclidean distance from `(birth, death)` to the diagonal.
pub fn diagonal_gap(point: &PersistencePoint) -> f64 {
    (point.death - point.birth) / std::f64::consts::SQRT_2
}

/// Closest diagonal point to `point`.
pub fn diagonal_projection(point: &PersistencePoint) -> [f64; 2] {
    let mid = 0.5 * (point.birth + point.death);
    [mid, mid]
}

fn pow_dist2(d2: f64, p: f64) -> f64 {
    if p == 2.0 {
        d2
    } else {
        d2.powf(0.5 * p)
    }
}

fn point_cost(a: &PersistencePoint, b: &PersistencePoint, p: f64) -> f64 {
    let (db, dd) = (a.birth - b.birth, a.death - b.death);
    pow_dist2(db * db + dd * dd, p)
}

fn diagonal_cost(a: &PersistencePoint, p: f64) -> f64 {
    let gap = a.death - a.birth;
    pow_dist2(0.5 * gap * gap, p)
}

fn check_order(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return param_err(format!("Wasserstein order must be a finite p >= 1, got {p}"));
    }
    Ok(())
}

/// Minimum-cost perfect assignment on a dense square matrix (shortest
/// augmenting path with potentials). `result[row] = column`. Ties resolve
/// toward lower column indices.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let at = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let row0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = at(row0, col) - u[row0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    assignment
}

/// Recomputes the cost of a matching directly from the diagrams.
pub fn matching_cost(a: &PersistenceDiagram, b: &PersistenceDiagram, pairs: &[(Slot, Slot)], p: f64) -> Result<f64> {
    let mut seen_a = vec![false; a.len()];
    let mut seen_b = vec![false; b.len()];
    let mark = |seen: &mut [bool], k: usize, side: &str| -> Result<()> {
        match seen.get_mut(k) {
            Some(flag) if !*flag => {
                *flag = true;
                Ok(())
            }
            Some(_) => Err(DipoleError::Consistency(format!("point {k} of {side} matched twice"))),
            None => Err(DipoleError::Consistency(format!("point {k} of {side} does not exist"))),
        }
    };
    let mut total = 0.0;
    for &(x, y) in pairs {
        total += match (x, y) {
            (Slot::Point(i), Slot::Point(j)) => {
                mark(&mut seen_a, i, "A")?;
                mark(&mut seen_b, j, "B")?;
                point_cost(&a.points[i], &b.points[j], p)
            }
            (Slot::Point(i), Slot::Diagonal) => {
                mark(&mut seen_a, i, "A")?;
                diagonal_cost(&a.points[i], p)
            }
            (Slot::Diagonal, Slot::Point(j)) => {
                mark(&mut seen_b, j, "B")?;
                diagonal_cost(&b.points[j], p)
            }
            (Slot::Diagonal, Slot::Diagonal) => {
                return Err(DipoleError::Consistency("diagonal matched to diagonal".into()));
            }
        };
    }
    if seen_a.iter().chain(&seen_b).any(|s| !s) {
        return Err(DipoleError::Consistency("matching leaves points unassigned".into()));
    }
    Ok(total)
}

/// Optimal partial matching and its cost `W_p^p(A, B)`.
pub fn wasserstein_pp(a: &PersistenceDiagram, b: &PersistenceDiagram, p: f64) -> Result<DiagramMatching> {
    check_order(p)?;
    if a.degree != b.degree {
        return param_err(format!("cannot match degree {} against degree {}", a.degree, b.degree));
    }
    let (na, nb) = (a.len(), b.len());
    let size = na + nb;
    if size == 0 {
        return Ok(DiagramMatching { pairs: Vec::new(), cost: 0.0, p });
    }
    // rows: A points then diagonal slots; columns: B points then diagonal slots
    let mut cost = vec![0.0; size * size];
    for r in 0..size {
        for c in 0..size {
            cost[r * size + c] = match (r < na, c < nb) {
                (true, true) => point_cost(&a.points[r], &b.points[c], p),
                (true, false) => diagonal_cost(&a.points[r], p),
                (false, true) => diagonal_cost(&b.points[c], p),
                (false, false) => 0.0,
            };
        }
    }
    let assignment = hungarian(&cost, size);
    let pairs: Vec<(Slot, Slot)> = assignment
        .iter()
        .enumerate()
        .filter_map(|(r, &c)| match (r < na, c < nb) {
            (true, true) => Some((Slot::Point(r), Slot::Point(c))),
            (true, false) => Some((Slot::Point(r), Slot::Diagonal)),
            (false, true) => Some((Slot::Diagonal, Slot::Point(c))),
            (false, false) => None,
        })
        .collect();
    let cost = matching_cost(a, b, &pairs, p)?;
    Ok(DiagramMatching { pairs, cost, p })
}

/// Largest diagram size accepted by [`matching_oracle`].
pub const ORACLE_MAX_POINTS: usize = 5;

/// Exhaustive minimum over all partial matchings.
pub fn matching_oracle(a: &PersistenceDiagram, b: &PersistenceDiagram, p: f64) -> Result<f64> {
    check_order(p)?;
    if a.len() > ORACLE_MAX_POINTS || b.len() > ORACLE_MAX_POINTS {
        return param_err(format!(
            "matching oracle accepts at most {ORACLE_MAX_POINTS} points per diagram, got {} and {}",
            a.len(),
            b.len()
        ));
    }
    fn search(a: &PersistenceDiagram, b: &PersistenceDiagram, p: f64, i: usize, used: &mut [bool]) -> f64 {
        if i == a.len() {
            return b.points.iter().zip(used.iter()).filter(|(_, &u)| !u).map(|(q, _)| diagonal_cost(q, p)).sum();
        }
        let mut best = diagonal_cost(&a.points[i], p) + search(a, b, p, i + 1, used);
        for j in 0..b.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            let c = point_cost(&a.points[i], &b.points[j], p) + search(a, b, p, i + 1, used);
            used[j] = false;
            best = best.min(c);
        }
        best
    }
    Ok(search(a, b, p, 0, &mut vec![false; b.len()]))
}

/// Gradient of the matching cost with respect to each point of `var`,
/// holding `target` and the matching fixed. Entry `k` is
/// `[d/d birth_k, d/d death_k]`.
pub fn matching_subgradient(
    target: &PersistenceDiagram,
    var: &PersistenceDiagram,
    matching: &DiagramMatching,
) -> Result<Vec<[f64; 2]>> {
    let p = matching.p;
    let recomputed = matching_cost(target, var, &matching.pairs, p)?;
    if (recomputed - matching.cost).abs() > 1e-9 * matching.cost.max(1.0) {
        return Err(DipoleError::Consistency(format!(
            "stale matching: stored cost {} but diagrams give {recomputed}",
            matching.cost
        )));
    }
    let mut grad = vec![[0.0; 2]; var.len()];
    for &(x, y) in &matching.pairs {
        let Slot::Point(j) = y else { continue };
        let q = &var.points[j];
        let anchor = match x {
            Slot::Point(i) => [target.points[i].birth, target.points[i].death],
            Slot::Diagonal => diagonal_projection(q),
        };
        let delta = [q.birth - anchor[0], q.death - anchor[1]];
        // d/dq |q - anchor|^p; the diagonal anchor moves orthogonally to delta
        let scale = if p == 2.0 {
            2.0
        } else {
            let r2 = delta[0] * delta[0] + delta[1] * delta[1];
            if r2 == 0.0 {
                0.0
            } else {
                p * r2.powf(0.5 * p - 1.0)
            }
        };
        grad[j] = [scale * delta[0], scale * delta[1]];
    }
    Ok(grad)
}
