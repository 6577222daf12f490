//! Loss and stochastic subgradient descent.
//!
//! The loss on an embedding `a` against a fixed target metric `d_H` is
//!
//! ```text
//! (1 - alpha)/2 * mean_S sum_{q <= m} W_p^p(D_q(S, d_H), D_q(S, a))
//!     + alpha * sum_{(i,j) in P} (d_H(i, j) - |a_i - a_j|)^2
//! ```
//!
//! where `S` ranges over size-`k` subsets (sampled `batch_size` at a time)
//! and `P` is the symmetrized nearest-neighbor pair set. Each step samples
//! fresh subsets, moves against the combined subgradient with step size
//! `lr * C / (C + step)`, and mean-centers the result. Both terms are
//! translation invariant, so centering commutes with the step.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::geometry::{knn_graph, radius_graph, restrict, DistanceMatrix, NeighborGraph};
use crate::isomap::Embedding;
use crate::persistence::{rips_diagrams, PersistenceDiagram};
use crate::wasserstein::{matching_subgradient, wasserstein_pp};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepSchedule {
    /// `lr * constant / (constant + step)`.
    Annealed { constant: f64 },
    /// `lr / (step + 1)`.
    Harmonic,
}

impl StepSchedule {
    pub fn step_size(&self, lr: f64, step: usize) -> f64 {
        match *self {
            StepSchedule::Annealed { constant } => lr * constant / (constant + step as f64),
            StepSchedule::Harmonic => lr / (step as f64 + 1.0),
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Annealed { constant: 1000.0 }
    }
}

/// Explicit term weights replacing the `(1 - alpha)/2` and `alpha` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub topological: f64,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DipoleConfig {
    pub alpha: f64,
    /// Subset size.
    pub k: usize,
    /// Subsets sampled per step.
    pub batch_size: usize,
    /// Wasserstein order.
    pub p: f64,
    /// Highest homological degree in the topological term.
    pub max_degree: usize,
    pub lr: f64,
    pub steps: usize,
    pub schedule: StepSchedule,
    /// Neighbor count defining the regularizer's pair set.
    pub m2: usize,
    /// When set, the pair set is every pair within this target distance
    /// instead of the `m2`-nearest neighbors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<LossWeights>,
    pub seed: u64,
}

impl Default for DipoleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            k: 64,
            batch_size: 1,
            p: 2.0,
            max_degree: 1,
            lr: 1.0,
            steps: 2500,
            schedule: StepSchedule::default(),
            m2: 3,
            pair_radius: None,
            weights: None,
            seed: 0,
        }
    }
}

impl DipoleConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return param_err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.k < 2 || self.k > n {
            return param_err(format!("subset size k must lie in 2..={n}, got {}", self.k));
        }
        if self.batch_size == 0 {
            return param_err("batch size must be at least 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return param_err(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return param_err(format!("Wasserstein order must be >= 1, got {}", self.p));
        }
        if self.max_degree > 1 {
            return param_err(format!("max degree must be 0 or 1, got {}", self.max_degree));
        }
        if let StepSchedule::Annealed { constant } = self.schedule {
            if !(constant > 0.0) {
                return param_err(format!("annealing constant must be positive, got {constant}"));
            }
        }
        match self.pair_radius {
            Some(r) if !(r > 0.0) => return param_err(format!("pair radius must be positive, got {r}")),
            None if self.m2 < 1 || self.m2 + 1 > n => {
                return param_err(format!("m2 must lie in 1..={}, got {}", n.saturating_sub(1), self.m2));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.weights.unwrap_or(LossWeights { topological: 0.5 * (1.0 - self.alpha), metric: self.alpha })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean over subsets of the summed per-degree `W_p^p`.
    pub topological: f64,
    /// Local metric regularizer.
    pub metric: f64,
    /// Per-degree split of `topological`.
    pub per_degree: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub embedding: Embedding,
    pub step: usize,
    pub rng: ChaCha8Rng,
    /// Sampled loss at the start of each step.
    pub trace: Vec<LossBreakdown>,
}

impl OptimizerState {
    /// Mean-centers `initial` and seeds the subset sampler.
    pub fn new(initial: Embedding, seed: u64) -> Self {
        Self { embedding: initial.mean_centered(), step: 0, rng: ChaCha8Rng::seed_from_u64(seed), trace: Vec::new() }
    }
}

/// Symmetrized `m2`-nearest-neighbor pairs carrying target distances.
pub fn lmr_pairs(dist_target: &DistanceMatrix, m2: usize) -> Result<NeighborGraph> {
    knn_graph(dist_target, m2)
}

/// Every pair within `radius` in the target metric.
pub fn lmr_pairs_within(dist_target: &DistanceMatrix, radius: f64) -> Result<NeighborGraph> {
    radius_graph(dist_target, radius)
}

fn pairs_for(dist_target: &DistanceMatrix, cfg: &DipoleConfig) -> Result<NeighborGraph> {
    match cfg.pair_radius {
        Some(r) => lmr_pairs_within(dist_target, r),
        None => lmr_pairs(dist_target, cfg.m2),
    }
}

/// Adds `scale * d|a_i - a_j| / d(a_i, a_j)` into `grad`. Coincident
/// points contribute nothing.
#[inline]
fn push_distance_grad(grad: &mut [f64], emb: &Embedding, i: usize, j: usize, scale: f64) {
    let dim = emb.dim();
    let len = emb.distance(i, j);
    if len == 0.0 || scale == 0.0 {
        return;
    }
    let (pi, pj) = (emb.point(i), emb.point(j));
    for axis in 0..dim {
        let g = scale * (pi[axis] - pj[axis]) / len;
        grad[i * dim + axis] += g;
        grad[j * dim + axis] -= g;
    }
}

/// `sum (d_H - |a_i - a_j|)^2` over the pair set, with its gradient.
pub fn lmr_loss_grad(embedding: &Embedding, pairs: &NeighborGraph) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; embedding.coords().len()];
    let mut loss = 0.0;
    for e in pairs.edges() {
        let gap = e.weight - embedding.distance(e.i, e.j);
        loss += gap * gap;
        push_distance_grad(&mut grad, embedding, e.i, e.j, -2.0 * gap);
    }
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopologicalTerm {
    /// Mean over subsets of the per-degree sum.
    pub loss: f64,
    pub per_degree: Vec<f64>,
    pub grad: Vec<f64>,
}

struct SubsetTerm {
    per_degree: Vec<f64>,
    /// Gradient with respect to the subset's points, `k * dim`.
    grad: Vec<f64>,
}

fn subset_term(
    embedding: &Embedding,
    dist_target: &DistanceMatrix,
    subset: &[usize],
    p: f64,
    max_degree: usize,
) -> Result<SubsetTerm> {
    let target = rips_diagrams(&restrict(dist_target, subset)?, max_degree)?;
    let local: Vec<f64> = subset.iter().flat_map(|&i| embedding.point(i).iter().copied()).collect();
    let local = Embedding::new(subset.len(), embedding.dim(), local)?;
    let current = rips_diagrams(&local.distances(), max_degree)?;

    let mut per_degree = Vec::with_capacity(max_degree + 1);
    let mut grad = vec![0.0; local.coords().len()];
    for (want, have) in target.iter().zip(&current) {
        let matching = wasserstein_pp(want, have, p)?;
        per_degree.push(matching.cost);
        let point_grads = matching_subgradient(want, have, &matching)?;
        chain_to_coordinates(&mut grad, &local, have, &point_grads);
    }
    Ok(SubsetTerm { per_degree, grad })
}

fn chain_to_coordinates(grad: &mut [f64], local: &Embedding, diagram: &PersistenceDiagram, point_grads: &[[f64; 2]]) {
    for (point, g) in diagram.points.iter().zip(point_grads) {
        if let Some((i, j)) = point.birth_edge {
            push_distance_grad(grad, local, i, j, g[0]);
        }
        let (i, j) = point.death_edge;
        push_distance_grad(grad, local, i, j, g[1]);
    }
}

/// Mean over `subsets` of the summed per-degree `W_p^p` between target and
/// embedded diagrams, with its subgradient scattered to global indices.
pub fn topo_loss_grad(
    embedding: &Embedding,
    dist_target: &DistanceMatrix,
    subsets: &[Vec<usize>],
    cfg: &DipoleConfig,
) -> Result<TopologicalTerm> {
    let dim = embedding.dim();
    let mut per_degree = vec![0.0; cfg.max_degree + 1];
    let mut grad = vec![0.0; embedding.coords().len()];
    if subsets.is_empty() {
        return Ok(TopologicalTerm { loss: 0.0, per_degree, grad });
    }
    let terms: Vec<Result<SubsetTerm>> =
        subsets.par_iter().map(|s| subset_term(embedding, dist_target, s, cfg.p, cfg.max_degree)).collect();
    // accumulate in subset order so results do not depend on scheduling
    let scale = 1.0 / subsets.len() as f64;
    for (subset, term) in subsets.iter().zip(terms) {
        let term = term?;
        for (total, c) in per_degree.iter_mut().zip(&term.per_degree) {
            *total += scale * c;
        }
        for (local, &global) in subset.iter().enumerate() {
            for axis in 0..dim {
                grad[global * dim + axis] += scale * term.grad[local * dim + axis];
            }
        }
    }
    Ok(TopologicalTerm { loss: per_degree.iter().sum(), per_degree, grad })
}

/// Loss and gradient on an explicit subset collection.
pub fn dipole_loss_grad(
    embedding: &Embedding,
    dist_target: &DistanceMatrix,
    pairs: &NeighborGraph,
    subsets: &[Vec<usize>],
    cfg: &DipoleConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let w = cfg.loss_weights();
    let (metric, metric_grad) = lmr_loss_grad(embedding, pairs);
    let topo = if w.topological != 0.0 {
        topo_loss_grad(embedding, dist_target, subsets, cfg)?
    } else {
        TopologicalTerm { loss: 0.0, per_degree: vec![0.0; cfg.max_degree + 1], grad: vec![0.0; metric_grad.len()] }
    };
    let grad = topo.grad.iter().zip(&metric_grad).map(|(t, m)| w.topological * t + w.metric * m).collect();
    let breakdown = LossBreakdown {
        total: w.topological * topo.loss + w.metric * metric,
        topological: topo.loss,
        metric,
        per_degree: topo.per_degree,
    };
    Ok((breakdown, grad))
}

/// Evaluates the loss on an explicit subset collection.
pub fn dipole_loss(
    embedding: &Embedding,
    dist_target: &DistanceMatrix,
    pairs: &NeighborGraph,
    subsets: &[Vec<usize>],
    cfg: &DipoleConfig,
) -> Result<LossBreakdown> {
    Ok(dipole_loss_grad(embedding, dist_target, pairs, subsets, cfg)?.0)
}

/// `count` independent uniform size-`k` subsets of `0..n`, each sorted.
pub fn sample_subsets(rng: &mut ChaCha8Rng, n: usize, k: usize, count: usize) -> Vec<Vec<usize>> {
    (0..count)
        .map(|_| {
            let mut s = index::sample(rng, n, k).into_vec();
            s.sort_unstable();
            s
        })
        .collect()
}

/// One stochastic subgradient step.
pub fn sgd_step(
    mut state: OptimizerState,
    dist_target: &DistanceMatrix,
    pairs: &NeighborGraph,
    cfg: &DipoleConfig,
) -> Result<OptimizerState> {
    let n = state.embedding.len();
    let subsets = if cfg.loss_weights().topological != 0.0 {
        sample_subsets(&mut state.rng, n, cfg.k, cfg.batch_size)
    } else {
        Vec::new()
    };
    let (breakdown, grad) = dipole_loss_grad(&state.embedding, dist_target, pairs, &subsets, cfg)?;
    let eta = cfg.schedule.step_size(cfg.lr, state.step);
    for (x, g) in state.embedding.coords_mut().iter_mut().zip(&grad) {
        *x -= eta * g;
    }
    state.embedding.mean_center();
    state.step += 1;
    state.trace.push(breakdown);
    Ok(state)
}

/// Runs `cfg.steps` descent steps from `initial`.
pub fn run(initial: Embedding, dist_target: &DistanceMatrix, cfg: &DipoleConfig) -> Result<OptimizerState> {
    if initial.len() != dist_target.len() {
        return param_err(format!(
            "embedding has {} points but the target metric has {}",
            initial.len(),
            dist_target.len()
        ));
    }
    cfg.validate(initial.len())?;
    let pairs = pairs_for(dist_target, cfg)?;
    let mut state = OptimizerState::new(initial, cfg.seed);
    state.trace.reserve(cfg.steps);
    for _ in 0..cfg.steps {
        state = sgd_step(state, dist_target, &pairs, cfg)?;
    }
    Ok(state)
}
