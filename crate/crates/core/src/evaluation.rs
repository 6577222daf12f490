//! Quality scores comparing a target metric `d_H` with an embedding's
//! pullback metric `d_L`. Lower is better for every score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, DipoleError, Result};
use crate::geometry::{farthest_point_sample, restrict, DistanceMatrix};
use crate::persistence::rips_diagrams;
use crate::wasserstein::wasserstein_pp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationParams {
    pub ijk_samples: usize,
    pub ijk_seed: u64,
    pub fps_size: usize,
    pub fps_seed: u64,
}

impl Default for EvaluationParams {
    fn default() -> Self {
        Self { ijk_samples: 10_000, ijk_seed: 0, fps_size: 256, fps_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ijk_score: f64,
    pub residual_variance: f64,
    pub ph0_score: f64,
    pub ph1_score: f64,
    pub parameters: EvaluationParams,
}

fn same_size(dh: &DistanceMatrix, dl: &DistanceMatrix) -> Result<()> {
    if dh.len() != dl.len() {
        return param_err(format!("metric sizes differ: {} vs {}", dh.len(), dl.len()));
    }
    Ok(())
}

/// Whether the order of `d(i,j)` and `d(i,k)` agrees between the metrics.
/// Ties count as agreement.
#[inline]
fn order_kept(dh: &DistanceMatrix, dl: &DistanceMatrix, i: usize, j: usize, k: usize) -> bool {
    let (h1, h2) = (dh.get(i, j), dh.get(i, k));
    let (l1, l2) = (dl.get(i, j), dl.get(i, k));
    (h1 <= h2 && l1 <= l2) || (h1 >= h2 && l1 >= l2)
}

/// Monte Carlo estimate of the probability that a random triple has its
/// distance order flipped. Triples are drawn with replacement.
pub fn ijk_test(dh: &DistanceMatrix, dl: &DistanceMatrix, samples: usize, seed: u64) -> Result<f64> {
    same_size(dh, dl)?;
    if samples == 0 {
        return param_err("ijk test needs at least one sample");
    }
    let n = dh.len();
    if n == 0 {
        return param_err("ijk test needs a nonempty metric");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept = (0..samples)
        .filter(|_| {
            let (i, j, k) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            order_kept(dh, dl, i, j, k)
        })
        .count();
    Ok(1.0 - kept as f64 / samples as f64)
}

/// The same quantity over all `n^3` ordered triples.
pub fn ijk_exhaustive(dh: &DistanceMatrix, dl: &DistanceMatrix) -> Result<f64> {
    same_size(dh, dl)?;
    let n = dh.len();
    let mut kept = 0usize;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                kept += order_kept(dh, dl, i, j, k) as usize;
            }
        }
    }
    Ok(1.0 - kept as f64 / (n * n * n) as f64)
}

/// `1 - R^2` for the Pearson correlation of the strict upper triangles.
pub fn residual_variance(dh: &DistanceMatrix, dl: &DistanceMatrix) -> Result<f64> {
    same_size(dh, dl)?;
    let n = dh.len();
    if n < 3 {
        return param_err(format!("residual variance needs at least 3 points, got {n}"));
    }
    let count = (n * (n - 1) / 2) as f64;
    let (mut sh, mut sl) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            sh += dh.get(i, j);
            sl += dl.get(i, j);
        }
    }
    let (mh, ml) = (sh / count, sl / count);
    let (mut cov, mut vh, mut vl) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (dh.get(i, j) - mh, dl.get(i, j) - ml);
            cov += a * b;
            vh += a * a;
            vl += b * b;
        }
    }
    if vh == 0.0 || vl == 0.0 {
        return Err(DipoleError::Degenerate("a distance matrix has zero variance".into()));
    }
    let r2 = cov * cov / (vh * vl);
    Ok((1.0 - r2).clamp(0.0, 1.0))
}

/// `W_2` between the degree-`degree` Rips diagrams of farthest-point
/// samples taken separately in each metric.
pub fn global_ph_score(
    dh: &DistanceMatrix,
    dl: &DistanceMatrix,
    sample_size: usize,
    degree: usize,
    seed: u64,
) -> Result<f64> {
    same_size(dh, dl)?;
    if sample_size < 2 {
        return param_err(format!("sample size must be at least 2, got {sample_size}"));
    }
    let diagram = |d: &DistanceMatrix| -> Result<_> {
        let picks = farthest_point_sample(d, sample_size, seed)?;
        let mut diagrams = rips_diagrams(&restrict(d, &picks)?, degree)?;
        Ok(diagrams.swap_remove(degree))
    };
    let (a, b) = (diagram(dh)?, diagram(dl)?);
    Ok(wasserstein_pp(&a, &b, 2.0)?.distance())
}

pub fn evaluate(dh: &DistanceMatrix, dl: &DistanceMatrix, params: &EvaluationParams) -> Result<EvaluationReport> {
    let ((ijk, rv), (ph0, ph1)) = rayon::join(
        || (ijk_test(dh, dl, params.ijk_samples, params.ijk_seed), residual_variance(dh, dl)),
        || {
            rayon::join(
                || global_ph_score(dh, dl, params.fps_size, 0, params.fps_seed),
                || global_ph_score(dh, dl, params.fps_size, 1, params.fps_seed),
            )
        },
    );
    Ok(EvaluationReport {
        ijk_score: ijk?,
        residual_variance: rv?,
        ph0_score: ph0?,
        ph1_score: ph1?,
        parameters: params.clone(),
    })
}
