//! Group-versus-individual loss inequality and convex-hull geometry checks.
//!
//! For any prediction and any set of one-hot targets, the distance to the
//! targets' mean never exceeds the mean distance to the individual targets.
//! Group-averaged traits and score distributions are convex combinations of
//! the members' encodings; [`convex_membership`] checks that numerically.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scale::ScoreDistribution;

/// Slack allowed when comparing the two losses.
pub const THEOREM_SLACK: f64 = 1e-12;
/// Default hull-membership tolerance.
pub const HULL_TOLERANCE: f64 = 1e-8;

/// Norm used by [`giaa_loss`] and [`piaa_loss`]. Any norm satisfies the
/// inequality; other norms can be added here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn of<I: IntoIterator<Item = f64>>(self, diff: I) -> f64 {
        match self {
            Norm::L1 => diff.into_iter().map(f64::abs).sum(),
            Norm::L2 => diff.into_iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

fn check_deltas(pred: &ScoreDistribution, deltas: &[ScoreDistribution]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::EmptyGroup);
    }
    for d in deltas {
        pred.check_same_bins(d)?;
        if d.one_hot_index().is_none() {
            return Err(Error::InvalidDistribution("target is not one-hot".into()));
        }
    }
    Ok(())
}

/// `|| pred - mean(deltas) ||`.
pub fn giaa_loss(pred: &ScoreDistribution, deltas: &[ScoreDistribution], norm: Norm) -> Result<f64> {
    check_deltas(pred, deltas)?;
    Ok(giaa_loss_raw(pred.mass(), deltas.iter().map(|d| d.mass()), norm))
}

/// `mean(|| pred - delta_i ||)`.
pub fn piaa_loss(pred: &ScoreDistribution, deltas: &[ScoreDistribution], norm: Norm) -> Result<f64> {
    check_deltas(pred, deltas)?;
    Ok(piaa_loss_raw(pred.mass(), deltas.iter().map(|d| d.mass()), norm))
}

fn giaa_loss_raw<'a>(pred: &[f64], targets: impl ExactSizeIterator<Item = &'a [f64]>, norm: Norm) -> f64 {
    let n = targets.len() as f64;
    let mut mean = vec![0.0; pred.len()];
    for t in targets {
        for (m, x) in mean.iter_mut().zip(t) {
            *m += x;
        }
    }
    norm.of(pred.iter().zip(&mean).map(|(p, m)| p - m / n))
}

fn piaa_loss_raw<'a>(pred: &[f64], targets: impl ExactSizeIterator<Item = &'a [f64]>, norm: Norm) -> f64 {
    let n = targets.len() as f64;
    targets
        .map(|t| norm.of(pred.iter().zip(t).map(|(p, x)| p - x)))
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub giaa: f64,
    pub piaa: f64,
    pub holds: bool,
}

impl TheoremReport {
    fn new(giaa: f64, piaa: f64) -> Self {
        TheoremReport {
            giaa,
            piaa,
            holds: giaa <= piaa + THEOREM_SLACK,
        }
    }
}

pub fn check_theorem(pred: &ScoreDistribution, deltas: &[ScoreDistribution], norm: Norm) -> Result<TheoremReport> {
    Ok(TheoremReport::new(
        giaa_loss(pred, deltas, norm)?,
        piaa_loss(pred, deltas, norm)?,
    ))
}

/// The inequality with scalar scores: `|pred - mean(s)| <= mean(|pred - s_i|)`.
pub fn check_theorem_scalar(pred: f64, scores: &[f64]) -> Result<TheoremReport> {
    if scores.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let piaa = scores.iter().map(|s| (pred - s).abs()).sum::<f64>() / n;
    Ok(TheoremReport::new((pred - mean).abs(), piaa))
}

/// Outcome of a randomized search for counterexamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremSweep {
    pub trials: usize,
    pub scalar_trials: usize,
    pub violations: usize,
    /// Largest observed `giaa - piaa`; non-positive when the inequality holds.
    pub max_gap: f64,
    pub seed: u64,
}

/// Random predictions and one-hot target groups (n in 1..=64, d in 2..=11,
/// both norms), followed by the same number of scalar-mode trials.
pub fn verify_theorem(trials: usize, seed: u64) -> TheoremSweep {
    let mut rng = rng::substream(seed, "verify-theorem");
    let mut violations = 0;
    let mut max_gap = f64::NEG_INFINITY;
    let mut record = |rep: TheoremReport| {
        if !rep.holds {
            violations += 1;
        }
        max_gap = max_gap.max(rep.giaa - rep.piaa);
    };
    let mut pred = Vec::with_capacity(11);
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(64);
    for _ in 0..trials {
        let d = rng.random_range(2..=11);
        let n = rng.random_range(1..=64);
        let norm = if rng.random::<bool>() { Norm::L1 } else { Norm::L2 };
        pred.clear();
        pred.extend((0..d).map(|_| rng.random::<f64>()));
        let total: f64 = pred.iter().sum();
        pred.iter_mut().for_each(|p| *p /= total);
        targets.clear();
        for _ in 0..n {
            let mut t = vec![0.0; d];
            t[rng.random_range(0..d)] = 1.0;
            targets.push(t);
        }
        record(TheoremReport::new(
            giaa_loss_raw(&pred, targets.iter().map(Vec::as_slice), norm),
            piaa_loss_raw(&pred, targets.iter().map(Vec::as_slice), norm),
        ));
    }
    let mut scores = Vec::with_capacity(64);
    for _ in 0..trials {
        let n = rng.random_range(1..=64);
        scores.clear();
        scores.extend((0..n).map(|_| rng.random_range(0.0..10.0)));
        let pred = rng.random_range(0.0..10.0);
        record(check_theorem_scalar(pred, &scores).expect("non-empty"));
    }
    TheoremSweep {
        trials,
        scalar_trials: trials,
        violations,
        max_gap,
        seed,
    }
}

/// Closest point of a convex hull to a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct HullProjection {
    /// Euclidean distance from the point to the returned combination.
    pub distance: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

const MAX_HULL_ITERATIONS: usize = 10_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_vertices<V: AsRef<[f64]>>(point: &[f64], vertices: &[V]) -> Result<()> {
    if vertices.is_empty() {
        return Err(Error::EmptyGroup);
    }
    for v in vertices {
        if v.as_ref().len() != point.len() {
            return Err(Error::DimensionMismatch {
                expected: point.len(),
                got: v.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// Minimize `|| V w - point ||` over the simplex with Wolfe's min-norm-point
/// active-set method. Stops once the distance drops to `stop_at`, once a
/// separating hyperplane certifies the distance exceeds `stop_at`, or at the
/// exact projection.
pub fn project_onto_hull<V: AsRef<[f64]>>(point: &[f64], vertices: &[V], stop_at: f64) -> Result<HullProjection> {
    check_vertices(point, vertices)?;
    let m = vertices.len();
    // shift so that the point is the origin
    let shifted: Vec<Vec<f64>> = vertices
        .iter()
        .map(|v| v.as_ref().iter().zip(point).map(|(a, b)| a - b).collect())
        .collect();
    let scale2 = shifted.iter().map(|p| dot(p, p)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let combine = |active: &[usize], lambda: &[f64]| {
        let mut x = vec![0.0; point.len()];
        for (&k, l) in active.iter().zip(lambda) {
            for (xi, pi) in x.iter_mut().zip(&shifted[k]) {
                *xi += l * pi;
            }
        }
        x
    };

    let start = (0..m)
        .min_by(|&a, &b| dot(&shifted[a], &shifted[a]).total_cmp(&dot(&shifted[b], &shifted[b])))
        .expect("non-empty");
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = shifted[start].clone();
    let mut iterations = 0;

    while iterations < MAX_HULL_ITERATIONS {
        iterations += 1;
        let xx = dot(&x, &x);
        if xx.sqrt() <= stop_at {
            break;
        }
        let (j, xj) = (0..m)
            .map(|k| (k, dot(&x, &shifted[k])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        // every vertex lies beyond the hyperplane <x, .> = xj
        if xj > 0.0 && xj / xx.sqrt() > stop_at {
            break;
        }
        if xx - xj <= 1e-14 * scale2 || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);

        // minor cycles: move toward the affine minimizer of the active set
        loop {
            let Some(alpha) = affine_minimizer(&active, &shifted) else {
                // degenerate active set: drop the newest point and stop
                active.pop();
                lambda.pop();
                let total: f64 = lambda.iter().sum();
                lambda.iter_mut().for_each(|l| *l /= total);
                return Ok(finish(point, vertices, &active, &lambda, iterations));
            };
            if alpha.iter().all(|a| *a > 1e-15) {
                lambda = alpha;
                break;
            }
            let theta = lambda
                .iter()
                .zip(&alpha)
                .filter(|(_, a)| **a <= 1e-15)
                .map(|(l, a)| l / (l - a))
                .fold(1.0, f64::min);
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = (1.0 - theta) * *l + theta * a;
            }
            let mut k = 0;
            while k < active.len() {
                if lambda[k] <= 1e-15 {
                    active.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            if active.len() == 1 {
                break;
            }
        }
        x = combine(&active, &lambda);
    }
    Ok(finish(point, vertices, &active, &lambda, iterations))
}

fn finish<V: AsRef<[f64]>>(
    point: &[f64],
    vertices: &[V],
    active: &[usize],
    lambda: &[f64],
    iterations: usize,
) -> HullProjection {
    let mut weights = vec![0.0; vertices.len()];
    for (&k, l) in active.iter().zip(lambda) {
        weights[k] = *l;
    }
    let mut r: Vec<f64> = point.iter().map(|p| -p).collect();
    for (wk, v) in weights.iter().zip(vertices) {
        if *wk != 0.0 {
            for (ri, vi) in r.iter_mut().zip(v.as_ref()) {
                *ri += wk * vi;
            }
        }
    }
    HullProjection {
        distance: dot(&r, &r).sqrt(),
        weights,
        iterations,
    }
}

/// Weights summing to one that minimize `|| sum a_i p_i ||` over the affine
/// hull of the active points, from the bordered Gram system.
fn affine_minimizer(active: &[usize], points: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = active.len();
    let size = n + 1;
    let mut a = vec![vec![0.0; size + 1]; size];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = dot(&points[active[i]], &points[active[j]]);
        }
        a[i][n] = 1.0;
        a[n][i] = 1.0;
    }
    a[n][size] = 1.0;
    // Gaussian elimination with partial pivoting
    for col in 0..size {
        let pivot = (col..size).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..size {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..=size {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut sol = vec![0.0; size];
    for row in (0..size).rev() {
        let s: f64 = (row + 1..size).map(|c| a[row][c] * sol[c]).sum();
        sol[row] = (a[row][size] - s) / a[row][row];
    }
    sol.truncate(n);
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Whether `point` lies within `tol` (Euclidean) of the convex hull of `vertices`.
pub fn convex_membership<V: AsRef<[f64]>>(point: &[f64], vertices: &[V], tol: f64) -> Result<bool> {
    check_vertices(point, vertices)?;
    for j in 0..point.len() {
        let (lo, hi) = vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let x = v.as_ref()[j];
            (lo.min(x), hi.max(x))
        });
        if point[j] < lo - tol || point[j] > hi + tol {
            return Ok(false);
        }
    }
    Ok(project_onto_hull(point, vertices, tol)?.distance <= tol)
}
