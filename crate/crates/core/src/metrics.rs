//! Distribution distances, impurity and correlation metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::AnnotationTable;
use crate::error::{Error, Result, Side};
use crate::scale::{distribution_from_counts, ScoreDistribution, ScoreScale};

/// Ground distance between score bins for [`emd_w1_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMetric {
    /// `|values[i] - values[j]|`, in score units.
    #[default]
    ScoreValue,
    /// `|i - j|`.
    BinIndex,
}

/// Wasserstein-1 distance in score units.
pub fn emd_w1(p: &ScoreDistribution, q: &ScoreDistribution, scale: &ScoreScale) -> Result<f64> {
    emd_w1_with(p, q, scale, GroundMetric::ScoreValue)
}

/// Wasserstein-1 on a line: the area between the two CDFs.
pub fn emd_w1_with(
    p: &ScoreDistribution,
    q: &ScoreDistribution,
    scale: &ScoreScale,
    ground: GroundMetric,
) -> Result<f64> {
    p.check_same_bins(q)?;
    if p.bins() != scale.bin_count() {
        return Err(Error::ScaleMismatch {
            left: p.bins(),
            right: scale.bin_count(),
        });
    }
    let values = scale.values();
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut total = 0.0;
    for k in 0..p.bins() - 1 {
        cp += p.mass()[k];
        cq += q.mass()[k];
        let width = match ground {
            GroundMetric::ScoreValue => values[k + 1] - values[k],
            GroundMetric::BinIndex => 1.0,
        };
        total += (cp - cq).abs() * width;
    }
    Ok(total)
}

/// Normalized CDF distance used as the training loss:
/// `((1/d) * sum_k |CDF_p(k) - CDF_q(k)|^r)^(1/r)`.
pub fn emd_loss(p: &ScoreDistribution, q: &ScoreDistribution, r: f64) -> Result<f64> {
    p.check_same_bins(q)?;
    if !(r >= 1.0) {
        return Err(Error::InvalidConfig(format!("loss exponent must be >= 1, got {r}")));
    }
    Ok(emd_loss_raw(p.mass(), q.mass(), r))
}

pub(crate) fn emd_loss_raw(p: &[f64], q: &[f64], r: f64) -> f64 {
    let d = p.len();
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut acc = 0.0;
    for k in 0..d {
        cp += p[k];
        cq += q[k];
        acc += (cp - cq).abs().powf(r);
    }
    (acc / d as f64).powf(1.0 / r)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput("need at least 2 observations".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite observation".into()));
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("constant input vector".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson linear correlation.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(x, y)
}

/// 1-based ranks with ties sharing their average rank.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank-order correlation with average ranks for ties.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// `1 - sum_k p_k^2`, with exact products and a compensated sum so that
/// results like the uniform-10 impurity round correctly.
pub fn gini_impurity(p: &ScoreDistribution) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for &m in p.mass() {
        let sq = m * m;
        lo += m.mul_add(m, -sq);
        // two-sum of hi + sq
        let t = hi + sq;
        let bp = t - hi;
        lo += (hi - (t - bp)) + (sq - bp);
        hi = t;
    }
    // two-difference of 1 - hi, then fold in every correction term
    let r = 1.0 - hi;
    let bp = r - 1.0;
    let err = (1.0 - (r - bp)) + (-hi - bp);
    r + (err - lo)
}

/// Pooled score distribution over all records by the given raters.
pub fn aggregate_distribution(table: &AnnotationTable, users: Option<&BTreeSet<String>>) -> Option<ScoreDistribution> {
    let mut counts = vec![0usize; table.scale().bin_count()];
    let mut any = false;
    for r in table.records() {
        if users.is_none_or(|u| u.contains(&r.rater_id)) {
            counts[r.bin] += 1;
            any = true;
        }
    }
    any.then(|| distribution_from_counts(&counts))
}

/// Record-weighted Gini impurity of the per-group score distributions, where
/// groups are the labels of `field`.
pub fn demographic_gini(table: &AnnotationTable, field: &str) -> Result<f64> {
    let idx = table.schema().field_index(field)?;
    let bins = table.scale().bin_count();
    let mut group_of = BTreeMap::new();
    for r in table.raters() {
        group_of.insert(r.id.as_str(), table.schema().label_of(r, idx)?);
    }
    let mut counts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for rec in table.records() {
        let g = group_of[rec.rater_id.as_str()].as_str();
        counts.entry(g).or_insert_with(|| vec![0; bins])[rec.bin] += 1;
    }
    let n = table.records().len();
    if n == 0 {
        return Err(Error::EmptyResult);
    }
    Ok(counts
        .values()
        .map(|c| {
            let ng: usize = c.iter().sum();
            ng as f64 / n as f64 * gini_impurity(&distribution_from_counts(c))
        })
        .sum())
}

/// W1 distance between the pooled score distributions of two user sets.
pub fn group_emd(
    table: &AnnotationTable,
    train_users: &BTreeSet<String>,
    test_users: &BTreeSet<String>,
) -> Result<f64> {
    let train = aggregate_distribution(table, Some(train_users)).ok_or(Error::EmptySide(Side::Train))?;
    let test = aggregate_distribution(table, Some(test_users)).ok_or(Error::EmptySide(Side::Test))?;
    emd_w1(&train, &test, table.scale())
}

/// `{metric name -> value}` with the scale and sample counts that produced them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scale: String,
    pub counts: BTreeMap<String, usize>,
    pub metrics: BTreeMap<String, f64>,
}
