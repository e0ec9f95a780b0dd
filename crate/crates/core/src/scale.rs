//! Ordered score scales and probability distributions over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when snapping ingested scores onto scale values.
pub const SNAP_TOLERANCE: f64 = 1e-6;
/// Tolerance on the unit-sum invariant of distributions.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// An ordered set of admissible score values, one bin per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScaleRepr", into = "ScaleRepr")]
pub struct ScoreScale {
    name: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScaleRepr {
    name: String,
    values: Vec<f64>,
}

impl TryFrom<ScaleRepr> for ScoreScale {
    type Error = Error;

    fn try_from(r: ScaleRepr) -> Result<Self> {
        ScoreScale::new(r.name, r.values)
    }
}

impl From<ScoreScale> for ScaleRepr {
    fn from(s: ScoreScale) -> Self {
        ScaleRepr {
            name: s.name,
            values: s.values,
        }
    }
}

impl ScoreScale {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidScale(format!(
                "need at least 2 score levels, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScale("non-finite score level".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidScale(
                "score levels must be strictly increasing".into(),
            ));
        }
        Ok(ScoreScale {
            name: name.into(),
            values,
        })
    }

    /// Evenly spaced levels `min, min + step, ..., max`.
    pub fn uniform(name: impl Into<String>, min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max > min) {
            return Err(Error::InvalidScale(format!(
                "bad range [{min}, {max}] with step {step}"
            )));
        }
        let count = ((max - min) / step).round() as usize + 1;
        let values = (0..count).map(|k| min + step * k as f64).collect();
        ScoreScale::new(name, values)
    }

    /// PARA-like scale: 0.5 to 5.0 in steps of 0.5 (10 bins).
    pub fn para() -> Self {
        ScoreScale::uniform("para", 0.5, 5.0, 0.5).expect("static scale")
    }

    /// LAPIS-like scale: integers 0 to 10 (11 bins).
    pub fn lapis() -> Self {
        ScoreScale::uniform("lapis", 0.0, 10.0, 1.0).expect("static scale")
    }

    /// Resolve a preset name (`para`, `lapis`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "para" => Some(Self::para()),
            "lapis" => Some(Self::lapis()),
            _ => None,
        }
    }

    /// A preset name, or the path of a JSON file `{"name": .., "values": [..]}`.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = std::path::Path::new(spec);
        if path.is_file() {
            return Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?);
        }
        Self::preset(spec).ok_or_else(|| Error::InvalidScale(format!("unknown preset {spec:?} and no such file")))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bin_count(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Bin index of a score lying on the scale (within [`SNAP_TOLERANCE`]).
    pub fn snap(&self, score: f64) -> Result<usize> {
        let idx = self
            .values
            .partition_point(|&v| v < score - SNAP_TOLERANCE);
        match self.values.get(idx) {
            Some(&v) if (v - score).abs() <= SNAP_TOLERANCE => Ok(idx),
            _ => Err(Error::OffScaleScore(score)),
        }
    }

    /// Nearest level to an arbitrary real, ties resolved toward the lower
    /// level; values beyond the ends clamp.
    pub fn quantize(&self, x: f64) -> usize {
        if x.is_nan() || x <= self.min() {
            return 0;
        }
        let hi = self.values.partition_point(|&v| v < x);
        if hi >= self.values.len() {
            return self.values.len() - 1;
        }
        if hi == 0 {
            return 0;
        }
        let (lo_v, hi_v) = (self.values[hi - 1], self.values[hi]);
        if x - lo_v <= hi_v - x {
            hi - 1
        } else {
            hi
        }
    }

    /// Expected score under `dist`.
    ///
    /// Panics if `dist` has a different number of bins.
    pub fn mean_score(&self, dist: &ScoreDistribution) -> f64 {
        assert_eq!(dist.bins(), self.bin_count(), "distribution off scale");
        dist.mass()
            .iter()
            .zip(&self.values)
            .map(|(m, v)| m * v)
            .sum()
    }
}

/// A probability vector over the bins of a [`ScoreScale`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreDistribution {
    mass: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ScoreDistribution {
    type Error = Error;

    fn try_from(mass: Vec<f64>) -> Result<Self> {
        ScoreDistribution::new(mass)
    }
}

impl From<ScoreDistribution> for Vec<f64> {
    fn from(d: ScoreDistribution) -> Self {
        d.mass
    }
}

impl ScoreDistribution {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 bins, got {}",
                mass.len()
            )));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidDistribution(
                "entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "mass sums to {total}, expected 1"
            )));
        }
        Ok(ScoreDistribution { mass })
    }

    /// Point mass at `bin`.
    pub fn one_hot(bins: usize, bin: usize) -> Self {
        assert!(bins >= 2 && bin < bins);
        let mut mass = vec![0.0; bins];
        mass[bin] = 1.0;
        ScoreDistribution { mass }
    }

    pub fn uniform(bins: usize) -> Self {
        assert!(bins >= 2);
        ScoreDistribution {
            mass: vec![1.0 / bins as f64; bins],
        }
    }

    /// Normalize non-negative weights. Errors when every weight is zero.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be non-negative with positive total".into(),
            ));
        }
        ScoreDistribution::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    /// Cumulative mass, last entry ~1.
    pub fn cdf(&self) -> Vec<f64> {
        self.mass
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    /// The occupied bin when the distribution is a point mass.
    pub fn one_hot_index(&self) -> Option<usize> {
        let mut hit = None;
        for (k, &m) in self.mass.iter().enumerate() {
            if m == 1.0 && hit.is_none() {
                hit = Some(k);
            } else if m != 0.0 {
                return None;
            }
        }
        hit
    }

    pub(crate) fn check_same_bins(&self, other: &ScoreDistribution) -> Result<()> {
        if self.bins() != other.bins() {
            return Err(Error::ScaleMismatch {
                left: self.bins(),
                right: other.bins(),
            });
        }
        Ok(())
    }
}

/// Histogram of raw scores on `scale`: `mass[k] = #{score == values[k]} / n`.
pub fn assemble_score_distribution(scores: &[f64], scale: &ScoreScale) -> Result<ScoreDistribution> {
    if scores.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let mut counts = vec![0usize; scale.bin_count()];
    for &s in scores {
        counts[scale.snap(s)?] += 1;
    }
    Ok(distribution_from_counts(&counts))
}

pub(crate) fn distribution_from_counts(counts: &[usize]) -> ScoreDistribution {
    let n: usize = counts.iter().sum();
    debug_assert!(n > 0);
    ScoreDistribution {
        mass: counts.iter().map(|&c| c as f64 / n as f64).collect(),
    }
}

pub fn mean_score(dist: &ScoreDistribution, scale: &ScoreScale) -> f64 {
    scale.mean_score(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn para_and_lapis_presets() {
        let p = ScoreScale::para();
        assert_eq!(p.bin_count(), 10);
        assert_eq!(p.min(), 0.5);
        assert_eq!(p.max(), 5.0);
        let l = ScoreScale::lapis();
        assert_eq!(l.bin_count(), 11);
        assert_eq!(l.values()[10], 10.0);
    }

    #[test]
    fn scale_rejects_bad_levels() {
        assert!(ScoreScale::new("x", vec![1.0]).is_err());
        assert!(ScoreScale::new("x", vec![1.0, 1.0]).is_err());
        assert!(ScoreScale::new("x", vec![2.0, 1.0]).is_err());
    }

    #[test]
    fn snapping() {
        let s = ScoreScale::para();
        assert_eq!(s.snap(3.0).unwrap(), 5);
        assert_eq!(s.snap(3.0 + 5e-7).unwrap(), 5);
        assert_eq!(s.snap(0.5 - 5e-7).unwrap(), 0);
        assert!(matches!(s.snap(7.3), Err(Error::OffScaleScore(_))));
        assert!(matches!(s.snap(3.2), Err(Error::OffScaleScore(_))));
        assert!(matches!(s.snap(0.0), Err(Error::OffScaleScore(_))));
    }

    #[test]
    fn quantize_ties_go_low() {
        let s = ScoreScale::lapis();
        assert_eq!(s.quantize(2.5), 2);
        assert_eq!(s.quantize(2.51), 3);
        assert_eq!(s.quantize(-4.0), 0);
        assert_eq!(s.quantize(42.0), 10);
    }

    #[test]
    fn golden_para_distribution() {
        let scale = ScoreScale::para();
        let mut scores = Vec::new();
        for (v, c) in [(2.0, 2), (2.5, 2), (3.0, 3), (3.5, 8), (4.0, 7), (4.5, 2)] {
            scores.extend(std::iter::repeat(v).take(c));
        }
        let d = assemble_score_distribution(&scores, &scale).unwrap();
        let expected = [0., 0., 0., 2., 2., 3., 8., 7., 2., 0.].map(|c| c / 24.0);
        assert_eq!(d.mass(), &expected);
        let mean = mean_score(&d, &scale);
        assert!((mean - 83.0 / 24.0).abs() < 1e-9);
        assert_eq!(format!("{mean:.2}"), "3.46");
    }

    #[test]
    fn single_score_is_one_hot() {
        let scale = ScoreScale::para();
        let d = assemble_score_distribution(&[3.0], &scale).unwrap();
        assert_eq!(d.one_hot_index(), Some(5));
        assert_eq!(mean_score(&ScoreDistribution::one_hot(10, 7), &scale), 4.0);
    }

    #[test]
    fn one_score_per_bin_is_uniform() {
        let scale = ScoreScale::lapis();
        let d = assemble_score_distribution(scale.values(), &scale).unwrap();
        assert!(d.mass().iter().all(|&m| (m - 1.0 / 11.0).abs() < 1e-15));
        assert!((mean_score(&d, &scale) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn distribution_validation() {
        assert!(ScoreDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ScoreDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ScoreDistribution::new(vec![1.0]).is_err());
        assert!(ScoreDistribution::new(vec![0.25, 0.75]).is_ok());
        assert!(ScoreDistribution::from_weights(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(matches!(
            assemble_score_distribution(&[], &ScoreScale::para()),
            Err(Error::EmptyGroup)
        ));
    }
}
