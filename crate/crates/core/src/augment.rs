//! Sub-sampled GIAA (sGIAA): GIAA samples built from random rater subsets.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_giaa, giaa_sample, AnnotationTable, GiaaSample, Record};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub samples_per_image: usize,
    pub k_min: usize,
    /// Upper group size; capped per image by its rater count.
    pub k_max: usize,
    pub seed: u64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            samples_per_image: 4,
            k_min: 2,
            k_max: usize::MAX,
            seed: 0,
        }
    }
}

impl SubsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 {
            return Err(Error::GroupSizeBelowTwo);
        }
        if self.k_max < self.k_min {
            return Err(Error::InvalidConfig(format!(
                "k_max ({}) < k_min ({})",
                self.k_max, self.k_min
            )));
        }
        if self.samples_per_image == 0 {
            return Err(Error::InvalidConfig("samples_per_image must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Subsample {
    pub samples: Vec<GiaaSample>,
    /// Images with fewer than `k_min` raters.
    pub skipped: Vec<String>,
}

/// Draw `samples_per_image` random groups per image: a group size uniform on
/// `[k_min, min(k_max, raters)]`, then that many raters without replacement.
///
/// Each image draws from its own stream keyed by `(seed, image_id)`.
pub fn subsample_giaa(
    table: &AnnotationTable,
    image_ids: Option<&BTreeSet<String>>,
    config: &SubsampleConfig,
) -> Result<Subsample> {
    config.validate()?;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (image, records) in table.records_by_image() {
        if image_ids.is_some_and(|ids| !ids.contains(&image.id)) {
            continue;
        }
        let n = records.len();
        if n < config.k_min {
            log::warn!("{}", Error::ImageTooSmall(image.id.clone()));
            skipped.push(image.id.clone());
            continue;
        }
        let hi = config.k_max.min(n);
        let mut rng = rng::substream(config.seed, &image.id);
        for _ in 0..config.samples_per_image {
            let k = rng.random_range(config.k_min..=hi);
            let mut picked = index::sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            let members: Vec<&Record> = picked.iter().map(|&i| &records[i]).collect();
            samples.push(giaa_sample(table, &image.id, &members)?);
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(Subsample { samples, skipped })
}

/// Full-group GIAA samples followed by sGIAA samples for the same table.
pub fn augmented_giaa(table: &AnnotationTable, config: &SubsampleConfig) -> Result<Vec<GiaaSample>> {
    let mut out = build_giaa(table, None)?;
    out.extend(subsample_giaa(table, None, config)?.samples);
    Ok(out)
}
