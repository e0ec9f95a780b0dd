//! Annotation tables and the datasets derived from them.

mod ingest;
mod samples;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::ops::Range;

use serde::Serialize;

pub use ingest::{ingest_annotations, read_features, write_annotations_csv, write_features_csv};
pub use samples::{build_giaa, build_giaa_counted, build_piaa, giaa_sample, GiaaSample, PiaaSample};
pub use split::{
    materialize_sets, split_images, split_users_disjoint, ImageSplit, MaterializedSplit,
    SplitManifest, SplitMode, SplitRatios, UserSplit,
};

use crate::error::{Error, Result};
use crate::scale::ScoreScale;
use crate::schema::{encode_trait, Rater, TraitSchema, TraitVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageEntry {
    pub id: String,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub image_id: String,
    pub rater_id: String,
    pub score: f64,
    /// Bin of `score` on the table's scale.
    #[serde(skip)]
    pub bin: usize,
}

/// Read access to encoded rater traits.
///
/// Evaluation code goes through this trait so that tests can observe which
/// raters' traits a routine consults.
pub trait TraitLookup {
    fn trait_vector(&self, rater_id: &str) -> Option<&TraitVector>;
}

/// Normalized `(image, rater, score)` records plus rater demographics.
///
/// Images, raters and records are kept sorted by id so every derived artifact
/// is independent of input row order.
#[derive(Debug, Clone)]
pub struct AnnotationTable {
    scale: ScoreScale,
    schema: TraitSchema,
    images: Vec<ImageEntry>,
    raters: Vec<Rater>,
    traits: Vec<TraitVector>,
    records: Vec<Record>,
    image_index: BTreeMap<String, usize>,
    rater_index: BTreeMap<String, usize>,
    image_records: Vec<Range<usize>>,
    feature_dim: usize,
}

impl AnnotationTable {
    pub fn new(
        scale: ScoreScale,
        schema: TraitSchema,
        mut images: Vec<ImageEntry>,
        mut raters: Vec<Rater>,
        records: Vec<(String, String, f64)>,
    ) -> Result<Self> {
        images.sort_by(|a, b| a.id.cmp(&b.id));
        raters.sort_by(|a, b| a.id.cmp(&b.id));
        let feature_dim = images.first().map_or(0, |i| i.features.len());
        let mut image_index = BTreeMap::new();
        for (k, img) in images.iter().enumerate() {
            if img.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    got: img.features.len(),
                });
            }
            if img.features.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidTable(format!(
                    "image {:?} has non-finite features",
                    img.id
                )));
            }
            if image_index.insert(img.id.clone(), k).is_some() {
                return Err(Error::InvalidTable(format!("duplicate image {:?}", img.id)));
            }
        }
        let mut rater_index = BTreeMap::new();
        let mut traits = Vec::with_capacity(raters.len());
        for (k, r) in raters.iter().enumerate() {
            if rater_index.insert(r.id.clone(), k).is_some() {
                return Err(Error::InvalidTable(format!("duplicate rater {:?}", r.id)));
            }
            traits.push(encode_trait(r, &schema)?);
        }

        let mut seen = HashSet::with_capacity(records.len());
        let mut normalized = Vec::with_capacity(records.len());
        for (image_id, rater_id, score) in records {
            if !image_index.contains_key(&image_id) {
                return Err(Error::InvalidTable(format!("record references unknown image {image_id:?}")));
            }
            if !rater_index.contains_key(&rater_id) {
                return Err(Error::InvalidTable(format!("record references unknown rater {rater_id:?}")));
            }
            if !seen.insert((image_id.clone(), rater_id.clone())) {
                return Err(Error::DuplicatePair {
                    image: image_id,
                    rater: rater_id,
                });
            }
            let bin = scale.snap(score)?;
            normalized.push(Record {
                image_id,
                rater_id,
                score: scale.values()[bin],
                bin,
            });
        }
        normalized.sort_by(|a, b| (&a.image_id, &a.rater_id).cmp(&(&b.image_id, &b.rater_id)));

        let mut image_records = vec![0..0; images.len()];
        let mut start = 0;
        while start < normalized.len() {
            let img = &normalized[start].image_id;
            let end = start + normalized[start..].partition_point(|r| &r.image_id == img);
            image_records[image_index[img]] = start..end;
            start = end;
        }
        if let Some(k) = image_records.iter().position(|r| r.is_empty()) {
            return Err(Error::InvalidTable(format!(
                "image {:?} has no annotations",
                images[k].id
            )));
        }

        Ok(AnnotationTable {
            scale,
            schema,
            images,
            raters,
            traits,
            records: normalized,
            image_index,
            rater_index,
            image_records,
            feature_dim,
        })
    }

    pub fn scale(&self) -> &ScoreScale {
        &self.scale
    }

    pub fn schema(&self) -> &TraitSchema {
        &self.schema
    }

    pub fn images(&self) -> &[ImageEntry] {
        &self.images
    }

    pub fn raters(&self) -> &[Rater] {
        &self.raters
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn image(&self, id: &str) -> Option<&ImageEntry> {
        self.image_index.get(id).map(|&k| &self.images[k])
    }

    pub fn rater(&self, id: &str) -> Option<&Rater> {
        self.rater_index.get(id).map(|&k| &self.raters[k])
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.iter().map(|i| i.id.as_str())
    }

    pub fn rater_ids(&self) -> impl Iterator<Item = &str> {
        self.raters.iter().map(|r| r.id.as_str())
    }

    /// Records of one image, sorted by rater id.
    pub fn records_for_image(&self, image_id: &str) -> &[Record] {
        match self.image_index.get(image_id) {
            Some(&k) => &self.records[self.image_records[k].clone()],
            None => &[],
        }
    }

    /// Per-image record slices in image-id order.
    pub fn records_by_image(&self) -> impl Iterator<Item = (&ImageEntry, &[Record])> {
        self.images
            .iter()
            .zip(&self.image_records)
            .map(|(img, range)| (img, &self.records[range.clone()]))
    }

    /// Sub-table with only the given images and raters. Images left without
    /// records are dropped; `None` keeps everything on that axis.
    pub fn restrict(
        &self,
        images: Option<&BTreeSet<String>>,
        raters: Option<&BTreeSet<String>>,
    ) -> AnnotationTable {
        let keep_rater = |id: &str| raters.is_none_or(|s| s.contains(id));
        let keep_image = |id: &str| images.is_none_or(|s| s.contains(id));
        let records: Vec<Record> = self
            .records
            .iter()
            .filter(|r| keep_image(&r.image_id) && keep_rater(&r.rater_id))
            .cloned()
            .collect();
        let used_images: BTreeSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
        let image_list: Vec<ImageEntry> = self
            .images
            .iter()
            .filter(|i| used_images.contains(i.id.as_str()))
            .cloned()
            .collect();
        let mut kept_raters = Vec::new();
        let mut kept_traits = Vec::new();
        for (r, t) in self.raters.iter().zip(&self.traits) {
            if keep_rater(&r.id) {
                kept_raters.push(r.clone());
                kept_traits.push(t.clone());
            }
        }
        let image_index: BTreeMap<String, usize> = image_list
            .iter()
            .enumerate()
            .map(|(k, i)| (i.id.clone(), k))
            .collect();
        let rater_index = kept_raters
            .iter()
            .enumerate()
            .map(|(k, r)| (r.id.clone(), k))
            .collect();
        let mut image_records = vec![0..0; image_list.len()];
        let mut start = 0;
        while start < records.len() {
            let img = &records[start].image_id;
            let end = start + records[start..].partition_point(|r| &r.image_id == img);
            image_records[image_index[img]] = start..end;
            start = end;
        }
        AnnotationTable {
            scale: self.scale.clone(),
            schema: self.schema.clone(),
            images: image_list,
            raters: kept_raters,
            traits: kept_traits,
            records,
            image_index,
            rater_index,
            image_records,
            feature_dim: self.feature_dim,
        }
    }

    /// Raters whose label for `field` is in `labels`.
    pub fn raters_with_labels(&self, field: &str, labels: &BTreeSet<String>) -> Result<BTreeSet<String>> {
        let idx = self.schema.field_index(field)?;
        let mut out = BTreeSet::new();
        for r in &self.raters {
            if labels.contains(&self.schema.label_of(r, idx)?) {
                out.insert(r.id.clone());
            }
        }
        Ok(out)
    }
}

impl TraitLookup for AnnotationTable {
    fn trait_vector(&self, rater_id: &str) -> Option<&TraitVector> {
        self.rater_index.get(rater_id).map(|&k| &self.traits[k])
    }
}
