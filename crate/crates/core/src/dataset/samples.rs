use std::collections::BTreeSet;

use serde::Serialize;

use super::{AnnotationTable, Record, TraitLookup};
use crate::error::{Error, Result};
use crate::scale::{distribution_from_counts, ScoreDistribution};
use crate::schema::{average_trait_vectors, TraitDistribution, TraitVector};

/// One image seen through a group of raters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GiaaSample {
    pub image_id: String,
    pub features: Vec<f64>,
    pub trait_dist: TraitDistribution,
    pub score_dist: ScoreDistribution,
    pub group_size: usize,
    pub member_ids: Vec<String>,
}

/// One image seen through one rater.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiaaSample {
    pub image_id: String,
    pub features: Vec<f64>,
    pub trait_vec: TraitVector,
    pub score_dist: ScoreDistribution,
    pub rater_id: String,
}

/// GIAA sample for `image_id` over exactly the given records.
pub fn giaa_sample(table: &AnnotationTable, image_id: &str, members: &[&Record]) -> Result<GiaaSample> {
    if members.len() < 2 {
        return Err(Error::GroupSizeBelowTwo);
    }
    let image = table
        .image(image_id)
        .ok_or_else(|| Error::InvalidTable(format!("unknown image {image_id:?}")))?;
    let mut counts = vec![0usize; table.scale().bin_count()];
    let mut vectors = Vec::with_capacity(members.len());
    for r in members {
        counts[r.bin] += 1;
        vectors.push(
            table
                .trait_vector(&r.rater_id)
                .ok_or_else(|| Error::InvalidTable(format!("unknown rater {:?}", r.rater_id)))?,
        );
    }
    Ok(GiaaSample {
        image_id: image.id.clone(),
        features: image.features.clone(),
        trait_dist: average_trait_vectors(vectors)?,
        score_dist: distribution_from_counts(&counts),
        group_size: members.len(),
        member_ids: members.iter().map(|r| r.rater_id.clone()).collect(),
    })
}

/// One GIAA sample per image over its (filtered) raters; also returns how
/// many images were dropped for having fewer than two raters.
pub fn build_giaa_counted(
    table: &AnnotationTable,
    user_filter: Option<&BTreeSet<String>>,
) -> Result<(Vec<GiaaSample>, usize)> {
    let mut out = Vec::new();
    let mut dropped = 0;
    for (image, records) in table.records_by_image() {
        let members: Vec<&Record> = records
            .iter()
            .filter(|r| user_filter.is_none_or(|f| f.contains(&r.rater_id)))
            .collect();
        if members.len() < 2 {
            dropped += 1;
            continue;
        }
        out.push(giaa_sample(table, &image.id, &members)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok((out, dropped))
}

pub fn build_giaa(table: &AnnotationTable, user_filter: Option<&BTreeSet<String>>) -> Result<Vec<GiaaSample>> {
    let (samples, dropped) = build_giaa_counted(table, user_filter)?;
    if dropped > 0 {
        log::warn!("dropped {dropped} image(s) with fewer than 2 raters");
    }
    Ok(samples)
}

pub fn build_piaa(table: &AnnotationTable, user_filter: Option<&BTreeSet<String>>) -> Result<Vec<PiaaSample>> {
    let bins = table.scale().bin_count();
    let out: Vec<PiaaSample> = table
        .records_by_image()
        .flat_map(|(image, records)| records.iter().map(move |r| (image, r)))
        .filter(|(_, r)| user_filter.is_none_or(|f| f.contains(&r.rater_id)))
        .map(|(image, r)| PiaaSample {
            image_id: image.id.clone(),
            features: image.features.clone(),
            trait_vec: table.trait_vector(&r.rater_id).expect("rater exists").clone(),
            score_dist: ScoreDistribution::one_hot(bins, r.bin),
            rater_id: r.rater_id.clone(),
        })
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::*;
    use crate::dataset::{AnnotationTable, ImageEntry};
    use crate::scale::{mean_score, ScoreScale};

    fn two_rater_table() -> AnnotationTable {
        AnnotationTable::new(
            ScoreScale::para(),
            tiny_schema(),
            vec![ImageEntry { id: "i".into(), features: vec![0.1] }],
            vec![rater("A", "female", "school"), rater("B", "male", "university")],
            vec![("i".into(), "A".into(), 2.0), ("i".into(), "B".into(), 4.0)],
        )
        .unwrap()
    }

    #[test]
    fn pair_group() {
        let t = two_rater_table();
        let s = &build_giaa(&t, None).unwrap()[0];
        assert_eq!(s.group_size, 2);
        assert_eq!(s.score_dist.mass()[3], 0.5);
        assert_eq!(s.score_dist.mass()[7], 0.5);
        assert_eq!(s.trait_dist.values(), &[0.5, 0.5, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn filter_below_two_drops_image() {
        let t = small_table();
        let only_a: BTreeSet<String> = ["a".to_string()].into();
        assert!(matches!(build_giaa(&t, Some(&only_a)), Err(Error::EmptyResult)));
        let (s, dropped) = build_giaa_counted(&t, None).unwrap();
        assert_eq!((s.len(), dropped), (3, 0));
    }

    #[test]
    fn giaa_mean_equals_raw_mean() {
        let t = small_table();
        for s in build_giaa(&t, None).unwrap() {
            let raw: Vec<f64> = t.records_for_image(&s.image_id).iter().map(|r| r.score).collect();
            let m = raw.iter().sum::<f64>() / raw.len() as f64;
            assert!((mean_score(&s.score_dist, t.scale()) - m).abs() < 1e-9);
        }
    }

    #[test]
    fn piaa_counts() {
        let t = small_table();
        assert_eq!(build_piaa(&t, None).unwrap().len(), 12);
        let only_b: BTreeSet<String> = ["b".to_string()].into();
        let s = build_piaa(&t, Some(&only_b)).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|p| p.rater_id == "b" && p.score_dist.one_hot_index().is_some()));
        let nobody: BTreeSet<String> = BTreeSet::new();
        assert!(matches!(build_piaa(&t, Some(&nobody)), Err(Error::EmptyResult)));
    }
}
