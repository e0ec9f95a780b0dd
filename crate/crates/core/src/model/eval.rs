use serde::{Deserialize, Serialize};

use super::{forward_into, ModelParams, Workspace};
use crate::dataset::{build_giaa, AnnotationTable, SplitManifest, TraitLookup};
use crate::error::{Error, Result};
use crate::metrics::{emd_loss_raw, plcc, srocc};
use crate::schema::average_trait_vectors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Per test image: group mean of the test users' scores, with the model
    /// fed the average trait distribution of all training users.
    Giaa,
    /// Per (test image, test user) record: that user's score, with the model
    /// fed that user's trait vector.
    Piaa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub srocc: f64,
    pub plcc: f64,
    pub emd_loss_mean: f64,
    pub samples: usize,
}

pub fn evaluate(params: &ModelParams, table: &AnnotationTable, manifest: &SplitManifest, mode: EvalMode) -> Result<EvalReport> {
    evaluate_with(params, table, table, manifest, mode)
}

/// [`evaluate`] with traits read through `traits` instead of the table.
pub fn evaluate_with<L: TraitLookup + ?Sized>(
    params: &ModelParams,
    table: &AnnotationTable,
    traits: &L,
    manifest: &SplitManifest,
    mode: EvalMode,
) -> Result<EvalReport> {
    manifest.validate()?;
    params.check_shapes()?;
    if params.bins != table.scale().bin_count() {
        return Err(Error::DimensionMismatch { expected: table.scale().bin_count(), got: params.bins });
    }
    if params.feature_dim != table.feature_dim() {
        return Err(Error::DimensionMismatch { expected: table.feature_dim(), got: params.feature_dim });
    }
    if params.trait_dim != table.schema().total_dim() {
        return Err(Error::DimensionMismatch { expected: table.schema().total_dim(), got: params.trait_dim });
    }
    let test = table.restrict(Some(&manifest.test_images), Some(&manifest.test_users));
    if test.records().is_empty() {
        return Err(Error::EmptySet("test".into()));
    }
    let values = table.scale().values();
    let mut ws = Workspace::new(params);
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    let mut loss_sum = 0.0;

    match mode {
        EvalMode::Giaa => {
            let train_traits = manifest
                .train_users
                .iter()
                .map(|id| {
                    traits
                        .trait_vector(id)
                        .ok_or_else(|| Error::InvalidTable(format!("unknown training user {id:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let group_traits = average_trait_vectors(train_traits).map_err(|e| match e {
                Error::EmptyGroup => Error::EmptySet("training users".into()),
                e => e,
            })?;
            let samples = build_giaa(&test, None).map_err(|e| match e {
                Error::EmptyResult => Error::EmptySet("test".into()),
                e => e,
            })?;
            for s in &samples {
                forward_into(params, &s.features, group_traits.values(), &mut ws);
                predicted.push(mean_of(ws.probs(), values));
                truth.push(mean_of(s.score_dist.mass(), values));
                loss_sum += emd_loss_raw(ws.probs(), s.score_dist.mass(), 2.0);
            }
        }
        EvalMode::Piaa => {
            let mut target = vec![0.0; params.bins];
            for (image, records) in test.records_by_image() {
                for r in records {
                    let tv = traits
                        .trait_vector(&r.rater_id)
                        .ok_or_else(|| Error::InvalidTable(format!("unknown user {:?}", r.rater_id)))?;
                    forward_into(params, &image.features, tv.values(), &mut ws);
                    predicted.push(mean_of(ws.probs(), values));
                    truth.push(r.score);
                    target.fill(0.0);
                    target[r.bin] = 1.0;
                    loss_sum += emd_loss_raw(ws.probs(), &target, 2.0);
                }
            }
        }
    }
    let n = predicted.len();
    Ok(EvalReport {
        mode,
        srocc: srocc(&predicted, &truth)?,
        plcc: plcc(&predicted, &truth)?,
        emd_loss_mean: loss_sum / n as f64,
        samples: n,
    })
}

fn mean_of(mass: &[f64], values: &[f64]) -> f64 {
    mass.iter().zip(values).map(|(m, v)| m * v).sum()
}
