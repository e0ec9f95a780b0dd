//! Synthetic rater populations and the transfer / disjoint-demographic
//! experiments run on them.
//!
//! Scores follow a latent additive model: per-image quality, a demographic
//! bias per rater, a trait-by-feature interaction, and Gaussian noise,
//! quantized to the nearest scale level (ties toward the lower level).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augment::{augmented_giaa, SubsampleConfig};
use crate::dataset::{
    build_giaa, build_piaa, materialize_sets, split_images, split_users_disjoint, AnnotationTable, ImageEntry,
    SplitManifest, SplitRatios,
};
use crate::error::{Error, Result};
use crate::metrics::group_emd;
use crate::model::{evaluate, train, EvalMode, EvalReport, TrainConfig};
use crate::rng::{self, Rng as StreamRng};
use crate::scale::ScoreScale;
use crate::schema::{FieldKind, Rater, TraitSchema, TraitValue};

/// A scale given by preset name or explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSpec {
    Preset(String),
    Explicit(ScoreScale),
}

impl ScaleSpec {
    pub fn resolve(&self) -> Result<ScoreScale> {
        match self {
            ScaleSpec::Preset(name) => {
                ScoreScale::preset(name).ok_or_else(|| Error::InvalidConfig(format!("unknown scale preset {name:?}")))
            }
            ScaleSpec::Explicit(s) => Ok(s.clone()),
        }
    }
}

/// A schema given by preset name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSpec {
    Preset(String),
    Inline(TraitSchema),
}

impl SchemaSpec {
    pub fn resolve(&self) -> Result<TraitSchema> {
        match self {
            SchemaSpec::Preset(name) => {
                TraitSchema::preset(name).ok_or_else(|| Error::InvalidConfig(format!("unknown schema preset {name:?}")))
            }
            SchemaSpec::Inline(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub n_raters: usize,
    pub n_images: usize,
    pub feature_dim: usize,
    /// Raters drawn per image; `None` means every rater rates every image.
    pub raters_per_image: Option<usize>,
    pub scale: ScaleSpec,
    pub schema: SchemaSpec,
    /// Latent score of an average image; defaults to the scale midpoint.
    pub base_score: Option<f64>,
    /// Standard deviation of per-image quality.
    pub quality_scale: f64,
    /// Per field, the score bias of each one-hot position.
    pub effects: BTreeMap<String, Vec<f64>>,
    /// Per field, sampling weights of each one-hot position (default uniform).
    pub priors: BTreeMap<String, Vec<f64>>,
    /// Strength of the trait-by-feature interaction.
    pub gamma: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_raters: 200,
            n_images: 500,
            feature_dim: 8,
            raters_per_image: None,
            scale: ScaleSpec::Preset("lapis".into()),
            schema: SchemaSpec::Preset("demographics".into()),
            base_score: None,
            quality_scale: 1.5,
            effects: BTreeMap::new(),
            priors: BTreeMap::new(),
            gamma: 0.0,
            sigma: 0.0,
            seed: 0,
        }
    }
}

impl PopulationConfig {
    /// A population whose raters differ by demographics: education and
    /// photography experience matter most, gender least.
    pub fn heterogeneous(seed: u64) -> Self {
        let effects = [
            ("gender", vec![0.1, -0.1]),
            ("age", vec![-0.6, -0.2, 0.0, 0.3, 0.7]),
            ("education", vec![-1.6, -0.6, 0.0, 0.5, 1.2]),
            ("photo_experience", vec![0.9, 0.2, -0.4, -1.4]),
            ("art_experience", vec![0.5, 0.1, -0.2, -0.8]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        PopulationConfig {
            raters_per_image: Some(40),
            effects,
            gamma: 0.6,
            sigma: 0.7,
            seed,
            ..Default::default()
        }
    }

    /// No subjectivity: every rater gives the same score to an image.
    pub fn homogeneous(seed: u64) -> Self {
        PopulationConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: PopulationConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_raters < 4 || self.n_images < 4 {
            return Err(Error::InvalidConfig("need at least 4 raters and 4 images".into()));
        }
        if !(self.sigma >= 0.0) || !self.gamma.is_finite() || !(self.quality_scale >= 0.0) {
            return Err(Error::InvalidConfig("sigma and quality_scale must be >= 0, gamma finite".into()));
        }
        if let Some(k) = self.raters_per_image {
            if k == 0 || k > self.n_raters {
                return Err(Error::InvalidConfig(format!(
                    "raters_per_image must be in 1..={}",
                    self.n_raters
                )));
            }
        }
        let schema = self.schema.resolve()?;
        self.scale.resolve()?;
        for (name, table) in [("effects", &self.effects), ("priors", &self.priors)] {
            for (field, values) in table {
                let f = schema.field(field)?;
                if !f.is_one_hot() || values.len() != f.width() {
                    return Err(Error::InvalidConfig(format!(
                        "{name} for {field:?} must list {} values for a one-hot field",
                        f.width()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("non-finite {name} for {field:?}")));
                }
            }
        }
        for (field, p) in &self.priors {
            if p.iter().any(|w| *w < 0.0) || !(p.iter().sum::<f64>() > 0.0) {
                return Err(Error::InvalidConfig(format!("priors for {field:?} must be non-negative")));
            }
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn pick_weighted(rng: &mut StreamRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

struct LatentRater {
    bias: f64,
    direction: Vec<f64>,
}

/// Generate a table from the latent score model. Every random draw is
/// independent of the effect weights, so changing a weight with the same seed
/// changes only the scores it touches.
pub fn gen_population(config: &PopulationConfig) -> Result<AnnotationTable> {
    config.validate()?;
    let scale = config.scale.resolve()?;
    let schema = config.schema.resolve()?;
    let base = config.base_score.unwrap_or(0.5 * (scale.min() + scale.max()));
    let seed = config.seed;
    let dim = config.feature_dim;

    let mut feat_rng = rng::substream(seed, "features");
    let images: Vec<ImageEntry> = (0..config.n_images)
        .map(|i| ImageEntry {
            id: format!("img{i:05}"),
            features: (0..dim).map(|_| StandardNormal.sample(&mut feat_rng)).collect(),
        })
        .collect();
    let quality_dir = unit_vector(&mut rng::substream(seed, "quality"), dim.max(1));
    let field_dirs: Vec<Vec<f64>> = schema
        .fields()
        .iter()
        .map(|f| unit_vector(&mut rng::substream(seed, &format!("direction/{}", f.name)), dim.max(1)))
        .collect();

    let mut trait_rng = rng::substream(seed, "raters");
    let mut raters = Vec::with_capacity(config.n_raters);
    let mut latent = Vec::with_capacity(config.n_raters);
    for u in 0..config.n_raters {
        let mut rater = Rater::new(format!("u{u:04}"));
        let mut bias = 0.0;
        let mut direction = vec![0.0; dim];
        for (f, field_dir) in schema.fields().iter().zip(&field_dirs) {
            let uniform = vec![1.0; f.width()];
            let prior = config.priors.get(&f.name).unwrap_or(&uniform);
            let (value, pos) = match &f.kind {
                FieldKind::Categorical { categories } => {
                    let k = pick_weighted(&mut trait_rng, prior);
                    (TraitValue::Category(categories[k].clone()), Some(k))
                }
                FieldKind::Numeric { min, max, bins } => {
                    let k = pick_weighted(&mut trait_rng, prior);
                    let w = (max - min) / *bins as f64;
                    let x = min + w * (k as f64 + trait_rng.random_range(0.05..0.95));
                    (TraitValue::Number(x), Some(k))
                }
                FieldKind::Scalar { min, max } => (TraitValue::Number(trait_rng.random_range(*min..=*max)), None),
            };
            if let (Some(k), Some(effect)) = (pos, config.effects.get(&f.name)) {
                bias += effect[k];
                for (d, a) in direction.iter_mut().zip(field_dir) {
                    *d += effect[k] * a;
                }
            }
            rater.traits.insert(f.name.clone(), value);
        }
        raters.push(rater);
        latent.push(LatentRater { bias, direction });
    }

    let mut records = Vec::new();
    for img in &images {
        let quality = config.quality_scale * img.features.iter().zip(&quality_dir).map(|(x, b)| x * b).sum::<f64>();
        let members: Vec<usize> = match config.raters_per_image {
            Some(k) => {
                let mut v = index::sample(&mut rng::substream(seed, &format!("assign/{}", img.id)), config.n_raters, k)
                    .into_vec();
                v.sort_unstable();
                v
            }
            None => (0..config.n_raters).collect(),
        };
        let mut noise_rng = rng::substream(seed, &format!("noise/{}", img.id));
        for u in members {
            let eps: f64 = StandardNormal.sample(&mut noise_rng);
            let lr = &latent[u];
            let interaction: f64 = lr.direction.iter().zip(&img.features).map(|(d, x)| d * x).sum();
            let latent_score = base + quality + lr.bias + config.gamma * interaction + config.sigma * eps;
            let level = scale.values()[scale.quantize(latent_score)];
            records.push((img.id.clone(), raters[u].id.clone(), level));
        }
    }
    AnnotationTable::new(scale, schema, images, raters, records)
}

/// Splits and optimizer settings shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSpec {
    pub ratios: SplitRatios,
    pub split_seed: u64,
    pub giaa: TrainConfig,
    pub piaa: TrainConfig,
    /// When set, also train a GIAA model with sGIAA augmentation.
    pub augment: Option<SubsampleConfig>,
}

impl Default for TransferSpec {
    fn default() -> Self {
        let base = TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            hidden: 32,
            batch_size: 32,
            loss_exponent: 2.0,
            epochs: 1,
            seed: 1,
        };
        TransferSpec {
            ratios: SplitRatios { train: 0.8, val: 0.1, test: 0.1 },
            split_seed: 1,
            giaa: TrainConfig { epochs: 120, ..base.clone() },
            piaa: TrainConfig { epochs: 4, ..base },
            augment: Some(SubsampleConfig {
                samples_per_image: 4,
                k_min: 2,
                k_max: usize::MAX,
                seed: 1,
            }),
        }
    }
}

/// Both models evaluated in both modes (SROCC and PLCC per cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub giaa_on_giaa: EvalReport,
    /// G->P zero-shot.
    pub giaa_on_piaa: EvalReport,
    pub piaa_on_piaa: EvalReport,
    /// P->G zero-shot.
    pub piaa_on_giaa: EvalReport,
    pub sgiaa_on_giaa: Option<EvalReport>,
    pub sgiaa_on_piaa: Option<EvalReport>,
}

impl TransferReport {
    /// SROCC lost by evaluating the PIAA-trained model on GIAA data.
    pub fn p_to_g_gap(&self) -> f64 {
        self.giaa_on_giaa.srocc - self.piaa_on_giaa.srocc
    }

    /// SROCC lost by evaluating the GIAA-trained model on PIAA data.
    pub fn g_to_p_gap(&self) -> f64 {
        self.piaa_on_piaa.srocc - self.giaa_on_piaa.srocc
    }
}

/// Train GIAA and PIAA models (and optionally an sGIAA-augmented GIAA model)
/// on the same shared-user image split and evaluate every model in both modes.
pub fn run_transfer_experiment(config: &PopulationConfig, spec: &TransferSpec) -> Result<TransferReport> {
    let table = gen_population(config)?;
    transfer_on_table(&table, spec)
}

pub fn transfer_on_table(table: &AnnotationTable, spec: &TransferSpec) -> Result<TransferReport> {
    let manifest = SplitManifest::shared(split_images(table, spec.ratios, spec.split_seed)?, table);
    let sets = materialize_sets(table, &manifest)?;
    let giaa_model = train(&build_giaa(&sets.train, None)?, &spec.giaa)?.params;
    let piaa_model = train(&build_piaa(&sets.train, None)?, &spec.piaa)?.params;
    let (sgiaa_on_giaa, sgiaa_on_piaa) = match &spec.augment {
        Some(aug) => {
            let model = train(&augmented_giaa(&sets.train, aug)?, &spec.giaa)?.params;
            (
                Some(evaluate(&model, table, &manifest, EvalMode::Giaa)?),
                Some(evaluate(&model, table, &manifest, EvalMode::Piaa)?),
            )
        }
        None => (None, None),
    };
    Ok(TransferReport {
        giaa_on_giaa: evaluate(&giaa_model, table, &manifest, EvalMode::Giaa)?,
        giaa_on_piaa: evaluate(&giaa_model, table, &manifest, EvalMode::Piaa)?,
        piaa_on_piaa: evaluate(&piaa_model, table, &manifest, EvalMode::Piaa)?,
        piaa_on_giaa: evaluate(&piaa_model, table, &manifest, EvalMode::Giaa)?,
        sgiaa_on_giaa,
        sgiaa_on_piaa,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub ratios: SplitRatios,
    pub split_seed: u64,
    pub train: TrainConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let t = TransferSpec::default();
        SweepSpec {
            ratios: t.ratios,
            split_seed: t.split_seed,
            train: t.giaa,
        }
    }
}

/// One disjoint-demographic split of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub field: String,
    pub test_values: Vec<String>,
    pub group_emd: Option<f64>,
    pub test_srocc: Option<f64>,
    pub train_users: usize,
    pub test_users: usize,
    /// Why the split was skipped, if it was.
    pub skipped: Option<String>,
}

/// For every label of every listed field: hold out that demographic as test
/// users, train a GIAA model on the rest, and record the group EMD and test
/// SROCC.
pub fn run_disjoint_sweep(config: &PopulationConfig, fields: &[String], spec: &SweepSpec) -> Result<Vec<SweepEntry>> {
    let table = gen_population(config)?;
    sweep_on_table(&table, fields, spec)
}

pub fn sweep_on_table(table: &AnnotationTable, fields: &[String], spec: &SweepSpec) -> Result<Vec<SweepEntry>> {
    let images = split_images(table, spec.ratios, spec.split_seed)?;
    let mut out = Vec::new();
    for field in fields {
        for label in table.schema().field(field)?.labels() {
            let test_values: BTreeSet<String> = [label.clone()].into();
            let mut entry = SweepEntry {
                field: field.clone(),
                test_values: vec![label],
                group_emd: None,
                test_srocc: None,
                train_users: 0,
                test_users: 0,
                skipped: None,
            };
            let run = || -> Result<(usize, usize, f64, f64)> {
                let users = split_users_disjoint(table, field, &test_values)?;
                let emd = group_emd(table, &users.train, &users.test)?;
                let (n_train, n_test) = (users.train.len(), users.test.len());
                let manifest = SplitManifest::disjoint(images.clone(), users);
                let sets = materialize_sets(table, &manifest)?;
                let model = train(&build_giaa(&sets.train, None)?, &spec.train)?.params;
                let rep = evaluate(&model, table, &manifest, EvalMode::Giaa)?;
                Ok((n_train, n_test, emd, rep.srocc))
            };
            match run() {
                Ok((n_train, n_test, emd, srocc)) => {
                    entry.train_users = n_train;
                    entry.test_users = n_test;
                    entry.group_emd = Some(emd);
                    entry.test_srocc = Some(srocc);
                }
                Err(e @ (Error::EmptySide(_) | Error::EmptySet(_) | Error::EmptyResult | Error::DegenerateInput(_))) => {
                    entry.skipped = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
            out.push(entry);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::group_emd;

    fn small(seed: u64) -> PopulationConfig {
        PopulationConfig {
            n_raters: 40,
            n_images: 30,
            raters_per_image: None,
            ..PopulationConfig::heterogeneous(seed)
        }
    }

    #[test]
    fn deterministic_tables() {
        let a = gen_population(&small(3)).unwrap();
        let b = gen_population(&small(3)).unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(a.images(), b.images());
        let c = gen_population(&small(4)).unwrap();
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn homogeneous_raters_agree() {
        let cfg = PopulationConfig { n_raters: 30, n_images: 20, ..PopulationConfig::homogeneous(2) };
        let t = gen_population(&cfg).unwrap();
        for (_, recs) in t.records_by_image() {
            assert!(recs.iter().all(|r| r.score == recs[0].score));
        }
        let users = crate::dataset::split_users_disjoint(&t, "education", &["university".to_string()].into()).unwrap();
        assert_eq!(group_emd(&t, &users.train, &users.test).unwrap(), 0.0);
    }

    #[test]
    fn weighted_field_separates_more() {
        let mut cfg = small(5);
        cfg.effects.clear();
        cfg.effects.insert("education".into(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let t = gen_population(&cfg).unwrap();
        let emd = |field: &str, label: &str| {
            let u = crate::dataset::split_users_disjoint(&t, field, &[label.to_string()].into()).unwrap();
            group_emd(&t, &u.train, &u.test).unwrap()
        };
        assert!(emd("education", "junior high") > emd("gender", "female"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(1);
        cfg.effects.insert("education".into(), vec![1.0]);
        assert!(gen_population(&cfg).is_err());
        let mut cfg = small(1);
        cfg.effects.insert("shoe_size".into(), vec![1.0]);
        assert!(matches!(gen_population(&cfg), Err(Error::UnknownField(_))));
        let cfg = PopulationConfig { n_raters: 3, ..small(1) };
        assert!(gen_population(&cfg).is_err());
    }

    #[test]
    fn config_from_toml() {
        let text = r#"
            n_raters = 10
            n_images = 12
            feature_dim = 3
            scale = "para"
            schema = "demographics"
            gamma = 0.2
            sigma = 0.1
            seed = 9
            [effects]
            gender = [0.5, -0.5]
        "#;
        let cfg = PopulationConfig::from_toml_str(text).unwrap();
        let t = gen_population(&cfg).unwrap();
        assert_eq!(t.scale().name(), "para");
        assert_eq!(t.images().len(), 12);
        assert_eq!(t.records().len(), 12 * 10);
    }
}
