use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::AnnotationTable;
use crate::error::{Error, Result, Side};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    /// 25,398 / 2,822 / 3,000 out of 31,220 images.
    pub const PARA: SplitRatios = SplitRatios {
        train: 25_398.0 / 31_220.0,
        val: 2_822.0 / 31_220.0,
        test: 3_000.0 / 31_220.0,
    };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidRatios("ratios must be positive".into()));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("ratios sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Partition sizes for `n` items; rounding remainder goes to train.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let val = (n as f64 * self.val).round() as usize;
        let test = (n as f64 * self.test).round() as usize;
        if val == 0 || test == 0 || val + test >= n {
            return Err(Error::TooFewImages(n));
        }
        Ok((n - val - test, val, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSplit {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSplit {
    pub field: String,
    pub test_values: BTreeSet<String>,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    SharedUsers,
    DisjointUsers,
}

/// Full train/val/test assignment of images and users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub mode: SplitMode,
    pub seed: u64,
    pub train_images: BTreeSet<String>,
    pub val_images: BTreeSet<String>,
    pub test_images: BTreeSet<String>,
    pub train_users: BTreeSet<String>,
    pub test_users: BTreeSet<String>,
}

impl SplitManifest {
    /// Every rater is both a training and a test user; only images differ.
    pub fn shared(images: ImageSplit, table: &AnnotationTable) -> Self {
        let users: BTreeSet<String> = table.rater_ids().map(str::to_string).collect();
        SplitManifest {
            mode: SplitMode::SharedUsers,
            seed: images.seed,
            train_images: images.train,
            val_images: images.val,
            test_images: images.test,
            train_users: users.clone(),
            test_users: users,
        }
    }

    pub fn disjoint(images: ImageSplit, users: UserSplit) -> Self {
        SplitManifest {
            mode: SplitMode::DisjointUsers,
            seed: images.seed,
            train_images: images.train,
            val_images: images.val,
            test_images: images.test,
            train_users: users.train,
            test_users: users.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let overlap = |a: &BTreeSet<String>, b: &BTreeSet<String>| a.intersection(b).next().is_some();
        if overlap(&self.train_images, &self.val_images)
            || overlap(&self.train_images, &self.test_images)
            || overlap(&self.val_images, &self.test_images)
        {
            return Err(Error::InvalidConfig("image sets overlap".into()));
        }
        if self.mode == SplitMode::DisjointUsers && overlap(&self.train_users, &self.test_users) {
            return Err(Error::InvalidConfig("user sets overlap in disjoint mode".into()));
        }
        Ok(())
    }
}

/// Seeded shuffle of the table's images into train/val/test.
pub fn split_images(table: &AnnotationTable, ratios: SplitRatios, seed: u64) -> Result<ImageSplit> {
    let mut ids: Vec<String> = table.image_ids().map(str::to_string).collect();
    let (n_train, n_val, _) = ratios.sizes(ids.len())?;
    ids.shuffle(&mut rng::substream(seed, "split-images"));
    let mut rest = ids.into_iter();
    let train = rest.by_ref().take(n_train).collect();
    let val = rest.by_ref().take(n_val).collect();
    let test = rest.collect();
    Ok(ImageSplit { train, val, test, seed })
}

/// Raters whose `field` label lies in `test_values` become test users; the
/// rest train.
pub fn split_users_disjoint(
    table: &AnnotationTable,
    field: &str,
    test_values: &BTreeSet<String>,
) -> Result<UserSplit> {
    let f = table.schema().field(field)?;
    let labels = f.labels();
    if let Some(bad) = test_values.iter().find(|v| !labels.contains(v)) {
        return Err(Error::UnknownCategory {
            field: field.to_string(),
            label: bad.clone(),
        });
    }
    if test_values.is_empty() {
        return Err(Error::EmptySide(Side::Test));
    }
    let test = table.raters_with_labels(field, test_values)?;
    let train: BTreeSet<String> = table
        .rater_ids()
        .filter(|id| !test.contains(*id))
        .map(str::to_string)
        .collect();
    if test.is_empty() {
        return Err(Error::EmptySide(Side::Test));
    }
    if train.is_empty() {
        return Err(Error::EmptySide(Side::Train));
    }
    Ok(UserSplit {
        field: field.to_string(),
        test_values: test_values.clone(),
        train,
        test,
    })
}

/// The three record sets a manifest selects.
#[derive(Debug, Clone)]
pub struct MaterializedSplit {
    pub train: AnnotationTable,
    pub val: AnnotationTable,
    pub test: AnnotationTable,
}

/// train = train images x train users, val = val images x train users,
/// test = test images x test users.
pub fn materialize_sets(table: &AnnotationTable, manifest: &SplitManifest) -> Result<MaterializedSplit> {
    manifest.validate()?;
    let train = table.restrict(Some(&manifest.train_images), Some(&manifest.train_users));
    let val = table.restrict(Some(&manifest.val_images), Some(&manifest.train_users));
    let test = table.restrict(Some(&manifest.test_images), Some(&manifest.test_users));
    for (name, set) in [("train", &train), ("val", &val), ("test", &test)] {
        if set.records().is_empty() {
            return Err(Error::EmptySet(name.to_string()));
        }
    }
    Ok(MaterializedSplit { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::*;
    use crate::dataset::ImageEntry;
    use crate::scale::ScoreScale;

    fn table_with_images(n: usize) -> AnnotationTable {
        let images = (0..n)
            .map(|k| ImageEntry { id: format!("img{k:03}"), features: vec![] })
            .collect();
        let raters = vec![rater("a", "female", "school"), rater("b", "male", "college")];
        let records = (0..n)
            .flat_map(|k| {
                [
                    (format!("img{k:03}"), "a".to_string(), (k % 11) as f64),
                    (format!("img{k:03}"), "b".to_string(), ((k + 3) % 11) as f64),
                ]
            })
            .collect();
        AnnotationTable::new(ScoreScale::lapis(), tiny_schema(), images, raters, records).unwrap()
    }

    #[test]
    fn ten_images_eight_one_one() {
        let t = table_with_images(10);
        let s = split_images(&t, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, split_images(&t, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 1).unwrap());
    }

    #[test]
    fn para_reference_sizes() {
        assert_eq!(SplitRatios::PARA.sizes(31_220).unwrap(), (25_398, 2_822, 3_000));
    }

    #[test]
    fn bad_ratios() {
        assert!(SplitRatios::new(0.8, 0.1, 0.2).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
        let t = table_with_images(3);
        assert!(matches!(
            split_images(&t, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 0),
            Err(Error::TooFewImages(3))
        ));
    }

    #[test]
    fn disjoint_users() {
        let t = small_table();
        let s = split_users_disjoint(&t, "education", &["school".to_string()].into()).unwrap();
        assert_eq!(s.test, ["a".to_string(), "d".to_string()].into());
        assert_eq!(s.train, ["b".to_string(), "c".to_string()].into());
        let all: BTreeSet<String> = ["school", "college", "university"].iter().map(|s| s.to_string()).collect();
        assert!(matches!(
            split_users_disjoint(&t, "education", &all),
            Err(Error::EmptySide(Side::Train))
        ));
        assert!(matches!(
            split_users_disjoint(&t, "height", &all),
            Err(Error::UnknownField(_))
        ));
    }

    #[test]
    fn materialize_brute_force_counts() {
        let t = table_with_images(20);
        let images = split_images(&t, SplitRatios::new(0.6, 0.2, 0.2).unwrap(), 9).unwrap();
        let users = split_users_disjoint(&t, "gender", &["male".to_string()].into()).unwrap();
        let m = SplitManifest::disjoint(images, users);
        let sets = materialize_sets(&t, &m).unwrap();
        let count = |imgs: &BTreeSet<String>, us: &BTreeSet<String>| {
            t.records()
                .iter()
                .filter(|r| imgs.contains(&r.image_id) && us.contains(&r.rater_id))
                .count()
        };
        assert_eq!(sets.train.records().len(), count(&m.train_images, &m.train_users));
        assert_eq!(sets.val.records().len(), count(&m.val_images, &m.train_users));
        assert_eq!(sets.test.records().len(), count(&m.test_images, &m.test_users));
        for r in sets.test.records() {
            assert!(!sets.train.records().iter().any(|q| q.image_id == r.image_id || q.rater_id == r.rater_id));
        }
    }

    #[test]
    fn shared_mode_uses_all_users() {
        let t = table_with_images(10);
        let images = split_images(&t, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 2).unwrap();
        let m = SplitManifest::shared(images, &t);
        assert_eq!(m.train_users, m.test_users);
        let json = serde_json::to_string(&m).unwrap();
        let back: SplitManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
