//! Trait schemas and the one-hot distributional trait encoding.
//!
//! Every rater attribute, numeric ones included, is encoded as a one-hot block.
//! Averaging the blocks of a group gives a per-field frequency distribution
//! that lives in the convex hull of the members' encodings.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scale::SIMPLEX_TOLERANCE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    Categorical { categories: Vec<String> },
    /// Equal-width bins over `[min, max]`, one-hot encoded.
    Numeric { min: f64, max: f64, bins: usize },
    /// Conventional encoding of a numeric trait: a single min-max scaled value.
    Scalar { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitField {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
}

impl TraitField {
    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        TraitField {
            name: name.to_string(),
            kind: FieldKind::Categorical {
                categories: categories.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    pub fn numeric(name: &str, min: f64, max: f64, bins: usize) -> Self {
        TraitField {
            name: name.to_string(),
            kind: FieldKind::Numeric { min, max, bins },
        }
    }

    pub fn scalar(name: &str, min: f64, max: f64) -> Self {
        TraitField {
            name: name.to_string(),
            kind: FieldKind::Scalar { min, max },
        }
    }

    pub fn width(&self) -> usize {
        match &self.kind {
            FieldKind::Categorical { categories } => categories.len(),
            FieldKind::Numeric { bins, .. } => *bins,
            FieldKind::Scalar { .. } => 1,
        }
    }

    /// Whether this field encodes to a one-hot block (and so can define groups).
    pub fn is_one_hot(&self) -> bool {
        !matches!(self.kind, FieldKind::Scalar { .. })
    }

    /// Group labels for the field's one-hot positions. Numeric bins are
    /// labelled by their index (`"0"`, `"1"`, ...).
    pub fn labels(&self) -> Vec<String> {
        match &self.kind {
            FieldKind::Categorical { categories } => categories.clone(),
            FieldKind::Numeric { bins, .. } => (0..*bins).map(|b| b.to_string()).collect(),
            FieldKind::Scalar { .. } => Vec::new(),
        }
    }
}

/// What to do with a rater whose value for a field is absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Route to the category with this label, when the field declares it.
    Unknown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaRepr {
    #[serde(default)]
    name: String,
    #[serde(default)]
    missing: MissingPolicy,
    #[serde(default = "default_unknown_label")]
    unknown_label: String,
    fields: Vec<TraitField>,
}

fn default_unknown_label() -> String {
    "unknown".to_string()
}

/// Ordered list of trait fields; field order fixes the block layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct TraitSchema {
    name: String,
    fields: Vec<TraitField>,
    missing: MissingPolicy,
    unknown_label: String,
    offsets: Vec<usize>,
    total_dim: usize,
    layout_id: u64,
}

impl TryFrom<SchemaRepr> for TraitSchema {
    type Error = Error;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        let mut s = TraitSchema::new(r.name, r.fields)?;
        s.missing = r.missing;
        s.unknown_label = r.unknown_label;
        Ok(s)
    }
}

impl From<TraitSchema> for SchemaRepr {
    fn from(s: TraitSchema) -> Self {
        SchemaRepr {
            name: s.name,
            missing: s.missing,
            unknown_label: s.unknown_label,
            fields: s.fields,
        }
    }
}

impl TraitSchema {
    pub fn new(name: impl Into<String>, fields: Vec<TraitField>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate field {:?}", f.name)));
            }
            match &f.kind {
                FieldKind::Categorical { categories } => {
                    if categories.is_empty() {
                        return Err(Error::InvalidSchema(format!(
                            "field {:?} has no categories",
                            f.name
                        )));
                    }
                    let uniq: HashSet<_> = categories.iter().collect();
                    if uniq.len() != categories.len() {
                        return Err(Error::InvalidSchema(format!(
                            "field {:?} repeats a category",
                            f.name
                        )));
                    }
                }
                FieldKind::Numeric { min, max, bins } => {
                    if !(min < max) || *bins < 2 {
                        return Err(Error::InvalidSchema(format!(
                            "numeric field {:?} needs min < max and bins >= 2",
                            f.name
                        )));
                    }
                }
                FieldKind::Scalar { min, max } => {
                    if !(min < max) {
                        return Err(Error::InvalidSchema(format!(
                            "scalar field {:?} needs min < max",
                            f.name
                        )));
                    }
                }
            }
        }
        let mut offsets = Vec::with_capacity(fields.len());
        let mut total_dim = 0;
        for f in &fields {
            offsets.push(total_dim);
            total_dim += f.width();
        }
        let layout_id = fields.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, f| {
            let h = f
                .name
                .bytes()
                .fold(h, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3));
            (h ^ f.width() as u64).wrapping_mul(0x100_0000_01b3)
        });
        Ok(TraitSchema {
            name: name.into(),
            fields,
            missing: MissingPolicy::Reject,
            unknown_label: default_unknown_label(),
            offsets,
            total_dim,
            layout_id,
        })
    }

    pub fn with_missing_policy(mut self, policy: MissingPolicy, label: &str) -> Self {
        self.missing = policy;
        self.unknown_label = label.to_string();
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&SchemaRepr::from(self.clone())).expect("schema serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fields(&self) -> &[TraitField] {
        &self.fields
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownField(name.to_string()))
    }

    pub fn field(&self, name: &str) -> Result<&TraitField> {
        Ok(&self.fields[self.field_index(name)?])
    }

    /// Offset of each field block within an encoded vector.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn missing_policy(&self) -> &MissingPolicy {
        &self.missing
    }

    /// Position within the field's block that `value` maps to.
    ///
    /// Only meaningful for one-hot fields; scalar fields return `None`.
    pub fn block_position(&self, field_idx: usize, value: &TraitValue) -> Result<Option<usize>> {
        let field = &self.fields[field_idx];
        let value = match value {
            TraitValue::Missing => return self.missing_position(field).map(Some),
            v => v,
        };
        match (&field.kind, value) {
            (FieldKind::Categorical { categories }, TraitValue::Category(label)) => categories
                .iter()
                .position(|c| c == label)
                .map(Some)
                .ok_or_else(|| Error::UnknownCategory {
                    field: field.name.clone(),
                    label: label.clone(),
                }),
            (FieldKind::Categorical { categories }, TraitValue::Number(x)) => {
                // numeric-looking category labels in CSV input
                let label = format_number_label(*x);
                categories
                    .iter()
                    .position(|c| *c == label)
                    .map(Some)
                    .ok_or(Error::UnknownCategory {
                        field: field.name.clone(),
                        label,
                    })
            }
            (FieldKind::Numeric { min, max, bins }, TraitValue::Number(x)) => {
                Ok(Some(numeric_bin(*x, *min, *max, *bins)))
            }
            (FieldKind::Scalar { .. }, TraitValue::Number(_)) => Ok(None),
            (_, TraitValue::Category(label)) => Err(Error::UnknownCategory {
                field: field.name.clone(),
                label: label.clone(),
            }),
            (_, TraitValue::Missing) => unreachable!(),
        }
    }

    fn missing_position(&self, field: &TraitField) -> Result<usize> {
        match (&self.missing, &field.kind) {
            (MissingPolicy::Unknown, FieldKind::Categorical { categories }) => categories
                .iter()
                .position(|c| *c == self.unknown_label)
                .ok_or_else(|| Error::MissingTrait(field.name.clone())),
            _ => Err(Error::MissingTrait(field.name.clone())),
        }
    }

    /// Group label of a rater for a one-hot field.
    pub fn label_of(&self, rater: &Rater, field_idx: usize) -> Result<String> {
        let field = &self.fields[field_idx];
        if !field.is_one_hot() {
            return Err(Error::InvalidConfig(format!(
                "field {:?} is scalar-encoded and defines no groups",
                field.name
            )));
        }
        let value = rater.value(&field.name);
        let pos = self
            .block_position(field_idx, &value)?
            .expect("one-hot field has a position");
        Ok(field.labels().swap_remove(pos))
    }

    /// Sum of each field block of `values`.
    pub fn block_sums(&self, values: &[f64]) -> Vec<f64> {
        self.fields
            .iter()
            .zip(&self.offsets)
            .map(|(f, &o)| values[o..o + f.width()].iter().sum())
            .collect()
    }

    /// PARA-style schema with every trait one-hot encoded (70 dimensions).
    pub fn para_onehot() -> Self {
        Self::para_with(|name| TraitField::numeric(name, 1.0, 10.0, 10), "para-onehot")
    }

    /// PARA-style schema with Big-5 kept as scalars (25 dimensions).
    pub fn para_conventional() -> Self {
        Self::para_with(|name| TraitField::scalar(name, 1.0, 10.0), "para-conventional")
    }

    fn para_with(big5: impl Fn(&str) -> TraitField, name: &str) -> Self {
        let experience = ["beginner", "competent", "proficient", "expert"];
        let mut fields = vec![
            TraitField::categorical("gender", &["female", "male"]),
            TraitField::categorical("age", &["18-21", "22-25", "26-29", "30-34", "35-40"]),
            TraitField::categorical(
                "education",
                &[
                    "junior high",
                    "senior high",
                    "technical secondary",
                    "junior college",
                    "university",
                ],
            ),
            TraitField::categorical("photo_experience", &experience),
            TraitField::categorical("art_experience", &experience),
        ];
        for trait_name in [
            "openness",
            "conscientiousness",
            "extraversion",
            "agreeableness",
            "neuroticism",
        ] {
            fields.push(big5(trait_name));
        }
        TraitSchema::new(name, fields).expect("static schema")
    }

    /// LAPIS-style schema with VAIAK scores one-hot encoded (137 dimensions).
    pub fn lapis_onehot() -> Self {
        Self::lapis_with(|name| TraitField::numeric(name, 1.0, 7.0, 7), "lapis-onehot")
    }

    /// LAPIS-style schema with VAIAK scores kept as scalars (71 dimensions).
    pub fn lapis_conventional() -> Self {
        Self::lapis_with(|name| TraitField::scalar(name, 1.0, 7.0), "lapis-conventional")
    }

    fn lapis_with(vaiak: impl Fn(&str) -> TraitField, name: &str) -> Self {
        let mut fields = vec![
            TraitField::categorical("gender", &["female", "male", "non-binary", "unknown"]),
            TraitField::categorical("colorblind", &["no", "yes"]),
            TraitField::categorical("age", &["18-27", "28-38", "39-49", "50-60", "61-71"]),
            TraitField::categorical(
                "education",
                &["primary", "secondary", "bachelor", "master", "doctorate"],
            ),
            TraitField::categorical("nationality", &LAPIS_NATIONALITIES),
        ];
        for k in 1..=7 {
            fields.push(vaiak(&format!("vaiak{k}")));
        }
        for k in 1..=4 {
            fields.push(vaiak(&format!("2vaiak{k}")));
        }
        TraitSchema::new(name, fields)
            .expect("static schema")
            .with_missing_policy(MissingPolicy::Unknown, "unknown")
    }

    /// Resolve a built-in schema by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "para" | "para-onehot" => Some(Self::para_onehot()),
            "para-conventional" => Some(Self::para_conventional()),
            "lapis" | "lapis-onehot" => Some(Self::lapis_onehot()),
            "lapis-conventional" => Some(Self::lapis_conventional()),
            "demographics" => Some(Self::demographics()),
            _ => None,
        }
    }

    /// A preset name, or the path of a TOML schema file.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.is_file() {
            return Self::load(path);
        }
        Self::preset(spec).ok_or_else(|| Error::InvalidSchema(format!("unknown preset {spec:?} and no such file")))
    }

    /// The five categorical fields of the PARA-style schema.
    pub fn demographics() -> Self {
        let fields = Self::para_onehot()
            .fields
            .into_iter()
            .filter(|f| matches!(f.kind, FieldKind::Categorical { .. }))
            .collect();
        TraitSchema::new("demographics", fields).expect("subset of a static schema")
    }
}

const LAPIS_NATIONALITIES: [&str; 44] = [
    "British",
    "South African",
    "American",
    "Portuguese",
    "Hungarian",
    "Malaysian",
    "Belgian",
    "Northern Irish",
    "Polish",
    "Slovenian",
    "Spanish",
    "Italian",
    "Egyptian",
    "Scottish",
    "Mexican",
    "Irish",
    "South Korean",
    "Greek",
    "Czech",
    "Brazilian",
    "Canadian",
    "Indian",
    "Ugandan",
    "Zimbabwean",
    "Dutch",
    "Welsh",
    "French",
    "Finnish",
    "German",
    "Bangladeshi",
    "Lithuanian",
    "Australian",
    "Tunisian",
    "Swiss",
    "Romanian",
    "Chilean",
    "Austrian",
    "Nigerien",
    "Estonian",
    "Bulgarian",
    "Turkish",
    "Vietnamese",
    "Latvian",
    "Malawian",
];

fn format_number_label(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Equal-width bin of `x` over `[min, max]`, clamping out-of-range values.
pub fn numeric_bin(x: f64, min: f64, max: f64, bins: usize) -> usize {
    let clamped = x.clamp(min, max);
    let b = ((clamped - min) / (max - min) * bins as f64).floor();
    (b.max(0.0) as usize).min(bins - 1)
}

/// Total encoded width of a schema.
pub fn schema_dimension(schema: &TraitSchema) -> usize {
    schema.total_dim()
}

/// A raw trait value as ingested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraitValue {
    Number(f64),
    Category(String),
    Missing,
}

impl TraitValue {
    /// Interpret a CSV cell for a field of the given kind.
    pub fn parse(cell: &str, kind: &FieldKind) -> std::result::Result<Self, String> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Ok(TraitValue::Missing);
        }
        match kind {
            FieldKind::Categorical { .. } => Ok(TraitValue::Category(cell.to_string())),
            FieldKind::Numeric { .. } | FieldKind::Scalar { .. } => cell
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(TraitValue::Number)
                .ok_or_else(|| format!("expected a number, got {cell:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rater {
    pub id: String,
    pub traits: BTreeMap<String, TraitValue>,
}

impl Rater {
    pub fn new(id: impl Into<String>) -> Self {
        Rater {
            id: id.into(),
            traits: BTreeMap::new(),
        }
    }

    pub fn with(mut self, field: &str, value: TraitValue) -> Self {
        self.traits.insert(field.to_string(), value);
        self
    }

    pub fn with_category(self, field: &str, label: &str) -> Self {
        self.with(field, TraitValue::Category(label.to_string()))
    }

    pub fn with_number(self, field: &str, x: f64) -> Self {
        self.with(field, TraitValue::Number(x))
    }

    pub fn value(&self, field: &str) -> TraitValue {
        self.traits.get(field).cloned().unwrap_or(TraitValue::Missing)
    }
}

/// Encoded traits of one rater: one indicator per one-hot block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitVector {
    values: Vec<f64>,
    layout_id: u64,
}

/// Group-averaged encoded traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitDistribution {
    values: Vec<f64>,
    layout_id: u64,
}

impl TraitVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn layout_id(&self) -> u64 {
        self.layout_id
    }

    /// A group of one.
    pub fn to_distribution(&self) -> TraitDistribution {
        TraitDistribution {
            values: self.values.clone(),
            layout_id: self.layout_id,
        }
    }
}

impl TraitDistribution {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn layout_id(&self) -> u64 {
        self.layout_id
    }

    /// Checks the block-sum invariant against `schema`.
    pub fn is_valid_for(&self, schema: &TraitSchema) -> bool {
        self.layout_id == schema.layout_id
            && self.values.iter().all(|v| (0.0..=1.0 + SIMPLEX_TOLERANCE).contains(v))
            && schema
                .fields()
                .iter()
                .zip(schema.block_sums(&self.values))
                .all(|(f, s)| !f.is_one_hot() || (s - 1.0).abs() <= SIMPLEX_TOLERANCE)
    }
}

/// One-hot encode a rater under `schema`.
pub fn encode_trait(rater: &Rater, schema: &TraitSchema) -> Result<TraitVector> {
    let mut values = vec![0.0; schema.total_dim()];
    for (idx, (field, &offset)) in schema.fields().iter().zip(schema.offsets()).enumerate() {
        let value = rater.value(&field.name);
        match schema.block_position(idx, &value)? {
            Some(pos) => values[offset + pos] = 1.0,
            None => {
                if let (FieldKind::Scalar { min, max }, TraitValue::Number(x)) = (&field.kind, &value)
                {
                    values[offset] = ((x - min) / (max - min)).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(TraitVector {
        values,
        layout_id: schema.layout_id,
    })
}

/// Component-wise mean of a group's trait vectors.
pub fn average_trait_vectors<'a, I>(vectors: I) -> Result<TraitDistribution>
where
    I: IntoIterator<Item = &'a TraitVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptyGroup)?;
    let mut sum = first.values.clone();
    let mut n = 1usize;
    for v in iter {
        if v.layout_id != first.layout_id || v.values.len() != sum.len() {
            return Err(Error::SchemaMismatch);
        }
        for (s, x) in sum.iter_mut().zip(&v.values) {
            *s += x;
        }
        n += 1;
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    Ok(TraitDistribution {
        values: sum,
        layout_id: first.layout_id,
    })
}
