use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{AnnotationTable, ImageEntry};
use crate::error::{Error, Result};
use crate::scale::ScoreScale;
use crate::schema::{FieldKind, Rater, TraitSchema, TraitValue};

const FIXED_COLUMNS: [&str; 3] = ["image_id", "user_id", "score"];

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

/// Read an annotation CSV (`image_id,user_id,score,<trait columns>`) and an
/// optional feature sidecar (`image_id,x1,...,xk`, no header).
pub fn ingest_annotations(
    path: &Path,
    schema: &TraitSchema,
    scale: &ScoreScale,
    features: Option<&Path>,
) -> Result<AnnotationTable> {
    let feature_map = match features {
        Some(p) => Some(read_features(std::fs::File::open(p)?)?),
        None => None,
    };
    ingest_reader(std::fs::File::open(path)?, schema, scale, feature_map)
}

pub(crate) fn ingest_reader<R: Read>(
    reader: R,
    schema: &TraitSchema,
    scale: &ScoreScale,
    features: Option<BTreeMap<String, Vec<f64>>>,
) -> Result<AnnotationTable> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers()?.clone();
    let expected: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(schema.fields().iter().map(|f| f.name.as_str()))
        .collect();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("header {:?} does not match expected {:?}", got, expected),
        });
    }

    let mut raters: BTreeMap<String, (Rater, usize)> = BTreeMap::new();
    let mut image_ids: BTreeMap<String, ()> = BTreeMap::new();
    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = line_of(&row);
        let parse_err = |message: String| Error::Parse { line, message };
        let image_id = row[0].trim().to_string();
        let user_id = row[1].trim().to_string();
        if image_id.is_empty() || user_id.is_empty() {
            return Err(parse_err("empty image_id or user_id".into()));
        }
        let score: f64 = row[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad score {:?}", &row[2])))?;
        scale.snap(score)?;

        let mut rater = Rater::new(user_id.clone());
        for (k, field) in schema.fields().iter().enumerate() {
            let value = TraitValue::parse(&row[3 + k], &field.kind).map_err(&parse_err)?;
            if let (FieldKind::Categorical { .. }, TraitValue::Category(_)) = (&field.kind, &value) {
                schema.block_position(k, &value)?;
            }
            rater.traits.insert(field.name.clone(), value);
        }
        match raters.get(&user_id) {
            Some((known, first_line)) if known.traits != rater.traits => {
                return Err(parse_err(format!(
                    "traits of user {user_id:?} differ from line {first_line}"
                )));
            }
            Some(_) => {}
            None => {
                raters.insert(user_id.clone(), (rater, line));
            }
        }
        image_ids.insert(image_id.clone(), ());
        records.push((image_id, user_id, score));
    }

    let images = image_ids
        .into_keys()
        .map(|id| {
            let features = match &features {
                Some(map) => map
                    .get(&id)
                    .cloned()
                    .ok_or_else(|| Error::InvalidTable(format!("no feature vector for image {id:?}"))),
                None => Ok(Vec::new()),
            }?;
            Ok(ImageEntry { id, features })
        })
        .collect::<Result<Vec<_>>>()?;
    let raters = raters.into_values().map(|(r, _)| r).collect();
    AnnotationTable::new(scale.clone(), schema.clone(), images, raters, records)
}

/// Parse a feature sidecar: one `image_id,x1,...,xk` row per image.
pub fn read_features<R: Read>(reader: R) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = BTreeMap::new();
    let mut dim = None;
    for row in csv.records() {
        let row = row?;
        let line = line_of(&row);
        let id = row.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty image id".into(),
            });
        }
        let values = row
            .iter()
            .skip(1)
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line,
                message: format!("bad feature value: {e}"),
            })?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {d} features, got {}", values.len()),
                })
            }
            _ => {}
        }
        if out.insert(id.clone(), values).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate image {id:?}"),
            });
        }
    }
    Ok(out)
}

fn trait_cell(value: &TraitValue) -> String {
    match value {
        TraitValue::Number(x) => format!("{x}"),
        TraitValue::Category(c) => c.clone(),
        TraitValue::Missing => String::new(),
    }
}

/// Write `table` back out in the ingestion CSV layout.
pub fn write_annotations_csv<W: Write>(table: &AnnotationTable, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(table.schema().fields().iter().map(|f| f.name.as_str()));
    csv.write_record(&header)?;
    for rec in table.records() {
        let rater = table.rater(&rec.rater_id).expect("record rater exists");
        let mut row = vec![rec.image_id.clone(), rec.rater_id.clone(), format!("{}", rec.score)];
        row.extend(
            table
                .schema()
                .fields()
                .iter()
                .map(|f| trait_cell(&rater.value(&f.name))),
        );
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_features_csv<W: Write>(table: &AnnotationTable, writer: W) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    for img in table.images() {
        let mut row = vec![img.id.clone()];
        row.extend(img.features.iter().map(|x| format!("{x:e}")));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}
