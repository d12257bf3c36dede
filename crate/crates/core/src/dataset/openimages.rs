//! OpenImages box CSV plus an image-size table.
//!
//! Box rows carry normalized `XMin, XMax, YMin, YMax` in `[0, 1]`; pixel
//! sizes come from a separate `ImageID,Width,Height` CSV. `IsDepiction` is
//! read but not mapped to any flag. Flag columns use `1` for set; `0` and
//! `-1` (unknown) both mean unset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use serde::Deserialize;

use super::{
    clamp_parsed_box, Dataset, GroundTruthObject, ImageRecord, IngestError, ObjectFlag,
    ParseError, Provenance,
};
use crate::geometry::BoundingBox;

#[derive(Debug, Deserialize)]
struct BoxRow {
    #[serde(rename = "ImageID")]
    image_id: String,
    #[serde(rename = "LabelName")]
    label: String,
    #[serde(rename = "XMin")]
    xmin: f64,
    #[serde(rename = "XMax")]
    xmax: f64,
    #[serde(rename = "YMin")]
    ymin: f64,
    #[serde(rename = "YMax")]
    ymax: f64,
    #[serde(rename = "IsOccluded", default)]
    occluded: i8,
    #[serde(rename = "IsTruncated", default)]
    truncated: i8,
    #[serde(rename = "IsGroupOf", default)]
    group: i8,
    #[serde(rename = "IsDepiction", default)]
    _depiction: i8,
}

#[derive(Debug, Deserialize)]
struct SizeRow {
    #[serde(rename = "ImageID")]
    image_id: String,
    #[serde(rename = "Width")]
    width: u32,
    #[serde(rename = "Height")]
    height: u32,
}

/// Reads a headerless `LabelName,DisplayName` class-description CSV.
pub fn parse_class_descriptions<R: Read>(
    name: &str,
    reader: R,
) -> Result<HashMap<String, String>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut out = HashMap::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let locator = format!("{name}:{}", i + 1);
        match row {
            Ok(r) if r.len() >= 2 => {
                out.insert(r[0].to_string(), r[1].to_string());
            }
            Ok(_) => errors.push(ParseError::new(locator, "expected LabelName,DisplayName")),
            Err(e) => errors.push(ParseError::new(locator, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Parse(errors))
    }
}

/// Result of an OpenImages import: the dataset built from rows with known
/// dimensions, plus the image ids whose dimensions were missing.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenImagesImport {
    pub dataset: Dataset,
    pub missing_dimensions: Vec<String>,
}

/// Reads an `ImageID,Width,Height` CSV.
pub fn parse_image_sizes<R: Read>(
    name: &str,
    reader: R,
) -> Result<HashMap<String, (u32, u32)>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = HashMap::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.deserialize::<SizeRow>().enumerate() {
        let locator = format!("{name}:{}", i + 2);
        match row {
            Ok(r) if r.width == 0 || r.height == 0 => {
                errors.push(ParseError::new(locator, "zero image dimension"))
            }
            Ok(r) => {
                out.insert(r.image_id, (r.width, r.height));
            }
            Err(e) => errors.push(ParseError::new(locator, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Parse(errors))
    }
}

/// Parses box rows against `image_meta`.
///
/// `labels` optionally maps label ids (`/m/01g317`) to display names; ids
/// without an entry are kept verbatim. Every image listed in `image_meta`
/// appears in the dataset, including those without boxes.
pub fn parse_openimages<R: Read>(
    name: &str,
    box_csv: R,
    image_meta: &HashMap<String, (u32, u32)>,
    labels: Option<&HashMap<String, String>>,
) -> Result<OpenImagesImport, IngestError> {
    let mut rdr = csv::Reader::from_reader(box_csv);
    let mut images: BTreeMap<String, ImageRecord> = image_meta
        .iter()
        .map(|(id, &(w, h))| {
            let mut rec = ImageRecord::new(id.clone(), w, h);
            rec.source_name = format!("{id}.jpg");
            (id.clone(), rec)
        })
        .collect();
    let mut missing = BTreeSet::new();
    let mut errors = Vec::new();

    for (i, row) in rdr.deserialize::<BoxRow>().enumerate() {
        let locator = format!("{name}:{}", i + 2);
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(ParseError::new(locator, e.to_string()));
                continue;
            }
        };
        let Some(rec) = images.get_mut(&row.image_id) else {
            missing.insert(row.image_id);
            continue;
        };
        let (w, h) = (rec.width as f64, rec.height as f64);
        let bbox = match clamp_parsed_box(
            &locator,
            BoundingBox::new(row.xmin * w, row.ymin * h, row.xmax * w, row.ymax * h),
            rec.width,
            rec.height,
        ) {
            Ok(b) => b,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let class = labels
            .and_then(|m| m.get(&row.label))
            .cloned()
            .unwrap_or(row.label);
        let mut o = GroundTruthObject::new(class, bbox);
        if row.occluded == 1 {
            o.flags.insert(ObjectFlag::Occluded);
        }
        if row.truncated == 1 {
            o.flags.insert(ObjectFlag::Truncated);
        }
        if row.group == 1 {
            o.flags.insert(ObjectFlag::Group);
        }
        rec.objects.push(o);
    }

    if !errors.is_empty() {
        return Err(IngestError::Parse(errors));
    }
    let dataset = Dataset::from_images(images.into_values().collect(), Provenance::OpenImages)?;
    Ok(OpenImagesImport {
        dataset,
        missing_dimensions: missing.into_iter().collect(),
    })
}
