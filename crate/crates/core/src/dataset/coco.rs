//! COCO instances JSON (`images`, `annotations`, `categories`).

use std::collections::HashMap;

use serde::Deserialize;

use super::{
    clamp_parsed_box, Dataset, GroundTruthObject, ImageRecord, IngestError, ObjectFlag,
    ParseError, Provenance,
};
use crate::geometry::BoundingBox;

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: Option<u64>,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

/// Parses a COCO detection document. `name` labels diagnostics.
pub fn parse_coco(name: &str, json: &str) -> Result<Dataset, IngestError> {
    let file: CocoFile = serde_json::from_str(json)
        .map_err(|e| ParseError::new(name, format!("malformed COCO JSON: {e}")))?;

    let categories: HashMap<u64, &str> =
        file.categories.iter().map(|c| (c.id, c.name.as_str())).collect();

    let mut errors = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut images: Vec<ImageRecord> = Vec::with_capacity(file.images.len());
    for im in &file.images {
        if index.insert(im.id, images.len()).is_some() {
            errors.push(ParseError::new(name, format!("duplicate image id {}", im.id)));
            continue;
        }
        if im.width == 0 || im.height == 0 {
            errors.push(ParseError::new(name, format!("image {} has zero size", im.id)));
        }
        let mut rec = ImageRecord::new(im.id.to_string(), im.width.max(1), im.height.max(1));
        rec.source_name = im.file_name.clone();
        images.push(rec);
    }

    for (k, ann) in file.annotations.iter().enumerate() {
        let locator = match ann.id {
            Some(id) => format!("{name} annotation {id}"),
            None => format!("{name} annotation #{k}"),
        };
        let Some(&slot) = index.get(&ann.image_id) else {
            errors.push(ParseError::new(locator, format!("unknown image_id {}", ann.image_id)));
            continue;
        };
        let Some(&class) = categories.get(&ann.category_id) else {
            errors.push(ParseError::new(
                locator,
                format!("unknown category_id {}", ann.category_id),
            ));
            continue;
        };
        let rec = &mut images[slot];
        let [x, y, w, h] = ann.bbox;
        match clamp_parsed_box(
            &locator,
            BoundingBox::from_xywh(x, y, w, h),
            rec.width,
            rec.height,
        ) {
            Ok(b) => {
                let mut o = GroundTruthObject::new(class, b);
                if ann.iscrowd == 1 {
                    o.flags.insert(ObjectFlag::Group);
                }
                rec.objects.push(o);
            }
            Err(e) => errors.push(e),
        }
    }

    if !errors.is_empty() {
        return Err(IngestError::Parse(errors));
    }
    Ok(Dataset::from_images(images, Provenance::Coco)?)
}
