//! PASCAL VOC annotation XML.
//!
//! VOC corners are 1-based inclusive pixel indices. A box `(xmin, ymin,
//! xmax, ymax)` covers pixels `xmin..=xmax`, which in 0-based continuous
//! coordinates is `[xmin - 1, xmax]`; only the min corners shift.

use std::path::Path;

use roxmltree::{Document, Node};

use super::{
    clamp_parsed_box, Dataset, GroundTruthObject, ImageRecord, IngestError, ObjectFlag,
    ParseError, Provenance,
};
use crate::geometry::BoundingBox;

/// One annotation document: a display name for diagnostics plus its XML.
#[derive(Debug, Clone)]
pub struct VocDocument {
    pub name: String,
    pub xml: String,
}

impl VocDocument {
    pub fn new(name: impl Into<String>, xml: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            xml: xml.into(),
        }
    }
}

pub fn parse_voc<I>(documents: I) -> Result<Dataset, IngestError>
where
    I: IntoIterator<Item = VocDocument>,
{
    let mut images = Vec::new();
    let mut errors = Vec::new();
    for doc in documents {
        match parse_document(&doc) {
            Ok(im) => images.push(im),
            Err(e) => errors.extend(e),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::Parse(errors));
    }
    Ok(Dataset::from_images(images, Provenance::Voc)?)
}

/// Reads every `*.xml` file in `dir` (non-recursive).
pub fn parse_voc_dir(dir: &Path) -> Result<Dataset, IngestError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    paths.sort();
    let mut docs = Vec::with_capacity(paths.len());
    for p in paths {
        let xml = std::fs::read_to_string(&p)?;
        docs.push(VocDocument::new(p.display().to_string(), xml));
    }
    parse_voc(docs)
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text<'a>(node: Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

fn flag_set(node: Node<'_, '_>, name: &str) -> bool {
    matches!(child_text(node, name), Some("1") | Some("true"))
}

fn parse_document(doc: &VocDocument) -> Result<ImageRecord, Vec<ParseError>> {
    let err = |reason: String| vec![ParseError::new(&doc.name, reason)];
    let xml = Document::parse(&doc.xml).map_err(|e| err(format!("malformed XML: {e}")))?;
    let root = xml.root_element();
    if !root.has_tag_name("annotation") {
        return Err(err(format!(
            "root element is <{}>, expected <annotation>",
            root.tag_name().name()
        )));
    }

    let filename = child_text(root, "filename").filter(|s| !s.is_empty());
    let image_id = match filename {
        Some(f) => Path::new(f)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| f.to_string()),
        None => Path::new(&doc.name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| doc.name.clone()),
    };

    let size = child(root, "size").ok_or_else(|| err("missing <size>".into()))?;
    let dim = |name: &str| -> Result<u32, Vec<ParseError>> {
        let text = child_text(size, name).ok_or_else(|| err(format!("missing <size>/<{name}>")))?;
        // Some VOC exports write dimensions as floats.
        let v: f64 = text
            .parse()
            .map_err(|_| err(format!("bad <size>/<{name}> value {text:?}")))?;
        if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(err(format!("invalid <size>/<{name}> value {text:?}")));
        }
        Ok(v as u32)
    };
    let width = dim("width")?;
    let height = dim("height")?;

    let mut record = ImageRecord::new(image_id, width, height);
    record.source_name = filename.map(str::to_string).unwrap_or_else(|| doc.name.clone());

    let mut errors = Vec::new();
    for (k, obj) in root.children().filter(|c| c.has_tag_name("object")).enumerate() {
        match parse_object(&doc.name, k, obj, width, height) {
            Ok(o) => record.objects.push(o),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(record)
    } else {
        Err(errors)
    }
}

fn parse_object(
    doc: &str,
    k: usize,
    obj: Node<'_, '_>,
    width: u32,
    height: u32,
) -> Result<GroundTruthObject, ParseError> {
    let locator = format!("{doc} object #{k}");
    let name = child_text(obj, "name")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ParseError::new(&locator, "missing <name>"))?;
    let bndbox =
        child(obj, "bndbox").ok_or_else(|| ParseError::new(&locator, "missing <bndbox>"))?;
    let coord = |tag: &str| -> Result<f64, ParseError> {
        let t = child_text(bndbox, tag)
            .ok_or_else(|| ParseError::new(&locator, format!("missing <bndbox>/<{tag}>")))?;
        t.parse::<f64>()
            .map_err(|_| ParseError::new(&locator, format!("bad <{tag}> value {t:?}")))
    };
    let (xmin, ymin, xmax, ymax) = (coord("xmin")?, coord("ymin")?, coord("xmax")?, coord("ymax")?);
    let bbox = clamp_parsed_box(
        &locator,
        BoundingBox::new(xmin - 1.0, ymin - 1.0, xmax, ymax),
        width,
        height,
    )?;

    let mut o = GroundTruthObject::new(name, bbox);
    if flag_set(obj, "difficult") {
        o.flags.insert(ObjectFlag::Difficult);
    }
    if flag_set(obj, "truncated") {
        o.flags.insert(ObjectFlag::Truncated);
    }
    if flag_set(obj, "occluded") {
        o.flags.insert(ObjectFlag::Occluded);
    }
    Ok(o)
}
