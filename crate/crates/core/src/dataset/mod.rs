//! Canonical dataset representation and format ingestion.
//!
//! Every parser produces the same [`Dataset`]: images sorted by `image_id`,
//! a lexicographically sorted class vocabulary, and boxes in 0-based
//! continuous corner coordinates clipped to the image bounds.

mod canonical;
mod coco;
mod openimages;
pub mod synthetic;
mod voc;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;

pub use canonical::{read_canonical, write_canonical, FORMAT_NAME, FORMAT_VERSION};
pub use coco::parse_coco;
pub use openimages::{parse_class_descriptions, parse_image_sizes, parse_openimages, OpenImagesImport};
pub use voc::{parse_voc, parse_voc_dir, VocDocument};

/// Per-object annotation attributes carried over from the source format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectFlag {
    Occluded,
    Truncated,
    Group,
    Difficult,
}

impl ObjectFlag {
    pub const ALL: [ObjectFlag; 4] = [
        ObjectFlag::Occluded,
        ObjectFlag::Truncated,
        ObjectFlag::Group,
        ObjectFlag::Difficult,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectFlag::Occluded => "occluded",
            ObjectFlag::Truncated => "truncated",
            ObjectFlag::Group => "group",
            ObjectFlag::Difficult => "difficult",
        }
    }
}

impl fmt::Display for ObjectFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectFlag::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| format!("unknown object flag {s:?}"))
    }
}

/// Parses a comma-separated flag list such as `occluded,truncated,group`.
pub fn parse_flag_list(s: &str) -> Result<BTreeSet<ObjectFlag>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub flags: BTreeSet<ObjectFlag>,
}

impl GroundTruthObject {
    pub fn new(class_label: impl Into<String>, bbox: BoundingBox) -> Self {
        Self {
            class_label: class_label.into(),
            bbox,
            flags: BTreeSet::new(),
        }
    }

    pub fn with_flag(mut self, flag: ObjectFlag) -> Self {
        self.flags.insert(flag);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub source_name: String,
    pub width: u32,
    pub height: u32,
    pub sequence_index: Option<u64>,
    pub objects: Vec<GroundTruthObject>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        let image_id = image_id.into();
        Self {
            source_name: image_id.clone(),
            image_id,
            width,
            height,
            sequence_index: None,
            objects: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Voc,
    Coco,
    OpenImages,
    Canonical,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub classes: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("duplicate image_id {0:?}")]
    DuplicateImageId(String),
    #[error("duplicate sequence_index {index} (image {image_id:?})")]
    DuplicateSequenceIndex { index: u64, image_id: String },
    #[error("image {image_id:?} has class {class_label:?} outside the vocabulary")]
    UnknownObjectClass { image_id: String, class_label: String },
    #[error("image {0:?} has zero width or height")]
    ZeroDimensions(String),
    #[error("image {image_id:?} has an empty class label")]
    EmptyClassLabel { image_id: String },
    #[error("box {bbox:?} in image {image_id:?} lies outside the image bounds")]
    BoxOutsideImage { image_id: String, bbox: [f64; 4] },
    #[error("vocabulary is not strictly sorted")]
    UnsortedVocabulary,
}

/// One offending record found while parsing an input file.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{document}: {reason}")]
pub struct ParseError {
    /// Document name, file path, or `path:line` locator.
    pub document: String,
    pub reason: String,
}

impl ParseError {
    pub fn new(document: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            document: document.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{} record(s) failed to parse", .0.len())]
    Parse(Vec<ParseError>),
    #[error("unsupported canonical format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Invalid(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    /// Individual diagnostics, one per offending record.
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            IngestError::Parse(errs) => errs.iter().map(ToString::to_string).collect(),
            other => vec![other.to_string()],
        }
    }
}

impl From<ParseError> for IngestError {
    fn from(e: ParseError) -> Self {
        IngestError::Parse(vec![e])
    }
}

impl Dataset {
    /// Assembles a dataset from parsed images: sorts images by id, derives
    /// the sorted vocabulary from the objects and validates the result.
    pub fn from_images(
        mut images: Vec<ImageRecord>,
        provenance: Provenance,
    ) -> Result<Self, DatasetError> {
        images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let classes: BTreeSet<String> = images
            .iter()
            .flat_map(|im| im.objects.iter().map(|o| o.class_label.clone()))
            .collect();
        let d = Dataset {
            images,
            classes: classes.into_iter().collect(),
            provenance,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::UnsortedVocabulary);
        }
        let mut ids = HashSet::new();
        let mut seqs = HashSet::new();
        for im in &self.images {
            if !ids.insert(im.image_id.as_str()) {
                return Err(DatasetError::DuplicateImageId(im.image_id.clone()));
            }
            if let Some(s) = im.sequence_index {
                if !seqs.insert(s) {
                    return Err(DatasetError::DuplicateSequenceIndex {
                        index: s,
                        image_id: im.image_id.clone(),
                    });
                }
            }
            if im.width == 0 || im.height == 0 {
                return Err(DatasetError::ZeroDimensions(im.image_id.clone()));
            }
            for o in &im.objects {
                if o.class_label.is_empty() {
                    return Err(DatasetError::EmptyClassLabel {
                        image_id: im.image_id.clone(),
                    });
                }
                if self.classes.binary_search(&o.class_label).is_err() {
                    return Err(DatasetError::UnknownObjectClass {
                        image_id: im.image_id.clone(),
                        class_label: o.class_label.clone(),
                    });
                }
                if !o.bbox.is_inside(im.width as f64, im.height as f64) {
                    return Err(DatasetError::BoxOutsideImage {
                        image_id: im.image_id.clone(),
                        bbox: o.bbox.to_array(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn num_objects(&self) -> usize {
        self.images.iter().map(|im| im.objects.len()).sum()
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.image_id == image_id)
    }

    /// Removes every object carrying any of `drop_flags`.
    ///
    /// Images left without objects stay in the dataset as pure negatives and
    /// the vocabulary is unchanged.
    pub fn filter_objects(&self, drop_flags: &BTreeSet<ObjectFlag>) -> Dataset {
        let mut out = self.clone();
        if drop_flags.is_empty() {
            return out;
        }
        for im in &mut out.images {
            im.objects.retain(|o| o.flags.is_disjoint(drop_flags));
        }
        out
    }
}

/// Free-function form of [`Dataset::filter_objects`].
pub fn filter_objects(d: &Dataset, drop_flags: &BTreeSet<ObjectFlag>) -> Dataset {
    d.filter_objects(drop_flags)
}

/// Shared by the parsers: clip a parsed box into its image, turning a
/// collapse into a parse diagnostic.
pub(crate) fn clamp_parsed_box(
    document: &str,
    bbox: Result<BoundingBox, crate::geometry::BoxError>,
    width: u32,
    height: u32,
) -> Result<BoundingBox, ParseError> {
    bbox.and_then(|b| b.clamp_to_image(width as f64, height as f64))
        .map_err(|e| ParseError::new(document, e.to_string()))
}
