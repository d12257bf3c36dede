//! Wire messages, one JSON object per line, discriminated by `"kind"`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{IngestError, ParseError};
use crate::matching::Detection;

pub const PROTOCOL_VERSION: u32 = 1;

/// Error code an adapter sends when it does not speak the host's version.
pub const CODE_VERSION_MISMATCH: &str = "version_mismatch";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObject {
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<WireObject>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub image_id: String,
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub confidence: f64,
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        Self {
            image_id: d.image_id.clone(),
            class_label: d.class_label.clone(),
            bbox: d.bbox.to_array(),
            confidence: d.confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Request {
    Hello { protocol_version: u32 },
    Train { batch_index: usize, images: Vec<WireImage> },
    Predict { batch_index: usize, images: Vec<WireImage> },
    Reset {},
    Shutdown {},
}

impl Request {
    pub fn kind(&self) -> &'static str {
        match self {
            Request::Hello { .. } => "hello",
            Request::Train { .. } => "train",
            Request::Predict { .. } => "predict",
            Request::Reset {} => "reset",
            Request::Shutdown {} => "shutdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    HelloAck { descriptor: String },
    TrainAck { batch_index: usize },
    Predictions { batch_index: usize, detections: Vec<WireDetection> },
    ResetAck {},
    Error { code: String, message: String },
}

impl Response {
    pub fn kind(&self) -> &'static str {
        match self {
            Response::HelloAck { .. } => "hello_ack",
            Response::TrainAck { .. } => "train_ack",
            Response::Predictions { .. } => "predictions",
            Response::ResetAck {} => "reset_ack",
            Response::Error { .. } => "error",
        }
    }
}

/// One line of a prediction fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub image_id: String,
    pub detections: Vec<WireDetection>,
}

/// Writes a prediction fixture: one record per image, in key order.
pub fn write_fixture<W: Write>(
    script: &BTreeMap<String, Vec<Detection>>,
    mut sink: W,
) -> std::io::Result<()> {
    for (image_id, dets) in script {
        let rec = FixtureRecord {
            image_id: image_id.clone(),
            detections: dets.iter().map(WireDetection::from).collect(),
        };
        serde_json::to_writer(&mut sink, &rec)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn read_fixture<R: BufRead>(source: R) -> Result<BTreeMap<String, Vec<WireDetection>>, IngestError> {
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FixtureRecord>(&line) {
            Ok(r) => {
                out.insert(r.image_id, r.detections);
            }
            Err(e) => errors.push(ParseError::new(format!("line {}", i + 1), e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(IngestError::Parse(errors))
    }
}
