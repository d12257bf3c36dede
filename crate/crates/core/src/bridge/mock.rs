//! Adapter side of the protocol, answering predictions from a fixed script.
//!
//! Used by the `annoloop-mock-adapter` binary and by conformance tests.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::protocol::{Request, Response, WireDetection, CODE_VERSION_MISMATCH, PROTOCOL_VERSION};
use crate::dataset::Dataset;

#[derive(Debug, Clone)]
pub struct MockAdapter {
    pub script: BTreeMap<String, Vec<WireDetection>>,
    pub descriptor: String,
    pub protocol_version: u32,
    /// Stop answering, without a reply, upon receiving this many requests.
    pub die_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeEnd {
    Shutdown,
    EndOfInput,
    Died,
}

impl MockAdapter {
    pub fn new(script: BTreeMap<String, Vec<WireDetection>>) -> Self {
        Self {
            script,
            descriptor: format!("mock-adapter/{PROTOCOL_VERSION}"),
            protocol_version: PROTOCOL_VERSION,
            die_after: None,
        }
    }

    /// A script that proposes every ground-truth box with confidence 1.
    pub fn echo(dataset: &Dataset) -> Self {
        let script = dataset
            .images
            .iter()
            .map(|im| {
                let dets = im
                    .objects
                    .iter()
                    .map(|o| WireDetection {
                        image_id: im.image_id.clone(),
                        class_label: o.class_label.clone(),
                        bbox: o.bbox.to_array(),
                        confidence: 1.0,
                    })
                    .collect();
                (im.image_id.clone(), dets)
            })
            .collect();
        Self::new(script)
    }

    fn answer(&self, req: Request) -> Option<Response> {
        Some(match req {
            Request::Hello { protocol_version } if protocol_version != self.protocol_version => {
                Response::Error {
                    code: CODE_VERSION_MISMATCH.into(),
                    message: format!(
                        "adapter speaks version {}, host sent {protocol_version}",
                        self.protocol_version
                    ),
                }
            }
            Request::Hello { .. } => Response::HelloAck {
                descriptor: self.descriptor.clone(),
            },
            Request::Train { batch_index, .. } => Response::TrainAck { batch_index },
            Request::Predict { batch_index, images } => Response::Predictions {
                batch_index,
                detections: images
                    .iter()
                    .flat_map(|im| self.script.get(&im.image_id).into_iter().flatten().cloned())
                    .collect(),
            },
            Request::Reset {} => Response::ResetAck {},
            Request::Shutdown {} => return None,
        })
    }

    /// Request loop: one response line per request line until shutdown or
    /// end of input.
    pub fn serve<R: BufRead, W: Write>(&self, reader: R, mut writer: W) -> std::io::Result<ServeEnd> {
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if self.die_after.is_some_and(|k| n + 1 >= k) {
                return Ok(ServeEnd::Died);
            }
            if line.trim().is_empty() {
                continue;
            }
            let resp = match serde_json::from_str::<Request>(&line) {
                Ok(req) => match self.answer(req) {
                    Some(r) => r,
                    None => return Ok(ServeEnd::Shutdown),
                },
                Err(e) => Response::Error {
                    code: "malformed_request".into(),
                    message: e.to_string(),
                },
            };
            serde_json::to_writer(&mut writer, &resp)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(ServeEnd::EndOfInput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handshake_and_version_mismatch() {
        let m = MockAdapter::new(BTreeMap::new());
        let mut out = Vec::new();
        let end = m
            .serve(
                "{\"kind\":\"hello\",\"protocol_version\":1}\n{\"kind\":\"shutdown\"}\n".as_bytes(),
                &mut out,
            )
            .unwrap();
        assert_eq!(end, ServeEnd::Shutdown);
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"kind\":\"hello_ack\",\"descriptor\":\"mock-adapter/1\"}\n"
        );

        let mut out = Vec::new();
        m.serve("{\"kind\":\"hello\",\"protocol_version\":7}\n".as_bytes(), &mut out)
            .unwrap();
        assert!(String::from_utf8(out).unwrap().contains("version_mismatch"));
    }

    #[test]
    fn malformed_request_gets_error_record() {
        let m = MockAdapter::new(BTreeMap::new());
        let mut out = Vec::new();
        m.serve("{\"kind\":\"dance\"}\n".as_bytes(), &mut out).unwrap();
        let resp: Response = serde_json::from_slice(&out).unwrap();
        assert_eq!(resp.kind(), "error");
    }

    #[test]
    fn dies_silently() {
        let m = MockAdapter {
            die_after: Some(2),
            ..MockAdapter::new(BTreeMap::new())
        };
        let mut out = Vec::new();
        let end = m
            .serve(
                "{\"kind\":\"hello\",\"protocol_version\":1}\n{\"kind\":\"reset\"}\n".as_bytes(),
                &mut out,
            )
            .unwrap();
        assert_eq!(end, ServeEnd::Died);
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1);
    }
}
