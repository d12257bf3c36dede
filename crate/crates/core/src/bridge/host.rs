use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use log::{debug, warn};

use super::protocol::{
    Request, Response, WireDetection, WireImage, WireObject, CODE_VERSION_MISMATCH,
    PROTOCOL_VERSION,
};
use crate::dataset::ImageRecord;
use crate::detector::{DetectorError, DetectorSession};
use crate::geometry::BoundingBox;
use crate::matching::Detection;

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(300);

/// Where the adapter lives.
#[derive(Debug, Clone, PartialEq)]
pub enum BridgeLaunch {
    /// Spawn `program args... --images <images_dir>` and talk over its
    /// standard input/output.
    Command {
        program: String,
        args: Vec<String>,
        images_dir: Option<PathBuf>,
    },
    /// Connect to an adapter listening on `host:port`.
    Tcp(String),
}

impl BridgeLaunch {
    /// Splits a shell-style command line (quotes and escapes honoured).
    pub fn from_command_line(cmd: &str, images_dir: Option<PathBuf>) -> Result<Self, DetectorError> {
        let mut words = shell_words::split(cmd)
            .map_err(|e| DetectorError::Transport(format!("bad adapter command {cmd:?}: {e}")))?;
        if words.is_empty() {
            return Err(DetectorError::Transport("empty adapter command".into()));
        }
        let program = words.remove(0);
        Ok(BridgeLaunch::Command {
            program,
            args: words,
            images_dir,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BridgeOptions {
    /// Per-request deadline enforced by the watchdog.
    pub deadline: Duration,
    /// Vocabulary accepted in predictions.
    pub classes: Vec<String>,
}

impl BridgeOptions {
    pub fn new(classes: Vec<String>) -> Self {
        Self {
            deadline: DEFAULT_DEADLINE,
            classes,
        }
    }
}

/// Counts of repairs applied to a predictions message.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PredictionWarnings {
    pub clamped_boxes: usize,
    pub dropped_degenerate: usize,
    pub dropped_unknown_class: usize,
    pub clamped_confidences: usize,
}

impl PredictionWarnings {
    pub fn total(&self) -> usize {
        self.clamped_boxes + self.dropped_degenerate + self.dropped_unknown_class + self.clamped_confidences
    }
}

/// Checks a predictions message against the outstanding request and
/// repairs what can be repaired.
///
/// Boxes are clipped to their image (degenerate ones dropped), unknown
/// class labels dropped, confidences clamped to `[0, 1]`. A batch index
/// mismatch or an image outside the batch is a protocol error.
pub fn validate_predictions(
    expected_batch: usize,
    batch_index: usize,
    detections: Vec<WireDetection>,
    images: &[ImageRecord],
    classes: &[String],
) -> Result<(Vec<Vec<Detection>>, PredictionWarnings), DetectorError> {
    if batch_index != expected_batch {
        return Err(DetectorError::Protocol(format!(
            "predictions for batch {batch_index} while batch {expected_batch} is outstanding"
        )));
    }
    let slots: HashMap<&str, usize> = images
        .iter()
        .enumerate()
        .map(|(i, im)| (im.image_id.as_str(), i))
        .collect();
    let mut out = vec![Vec::new(); images.len()];
    let mut warn = PredictionWarnings::default();
    for d in detections {
        let Some(&slot) = slots.get(d.image_id.as_str()) else {
            return Err(DetectorError::Protocol(format!(
                "prediction for image {:?} outside batch {expected_batch}",
                d.image_id
            )));
        };
        if !classes.contains(&d.class_label) {
            warn.dropped_unknown_class += 1;
            continue;
        }
        let im = &images[slot];
        let [x0, y0, x1, y1] = d.bbox;
        let (w, h) = (im.width as f64, im.height as f64);
        let Ok(raw) = BoundingBox::new(x0, y0, x1, y1) else {
            warn.dropped_degenerate += 1;
            continue;
        };
        let bbox = if raw.is_inside(w, h) {
            raw
        } else {
            match raw.clamp_to_image(w, h) {
                Ok(b) => {
                    warn.clamped_boxes += 1;
                    b
                }
                Err(_) => {
                    warn.dropped_degenerate += 1;
                    continue;
                }
            }
        };
        let confidence = if d.confidence.is_nan() {
            warn.clamped_confidences += 1;
            0.0
        } else if !(0.0..=1.0).contains(&d.confidence) {
            warn.clamped_confidences += 1;
            d.confidence.clamp(0.0, 1.0)
        } else {
            d.confidence
        };
        out[slot].push(Detection::new(d.image_id, d.class_label, bbox, confidence));
    }
    Ok((out, warn))
}

/// A [`DetectorSession`] backed by an external adapter process.
///
/// Exactly one request is in flight at a time. A reader thread forwards
/// response lines over a channel; waiting on it with the deadline is the
/// watchdog. Any failure poisons the session and, for spawned adapters,
/// kills the child.
pub struct BridgeSession {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    socket: Option<TcpStream>,
    options: BridgeOptions,
    descriptor: String,
    poisoned: Option<DetectorError>,
    warnings: PredictionWarnings,
}

fn spawn_reader<R: Read + Send + 'static>(reader: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

impl BridgeSession {
    /// Starts or connects to the adapter and completes the handshake.
    pub fn connect(launch: &BridgeLaunch, options: BridgeOptions) -> Result<Self, DetectorError> {
        let transport = |e: std::io::Error| DetectorError::Transport(e.to_string());
        let mut session = match launch {
            BridgeLaunch::Command {
                program,
                args,
                images_dir,
            } => {
                let mut cmd = Command::new(program);
                cmd.args(args);
                if let Some(dir) = images_dir {
                    cmd.arg("--images").arg(dir);
                }
                let mut child = cmd
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| DetectorError::Transport(format!("cannot start {program:?}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Self::from_parts(Box::new(stdin), spawn_reader(stdout), Some(child), options)
            }
            BridgeLaunch::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(transport)?;
                let _ = stream.set_nodelay(true);
                let reader = stream.try_clone().map_err(transport)?;
                let socket = stream.try_clone().map_err(transport)?;
                let mut s = Self::from_parts(Box::new(stream), spawn_reader(reader), None, options);
                s.socket = Some(socket);
                s
            }
        };
        session.handshake()?;
        Ok(session)
    }

    /// Wraps an already-open byte stream pair. The handshake still has to
    /// run, which [`connect`](Self::connect) does.
    fn from_parts(
        writer: Box<dyn Write + Send>,
        lines: Receiver<std::io::Result<String>>,
        child: Option<Child>,
        options: BridgeOptions,
    ) -> Self {
        Self {
            writer,
            lines,
            child,
            socket: None,
            options,
            descriptor: String::new(),
            poisoned: None,
            warnings: PredictionWarnings::default(),
        }
    }

    /// Repairs applied to predictions so far.
    pub fn warnings(&self) -> PredictionWarnings {
        self.warnings
    }

    fn handshake(&mut self) -> Result<(), DetectorError> {
        let resp = self
            .exchange(&Request::Hello {
                protocol_version: PROTOCOL_VERSION,
            })
            .map_err(|e| match e {
                DetectorError::Protocol(m) => DetectorError::Handshake(m),
                DetectorError::Adapter { code, message } => {
                    DetectorError::Handshake(format!("{code}: {message}"))
                }
                other => other,
            });
        let resp = match resp {
            Ok(r) => r,
            Err(e) => return Err(self.poison(e)),
        };
        match resp {
            Response::HelloAck { descriptor } => {
                debug!("bridge handshake complete: {descriptor}");
                self.descriptor = descriptor;
                Ok(())
            }
            other => Err(self.poison(DetectorError::Handshake(format!(
                "expected hello_ack, got {}",
                other.kind()
            )))),
        }
    }

    fn poison(&mut self, e: DetectorError) -> DetectorError {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(std::net::Shutdown::Both);
        }
        self.poisoned = Some(e.clone());
        e
    }

    fn send(&mut self, req: &Request) -> Result<(), DetectorError> {
        let mut line = serde_json::to_vec(req).expect("requests serialize");
        line.push(b'\n');
        self.writer
            .write_all(&line)
            .and_then(|_| self.writer.flush())
            .map_err(|e| DetectorError::Transport(format!("sending {}: {e}", req.kind())))
    }

    fn receive(&mut self, req_kind: &str) -> Result<Response, DetectorError> {
        let line = match self.lines.recv_timeout(self.options.deadline) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                return Err(DetectorError::Transport(format!("reading {req_kind} response: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(DetectorError::Transport(format!(
                    "no {req_kind} response within {:?}",
                    self.options.deadline
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(DetectorError::Transport(format!(
                    "adapter closed the connection before answering {req_kind}"
                )))
            }
        };
        let resp: Response = serde_json::from_str(line.trim_end()).map_err(|e| {
            DetectorError::Protocol(format!("malformed response to {req_kind}: {e}"))
        })?;
        if let Response::Error { code, message } = resp {
            if req_kind == "hello" && code == CODE_VERSION_MISMATCH {
                return Err(DetectorError::Handshake(format!(
                    "adapter rejected protocol version {PROTOCOL_VERSION}: {message}"
                )));
            }
            return Err(DetectorError::Adapter { code, message });
        }
        Ok(resp)
    }

    /// Sends one request and waits for its response.
    fn exchange(&mut self, req: &Request) -> Result<Response, DetectorError> {
        if let Some(e) = &self.poisoned {
            return Err(DetectorError::Transport(format!("session aborted earlier: {e}")));
        }
        let result = self.send(req).and_then(|_| self.receive(req.kind()));
        result.map_err(|e| self.poison(e))
    }

    fn unexpected(&mut self, wanted: &str, got: &Response) -> DetectorError {
        self.poison(DetectorError::Protocol(format!(
            "expected {wanted}, got {}",
            got.kind()
        )))
    }
}

fn wire_image(im: &ImageRecord, with_objects: bool) -> WireImage {
    WireImage {
        image_id: im.image_id.clone(),
        width: im.width,
        height: im.height,
        objects: with_objects.then(|| {
            im.objects
                .iter()
                .map(|o| WireObject {
                    class_label: o.class_label.clone(),
                    bbox: o.bbox.to_array(),
                })
                .collect()
        }),
    }
}

impl DetectorSession for BridgeSession {
    fn descriptor(&self) -> String {
        format!("bridge:{}", self.descriptor)
    }

    fn train(&mut self, batch_index: usize, images: &[ImageRecord]) -> Result<(), DetectorError> {
        let req = Request::Train {
            batch_index,
            images: images.iter().map(|im| wire_image(im, true)).collect(),
        };
        match self.exchange(&req)? {
            Response::TrainAck { batch_index: b } if b == batch_index => Ok(()),
            Response::TrainAck { batch_index: b } => Err(self.poison(DetectorError::Protocol(
                format!("train_ack for batch {b} while batch {batch_index} is outstanding"),
            ))),
            other => Err(self.unexpected("train_ack", &other)),
        }
    }

    fn predict(
        &mut self,
        batch_index: usize,
        images: &[ImageRecord],
    ) -> Result<Vec<Vec<Detection>>, DetectorError> {
        let req = Request::Predict {
            batch_index,
            images: images.iter().map(|im| wire_image(im, false)).collect(),
        };
        match self.exchange(&req)? {
            Response::Predictions {
                batch_index: b,
                detections,
            } => {
                let checked = validate_predictions(
                    batch_index,
                    b,
                    detections,
                    images,
                    &self.options.classes,
                );
                match checked {
                    Ok((dets, w)) => {
                        if w.total() > 0 {
                            warn!("batch {batch_index}: repaired adapter predictions {w:?}");
                        }
                        self.warnings.clamped_boxes += w.clamped_boxes;
                        self.warnings.dropped_degenerate += w.dropped_degenerate;
                        self.warnings.dropped_unknown_class += w.dropped_unknown_class;
                        self.warnings.clamped_confidences += w.clamped_confidences;
                        Ok(dets)
                    }
                    Err(e) => Err(self.poison(e)),
                }
            }
            other => Err(self.unexpected("predictions", &other)),
        }
    }

    fn reset(&mut self) -> Result<(), DetectorError> {
        match self.exchange(&Request::Reset {})? {
            Response::ResetAck {} => Ok(()),
            other => Err(self.unexpected("reset_ack", &other)),
        }
    }
}

impl Drop for BridgeSession {
    fn drop(&mut self) {
        if self.poisoned.is_none() {
            let _ = self.send(&Request::Shutdown {});
        }
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(std::net::Shutdown::Both);
        }
        if let Some(mut child) = self.child.take() {
            for _ in 0..50 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
