//! The proposal source driven by the campaign loop.
//!
//! A [`DetectorSession`] is trained on annotated images and asked for
//! proposals on the next batch. Implementations here are the seeded
//! [`SyntheticDetector`], the limit cases [`PerfectDetector`] and
//! [`NullDetector`], and [`ScriptedDetector`] which replays fixed
//! predictions. External detectors plug in through
//! [`crate::bridge::BridgeSession`].

mod simple;
mod synthetic;

use thiserror::Error;

use crate::dataset::{Dataset, ImageRecord};
use crate::matching::Detection;

pub use simple::{NullDetector, PerfectDetector, ScriptedDetector};
pub use synthetic::{skill, SyntheticDetector, SyntheticDetectorConfig, DETECTOR_ROLE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("adapter reported error {code}: {message}")]
    Adapter { code: String, message: String },
}

/// A trainable proposal source.
///
/// `images` passed to [`predict`](DetectorSession::predict) still carry
/// their ground truth: oracle-corruption models such as the synthetic
/// detector perturb it, every other implementation must ignore it. The
/// result holds one detection list per input image, in input order.
pub trait DetectorSession: Send {
    fn descriptor(&self) -> String;

    fn train(&mut self, batch_index: usize, images: &[ImageRecord]) -> Result<(), DetectorError>;

    fn predict(
        &mut self,
        batch_index: usize,
        images: &[ImageRecord],
    ) -> Result<Vec<Vec<Detection>>, DetectorError>;

    fn reset(&mut self) -> Result<(), DetectorError>;
}

impl<T: DetectorSession + ?Sized> DetectorSession for Box<T> {
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }

    fn train(&mut self, batch_index: usize, images: &[ImageRecord]) -> Result<(), DetectorError> {
        (**self).train(batch_index, images)
    }

    fn predict(
        &mut self,
        batch_index: usize,
        images: &[ImageRecord],
    ) -> Result<Vec<Vec<Detection>>, DetectorError> {
        (**self).predict(batch_index, images)
    }

    fn reset(&mut self) -> Result<(), DetectorError> {
        (**self).reset()
    }
}

/// Builds a fresh session for a campaign over the given dataset.
pub type DetectorFactory<'a> =
    dyn Fn(&Dataset) -> Result<Box<dyn DetectorSession>, DetectorError> + Sync + 'a;
