use std::collections::BTreeMap;

use super::{DetectorError, DetectorSession};
use crate::dataset::ImageRecord;
use crate::matching::Detection;

/// Proposes exactly the ground truth with full confidence.
#[derive(Debug, Clone, Default)]
pub struct PerfectDetector;

impl DetectorSession for PerfectDetector {
    fn descriptor(&self) -> String {
        "perfect".into()
    }

    fn train(&mut self, _: usize, _: &[ImageRecord]) -> Result<(), DetectorError> {
        Ok(())
    }

    fn predict(&mut self, _: usize, images: &[ImageRecord]) -> Result<Vec<Vec<Detection>>, DetectorError> {
        Ok(images
            .iter()
            .map(|im| {
                im.objects
                    .iter()
                    .map(|o| Detection::new(&im.image_id, &o.class_label, o.bbox, 1.0))
                    .collect()
            })
            .collect())
    }

    fn reset(&mut self) -> Result<(), DetectorError> {
        Ok(())
    }
}

/// Never proposes anything.
#[derive(Debug, Clone, Default)]
pub struct NullDetector;

impl DetectorSession for NullDetector {
    fn descriptor(&self) -> String {
        "null".into()
    }

    fn train(&mut self, _: usize, _: &[ImageRecord]) -> Result<(), DetectorError> {
        Ok(())
    }

    fn predict(&mut self, _: usize, images: &[ImageRecord]) -> Result<Vec<Vec<Detection>>, DetectorError> {
        Ok(vec![Vec::new(); images.len()])
    }

    fn reset(&mut self) -> Result<(), DetectorError> {
        Ok(())
    }
}

/// Replays fixed per-image predictions; training is acknowledged and
/// ignored. Images without an entry get no detections.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDetector {
    script: BTreeMap<String, Vec<Detection>>,
    descriptor: String,
}

impl ScriptedDetector {
    pub fn new(script: BTreeMap<String, Vec<Detection>>) -> Self {
        Self {
            script,
            descriptor: "scripted".into(),
        }
    }

    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> Self {
        self.descriptor = descriptor.into();
        self
    }

    /// Groups a flat detection list by image.
    pub fn from_detections(dets: impl IntoIterator<Item = Detection>) -> Self {
        let mut script: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for d in dets {
            script.entry(d.image_id.clone()).or_default().push(d);
        }
        Self::new(script)
    }
}

impl DetectorSession for ScriptedDetector {
    fn descriptor(&self) -> String {
        self.descriptor.clone()
    }

    fn train(&mut self, _: usize, _: &[ImageRecord]) -> Result<(), DetectorError> {
        Ok(())
    }

    fn predict(&mut self, _: usize, images: &[ImageRecord]) -> Result<Vec<Vec<Detection>>, DetectorError> {
        Ok(images
            .iter()
            .map(|im| self.script.get(&im.image_id).cloned().unwrap_or_default())
            .collect())
    }

    fn reset(&mut self) -> Result<(), DetectorError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GroundTruthObject;
    use crate::geometry::BoundingBox;

    #[test]
    fn perfect_echoes_truth_and_null_is_empty() {
        let mut im = ImageRecord::new("a", 10, 10);
        im.objects.push(GroundTruthObject::new(
            "cat",
            BoundingBox::new(1.0, 1.0, 4.0, 4.0).unwrap(),
        ));
        let p = PerfectDetector.predict(1, &[im.clone()]).unwrap();
        assert_eq!(p[0].len(), 1);
        assert_eq!(p[0][0].bbox, im.objects[0].bbox);
        assert_eq!(p[0][0].confidence, 1.0);
        assert!(NullDetector.predict(1, &[im]).unwrap()[0].is_empty());
    }

    #[test]
    fn scripted_replays_by_image() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let mut s = ScriptedDetector::from_detections([
            Detection::new("b", "x", b, 0.9),
            Detection::new("a", "x", b, 0.8),
            Detection::new("b", "y", b, 0.7),
        ]);
        let out = s
            .predict(3, &[ImageRecord::new("b", 5, 5), ImageRecord::new("c", 5, 5)])
            .unwrap();
        assert_eq!(out[0].len(), 2);
        assert!(out[1].is_empty());
    }
}
