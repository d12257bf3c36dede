//! Greedy matching of proposals against ground truth.
//!
//! Detections below the confidence threshold are dropped first. The rest
//! are visited by descending confidence (ties keep input order); each one
//! claims the unmatched ground-truth box with the highest IoU (ties go to
//! the lowest ground-truth index), restricted to its own class when
//! matching is class-aware, provided the IoU reaches the threshold.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GroundTruthObject;
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(
        image_id: impl Into<String>,
        class_label: impl Into<String>,
        bbox: BoundingBox,
        confidence: f64,
    ) -> Self {
        debug_assert!((0.0..=1.0).contains(&confidence));
        Self {
            image_id: image_id.into(),
            class_label: class_label.into(),
            bbox,
            confidence,
        }
    }
}

/// How a correctly placed box with the wrong class is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelabelCost {
    /// One edit: the annotator changes the label in place.
    One,
    /// Two edits: remove the box and draw a new one.
    #[default]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    pub class_aware: bool,
    pub relabel_cost: RelabelCost,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            confidence_threshold: 0.5,
            class_aware: true,
            relabel_cost: RelabelCost::Two,
        }
    }
}

impl MatchParams {
    pub fn with_iou(iou_threshold: f64) -> Self {
        Self {
            iou_threshold,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    /// Set for batch-level results; `None` inside a single-image result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub pairs: Vec<MatchPair>,
    /// Wrong-class detections sitting on an otherwise unmatched box. Only
    /// populated under [`RelabelCost::One`]; each one is also counted in
    /// `false_positives` and `false_negatives`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relabels: Vec<MatchPair>,
}

impl MatchResult {
    pub fn num_ground_truth(&self) -> usize {
        self.true_positives + self.false_negatives
    }

    /// Detections that survived the confidence cut.
    pub fn num_detections(&self) -> usize {
        self.true_positives + self.false_positives
    }

    pub fn precision(&self) -> f64 {
        precision(self)
    }

    pub fn recall(&self) -> f64 {
        recall(self)
    }

    fn qualified(mut self, image_id: &str) -> Self {
        for p in self.pairs.iter_mut().chain(self.relabels.iter_mut()) {
            p.image_id = Some(image_id.to_string());
        }
        self
    }
}

impl AddAssign<MatchResult> for MatchResult {
    fn add_assign(&mut self, rhs: MatchResult) {
        self.true_positives += rhs.true_positives;
        self.false_positives += rhs.false_positives;
        self.false_negatives += rhs.false_negatives;
        self.pairs.extend(rhs.pairs);
        self.relabels.extend(rhs.relabels);
    }
}

/// TP / (TP + FP); 1 when nothing was proposed.
pub fn precision(m: &MatchResult) -> f64 {
    let denom = m.true_positives + m.false_positives;
    if denom == 0 {
        1.0
    } else {
        m.true_positives as f64 / denom as f64
    }
}

/// TP / (TP + FN); 1 when there is nothing to find.
pub fn recall(m: &MatchResult) -> f64 {
    let denom = m.true_positives + m.false_negatives;
    if denom == 0 {
        1.0
    } else {
        m.true_positives as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("detections reference image {0:?} outside the batch")]
    UnknownImage(String),
}

fn greedy_assign(
    gt: &[GroundTruthObject],
    det: &[Detection],
    order: &[usize],
    gt_taken: &mut [bool],
    det_taken: &mut [bool],
    iou_threshold: f64,
    same_class: bool,
) -> Vec<MatchPair> {
    let mut pairs = Vec::new();
    for &d in order {
        if det_taken[d] {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (g, obj) in gt.iter().enumerate() {
            if gt_taken[g] || (same_class && obj.class_label != det[d].class_label) {
                continue;
            }
            let v = det[d].bbox.iou(&obj.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            gt_taken[g] = true;
            det_taken[d] = true;
            pairs.push(MatchPair {
                image_id: None,
                detection: d,
                ground_truth: g,
                iou: v,
            });
        }
    }
    pairs
}

/// Matches one image's detections against its ground truth.
///
/// Pair indices refer to positions in `gt` and `det` as given.
pub fn match_image(gt: &[GroundTruthObject], det: &[Detection], params: &MatchParams) -> MatchResult {
    let mut order: Vec<usize> = (0..det.len())
        .filter(|&i| det[i].confidence >= params.confidence_threshold)
        .collect();
    // Stable sort keeps input order among equal confidences.
    order.sort_by(|&a, &b| det[b].confidence.total_cmp(&det[a].confidence));
    let considered = order.len();

    let mut gt_taken = vec![false; gt.len()];
    let mut det_taken = vec![false; det.len()];
    let pairs = greedy_assign(
        gt,
        det,
        &order,
        &mut gt_taken,
        &mut det_taken,
        params.iou_threshold,
        params.class_aware,
    );
    let relabels = if params.class_aware && params.relabel_cost == RelabelCost::One {
        greedy_assign(
            gt,
            det,
            &order,
            &mut gt_taken,
            &mut det_taken,
            params.iou_threshold,
            false,
        )
    } else {
        Vec::new()
    };

    let tp = pairs.len();
    MatchResult {
        true_positives: tp,
        false_positives: considered - tp,
        false_negatives: gt.len() - tp,
        pairs,
        relabels,
    }
}

/// Matches every image of a batch and sums the results.
///
/// Images are visited in key order; pairs carry their image id. Images in
/// `batch_gt` without detections count all their boxes as misses.
pub fn match_batch(
    batch_gt: &BTreeMap<String, Vec<GroundTruthObject>>,
    batch_det: &BTreeMap<String, Vec<Detection>>,
    params: &MatchParams,
) -> Result<MatchResult, MatchError> {
    if let Some(id) = batch_det.keys().find(|id| !batch_gt.contains_key(*id)) {
        return Err(MatchError::UnknownImage(id.clone()));
    }
    let per_image: Vec<MatchResult> = batch_gt
        .par_iter()
        .map(|(id, gt)| {
            let det = batch_det.get(id).map(Vec::as_slice).unwrap_or(&[]);
            match_image(gt, det, params).qualified(id)
        })
        .collect();
    let mut total = MatchResult::default();
    for m in per_image {
        total += m;
    }
    Ok(total)
}
