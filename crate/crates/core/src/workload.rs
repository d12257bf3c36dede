//! Manual correction accounting.
//!
//! For a batch with recall `r` and precision `p`, the annotator performs
//! `num_gt * (1 - r)` additions and `num_detections * (1 - p)` removals.
//! Both reduce to integer counts: additions are the false negatives and
//! removals the false positives. Batch 0 is drawn entirely by hand and is
//! tracked separately in `manually_drawn`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::MatchResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchWorkload {
    pub batch_index: usize,
    pub num_images: usize,
    pub num_gt: usize,
    pub num_detections: usize,
    pub precision: f64,
    pub recall: f64,
    pub additions: usize,
    pub removals: usize,
    /// In-place label fixes; nonzero only when relabels cost one edit.
    #[serde(default)]
    pub relabels: usize,
    pub corrections: usize,
    pub manually_drawn: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("campaign has no proposal batches (only the manual first batch)")]
    EmptyCampaign,
    #[error("proposal batches contain no ground-truth boxes; reduction is undefined")]
    UndefinedReduction,
}

/// Workload of a proposal batch.
pub fn batch_workload(m: &MatchResult, batch_index: usize, num_images: usize) -> BatchWorkload {
    let relabels = m.relabels.len();
    let additions = m.false_negatives - relabels;
    let removals = m.false_positives - relabels;
    BatchWorkload {
        batch_index,
        num_images,
        num_gt: m.num_ground_truth(),
        num_detections: m.num_detections(),
        precision: m.precision(),
        recall: m.recall(),
        additions,
        removals,
        relabels,
        corrections: additions + removals + relabels,
        manually_drawn: 0,
    }
}

/// Workload of the fully manual first batch: every box is drawn by hand.
pub fn manual_batch(num_gt: usize, num_images: usize) -> BatchWorkload {
    BatchWorkload {
        batch_index: 0,
        num_images,
        num_gt,
        num_detections: 0,
        precision: 1.0,
        recall: 0.0,
        additions: 0,
        removals: 0,
        relabels: 0,
        corrections: 0,
        manually_drawn: num_gt,
    }
}

/// Additions and removals from recall and precision,
/// `gt * (1 - recall)` and `detections * (1 - precision)`, in floating point. Used to
/// cross-check the integer counts.
pub fn rate_formula_counts(m: &MatchResult) -> (f64, f64) {
    let additions = m.num_ground_truth() as f64 * (1.0 - m.recall());
    let removals = m.num_detections() as f64 * (1.0 - m.precision());
    (additions, removals)
}

fn reduction(corrections: usize, gt: usize) -> f64 {
    100.0 * (1.0 - corrections as f64 / gt as f64)
}

/// `100 * (1 - sum(corrections) / sum(num_gt))` over batches with index >= 1.
///
/// Not clamped: a detector flooding false positives yields a negative value.
pub fn workload_reduction(batches: &[BatchWorkload]) -> Result<f64, WorkloadError> {
    let proposals: Vec<_> = batches.iter().filter(|b| b.batch_index >= 1).collect();
    if proposals.is_empty() {
        return Err(WorkloadError::EmptyCampaign);
    }
    let gt: usize = proposals.iter().map(|b| b.num_gt).sum();
    if gt == 0 {
        return Err(WorkloadError::UndefinedReduction);
    }
    let corrections = proposals.iter().map(|b| b.corrections).sum();
    Ok(reduction(corrections, gt))
}

/// Same as [`workload_reduction`] but over the whole campaign, charging the
/// manual first batch as work in both numerator and denominator.
pub fn workload_reduction_whole(batches: &[BatchWorkload]) -> Result<f64, WorkloadError> {
    if !batches.iter().any(|b| b.batch_index >= 1) {
        return Err(WorkloadError::EmptyCampaign);
    }
    let gt: usize = batches.iter().map(|b| b.num_gt).sum();
    if gt == 0 {
        return Err(WorkloadError::UndefinedReduction);
    }
    let work = batches.iter().map(|b| b.corrections + b.manually_drawn).sum();
    Ok(reduction(work, gt))
}

/// Reduction from aggregate totals.
pub fn reduction_from_totals(corrections: usize, gt: usize) -> Result<f64, WorkloadError> {
    if gt == 0 {
        return Err(WorkloadError::UndefinedReduction);
    }
    Ok(reduction(corrections, gt))
}

/// Per-image counts in annotation order, the input to [`cumulative_curves`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCounts {
    pub gt: usize,
    pub predicted: usize,
    pub corrections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub image_count: usize,
    pub cum_gt: usize,
    pub cum_pred: usize,
    pub cum_corrections: usize,
}

/// Prefix sums of ground truth, surviving predictions, and corrections.
pub fn cumulative_curves(per_image: &[ImageCounts]) -> Vec<CurvePoint> {
    let mut acc = CurvePoint {
        image_count: 0,
        cum_gt: 0,
        cum_pred: 0,
        cum_corrections: 0,
    };
    per_image
        .iter()
        .map(|c| {
            acc.image_count += 1;
            acc.cum_gt += c.gt;
            acc.cum_pred += c.predicted;
            acc.cum_corrections += c.corrections;
            acc
        })
        .collect()
}

/// Per-image counts for one scored image.
pub fn image_counts(m: &MatchResult) -> ImageCounts {
    ImageCounts {
        gt: m.num_ground_truth(),
        predicted: m.num_detections(),
        corrections: m.false_negatives + m.false_positives - m.relabels.len(),
    }
}
