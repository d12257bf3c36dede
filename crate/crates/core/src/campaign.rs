//! The annotate / train / propose / correct loop.
//!
//! Batch 0 is annotated by hand and used for the first training. Each
//! later batch is proposed by the current model, scored against ground
//! truth (the simulated annotator corrects perfectly, so the training
//! annotations are always the true ones), and then fed back:
//!
//! * iterative: `train(B_i)`
//! * cumulative: `reset()` then `train(B_0 ∪ … ∪ B_i)`
//! * two-stage: the first fold is annotated by hand and trained on once;
//!   everything else is proposed in a single pass with no further training.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, ImageRecord};
use crate::detector::{DetectorError, DetectorFactory, DetectorSession};
use crate::matching::{match_image, MatchParams, MatchResult, RelabelCost};
use crate::scheduling::{class_scope, make_batches, order_images, Batch, OrderingStrategy, ScheduleError};
use crate::workload::{
    batch_workload, cumulative_curves, image_counts, manual_batch, workload_reduction,
    workload_reduction_whole, BatchWorkload, CurvePoint, ImageCounts, WorkloadError,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Regime {
    Iterative,
    Cumulative,
    TwoStage { first_fold_fraction: f64 },
}

impl Regime {
    pub fn name(&self) -> String {
        match self {
            Regime::Iterative => "iterative".into(),
            Regime::Cumulative => "cumulative".into(),
            Regime::TwoStage { first_fold_fraction } => format!("two-stage({first_fold_fraction})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub batch_size: usize,
    pub ordering: OrderingStrategy,
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    pub regime: Regime,
    pub class_scope: Option<String>,
    pub class_aware_matching: bool,
    pub relabel_cost: RelabelCost,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            ordering: OrderingStrategy::Shuffled { seed: 0 },
            iou_threshold: 0.5,
            confidence_threshold: 0.5,
            regime: Regime::Iterative,
            class_scope: None,
            class_aware_matching: true,
            relabel_cost: RelabelCost::Two,
            seed: 0,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad(format!("IoU threshold must lie in (0, 1), got {}", self.iou_threshold));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad(format!(
                "confidence threshold must lie in [0, 1], got {}",
                self.confidence_threshold
            ));
        }
        if let Regime::TwoStage { first_fold_fraction: f } = self.regime {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("two-stage split must lie in (0, 1), got {f}"));
            }
        }
        Ok(())
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            iou_threshold: self.iou_threshold,
            confidence_threshold: self.confidence_threshold,
            class_aware: self.class_aware_matching,
            relabel_cost: self.relabel_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub detector: String,
    pub num_images: usize,
    pub batches: Vec<BatchWorkload>,
    pub curves: Vec<CurvePoint>,
    pub total_gt: usize,
    pub total_corrections: usize,
    pub manual_b0_boxes: usize,
    /// `None` when there are no proposal batches or they hold no boxes.
    pub reduction_excluding_b0: Option<f64>,
    /// Manual first batch counted as work; `None` under the same conditions.
    pub reduction_whole_campaign: Option<f64>,
}

impl CampaignReport {
    pub fn is_empty_campaign(&self) -> bool {
        !self.batches.iter().any(|b| b.batch_index >= 1)
    }
}

/// Wall time per phase, summed over the campaign.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub train_secs: f64,
    pub predict_secs: f64,
    pub score_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRun {
    pub report: CampaignReport,
    pub timings: PhaseTimings,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error("dataset has no images to annotate")]
    EmptyDataset,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("detector failed: {0}")]
    Detector(#[from] DetectorError),
}

struct Timer {
    train: Duration,
    predict: Duration,
    score: Duration,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            train: Duration::ZERO,
            predict: Duration::ZERO,
            score: Duration::ZERO,
            start: Instant::now(),
        }
    }

    fn finish(self) -> PhaseTimings {
        PhaseTimings {
            train_secs: self.train.as_secs_f64(),
            predict_secs: self.predict.as_secs_f64(),
            score_secs: self.score.as_secs_f64(),
            total_secs: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *slot += t.elapsed();
    out
}

/// Scores one proposal batch image by image, preserving batch order.
fn score_batch(
    images: &[ImageRecord],
    detections: &[Vec<crate::matching::Detection>],
    params: &MatchParams,
) -> Vec<MatchResult> {
    images
        .par_iter()
        .zip(detections.par_iter())
        .map(|(im, dets)| match_image(&im.objects, dets, params))
        .collect()
}

fn predict_checked(
    det: &mut dyn DetectorSession,
    batch_index: usize,
    images: &[ImageRecord],
) -> Result<Vec<Vec<crate::matching::Detection>>, CampaignError> {
    let out = det.predict(batch_index, images)?;
    if out.len() != images.len() {
        return Err(DetectorError::Protocol(format!(
            "detector returned {} prediction lists for {} images",
            out.len(),
            images.len()
        ))
        .into());
    }
    Ok(out)
}

struct Accounting {
    batches: Vec<BatchWorkload>,
    per_image: Vec<ImageCounts>,
}

impl Accounting {
    fn manual(&mut self, images: &[ImageRecord]) {
        let gt: usize = images.iter().map(|im| im.objects.len()).sum();
        self.batches.push(manual_batch(gt, images.len()));
        self.per_image.extend(images.iter().map(|im| ImageCounts {
            gt: im.objects.len(),
            predicted: 0,
            corrections: 0,
        }));
    }

    fn scored(&mut self, batch_index: usize, results: Vec<MatchResult>) {
        let n = results.len();
        let mut total = MatchResult::default();
        for m in results {
            self.per_image.push(image_counts(&m));
            total += m;
        }
        self.batches.push(batch_workload(&total, batch_index, n));
    }

    fn into_report(self, config: &CampaignConfig, detector: String) -> CampaignReport {
        let total_gt = self.batches.iter().map(|b| b.num_gt).sum();
        let total_corrections = self
            .batches
            .iter()
            .filter(|b| b.batch_index >= 1)
            .map(|b| b.corrections)
            .sum();
        let manual_b0_boxes = self.batches.iter().map(|b| b.manually_drawn).sum();
        let defined = |r: Result<f64, WorkloadError>| r.ok();
        CampaignReport {
            config: config.clone(),
            detector,
            num_images: self.per_image.len(),
            reduction_excluding_b0: defined(workload_reduction(&self.batches)),
            reduction_whole_campaign: defined(workload_reduction_whole(&self.batches)),
            curves: cumulative_curves(&self.per_image),
            batches: self.batches,
            total_gt,
            total_corrections,
            manual_b0_boxes,
        }
    }
}

fn scoped_dataset(d: &Dataset, cfg: &CampaignConfig) -> Result<Dataset, CampaignError> {
    let scoped = match &cfg.class_scope {
        Some(c) => class_scope(d, c)?,
        None => d.clone(),
    };
    if scoped.images.is_empty() {
        return Err(CampaignError::EmptyDataset);
    }
    Ok(scoped)
}

fn batch_images(index: &HashMap<&str, &ImageRecord>, batch: &Batch) -> Vec<ImageRecord> {
    batch
        .image_ids
        .iter()
        .map(|id| (*index[id.as_str()]).clone())
        .collect()
}

/// Runs a full campaign. Two-stage configurations are routed to
/// [`run_two_stage`].
pub fn run_campaign(
    d: &Dataset,
    cfg: &CampaignConfig,
    det: &mut dyn DetectorSession,
) -> Result<CampaignRun, CampaignError> {
    cfg.validate()?;
    if let Regime::TwoStage { .. } = cfg.regime {
        return run_two_stage(d, cfg, det);
    }
    let scoped = scoped_dataset(d, cfg)?;
    let params = cfg.match_params();
    let order = order_images(&scoped, &cfg.ordering);
    let batches = make_batches(&order, cfg.batch_size);
    let index: HashMap<&str, &ImageRecord> =
        scoped.images.iter().map(|im| (im.image_id.as_str(), im)).collect();

    let mut timer = Timer::new();
    let mut acc = Accounting {
        batches: Vec::with_capacity(batches.len()),
        per_image: Vec::with_capacity(order.len()),
    };
    let mut seen: Vec<ImageRecord> = Vec::new();

    let first = batch_images(&index, &batches[0]);
    acc.manual(&first);
    timed(&mut timer.train, || det.train(0, &first))?;
    if cfg.regime == Regime::Cumulative {
        seen.extend(first);
    }

    for batch in &batches[1..] {
        let images = batch_images(&index, batch);
        let proposals = timed(&mut timer.predict, || predict_checked(det, batch.index, &images))?;
        let results = timed(&mut timer.score, || score_batch(&images, &proposals, &params));
        acc.scored(batch.index, results);

        match cfg.regime {
            Regime::Iterative => timed(&mut timer.train, || det.train(batch.index, &images))?,
            Regime::Cumulative => {
                seen.extend(images);
                timed(&mut timer.train, || {
                    det.reset()?;
                    det.train(batch.index, &seen)
                })?
            }
            Regime::TwoStage { .. } => unreachable!("routed to run_two_stage"),
        }
    }

    Ok(CampaignRun {
        report: acc.into_report(cfg, det.descriptor()),
        timings: timer.finish(),
    })
}

/// Size of the manual first fold: `ceil(fraction * n)`, at least 1 and at
/// most `n`. A tolerance absorbs representation error so that e.g.
/// `0.06 * 100` counts as 6.
pub fn first_fold_size(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let size = (raw - 1e-9 * raw.abs().max(1.0)).ceil() as usize;
    size.clamp(1, n)
}

/// Two-stage baseline: manual first fold, one training, one proposal pass
/// over the remainder.
pub fn run_two_stage(
    d: &Dataset,
    cfg: &CampaignConfig,
    det: &mut dyn DetectorSession,
) -> Result<CampaignRun, CampaignError> {
    cfg.validate()?;
    let Regime::TwoStage { first_fold_fraction } = cfg.regime else {
        return Err(CampaignError::Config("run_two_stage needs the two-stage regime".into()));
    };
    let scoped = scoped_dataset(d, cfg)?;
    let params = cfg.match_params();
    let order = order_images(&scoped, &cfg.ordering);
    let split = first_fold_size(first_fold_fraction, order.len());
    let index: HashMap<&str, &ImageRecord> =
        scoped.images.iter().map(|im| (im.image_id.as_str(), im)).collect();
    let fetch = |ids: &[String]| -> Vec<ImageRecord> {
        ids.iter().map(|id| (*index[id.as_str()]).clone()).collect()
    };

    let mut timer = Timer::new();
    let mut acc = Accounting {
        batches: Vec::with_capacity(2),
        per_image: Vec::with_capacity(order.len()),
    };
    let fold = fetch(&order[..split]);
    acc.manual(&fold);
    timed(&mut timer.train, || det.train(0, &fold))?;

    if split < order.len() {
        let rest = fetch(&order[split..]);
        let proposals = timed(&mut timer.predict, || predict_checked(det, 1, &rest))?;
        let results = timed(&mut timer.score, || score_batch(&rest, &proposals, &params));
        acc.scored(1, results);
    }

    Ok(CampaignRun {
        report: acc.into_report(cfg, det.descriptor()),
        timings: timer.finish(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerClassRun {
    pub reports: BTreeMap<String, CampaignRun>,
    /// Unweighted mean of the per-class reductions (excluding batch 0);
    /// `None` if any class has an undefined reduction.
    pub average_reduction: Option<f64>,
}

/// Unweighted mean.
pub fn mean_reduction(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// One campaign per class, each on the class-scoped dataset with a fresh
/// detector from `factory`.
pub fn run_per_class(
    d: &Dataset,
    classes: &[String],
    cfg: &CampaignConfig,
    factory: &DetectorFactory<'_>,
) -> Result<PerClassRun, CampaignError> {
    for c in classes {
        if d.classes.binary_search(c).is_err() {
            return Err(ScheduleError::UnknownClass(c.clone()).into());
        }
    }
    let mut reports = BTreeMap::new();
    for c in classes {
        let scoped = class_scope(d, c)?;
        let class_cfg = CampaignConfig {
            class_scope: Some(c.clone()),
            ..cfg.clone()
        };
        let mut det = factory(&scoped)?;
        let run = run_campaign(&scoped, &class_cfg, det.as_mut())?;
        reports.insert(c.clone(), run);
    }
    let reductions: Option<Vec<f64>> = classes
        .iter()
        .map(|c| reports[c].report.reduction_excluding_b0)
        .collect();
    Ok(PerClassRun {
        average_reduction: reductions.and_then(|r| mean_reduction(&r)),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::{generate, SyntheticDatasetConfig};
    use crate::detector::{NullDetector, PerfectDetector, SyntheticDetector, SyntheticDetectorConfig};

    fn data(n: usize) -> Dataset {
        generate(&SyntheticDatasetConfig::with_images(n, 17))
    }

    fn cfg() -> CampaignConfig {
        CampaignConfig {
            ordering: OrderingStrategy::Shuffled { seed: 3 },
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn perfect_and_null_limits() {
        let d = data(180);
        let r = run_campaign(&d, &cfg(), &mut PerfectDetector).unwrap().report;
        assert_eq!(r.reduction_excluding_b0, Some(100.0));
        assert_eq!(r.total_corrections, 0);
        assert_eq!(r.batches.len(), 4);

        let r = run_campaign(&d, &cfg(), &mut NullDetector).unwrap().report;
        assert_eq!(r.reduction_excluding_b0, Some(0.0));
        let proposal_gt: usize = r.batches[1..].iter().map(|b| b.num_gt).sum();
        assert_eq!(r.batches[1..].iter().map(|b| b.additions).sum::<usize>(), proposal_gt);
        assert!(r.batches.iter().all(|b| b.removals == 0));
    }

    #[test]
    fn first_batch_is_manual() {
        let d = data(120);
        let r = run_campaign(&d, &cfg(), &mut NullDetector).unwrap().report;
        let b0 = &r.batches[0];
        assert_eq!(b0.batch_index, 0);
        assert_eq!(b0.manually_drawn, b0.num_gt);
        assert_eq!(b0.corrections, 0);
        assert_eq!(r.manual_b0_boxes, b0.num_gt);
        assert_eq!(r.total_gt, d.num_objects());
        assert_eq!(r.curves.len(), 120);
        assert_eq!(r.curves.last().unwrap().cum_gt, r.total_gt);
        assert_eq!(r.curves.last().unwrap().cum_corrections, r.total_corrections);
    }

    #[test]
    fn single_batch_campaign_is_flagged() {
        let d = data(30);
        let r = run_campaign(&d, &cfg(), &mut PerfectDetector).unwrap().report;
        assert!(r.is_empty_campaign());
        assert_eq!(r.reduction_excluding_b0, None);
        assert_eq!(r.reduction_whole_campaign, None);
    }

    #[test]
    fn invalid_configs() {
        let d = data(10);
        for bad in [
            CampaignConfig { batch_size: 0, ..cfg() },
            CampaignConfig { iou_threshold: 1.0, ..cfg() },
            CampaignConfig { iou_threshold: 0.0, ..cfg() },
            CampaignConfig { regime: Regime::TwoStage { first_fold_fraction: 1.0 }, ..cfg() },
        ] {
            assert!(matches!(
                run_campaign(&d, &bad, &mut NullDetector),
                Err(CampaignError::Config(_))
            ));
        }
        let scoped = CampaignConfig { class_scope: Some("unicorn".into()), ..cfg() };
        assert!(matches!(
            run_campaign(&d, &scoped, &mut NullDetector),
            Err(CampaignError::Schedule(ScheduleError::UnknownClass(_)))
        ));
    }

    #[test]
    fn fold_sizes() {
        assert_eq!(first_fold_size(0.06, 100), 6);
        assert_eq!(first_fold_size(0.05, 1000), 50);
        assert_eq!(first_fold_size(0.051, 100), 6);
        assert_eq!(first_fold_size(0.001, 10), 1);
        assert_eq!(first_fold_size(0.99, 10), 10);
    }

    #[test]
    fn two_stage_shape() {
        let d = data(100);
        let c = CampaignConfig { regime: Regime::TwoStage { first_fold_fraction: 0.1 }, ..cfg() };
        let r = run_campaign(&d, &c, &mut PerfectDetector).unwrap().report;
        assert_eq!(r.batches.len(), 2);
        assert_eq!(r.batches[0].num_images, 10);
        assert_eq!(r.batches[1].num_images, 90);
        assert_eq!(r.reduction_excluding_b0, Some(100.0));
    }

    #[test]
    fn cumulative_equals_iterative_for_synthetic_without_forgetting() {
        let d = data(300);
        let mk = || SyntheticDetector::new(SyntheticDetectorConfig::with_seed(4), d.classes.clone());
        let it = run_campaign(&d, &cfg(), &mut mk()).unwrap().report;
        let cu_cfg = CampaignConfig { regime: Regime::Cumulative, ..cfg() };
        let cu = run_campaign(&d, &cu_cfg, &mut mk()).unwrap().report;
        assert_eq!(it.batches, cu.batches);
    }

    #[test]
    fn per_class_average() {
        let d = data(200);
        let classes = d.classes.clone();
        let factory = |_: &Dataset| -> Result<Box<dyn DetectorSession>, DetectorError> {
            Ok(Box::new(PerfectDetector))
        };
        let run = run_per_class(&d, &classes, &cfg(), &factory).unwrap();
        assert_eq!(run.reports.len(), classes.len());
        assert_eq!(run.average_reduction, Some(100.0));
        assert!(run_per_class(&d, &["nope".to_string()], &cfg(), &factory).is_err());
    }

    #[test]
    fn published_per_class_mean() {
        let rows = [62.07, 60.43, 35.65, 46.68, 56.27, 59.53, 32.44, 63.28, 61.24, 32.75];
        let m = mean_reduction(&rows).unwrap();
        assert!((m - 51.03).abs() <= 0.01, "{m}");
        assert_eq!(mean_reduction(&[]), None);
    }
}
