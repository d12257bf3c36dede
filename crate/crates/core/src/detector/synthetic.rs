//! Seeded oracle-corruption detector whose proposals improve with training
//! exposure.
//!
//! Skill for exposure `e` (ground-truth boxes trained on) is
//! `s = 1 - exp(-e / tau)`, tracked per class. On prediction, each true
//! box of class `c` is found with probability
//! `detect_floor + (detect_ceiling - detect_floor) * s_c`; its corners are
//! jittered by up to `jitter_scale * (1 - s_c)` of the box size and its
//! confidence is `s_c` plus noise. Each image also receives
//! `Poisson(fp_rate_initial * (1 - s))` spurious boxes, where `s` is the
//! skill of the total exposure.
//!
//! Random draws for an image come from a ChaCha8 stream seeded with the
//! `"detector"` sub-seed of `seed` combined with the image id, so a
//! prediction depends only on the image and the current skill. Per image
//! the stream is consumed in a fixed order: for each true box in stored
//! order, one detection draw, four corner draws (xmin, ymin, xmax, ymax)
//! and one confidence draw, all taken whether or not the box is found;
//! then the false-positive count, then per false positive its width,
//! height, x, y, class, and confidence.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::{DetectorError, DetectorSession};
use crate::dataset::ImageRecord;
use crate::geometry::BoundingBox;
use crate::matching::Detection;
use crate::seed::{derive_seed, rng_for, uniform_index, unit_f64, SimRng};

pub const DETECTOR_ROLE: &str = "detector";

/// `1 - exp(-exposure / tau)`.
pub fn skill(exposure: f64, tau: f64) -> f64 {
    debug_assert!(exposure >= 0.0 && tau > 0.0);
    1.0 - (-exposure / tau).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDetectorConfig {
    pub seed: u64,
    /// Exposure scale, in ground-truth boxes.
    pub tau: f64,
    pub detect_floor: f64,
    pub detect_ceiling: f64,
    /// Corner jitter as a fraction of box size, at zero skill.
    pub jitter_scale: f64,
    /// Expected false positives per image at zero skill.
    pub fp_rate_initial: f64,
    pub confidence_noise: f64,
    /// Lower bound of false-positive confidences.
    pub confidence_threshold: f64,
    /// Per-training multiplier on the exposure of classes absent from the
    /// training images; 1 disables forgetting.
    pub forgetting: f64,
}

impl Default for SyntheticDetectorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tau: 500.0,
            detect_floor: 0.2,
            detect_ceiling: 0.95,
            jitter_scale: 0.3,
            fp_rate_initial: 1.0,
            confidence_noise: 0.1,
            confidence_threshold: 0.5,
            forgetting: 1.0,
        }
    }
}

impl SyntheticDetectorConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(format!("tau must be positive, got {}", self.tau));
        }
        if !(unit(self.detect_floor) && unit(self.detect_ceiling) && self.detect_floor <= self.detect_ceiling) {
            return Err("need 0 <= detect_floor <= detect_ceiling <= 1".into());
        }
        if !(self.jitter_scale >= 0.0 && self.fp_rate_initial >= 0.0 && self.confidence_noise >= 0.0) {
            return Err("jitter_scale, fp_rate_initial and confidence_noise must be nonnegative".into());
        }
        if !unit(self.confidence_threshold) {
            return Err("confidence_threshold must lie in [0, 1]".into());
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err("forgetting must lie in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    cfg: SyntheticDetectorConfig,
    classes: Vec<String>,
    exposure: BTreeMap<String, f64>,
}

impl SyntheticDetector {
    /// `classes` is the vocabulary false positives are labelled from.
    pub fn new(cfg: SyntheticDetectorConfig, classes: Vec<String>) -> Self {
        Self {
            cfg,
            classes,
            exposure: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &SyntheticDetectorConfig {
        &self.cfg
    }

    pub fn class_exposure(&self, class_label: &str) -> f64 {
        self.exposure.get(class_label).copied().unwrap_or(0.0)
    }

    pub fn total_exposure(&self) -> f64 {
        self.exposure.values().sum()
    }

    pub fn class_skill(&self, class_label: &str) -> f64 {
        skill(self.class_exposure(class_label), self.cfg.tau)
    }

    pub fn overall_skill(&self) -> f64 {
        skill(self.total_exposure(), self.cfg.tau)
    }

    /// Snapshot of the training state.
    pub fn checkpoint(&self) -> BTreeMap<String, f64> {
        self.exposure.clone()
    }

    pub fn restore(&mut self, checkpoint: BTreeMap<String, f64>) {
        self.exposure = checkpoint;
    }

    /// Sets every class to the same exposure. Test and calibration hook.
    pub fn set_uniform_exposure(&mut self, exposure: f64) {
        self.exposure = self.classes.iter().map(|c| (c.clone(), exposure)).collect();
    }

    fn image_rng(&self, image_id: &str) -> SimRng {
        rng_for(derive_seed(self.cfg.seed, DETECTOR_ROLE), image_id)
    }

    fn predict_image(&self, im: &ImageRecord) -> Vec<Detection> {
        let cfg = &self.cfg;
        let (w, h) = (im.width as f64, im.height as f64);
        let mut rng = self.image_rng(&im.image_id);
        let mut out = Vec::new();

        for obj in &im.objects {
            let s = self.class_skill(&obj.class_label);
            let p = cfg.detect_floor + (cfg.detect_ceiling - cfg.detect_floor) * s;
            let u = unit_f64(&mut rng);
            let mut centered = || 2.0 * unit_f64(&mut rng) - 1.0;
            let jitter = cfg.jitter_scale * (1.0 - s);
            let b = obj.bbox;
            let (bw, bh) = (b.width(), b.height());
            let x0 = b.xmin() + jitter * bw * centered();
            let y0 = b.ymin() + jitter * bh * centered();
            let x1 = b.xmax() + jitter * bw * centered();
            let y1 = b.ymax() + jitter * bh * centered();
            let confidence = (s + cfg.confidence_noise * centered()).clamp(0.0, 1.0);
            if u >= p {
                continue;
            }
            let jittered = BoundingBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
                .and_then(|bx| bx.clamp_to_image(w, h));
            if let Ok(bbox) = jittered {
                out.push(Detection::new(&im.image_id, &obj.class_label, bbox, confidence));
            }
        }

        let rate = cfg.fp_rate_initial * (1.0 - self.overall_skill());
        let n_fp = if rate > 0.0 {
            rng.sample(Poisson::new(rate).expect("positive rate")) as usize
        } else {
            0
        };
        if self.classes.is_empty() {
            return out;
        }
        for _ in 0..n_fp {
            let fw = (0.05 + 0.35 * unit_f64(&mut rng)) * w;
            let fh = (0.05 + 0.35 * unit_f64(&mut rng)) * h;
            let x = unit_f64(&mut rng) * (w - fw);
            let y = unit_f64(&mut rng) * (h - fh);
            let class = &self.classes[uniform_index(&mut rng, self.classes.len())];
            let lo = cfg.confidence_threshold;
            let confidence = (lo + (1.0 - lo) * unit_f64(&mut rng)).min(1.0);
            if let Ok(bbox) = BoundingBox::new(x, y, x + fw, y + fh) {
                out.push(Detection::new(&im.image_id, class, bbox, confidence));
            }
        }
        out
    }
}

impl DetectorSession for SyntheticDetector {
    fn descriptor(&self) -> String {
        let c = &self.cfg;
        format!(
            "synthetic(tau={},floor={},ceiling={},jitter={},fp={},noise={},forgetting={})",
            c.tau, c.detect_floor, c.detect_ceiling, c.jitter_scale, c.fp_rate_initial,
            c.confidence_noise, c.forgetting
        )
    }

    fn train(&mut self, _batch_index: usize, images: &[ImageRecord]) -> Result<(), DetectorError> {
        let mut seen: BTreeMap<&str, f64> = BTreeMap::new();
        for im in images {
            for o in &im.objects {
                *seen.entry(o.class_label.as_str()).or_default() += 1.0;
            }
        }
        if self.cfg.forgetting < 1.0 {
            for (class, e) in self.exposure.iter_mut() {
                if !seen.contains_key(class.as_str()) {
                    *e *= self.cfg.forgetting;
                }
            }
        }
        for (class, n) in seen {
            *self.exposure.entry(class.to_string()).or_default() += n;
        }
        Ok(())
    }

    fn predict(
        &mut self,
        _batch_index: usize,
        images: &[ImageRecord],
    ) -> Result<Vec<Vec<Detection>>, DetectorError> {
        Ok(images.iter().map(|im| self.predict_image(im)).collect())
    }

    fn reset(&mut self) -> Result<(), DetectorError> {
        self.exposure.clear();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::{generate, SyntheticDatasetConfig};
    use crate::dataset::Dataset;

    fn fixture(n: usize) -> Dataset {
        generate(&SyntheticDatasetConfig::with_images(n, 42))
    }

    fn detector(cfg: SyntheticDetectorConfig, d: &Dataset) -> SyntheticDetector {
        SyntheticDetector::new(cfg, d.classes.clone())
    }

    #[test]
    fn skill_closed_form() {
        assert_eq!(skill(0.0, 500.0), 0.0);
        assert!((skill(500.0, 500.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((skill(500.0, 500.0) - 0.6321).abs() < 1e-4);
        assert!((skill(1e9, 500.0) - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for e in 0..2000 {
            let s = skill(e as f64, 500.0);
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn exposure_accumulates_and_resets() {
        let d = fixture(60);
        let total: usize = d.images[..20].iter().map(|im| im.objects.len()).sum();
        let more: usize = d.images[20..].iter().map(|im| im.objects.len()).sum();
        let mut det = detector(SyntheticDetectorConfig::default(), &d);
        det.train(0, &d.images[..20]).unwrap();
        assert_eq!(det.total_exposure(), total as f64);
        det.train(1, &d.images[20..]).unwrap();
        assert_eq!(det.total_exposure(), (total + more) as f64);
        det.reset().unwrap();
        assert_eq!(det.total_exposure(), 0.0);
    }

    #[test]
    fn forgetting_decays_absent_classes() {
        use crate::dataset::GroundTruthObject;
        let b = BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap();
        let mut cat = ImageRecord::new("c", 10, 10);
        cat.objects = vec![GroundTruthObject::new("cat", b); 10];
        let mut dog = ImageRecord::new("d", 10, 10);
        dog.objects = vec![GroundTruthObject::new("dog", b); 4];
        let cfg = SyntheticDetectorConfig {
            forgetting: 0.5,
            ..Default::default()
        };
        let mut det = SyntheticDetector::new(cfg, vec!["cat".into(), "dog".into()]);
        det.train(0, &[cat]).unwrap();
        det.train(1, &[dog]).unwrap();
        assert_eq!(det.class_exposure("cat"), 5.0);
        assert_eq!(det.class_exposure("dog"), 4.0);
    }

    #[test]
    fn untrained_with_zero_floor_emits_only_false_positives() {
        let d = fixture(30);
        let cfg = SyntheticDetectorConfig {
            detect_floor: 0.0,
            ..SyntheticDetectorConfig::with_seed(5)
        };
        let mut det = detector(cfg, &d);
        let out = det.predict(1, &d.images).unwrap();
        let fps: usize = out.iter().map(Vec::len).sum();
        assert!(fps > 0);
        for (im, dets) in d.images.iter().zip(&out) {
            for x in dets {
                assert!(x.confidence >= 0.5);
                assert!(im.objects.iter().all(|o| o.bbox != x.bbox));
            }
        }
    }

    #[test]
    fn perfect_settings_reproduce_truth() {
        let d = fixture(30);
        let cfg = SyntheticDetectorConfig {
            jitter_scale: 0.0,
            fp_rate_initial: 0.0,
            detect_floor: 1.0,
            detect_ceiling: 1.0,
            ..SyntheticDetectorConfig::default()
        };
        let mut det = detector(cfg, &d);
        let out = det.predict(1, &d.images).unwrap();
        for (im, dets) in d.images.iter().zip(&out) {
            let boxes: Vec<_> = dets.iter().map(|x| x.bbox).collect();
            let truth: Vec<_> = im.objects.iter().map(|o| o.bbox).collect();
            assert_eq!(boxes, truth);
        }
    }

    #[test]
    fn deterministic_and_stateless_prediction() {
        let d = fixture(40);
        let mut det = detector(SyntheticDetectorConfig::with_seed(9), &d);
        det.train(0, &d.images[..10]).unwrap();
        let snap = det.checkpoint();
        let a = det.predict(1, &d.images[10..]).unwrap();
        det.restore(snap.clone());
        let b = det.predict(1, &d.images[10..]).unwrap();
        assert_eq!(a, b);
        assert_eq!(det.checkpoint(), snap);

        let mut other = detector(SyntheticDetectorConfig::with_seed(9), &d);
        other.train(0, &d.images[..10]).unwrap();
        assert_eq!(
            serde_json::to_string(&other.predict(1, &d.images[10..]).unwrap()).unwrap(),
            serde_json::to_string(&a).unwrap()
        );
    }

    #[test]
    fn detection_count_matches_binomial_mean() {
        // At s = 0.5 with no false positives and no confidence cut, the
        // number of detections is Binomial(n, p) with
        // p = 0.2 + 0.75 * 0.5 = 0.575.
        let d = generate(&SyntheticDatasetConfig::with_images(10, 8));
        let n = d.num_objects() as f64;
        let p = 0.2 + 0.75 * 0.5;
        let tau = 500.0;
        let exposure = -tau * (0.5f64).ln();
        let runs = 100;
        let mut total = 0usize;
        for seed in 0..runs {
            let cfg = SyntheticDetectorConfig {
                fp_rate_initial: 0.0,
                jitter_scale: 0.0,
                ..SyntheticDetectorConfig::with_seed(seed)
            };
            let mut det = detector(cfg, &d);
            det.set_uniform_exposure(exposure);
            assert!((det.class_skill("car") - 0.5).abs() < 1e-12);
            total += det.predict(1, &d.images).unwrap().iter().map(Vec::len).sum::<usize>();
        }
        let mean = total as f64 / runs as f64;
        // Standard error of the mean over `runs` independent binomials.
        let se = (n * p * (1.0 - p) / runs as f64).sqrt();
        assert!((mean - n * p).abs() < 3.0 * se, "mean {mean}, expected {}", n * p);
    }

    #[test]
    fn higher_skill_never_worse_on_average() {
        use crate::matching::{match_image, MatchParams};
        let d = fixture(40);
        let levels = [0.2f64, 0.5, 0.8];
        let mut fn_means = Vec::new();
        let mut fp_means = Vec::new();
        for s in levels {
            let exposure = -500.0 * (1.0 - s).ln();
            let (mut fns, mut fps) = (0usize, 0usize);
            for seed in 0..100 {
                let mut det = detector(SyntheticDetectorConfig::with_seed(seed), &d);
                det.set_uniform_exposure(exposure);
                let out = det.predict(1, &d.images).unwrap();
                for (im, dets) in d.images.iter().zip(&out) {
                    let m = match_image(&im.objects, dets, &MatchParams::default());
                    fns += m.false_negatives;
                    fps += m.false_positives;
                }
            }
            fn_means.push(fns as f64 / 100.0);
            fp_means.push(fps as f64 / 100.0);
        }
        assert!(fn_means.windows(2).all(|w| w[1] <= w[0]), "{fn_means:?}");
        assert!(fp_means.windows(2).all(|w| w[1] <= w[0]), "{fp_means:?}");
    }
}
