//! Seeded synthetic datasets for simulation runs and tests.
//!
//! Two layouts are available. Independent images draw an object count
//! uniformly in `0..=max_objects` and place boxes uniformly. Video mode
//! produces a frame sequence where objects persist across frames as tracks
//! that drift slowly, so neighbouring frames look alike; frames carry
//! `sequence_index`.

use serde::{Deserialize, Serialize};

use super::{Dataset, GroundTruthObject, ImageRecord, Provenance};
use crate::geometry::BoundingBox;
use crate::seed::{rng_for, uniform_index, unit_f64, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetConfig {
    pub num_images: usize,
    pub classes: Vec<String>,
    pub width: u32,
    pub height: u32,
    pub max_objects: usize,
    /// Smallest box side as a fraction of the image side.
    pub min_box_frac: f64,
    /// Largest box side as a fraction of the image side.
    pub max_box_frac: f64,
    pub video: bool,
    pub seed: u64,
}

impl Default for SyntheticDatasetConfig {
    fn default() -> Self {
        Self {
            num_images: 500,
            classes: vec!["car".into(), "dog".into(), "person".into()],
            width: 640,
            height: 480,
            max_objects: 6,
            min_box_frac: 0.05,
            max_box_frac: 0.4,
            video: false,
            seed: 0,
        }
    }
}

impl SyntheticDatasetConfig {
    pub fn with_images(num_images: usize, seed: u64) -> Self {
        Self {
            num_images,
            seed,
            ..Self::default()
        }
    }
}

fn random_box(rng: &mut SimRng, cfg: &SyntheticDatasetConfig) -> BoundingBox {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let span = cfg.max_box_frac - cfg.min_box_frac;
    let bw = (cfg.min_box_frac + span * unit_f64(rng)) * w;
    let bh = (cfg.min_box_frac + span * unit_f64(rng)) * h;
    let x = unit_f64(rng) * (w - bw);
    let y = unit_f64(rng) * (h - bh);
    BoundingBox::new(x, y, x + bw, y + bh).expect("positive box size")
}

struct Track {
    class: usize,
    bbox: BoundingBox,
    dx: f64,
    dy: f64,
}

pub fn generate(cfg: &SyntheticDatasetConfig) -> Dataset {
    assert!(!cfg.classes.is_empty(), "synthetic dataset needs a class");
    assert!(cfg.width > 0 && cfg.height > 0);
    assert!(0.0 < cfg.min_box_frac && cfg.min_box_frac <= cfg.max_box_frac && cfg.max_box_frac < 1.0);

    let mut rng = rng_for(cfg.seed, "synthetic-dataset");
    let digits = cfg.num_images.max(1).to_string().len();
    let mut images = Vec::with_capacity(cfg.num_images);
    let mut tracks: Vec<Track> = Vec::new();

    for i in 0..cfg.num_images {
        let id = format!("img{i:0digits$}");
        let mut rec = ImageRecord::new(id.clone(), cfg.width, cfg.height);
        rec.source_name = format!("{id}.jpg");

        if cfg.video {
            rec.sequence_index = Some(i as u64);
            // Tracks end with 5% chance per frame, new ones start when
            // under the cap.
            tracks.retain(|_| unit_f64(&mut rng) >= 0.05);
            while tracks.len() < cfg.max_objects && unit_f64(&mut rng) < 0.1 {
                tracks.push(Track {
                    class: uniform_index(&mut rng, cfg.classes.len()),
                    bbox: random_box(&mut rng, cfg),
                    dx: (unit_f64(&mut rng) - 0.5) * 0.02 * cfg.width as f64,
                    dy: (unit_f64(&mut rng) - 0.5) * 0.02 * cfg.height as f64,
                });
            }
            for t in &mut tracks {
                let b = t.bbox;
                let (mut dx, mut dy) = (t.dx, t.dy);
                if b.xmin() + dx < 0.0 || b.xmax() + dx > cfg.width as f64 {
                    dx = -dx;
                }
                if b.ymin() + dy < 0.0 || b.ymax() + dy > cfg.height as f64 {
                    dy = -dy;
                }
                t.dx = dx;
                t.dy = dy;
                let moved = BoundingBox::new(b.xmin() + dx, b.ymin() + dy, b.xmax() + dx, b.ymax() + dy)
                    .and_then(|m| m.clamp_to_image(cfg.width as f64, cfg.height as f64));
                if let Ok(m) = moved {
                    t.bbox = m;
                }
                rec.objects
                    .push(GroundTruthObject::new(cfg.classes[t.class].clone(), t.bbox));
            }
        } else {
            let n = uniform_index(&mut rng, cfg.max_objects + 1);
            for _ in 0..n {
                let class = uniform_index(&mut rng, cfg.classes.len());
                let b = random_box(&mut rng, cfg);
                rec.objects
                    .push(GroundTruthObject::new(cfg.classes[class].clone(), b));
            }
        }
        images.push(rec);
    }

    let mut d = Dataset::from_images(images, Provenance::Synthetic)
        .expect("generator produces valid datasets");
    // Keep the full configured vocabulary even if a class never occurred.
    let mut classes = cfg.classes.clone();
    classes.sort();
    classes.dedup();
    d.classes = classes;
    d
}
