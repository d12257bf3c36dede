//! Simulator for iterative human-in-the-loop bounding-box annotation.
//!
//! A fully labelled dataset is replayed through the annotate / train /
//! propose / correct loop: the first batch is drawn by hand, a detector is
//! trained on it and proposes boxes for the next batch, and the simulated
//! annotator's corrections (additions of missed boxes, removals of
//! spurious ones) are counted against ground truth. Campaign reports
//! compare image orderings and training regimes by how much manual work
//! they save.

pub mod bridge;
pub mod campaign;
pub mod dataset;
pub mod detector;
pub mod geometry;
pub mod matching;
pub mod report;
pub mod scheduling;
pub mod seed;
pub mod workload;

pub use campaign::{
    run_campaign, run_per_class, run_two_stage, CampaignConfig, CampaignError, CampaignReport,
    CampaignRun, Regime,
};
pub use dataset::{Dataset, GroundTruthObject, ImageRecord, ObjectFlag};
pub use detector::{DetectorError, DetectorSession};
pub use geometry::BoundingBox;
pub use matching::{Detection, MatchParams, MatchResult};
pub use scheduling::OrderingStrategy;
